"""Delimited outputs, legacy VTK snapshots and matplotlib figures.

Every file is written through a temp-and-rename so interrupted runs never
leave truncated files that still parse.
"""

from __future__ import annotations

import os

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

CSV_HEADER = ("n,e_eta,rate_eta,e_xi,rate_xi,e_phi,rate_phi,"
              "e_u,rate_u,e_p,rate_p")

ERROR_KEYS = ("e_eta", "e_xi", "e_phi", "e_u", "e_p")


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def observed_orders(table):
    """log2 error ratios between consecutive rows of a convergence table.

    ``table`` is a list of (n, {error_key: value}) rows in ascending n.
    Returns a list aligned with the table; the first entry is None.
    """
    orders = [None]
    for (n0, e0), (n1, e1) in zip(table[:-1], table[1:]):
        orders.append({k: float(np.log2(e0[k] / e1[k])) for k in ERROR_KEYS})
    return orders


def write_convergence_csv(table, path):
    """Convergence table in the fixed column layout: errors with three
    significant digits, rates with two decimals, first row's rates empty."""
    orders = observed_orders(table)
    lines = [CSV_HEADER]
    for (n, errs), rates in zip(table, orders):
        cells = [str(n)]
        for key in ERROR_KEYS:
            cells.append(f"{errs[key]:.2E}")
            cells.append("" if rates is None else f"{rates[key]:.2f}")
        lines.append(",".join(cells))
    return _atomic_write(path, "\n".join(lines) + "\n")


def write_energy_csv(history, path):
    lines = ["step,t,E,D,I,N,norm_Ff,norm_g,norm_Fd"]
    for r in history.rows:
        lines.append(f"{r.step},{r.t:.10g},{r.energy:.10E},"
                     f"{r.dissipation:.10E},{r.interface:.10E},"
                     f"{r.numerical:.10E},{r.forcing_f:.6E},"
                     f"{r.forcing_g:.6E},{r.forcing_d:.6E}")
    return _atomic_write(path, "\n".join(lines) + "\n")


def write_sweep_csv(rows, path):
    lines = ["C0,K,dt,E0,D0,I0,max_E,bound,finite,monotone"]
    for r in rows:
        lines.append(f"{r['C0']:.3E},{r['K']:.3E},{r['dt']:.3E},"
                     f"{r['E0']:.6E},{r['D0']:.6E},{r['I0']:.6E},"
                     f"{r['max_E']:.6E},{r['bound']:.6E},"
                     f"{int(r['finite'])},{int(r['monotone'])}")
    return _atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# legacy VTK

def write_vtk_snapshot(mesh, fields, path, title="robinfpsi snapshot"):
    """Legacy ASCII VTK 2.0 unstructured grid with point data.

    ``fields`` maps names to per-vertex arrays: shape (N_v,) scalars or
    (N_v, 2) vectors (emitted with z = 0).  P2 fields must be subsampled
    to vertices by the caller.
    """
    nv = mesh.num_nodes
    nt = mesh.num_triangles
    out = ["# vtk DataFile Version 2.0", title, "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    for x, y in mesh.nodes:
        out.append(f"{x:.10g} {y:.10g} 0")
    out.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        out.append(f"3 {a} {b} {c}")
    out.append(f"CELL_TYPES {nt}")
    out.extend(["5"] * nt)
    out.append(f"POINT_DATA {nv}")
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            out.append(f"SCALARS {name} double")
            out.append("LOOKUP_TABLE default")
            out.extend(f"{v:.10g}" for v in values)
        else:
            out.append(f"VECTORS {name} double")
            out.extend(f"{v[0]:.10g} {v[1]:.10g} 0" for v in values)
    return _atomic_write(path, "\n".join(out) + "\n")


def snapshot_states(fluid_mesh, solid_mesh, states, out_dir, step):
    """One VTK file per subdomain for one time step."""
    os.makedirs(out_dir, exist_ok=True)
    fs, bs = states.fluid, states.biot
    fpath = os.path.join(out_dir, f"fluid_{step:06d}.vtk")
    write_vtk_snapshot(fluid_mesh, {
        "velocity": fs.u.vertex_values(),
        "pressure": fs.p.vertex_values(),
    }, fpath, title=f"fluid step {step}")
    spath = os.path.join(out_dir, f"solid_{step:06d}.vtk")
    write_vtk_snapshot(solid_mesh, {
        "velocity": bs.xi.vertex_values(),
        "displacement": bs.eta.vertex_values(),
        "darcy_pressure": bs.phi.vertex_values(),
    }, spath, title=f"solid step {step}")
    return fpath, spath


# ---------------------------------------------------------------------------
# figures

def plot_convergence(table, path, title):
    """log-log error decay against dt with a first-order reference."""
    orders = None
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ns = np.array([row[0] for row in table], dtype=float)
    dts = 0.05 / ns
    labels = {"e_eta": r"$e_\eta$", "e_xi": r"$e_\xi$", "e_phi": r"$e_\phi$",
              "e_u": r"$e_u$", "e_p": r"$e_p$"}
    for key in ERROR_KEYS:
        errs = [row[1][key] for row in table]
        ax.loglog(dts, errs, "o-", label=labels[key])
    ref = dts * (table[0][1]["e_eta"] / dts[0])
    ax.loglog(dts, ref, "k--", linewidth=0.8, label="first order")
    ax.set_xlabel(r"$\Delta t$")
    ax.set_ylabel("error at final time")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    tmp = f"{path}.tmp.png"
    fig.savefig(tmp, dpi=150)
    plt.close(fig)
    os.replace(tmp, path)
    return path


def plot_energy(history, path, title):
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    t = history.column("t")
    for name, label in (("energy", r"$\mathcal{E}^n$"),
                        ("dissipation", r"$\mathcal{D}^n$ (cumulative)"),
                        ("interface", r"$\mathcal{I}^n$"),
                        ("numerical", r"$\mathcal{N}^n$ (cumulative)")):
        ax.semilogy(t, np.maximum(history.column(name), 1e-300), label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    tmp = f"{path}.tmp.png"
    fig.savefig(tmp, dpi=150)
    plt.close(fig)
    os.replace(tmp, path)
    return path
