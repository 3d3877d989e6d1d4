"""Command-line entry points.

Subcommands: ``bench`` (convergence study), ``run`` (general simulation
from a config file), ``energy`` (zero-forcing stability sweep),
``verify`` (kernel self-tests and the forcing-residual gate), and
``demo-channel`` (moving-domain channel with poroelastic obstacles).
Failures exit nonzero with one machine-parsable line
``error: <ErrorClass>: message`` on stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import fem, reporting
from .config import default_config, parse_config
from .coupling import CouplingDriver
from .errors import RobinFpsiError
from .interface import extract_interface, interface_transfer
from .manufactured import ManufacturedCase, residual_check, RESIDUAL_GATE
from .meshing import Mesh, Marker, build_rect_mesh, mark_boundary
from .problems import benchmark_problem, demo_problem, stability_problem
from .verification import (
    PAPER_TABLES,
    convergence_study,
    least_squares_slopes,
    stability_sweep,
)


def _parse_n_list(raw):
    return [int(tok) for tok in raw.split(",") if tok.strip()]


def cmd_bench(args):
    t0 = time.time()
    os.makedirs(args.out, exist_ok=True)

    def progress(n, errs):
        cells = " ".join(f"{k}={v:.3E}" for k, v in errs.items())
        print(f"case {args.case} n={n}: {cells}", flush=True)

    table = convergence_study(args.case, _parse_n_list(args.n_list),
                              sequential=args.sequential,
                              override_resource_guard=args.override_resource_guard,
                              progress=progress)
    csv_path = os.path.join(args.out, f"case{args.case}_convergence.csv")
    reporting.write_convergence_csv(table, csv_path)
    fig_path = os.path.join(args.out, f"case{args.case}_convergence.png")
    reporting.plot_convergence(table, fig_path,
                               f"Stokes-Biot benchmark case {args.case}")
    slopes = least_squares_slopes(table)
    print("least-squares slopes vs dt: "
          + " ".join(f"{k}={v:.3f}" for k, v in slopes.items()))
    print(f"wrote {csv_path} and {fig_path} in {time.time() - t0:.1f}s")
    return 0


def _build_problem(cfg):
    params = cfg.physical_params()
    if cfg.kind in ("benchmark-case1", "benchmark-case2"):
        case_id = 1 if cfg.kind.endswith("1") else 2
        problem = benchmark_problem(
            case_id, cfg.n, params=params,
            include_xi_normal=cfg.include_xi_normal_interface_term,
            solver_tol=cfg.solver_tol)
    elif cfg.kind == "stokes-biot-custom":
        problem = stability_problem(
            cfg.n, params, include_xi_normal=cfg.include_xi_normal_interface_term,
            solver_tol=cfg.solver_tol)
    else:
        problem = demo_problem(params, geometry=cfg.geometry())
    problem.pressure_mean_zero = cfg.pressure_mean_zero
    problem.corner_interface_precedence = cfg.corner_interface_precedence
    return problem


def cmd_run(args):
    cfg = parse_config(args.config)
    os.makedirs(cfg.out_dir, exist_ok=True)
    problem = _build_problem(cfg)
    driver = CouplingDriver(problem, sequential=cfg.sequential)

    def callback(step, states):
        reporting.snapshot_states(problem.fluid_mesh, problem.solid_mesh,
                                  states, cfg.out_dir, step)

    try:
        states, history = driver.run(callback=callback,
                                     snapshot_every=cfg.snapshot_every)
    finally:
        driver.close()
    energy_csv = os.path.join(cfg.out_dir, "energy.csv")
    reporting.write_energy_csv(history, energy_csv)
    reporting.plot_energy(history, os.path.join(cfg.out_dir, "energy.png"),
                          problem.label)
    print(f"completed {states.step} steps to t = {states.t:.6g}; "
          f"wrote {energy_csv}")
    if problem.case is not None:
        from .manufactured import error_norms
        errs = error_norms(states.fluid.u, states.fluid.p, states.biot.eta,
                           states.biot.xi, states.biot.phi, problem.case,
                           states.t, problem.fluid_mesh,
                           problem.solid_mesh).as_dict()
        print("final-time errors: "
              + " ".join(f"{k}={v:.3E}" for k, v in errs.items()))
    return 0


def cmd_energy(args):
    cfg = parse_config(args.config) if args.config else \
        default_config("stokes-biot-custom", n=8)
    os.makedirs(cfg.out_dir, exist_ok=True)

    def progress(row):
        status = "ok" if row["passed"] else "FAILED"
        print(f"C0={row['C0']:.1E} K={row['K']:.1E} dt={row['dt']:.1E}: "
              f"max E = {row['max_E']:.4E} vs bound {row['bound']:.4E} "
              f"[{status}]", flush=True)

    rows, histories = stability_sweep(n=cfg.n, total_time=cfg.T,
                                      sequential=cfg.sequential,
                                      progress=progress)
    csv_path = os.path.join(cfg.out_dir, "stability_sweep.csv")
    reporting.write_sweep_csv(rows, csv_path)
    worst = max(rows, key=lambda r: r["max_E"] / r["bound"])
    key = (worst["C0"], worst["K"], worst["dt"])
    reporting.plot_energy(histories[key],
                          os.path.join(cfg.out_dir, "stability_energy.png"),
                          f"stability sweep C0={key[0]:g} K={key[1]:g} "
                          f"dt={key[2]:g}")
    per_run = os.path.join(cfg.out_dir, "stability_worst_run.csv")
    reporting.write_energy_csv(histories[key], per_run)
    failed = [r for r in rows if not r["passed"]]
    print(f"wrote {csv_path}; {len(rows) - len(failed)}/{len(rows)} runs "
          "satisfy the energy bound")
    return 1 if failed else 0


def _verify_checks():
    checks = []

    pts, wts = fem.triangle_quadrature(4)
    checks.append(("quadrature constant 1/2", abs(wts.sum() - 0.5) <= 1e-14))
    val = float(np.sum(wts * (pts[:, 0] + pts[:, 1])))
    checks.append(("quadrature linear 1/3", abs(val - 1 / 3) <= 1e-14))
    val = float(np.sum(wts * pts[:, 0] ** 2 * pts[:, 1] ** 2))
    checks.append(("quadrature quartic 1/180", abs(val - 1 / 180) <= 1e-14))

    tri = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
               np.array([[0, 1, 2]]))
    tri = mark_boundary(tri, [(lambda x, y: True, Marker.DIRICHLET_F)])
    dm = fem.DofMap(tri, fem.P1)
    m = fem.assemble_form("MASS", dm, dm, tri).toarray()
    expected = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0
    checks.append(("P1 reference mass matrix",
                   np.abs(m - expected).max() <= 1e-15))

    vals, _ = fem.reference_basis(fem.P2, np.array([0.3, 0.45, 0.25]))
    checks.append(("P2 partition of unity", abs(vals.sum() - 1.0) <= 1e-14))

    mesh = build_rect_mesh((0, 1, 0, 1), 5, 4)
    mesh = mark_boundary(mesh, [(lambda x, y: True, Marker.DIRICHLET_F)])
    dm2 = fem.DofMap(mesh, fem.P2)
    stiff = fem.assemble_form("STIFFNESS", dm2, dm2, mesh)
    exact = fem.interpolate(lambda x, y, t: 1 + 2 * x - 3 * y, dm2, mesh)
    nodes = fem.boundary_scalar_nodes(dm2, mesh, [Marker.DIRICHLET_F])
    system = fem.apply_dirichlet(
        fem.SparseSystem(stiff.tocsr(), np.zeros(dm2.n_dofs)),
        {int(k): exact.coeffs[k] for k in nodes})
    sol = fem.solve_sparse(system)
    checks.append(("affine patch test",
                   np.abs(sol - exact.coeffs).max() <= 1e-10))

    fm = mark_boundary(build_rect_mesh((0, 1, 0, 1), 8, 8), [
        (lambda x, y: y < 1e-12, Marker.INTERFACE),
        (lambda x, y: y > 1e-12, Marker.DIRICHLET_F)])
    sm = mark_boundary(build_rect_mesh((0, 1, -1, 0), 4, 4), [
        (lambda x, y: y > -1e-12, Marker.INTERFACE),
        (lambda x, y: y < -1e-12, Marker.DIRICHLET_P)])
    pairing = extract_interface(fm, sm)
    src = 2.0 * pairing.solid.vertex_s
    out = interface_transfer(src, pairing, "solid_to_fluid")
    checks.append(("interface transfer affine exactness",
                   np.abs(out - 2.0 * pairing.fluid.vertex_s).max() <= 1e-13))

    for case_id in (1, 2):
        res = residual_check(ManufacturedCase(case_id), points=50)
        checks.append((f"case {case_id} forcing residuals <= {RESIDUAL_GATE:g}",
                       max(res.values()) <= RESIDUAL_GATE))
    return checks


def cmd_verify(args):
    checks = _verify_checks()
    ok = True
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'} {name}")
        ok = ok and passed
    return 0 if ok else 1


def cmd_demo(args):
    from .problems import demo_params

    params = demo_params(dt=args.dt, total_time=args.T)
    problem = demo_problem(params)
    os.makedirs(args.out, exist_ok=True)
    driver = CouplingDriver(problem, sequential=args.sequential)

    def callback(step, states):
        reporting.snapshot_states(problem.fluid_mesh, problem.solid_mesh,
                                  states, args.out, step)

    t0 = time.time()
    try:
        states, history = driver.run(callback=callback,
                                     snapshot_every=args.snapshot_every)
    finally:
        driver.close()
    reporting.write_energy_csv(history,
                               os.path.join(args.out, "demo_energy.csv"))
    reporting.plot_energy(history, os.path.join(args.out, "demo_energy.png"),
                          "channel demo")
    umax = float(np.abs(states.fluid.u.coeffs).max())
    emax = float(history.column("energy").max())
    finite = np.isfinite(umax) and np.isfinite(emax)
    print(f"demo completed {states.step} steps to t = {states.t:.4g} in "
          f"{time.time() - t0:.1f}s; max |u| = {umax:.4g}, "
          f"max E = {emax:.4g}, finite = {finite}")
    return 0 if finite else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robinfpsi",
        description="Loosely coupled Robin-Robin fluid/poroelastic solver")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="manufactured-solution convergence study")
    b.add_argument("--case", type=int, choices=(1, 2), required=True)
    b.add_argument("--n-list", default="4,8,16,32")
    b.add_argument("--out", default="bench_out")
    b.add_argument("--sequential", action="store_true")
    b.add_argument("--override-resource-guard", action="store_true")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("run", help="general simulation from a config file")
    r.add_argument("--config", required=True)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("energy", help="zero-forcing stability sweep")
    e.add_argument("--config")
    e.set_defaults(func=cmd_energy)

    v = sub.add_parser("verify", help="kernel self-tests and residual gate")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("demo-channel",
                       help="2D channel with two poroelastic obstacles")
    d.add_argument("--T", type=float, default=0.5)
    d.add_argument("--dt", type=float, default=1e-3)
    d.add_argument("--out", default="demo_out")
    d.add_argument("--snapshot-every", type=int, default=100)
    d.add_argument("--sequential", action="store_true")
    d.set_defaults(func=cmd_demo)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RobinFpsiError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
