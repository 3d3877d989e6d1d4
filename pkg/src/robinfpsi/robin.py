"""Robin interface data exchanged between the two subproblems.

All five traces are computed from step-n states only (the scheme is
loosely coupled by construction); cross-side quantities are moved by
arclength interpolation first.  With native outward normals on each side,
n_p = -n_f on the shared curve, so no explicit sign flip appears here.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CouplingDataError, SynchronizationError
from .interface import transfer_values


@dataclass
class InterfaceBundle:
    """One interface curve with its pairing and per-side traces."""

    pairing: object
    fluid_trace: object   # BoundaryTrace on the fluid P2 velocity space
    solid_trace: object   # BoundaryTrace on the solid P2 velocity space

    def to_fluid(self, values):
        return transfer_values(values, self.solid_trace.s, self.fluid_trace.s,
                               self.pairing.matching)

    def to_solid(self, values):
        return transfer_values(values, self.fluid_trace.s, self.solid_trace.s,
                               self.pairing.matching)


@dataclass
class RobinData:
    """Nodal Robin traces, one array per interface pairing.

    r1 = L (u.n_f) - phi       (fluid side, scalar)
    r2 = gamma P_f(xi)         (fluid side, vector)
    r3 = xi.n_p                (solid side, scalar)
    r4 = -u.n_p + phi / L      (solid side, scalar)
    r5 = gamma P_p(u)          (solid side, vector)
    """

    r1: list
    r2: list
    r3: list
    r4: list
    r5: list
    step: int = 0

    def copy(self):
        return RobinData([a.copy() for a in self.r1],
                         [a.copy() for a in self.r2],
                         [a.copy() for a in self.r3],
                         [a.copy() for a in self.r4],
                         [a.copy() for a in self.r5], self.step)


@dataclass
class FluidTraces:
    """Step-n fluid interface data: velocity vectors per pairing."""

    u: list      # (n, 2) nodal velocity on the fluid trace
    step: int = 0


@dataclass
class BiotTraces:
    """Step-n solid interface data per pairing."""

    xi: list     # (n, 2) nodal solid velocity
    phi: list    # (n,) nodal Darcy pressure (P2-node sampling)
    step: int = 0


def compute_fluid_robin(fluid_traces, biot_traces, bundles, fluid_mesh,
                        params):
    """R1 and R2 on the fluid side; normals/tangents from ``fluid_mesh``
    (the deformed snapshot in the moving-domain scheme)."""
    r1, r2 = [], []
    for b, u_vals, xi_vals, phi_vals in zip(bundles, fluid_traces.u,
                                            biot_traces.xi, biot_traces.phi):
        u_n = b.fluid_trace.dot_normal(u_vals, fluid_mesh)
        phi_f = b.to_fluid(phi_vals)
        r1.append(params.robin_L * u_n - phi_f)
        xi_f = b.to_fluid(xi_vals)
        r2.append(params.gamma
                  * b.fluid_trace.project_tangent(xi_f, fluid_mesh))
    return r1, r2


def compute_biot_robin(fluid_traces, biot_traces, bundles, solid_mesh,
                       params):
    """R3, R4 and R5 on the solid (reference) side."""
    r3, r4, r5 = [], [], []
    for b, u_vals, xi_vals, phi_vals in zip(bundles, fluid_traces.u,
                                            biot_traces.xi, biot_traces.phi):
        r3.append(b.solid_trace.dot_normal(xi_vals, solid_mesh))
        u_p = b.to_solid(u_vals)
        r4.append(-b.solid_trace.dot_normal(u_p, solid_mesh)
                  + phi_vals / params.robin_L)
        r5.append(params.gamma
                  * b.solid_trace.project_tangent(u_p, solid_mesh))
    return r3, r4, r5


def compute_robin_data(fluid_traces, biot_traces, bundles, fluid_mesh,
                       solid_mesh, params):
    """All five Robin traces from step-n data (fixed-domain path)."""
    if fluid_traces.step != biot_traces.step:
        raise SynchronizationError(
            f"fluid traces at step {fluid_traces.step} but solid traces at "
            f"step {biot_traces.step}")
    if not (len(fluid_traces.u) == len(biot_traces.xi) == len(bundles)):
        raise CouplingDataError("trace lists do not match interface pairings")
    r1, r2 = compute_fluid_robin(fluid_traces, biot_traces, bundles,
                                 fluid_mesh, params)
    r3, r4, r5 = compute_biot_robin(fluid_traces, biot_traces, bundles,
                                    solid_mesh, params)
    return RobinData(r1, r2, r3, r4, r5, step=fluid_traces.step)
