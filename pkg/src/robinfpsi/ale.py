"""Harmonic extension of interface displacement into the fluid reference
domain, and the mesh-velocity bookkeeping of the moving-domain scheme."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .errors import CouplingDataError, DimensionError


@dataclass
class ALEState:
    """Fluid-domain displacement history and the current mesh velocity.

    Invariant: w = (eta_f - eta_f_prev) / dt (w = 0 at step 0)."""

    eta_f: fem.Field
    eta_f_prev: fem.Field
    w: fem.Field
    step: int = 0


class HarmonicExtension:
    """Componentwise Laplace solve on the reference fluid mesh.

    Dirichlet data: the transferred interface displacement on the
    interface, zero on every other fluid boundary node.  The reference
    domain never changes, so the constrained matrix is factored once.
    """

    def __init__(self, mesh, dofmap, traces, solver_tol=1e-10):
        self.mesh = mesh
        self.dofmap = dofmap
        self.traces = list(traces)
        stiff = fem.assemble_form("STIFFNESS", dofmap, dofmap, mesh)
        nodes = fem.boundary_scalar_nodes(dofmap, mesh,
                                          set(mesh.boundary_markers))
        dofs = np.concatenate([nodes, nodes + dofmap.n_scalar])
        self.matrix, self.lift, self.dofs = fem.eliminate_matrix(
            stiff.tocsr(), dofs)
        self.lu = fem.LUSolver(self.matrix, solver_tol)

    def solve(self, interface_displacements, t=0.0):
        """Extend per-pairing (n, 2) interface displacement traces."""
        if len(interface_displacements) != len(self.traces):
            raise CouplingDataError(
                f"{len(interface_displacements)} displacement traces for "
                f"{len(self.traces)} interface pairings")
        g = np.zeros(self.dofmap.n_dofs)
        for trace, vals in zip(self.traces, interface_displacements):
            vals = np.asarray(vals, dtype=float)
            if vals.shape != (len(trace), 2):
                raise CouplingDataError(
                    f"displacement trace shape {vals.shape} does not match "
                    f"interface with {len(trace)} nodes")
            for c in range(2):
                g[trace.nodes + c * self.dofmap.n_scalar] = vals[:, c]
        values = g[self.dofs]
        rhs = fem.eliminate_rhs(np.zeros(self.dofmap.n_dofs), self.lift,
                                self.dofs, values)
        return fem.Field(self.dofmap, self.lu.solve(rhs), t)


def mesh_velocity(eta_f, eta_f_prev, dt):
    """First-order backward difference of the domain displacement."""
    if eta_f.dofmap is not eta_f_prev.dofmap:
        raise DimensionError("displacement fields live on different dof maps")
    if not dt > 0.0:
        raise DimensionError("dt must be positive")
    return fem.Field(eta_f.dofmap, (eta_f.coeffs - eta_f_prev.coeffs) / dt,
                     eta_f.t)


def initial_ale_state(dofmap, t=0.0):
    """Rest state: zero displacement history, zero mesh velocity."""
    return ALEState(fem.zero_field(dofmap, t), fem.zero_field(dofmap, t),
                    fem.zero_field(dofmap, t), step=0)
