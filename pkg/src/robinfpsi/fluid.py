"""One backward-Euler step of the fluid subproblem with Robin interface
data: time-dependent Stokes on fixed domains, semi-implicit ALE
Navier-Stokes on deformed snapshots.

The Robin traces enter the right-hand side only; the interface mass
matrices (normal and tangential) sit on the left, so the operator can be
factored once per geometry and reused across steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .errors import CouplingDataError
from .meshing import Marker


@dataclass
class FluidState:
    u: fem.Field          # P2 velocity (cm/s)
    p: fem.Field          # P1 pressure (dyne/cm^2)
    step: int = 0
    t: float = 0.0

    def copy(self):
        return FluidState(self.u.copy(), self.p.copy(), self.step, self.t)


@dataclass
class FluidData:
    """Time-dependent problem data; ``None`` means identically zero.

    ``traction`` is the Neumann data g (already dotted with the outward
    normal of the marked boundary); ``dirichlet`` supplies the velocity
    on the Dirichlet-marked part.
    """

    body_force: object = None     # F_f(x, y, t) -> (2, ...)
    div_source: object = None     # g_f(x, y, t) scalar
    traction: object = None       # g(x, y, t) -> (2, ...)
    dirichlet: object = None      # u(x, y, t) -> (2, ...)


class FluidOperator:
    """Assembled fluid step on one mesh snapshot.

    Block unknown ordering: [velocity dofs; pressure dofs] (plus one
    multiplier dof when a zero-mean pressure constraint is requested).
    """

    def __init__(self, params, mesh, v_dofmap, p_dofmap, traces, *,
                 convective=False, advect=None, dirichlet_markers=(),
                 traction_marker=None, pressure_mean_zero=False,
                 corner_interface_precedence=True, solver_tol=1e-10,
                 factor=True):
        self.params = params
        self.mesh = mesh
        self.v = v_dofmap
        self.q = p_dofmap
        self.traces = list(traces)
        self.traction_marker = traction_marker
        self.n_u = v_dofmap.n_dofs
        self.n_p = p_dofmap.n_dofs
        prm = params

        self.mass = fem.assemble_form("VECTOR_MASS", self.v, self.v, mesh)
        self.visc = fem.assemble_form("SYM_GRAD", self.v, self.v, mesh,
                                      coefficient=prm.mu_f)
        self.div = fem.assemble_form("DIV_PRESSURE", self.v, self.q, mesh)
        if self.traces:
            self.t_n = fem.assemble_form("BOUNDARY_NORMAL", self.v, self.v,
                                         mesh, marker=Marker.INTERFACE)
            self.t_t = fem.assemble_form("BOUNDARY_TANGENT", self.v, self.v,
                                         mesh, marker=Marker.INTERFACE)
        else:
            self.t_n = sp.csr_matrix((self.n_u, self.n_u))
            self.t_t = self.t_n

        k_block = (prm.rho_f / prm.dt) * self.mass + self.visc \
            + prm.robin_L * self.t_n + prm.gamma * self.t_t
        if convective:
            if advect is None:
                raise CouplingDataError(
                    "convective step requires the advecting field u^n - w^n")
            k_block = k_block + prm.rho_f * fem.assemble_form(
                "CONVECTION", self.v, self.v, mesh, coefficient=advect)

        blocks = [[k_block, -self.div.T], [self.div, None]]
        if pressure_mean_zero:
            ones = fem.interpolate(lambda x, y, t: np.ones_like(x), self.q,
                                   mesh)
            m_p = fem.assemble_form("MASS", self.q, self.q, mesh)
            mvec = sp.csr_matrix((m_p @ ones.coeffs)[:, None])
            blocks = [[k_block, -self.div.T, None],
                      [self.div, None, mvec],
                      [None, mvec.T, None]]
        self.matrix = sp.bmat(blocks, format="csr")
        self.n_total = self.matrix.shape[0]

        exclude = (Marker.INTERFACE,) if (self.traces
                                          and corner_interface_precedence) \
            else ()
        nodes = fem.boundary_scalar_nodes(self.v, mesh, dirichlet_markers,
                                          exclude_markers=exclude)
        self._dirichlet_nodes = nodes
        dofs = np.concatenate([nodes, nodes + self.v.n_scalar]) \
            if len(nodes) else np.empty(0, dtype=np.int64)
        self.constrained, self.lift, self.cdofs = fem.eliminate_matrix(
            self.matrix, dofs)
        self.solver_tol = solver_tol
        self.lu = fem.LUSolver(self.constrained, solver_tol) if factor else None

    # ------------------------------------------------------------------
    def dirichlet_values(self, data, t):
        nodes = self._dirichlet_nodes
        if len(nodes) == 0:
            return np.empty(0)
        if data.dirichlet is None:
            return np.zeros(2 * len(nodes))
        xy = self.v.dof_coords(self.mesh)[nodes]
        vals = np.asarray(data.dirichlet(xy[:, 0], xy[:, 1], t), dtype=float)
        vals = np.broadcast_to(vals.reshape(2, -1), (2, len(nodes)))
        return np.concatenate([vals[0], vals[1]])

    def raw_rhs(self, u_n_coeffs, robin, data, t):
        """Unconstrained right-hand side at time level t = t^{n+1}."""
        prm = self.params
        b_u = (prm.rho_f / prm.dt) * (self.mass @ u_n_coeffs)
        if data.body_force is not None:
            b_u += fem.assemble_functional("DOMAIN_LOAD", self.v, self.mesh,
                                           data.body_force, t=t)
        if data.traction is not None and self.traction_marker is not None:
            b_u += fem.assemble_functional("BOUNDARY_LOAD", self.v, self.mesh,
                                           data.traction,
                                           marker=self.traction_marker, t=t)
        if robin is not None:
            r1, r2 = robin
            if len(r1) != len(self.traces) or len(r2) != len(self.traces):
                raise CouplingDataError(
                    "fluid step needs R1/R2 traces for every pairing")
            for trace, v1, v2 in zip(self.traces, r1, r2):
                b_u += trace.normal_load(v1, self.mesh, self.v)
                b_u += trace.tangent_load(v2, self.mesh, self.v)
        elif self.traces:
            raise CouplingDataError("fluid step is missing Robin data")
        b_p = np.zeros(self.n_total - self.n_u)
        if data.div_source is not None:
            b_p[:self.n_p] = fem.assemble_functional(
                "DIVERGENCE_SOURCE", self.q, self.mesh, data.div_source, t=t)
        return np.concatenate([b_u, b_p])

    def constrained_rhs(self, u_n_coeffs, robin, data, t):
        raw = self.raw_rhs(u_n_coeffs, robin, data, t)
        values = self.dirichlet_values(data, t)
        return fem.eliminate_rhs(raw, self.lift, self.cdofs, values)

    def step(self, state, robin, data):
        """Advance to t + dt; returns the new FluidState."""
        t1 = state.t + self.params.dt
        rhs = self.constrained_rhs(state.u.coeffs, robin, data, t1)
        if self.lu is None:
            self.lu = fem.LUSolver(self.constrained, self.solver_tol)
        x = self.lu.solve(rhs)
        u = fem.Field(self.v, x[:self.n_u], t1)
        p = fem.Field(self.q, x[self.n_u:self.n_u + self.n_p], t1)
        return FluidState(u, p, state.step + 1, t1)

    # ------------------------------------------------------------------
    def interior_residual(self, state_prev, state_new, data):
        """Consistent-flux residual A_int x - b_int with every interface
        term removed: velocity rows recover <sigma_f n_f, v> weakly."""
        prm = self.params
        k_int = (prm.rho_f / prm.dt) * self.mass + self.visc
        x_u = state_new.u.coeffs
        x_p = state_new.p.coeffs
        r_u = k_int @ x_u - self.div.T @ x_p
        r_p = self.div @ x_u
        t1 = state_new.t
        b_u = (prm.rho_f / prm.dt) * (self.mass @ state_prev.u.coeffs)
        if data.body_force is not None:
            b_u += fem.assemble_functional("DOMAIN_LOAD", self.v, self.mesh,
                                           data.body_force, t=t1)
        if data.traction is not None and self.traction_marker is not None:
            b_u += fem.assemble_functional("BOUNDARY_LOAD", self.v, self.mesh,
                                           data.traction,
                                           marker=self.traction_marker, t=t1)
        b_p = np.zeros(self.n_p)
        if data.div_source is not None:
            b_p = fem.assemble_functional("DIVERGENCE_SOURCE", self.q,
                                          self.mesh, data.div_source, t=t1)
        return r_u - b_u, r_p - b_p


def fluid_interface_traces(state, bundles, mesh):
    """Step-n nodal interface data of the fluid state.

    Returns per-pairing velocity vectors together with their normal and
    tangential parts on the given mesh snapshot."""
    from .robin import FluidTraces

    u_vals = [b.fluid_trace.extract(state.u) for b in bundles]
    traces = FluidTraces(u=u_vals, step=state.step)
    traces.u_normal = [b.fluid_trace.dot_normal(v, mesh)
                       for b, v in zip(bundles, u_vals)]
    traces.u_tangential = [b.fluid_trace.project_tangent(v, mesh)
                           for b, v in zip(bundles, u_vals)]
    return traces


# ---------------------------------------------------------------------------
# spec-level one-shot operations

def assemble_fluid_step(params, mesh_n, state_n, robin, w_n=None,
                        convective=False, data=None, bundles=(),
                        dirichlet_markers=(Marker.DIRICHLET_F,),
                        traction_marker=Marker.NEUMANN_F,
                        pressure_mean_zero=False, solver_tol=1e-10):
    """Build the constrained sparse system for one fluid step.

    ``robin`` is a RobinData (its r1/r2 lists are used); ``w_n`` is the
    mesh-velocity field for the convective/ALE variant.
    """
    advect = None
    if convective:
        if w_n is None:
            advect = state_n.u.copy()
        else:
            advect = fem.Field(state_n.u.dofmap,
                               state_n.u.coeffs - w_n.coeffs, state_n.t)
    traces = [b.fluid_trace for b in bundles]
    op = FluidOperator(params, mesh_n, state_n.u.dofmap, state_n.p.dofmap,
                       traces, convective=convective, advect=advect,
                       dirichlet_markers=dirichlet_markers,
                       traction_marker=traction_marker,
                       pressure_mean_zero=pressure_mean_zero,
                       solver_tol=solver_tol, factor=False)
    data = data or FluidData()
    rpair = None if robin is None else (robin.r1, robin.r2)
    rhs = op.constrained_rhs(state_n.u.coeffs, rpair, data, state_n.t + params.dt)
    system = fem.SparseSystem(op.constrained, rhs,
                              dict(zip(map(int, op.cdofs),
                                       op.dirichlet_values(data, state_n.t + params.dt))))
    system.meta = {"operator": op, "state": state_n}
    return system


def solve_fluid_step(system):
    """Solve a system produced by assemble_fluid_step."""
    op = system.meta["operator"]
    state = system.meta["state"]
    x = fem.solve_sparse(system, op.solver_tol)
    t1 = state.t + op.params.dt
    u = fem.Field(op.v, x[:op.n_u], t1)
    p = fem.Field(op.q, x[op.n_u:op.n_u + op.n_p], t1)
    return FluidState(u, p, state.step + 1, t1)
