"""One backward-Euler step of the Biot subproblem with Robin interface
data, on the fixed reference solid domain.

The displacement is eliminated through the discrete kinematics
eta^{n+1} = eta^n + dt * xi^{n+1}, so the unknowns are (xi, phi); the
elastic terms act on xi with a dt factor and the eta^n part lifts to the
right-hand side.  The <xi.n_p, zeta.n_p> interface term is included by
default (config switch ``include_xi_normal``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .errors import CouplingDataError
from .meshing import Marker


@dataclass
class BiotState:
    eta: fem.Field        # P2 displacement (cm)
    xi: fem.Field         # P2 solid velocity (cm/s)
    phi: fem.Field        # P1 Darcy pressure (dyne/cm^2)
    step: int = 0
    t: float = 0.0

    def copy(self):
        return BiotState(self.eta.copy(), self.xi.copy(), self.phi.copy(),
                         self.step, self.t)


@dataclass
class BiotData:
    """Time-dependent problem data for one Biot step (None = zero)."""

    body_force: object = None        # F_e(x, y, t) -> (2, ...)
    source: object = None            # F_d(x, y, t) scalar
    darcy_flux: object = None        # (K grad phi).n_p data on the flux marker
    traction: object = None          # sigma_p n_p data on the flux marker
    dirichlet_velocity: object = None   # xi(x, y, t) on displacement-Dirichlet
    dirichlet_pressure: object = None   # phi(x, y, t) on pressure-Dirichlet


class BiotOperator:
    """Assembled Biot step; block ordering [xi dofs; phi dofs]."""

    def __init__(self, params, mesh, v_dofmap, p_dofmap, traces, *,
                 disp_dirichlet_markers=(), pres_dirichlet_markers=(),
                 flux_marker=None, include_xi_normal=True,
                 corner_interface_precedence=True, solver_tol=1e-10,
                 factor=True):
        self.params = params
        self.mesh = mesh
        self.v = v_dofmap
        self.q = p_dofmap
        self.traces = list(traces)
        self.flux_marker = flux_marker
        self.n_u = v_dofmap.n_dofs
        self.n_p = p_dofmap.n_dofs
        prm = params

        self.mass_v = fem.assemble_form("VECTOR_MASS", self.v, self.v, mesh)
        sym = fem.assemble_form("SYM_GRAD", self.v, self.v, mesh,
                                coefficient=prm.mu_p)
        divdiv = fem.assemble_form("GRAD_DIV", self.v, self.v, mesh,
                                   coefficient=prm.lambda_p)
        self.elast = (sym + divdiv).tocsr()
        self.div = fem.assemble_form("DIV_PRESSURE", self.v, self.q, mesh)
        self.mass_s = fem.assemble_form("MASS", self.q, self.q, mesh)
        self.darcy = fem.assemble_form("STIFFNESS", self.q, self.q, mesh,
                                       coefficient=prm.kappa)
        if self.traces:
            self.t_t = fem.assemble_form("BOUNDARY_TANGENT", self.v, self.v,
                                         mesh, marker=Marker.INTERFACE)
            self.t_n = fem.assemble_form("BOUNDARY_NORMAL", self.v, self.v,
                                         mesh, marker=Marker.INTERFACE)
            self.m_gamma = fem.assemble_form("BOUNDARY_MASS", self.q, self.q,
                                             mesh, marker=Marker.INTERFACE)
            self.c_ns = fem.assemble_form("BOUNDARY_NORMAL_SCALAR", self.q,
                                          self.v, mesh,
                                          marker=Marker.INTERFACE)
        else:
            self.t_t = sp.csr_matrix((self.n_u, self.n_u))
            self.t_n = self.t_t
            self.m_gamma = sp.csr_matrix((self.n_p, self.n_p))
            self.c_ns = sp.csr_matrix((self.n_u, self.n_p))

        k_xx = (prm.rho_p / prm.dt) * self.mass_v + prm.dt * self.elast \
            + prm.gamma * self.t_t
        if include_xi_normal:
            k_xx = k_xx + self.t_n  # L2 = 1 coefficient
        k_xp = -prm.alpha * self.div.T + self.c_ns
        k_px = prm.alpha * self.div - self.c_ns.T
        k_pp = (prm.c0 / prm.dt) * self.mass_s + self.darcy \
            + (1.0 / prm.robin_L) * self.m_gamma
        self.matrix = sp.bmat([[k_xx, k_xp], [k_px, k_pp]], format="csr")

        exclude = (Marker.INTERFACE,) if (self.traces
                                          and corner_interface_precedence) \
            else ()
        dnodes = fem.boundary_scalar_nodes(self.v, mesh,
                                           disp_dirichlet_markers,
                                           exclude_markers=exclude)
        pnodes = fem.boundary_scalar_nodes(self.q, mesh,
                                           pres_dirichlet_markers,
                                           exclude_markers=exclude)
        self._disp_nodes = dnodes
        self._pres_nodes = pnodes
        dofs = [dnodes, dnodes + self.v.n_scalar, self.n_u + pnodes]
        dofs = np.concatenate([d for d in dofs if len(d)]) \
            if any(len(d) for d in dofs) else np.empty(0, dtype=np.int64)
        self.constrained, self.lift, self.cdofs = fem.eliminate_matrix(
            self.matrix, dofs)
        self.solver_tol = solver_tol
        self.lu = fem.LUSolver(self.constrained, solver_tol) if factor else None

    # ------------------------------------------------------------------
    def dirichlet_values(self, data, t):
        out = {}
        if len(self._disp_nodes):
            if data.dirichlet_velocity is None:
                vals = np.zeros((2, len(self._disp_nodes)))
            else:
                xy = self.v.dof_coords(self.mesh)[self._disp_nodes]
                vals = np.asarray(data.dirichlet_velocity(xy[:, 0], xy[:, 1],
                                                          t), dtype=float)
                vals = np.broadcast_to(vals.reshape(2, -1),
                                       (2, len(self._disp_nodes)))
            for c in range(2):
                for node, v in zip(self._disp_nodes, vals[c]):
                    out[int(node) + c * self.v.n_scalar] = float(v)
        if len(self._pres_nodes):
            if data.dirichlet_pressure is None:
                vals = np.zeros(len(self._pres_nodes))
            else:
                xy = self.q.dof_coords(self.mesh)[self._pres_nodes]
                vals = np.broadcast_to(np.asarray(
                    data.dirichlet_pressure(xy[:, 0], xy[:, 1], t),
                    dtype=float), (len(self._pres_nodes),))
            for node, v in zip(self._pres_nodes, vals):
                out[self.n_u + int(node)] = float(v)
        return np.array([out[int(k)] for k in self.cdofs]) \
            if len(self.cdofs) else np.empty(0)

    def raw_rhs(self, state, robin, data, t):
        prm = self.params
        b_x = (prm.rho_p / prm.dt) * (self.mass_v @ state.xi.coeffs) \
            - self.elast @ state.eta.coeffs
        if data.body_force is not None:
            b_x += fem.assemble_functional("DOMAIN_LOAD", self.v, self.mesh,
                                           data.body_force, t=t)
        if data.traction is not None and self.flux_marker is not None:
            b_x += fem.assemble_functional("BOUNDARY_LOAD", self.v, self.mesh,
                                           data.traction,
                                           marker=self.flux_marker, t=t)
        b_p = (prm.c0 / prm.dt) * (self.mass_s @ state.phi.coeffs)
        if data.source is not None:
            b_p += fem.assemble_functional("DOMAIN_LOAD", self.q, self.mesh,
                                           data.source, t=t)
        if data.darcy_flux is not None and self.flux_marker is not None:
            b_p += fem.assemble_functional("BOUNDARY_LOAD", self.q, self.mesh,
                                           data.darcy_flux,
                                           marker=self.flux_marker, t=t)
        if robin is not None:
            r3, r4, r5 = robin
            if not (len(r3) == len(r4) == len(r5) == len(self.traces)):
                raise CouplingDataError(
                    "biot step needs R3/R4/R5 traces for every pairing")
            for trace, v3, v4, v5 in zip(self.traces, r3, r4, r5):
                b_x += trace.normal_load(v3, self.mesh, self.v)
                b_x += trace.tangent_load(v5, self.mesh, self.v)
                b_p += trace.scalar_load(v4, self.mesh, self.q)
        elif self.traces:
            raise CouplingDataError("biot step is missing Robin data")
        return np.concatenate([b_x, b_p])

    def constrained_rhs(self, state, robin, data, t):
        raw = self.raw_rhs(state, robin, data, t)
        values = self.dirichlet_values(data, t)
        return fem.eliminate_rhs(raw, self.lift, self.cdofs, values)

    def step(self, state, robin, data):
        """Advance to t + dt; eta is updated by the kinematic rule."""
        prm = self.params
        t1 = state.t + prm.dt
        rhs = self.constrained_rhs(state, robin, data, t1)
        if self.lu is None:
            self.lu = fem.LUSolver(self.constrained, self.solver_tol)
        x = self.lu.solve(rhs)
        xi = fem.Field(self.v, x[:self.n_u], t1)
        phi = fem.Field(self.q, x[self.n_u:], t1)
        eta = fem.Field(self.v, state.eta.coeffs + prm.dt * xi.coeffs, t1)
        return BiotState(eta, xi, phi, state.step + 1, t1)

    # ------------------------------------------------------------------
    def interior_residual(self, state_prev, state_new, data):
        """A_int x - b_int without interface terms: momentum rows recover
        <sigma_p n_p, zeta>, flow rows recover <K grad phi . n_p, psi>."""
        prm = self.params
        x_xi = state_new.xi.coeffs
        x_phi = state_new.phi.coeffs
        t1 = state_new.t
        r_x = ((prm.rho_p / prm.dt) * (self.mass_v @ x_xi)
               + prm.dt * (self.elast @ x_xi)
               - prm.alpha * (self.div.T @ x_phi))
        r_p = ((prm.c0 / prm.dt) * (self.mass_s @ x_phi)
               + self.darcy @ x_phi + prm.alpha * (self.div @ x_xi))
        b_x = (prm.rho_p / prm.dt) * (self.mass_v @ state_prev.xi.coeffs) \
            - self.elast @ state_prev.eta.coeffs
        if data.body_force is not None:
            b_x += fem.assemble_functional("DOMAIN_LOAD", self.v, self.mesh,
                                           data.body_force, t=t1)
        if data.traction is not None and self.flux_marker is not None:
            b_x += fem.assemble_functional("BOUNDARY_LOAD", self.v, self.mesh,
                                           data.traction,
                                           marker=self.flux_marker, t=t1)
        b_p = (prm.c0 / prm.dt) * (self.mass_s @ state_prev.phi.coeffs)
        if data.source is not None:
            b_p += fem.assemble_functional("DOMAIN_LOAD", self.q, self.mesh,
                                           data.source, t=t1)
        if data.darcy_flux is not None and self.flux_marker is not None:
            b_p += fem.assemble_functional("BOUNDARY_LOAD", self.q, self.mesh,
                                           data.darcy_flux,
                                           marker=self.flux_marker, t=t1)
        return r_x - b_x, r_p - b_p


def biot_interface_traces(state, bundles, mesh):
    """Step-n nodal interface data of the Biot state: solid velocity and
    Darcy pressure, with normal/tangential parts on the reference mesh."""
    from .robin import BiotTraces

    xi_vals = [b.solid_trace.extract(state.xi) for b in bundles]
    phi_vals = [b.solid_trace.extract(state.phi) for b in bundles]
    traces = BiotTraces(xi=xi_vals, phi=phi_vals, step=state.step)
    traces.xi_normal = [b.solid_trace.dot_normal(v, mesh)
                        for b, v in zip(bundles, xi_vals)]
    traces.xi_tangential = [b.solid_trace.project_tangent(v, mesh)
                            for b, v in zip(bundles, xi_vals)]
    return traces


# ---------------------------------------------------------------------------
# spec-level one-shot operations

def assemble_biot_step(params, state_n, robin, data=None, bundles=(),
                       mesh=None, disp_dirichlet_markers=(Marker.DIRICHLET_P,),
                       pres_dirichlet_markers=(Marker.DIRICHLET_P,),
                       flux_marker=Marker.NEUMANN_P, include_xi_normal=True,
                       solver_tol=1e-10):
    """Build the constrained sparse system for one Biot step."""
    mesh = mesh or state_n.xi.dofmap.mesh
    traces = [b.solid_trace for b in bundles]
    op = BiotOperator(params, mesh, state_n.xi.dofmap, state_n.phi.dofmap,
                      traces, disp_dirichlet_markers=disp_dirichlet_markers,
                      pres_dirichlet_markers=pres_dirichlet_markers,
                      flux_marker=flux_marker,
                      include_xi_normal=include_xi_normal,
                      solver_tol=solver_tol, factor=False)
    data = data or BiotData()
    rtriple = None if robin is None else (robin.r3, robin.r4, robin.r5)
    rhs = op.constrained_rhs(state_n, rtriple, data, state_n.t + params.dt)
    system = fem.SparseSystem(op.constrained, rhs,
                              dict(zip(map(int, op.cdofs),
                                       op.dirichlet_values(data, state_n.t + params.dt))))
    system.meta = {"operator": op, "state": state_n}
    return system


def solve_biot_step(system):
    """Solve a system from assemble_biot_step; applies the eta update."""
    op = system.meta["operator"]
    state = system.meta["state"]
    x = fem.solve_sparse(system, op.solver_tol)
    t1 = state.t + op.params.dt
    xi = fem.Field(op.v, x[:op.n_u], t1)
    phi = fem.Field(op.q, x[op.n_u:], t1)
    eta = fem.Field(op.v, state.eta.coeffs + op.params.dt * xi.coeffs, t1)
    return BiotState(eta, xi, phi, state.step + 1, t1)
