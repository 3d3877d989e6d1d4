"""Orchestration of the loosely coupled time loop.

Each step computes the five Robin traces from step-n data, dispatches the
fluid and Biot subproblems to two worker tasks (or runs them back to back
in sequential mode), joins, and advances the energy monitor.  A
fixed-point mode re-iterates the two-solve exchange inside one step as a
verification instrument for the interface compatibility identities.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fem
from .ale import ALEState, HarmonicExtension, initial_ale_state, mesh_velocity
from .biot import BiotOperator, BiotState, biot_interface_traces
from .errors import CapabilityError, InsufficientHistoryError, SynchronizationError
from .fluid import FluidOperator, FluidState, fluid_interface_traces
from .meshing import Marker, deform_mesh, reset_mesh
from .robin import (
    InterfaceBundle,
    RobinData,
    compute_fluid_robin,
    compute_robin_data,
)


@dataclass
class StepStates:
    fluid: FluidState
    biot: BiotState
    ale: ALEState = None

    @property
    def step(self):
        return self.fluid.step

    @property
    def t(self):
        return self.fluid.t


@dataclass
class EnergyRow:
    """Per-step energy report: E, cumulative D, I, cumulative N, and the
    raw forcing norms (the analytic constants of the forcing-energy bound
    are not computable, so norms are reported instead)."""

    step: int
    t: float
    energy: float
    dissipation: float
    interface: float
    numerical: float
    forcing_f: float = 0.0
    forcing_g: float = 0.0
    forcing_d: float = 0.0


@dataclass
class EnergyHistory:
    rows: list = dc_field(default_factory=list)

    def append(self, row):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def check_monotone_accumulators(self, tol=1e-12):
        d = self.column("dissipation")
        n = self.column("numerical")
        return bool(np.all(np.diff(d) >= -tol * np.maximum(d[1:], 1.0))
                    and np.all(np.diff(n) >= -tol * np.maximum(n[1:], 1.0)))


class EnergyMonitor:
    """Energy quantities of the splitting scheme on the reference meshes."""

    def __init__(self, problem, v_f, q_f, v_p, q_p, bundles):
        self.problem = problem
        prm = problem.params
        self.prm = prm
        fm, sm = problem.fluid_mesh, problem.solid_mesh
        self.bundles = bundles
        self.m_f = fem.assemble_form("VECTOR_MASS", v_f, v_f, fm)
        self.d_f = fem.assemble_form("SYM_GRAD", v_f, v_f, fm,
                                     coefficient=0.5)  # (D(u), D(v))
        self.m_p = fem.assemble_form("VECTOR_MASS", v_p, v_p, sm)
        self.d_p = fem.assemble_form("SYM_GRAD", v_p, v_p, sm, coefficient=0.5)
        self.div_p = fem.assemble_form("GRAD_DIV", v_p, v_p, sm,
                                       coefficient=1.0)
        self.m_s = fem.assemble_form("MASS", q_p, q_p, sm)
        self.k_s = fem.assemble_form("STIFFNESS", q_p, q_p, sm,
                                     coefficient=1.0)
        if bundles:
            self.tn_f = fem.assemble_form("BOUNDARY_NORMAL", v_f, v_f, fm,
                                          marker=Marker.INTERFACE)
            self.tt_f = fem.assemble_form("BOUNDARY_TANGENT", v_f, v_f, fm,
                                          marker=Marker.INTERFACE)
            self.tn_p = fem.assemble_form("BOUNDARY_NORMAL", v_p, v_p, sm,
                                          marker=Marker.INTERFACE)
            self.tt_p = fem.assemble_form("BOUNDARY_TANGENT", v_p, v_p, sm,
                                          marker=Marker.INTERFACE)
            self.mg_p = fem.assemble_form("BOUNDARY_MASS", q_p, q_p, sm,
                                          marker=Marker.INTERFACE)
        self._cum_d = 0.0
        self._cum_n = 0.0

    @staticmethod
    def _q(x, m):
        return float(x @ (m @ x))

    def energy(self, fs, bs):
        prm = self.prm
        return 0.5 * (prm.rho_p * self._q(bs.xi.coeffs, self.m_p)
                      + 2.0 * prm.mu_p * self._q(bs.eta.coeffs, self.d_p)
                      + prm.lambda_p * self._q(bs.eta.coeffs, self.div_p)
                      + prm.c0 * self._q(bs.phi.coeffs, self.m_s)
                      + prm.rho_f * self._q(fs.u.coeffs, self.m_f))

    def dissipation_step(self, fs, bs):
        prm = self.prm
        return (prm.mu_f * prm.dt * self._q(fs.u.coeffs, self.d_f)
                + 0.5 * prm.dt * prm.kappa * self._q(bs.phi.coeffs, self.k_s))

    def interface_energy(self, fs, bs):
        if not self.bundles:
            return 0.0
        prm = self.prm
        u, xi, phi = fs.u.coeffs, bs.xi.coeffs, bs.phi.coeffs
        return 0.5 * prm.dt * (
            prm.robin_L * self._q(u, self.tn_f)
            + self._q(phi, self.mg_p) / prm.robin_L
            + self._q(xi, self.tn_p)
            + prm.gamma * (self._q(u, self.tt_f) + self._q(xi, self.tt_p)))

    def _xi_on_fluid(self, bs):
        out = np.zeros(self.m_f.shape[0])
        for b in self.bundles:
            vals = b.to_fluid(b.solid_trace.extract(bs.xi))
            out += b.fluid_trace.scatter(vals)
        return out

    def _u_on_solid(self, fs):
        out = np.zeros(self.m_p.shape[0])
        for b in self.bundles:
            vals = b.to_solid(b.fluid_trace.extract(fs.u))
            out += b.solid_trace.scatter(vals)
        return out

    def numerical_step(self, fs0, bs0, fs1, bs1):
        prm = self.prm
        du = fs1.u.coeffs - fs0.u.coeffs
        dxi = bs1.xi.coeffs - bs0.xi.coeffs
        deta = bs1.eta.coeffs - bs0.eta.coeffs
        dphi = bs1.phi.coeffs - bs0.phi.coeffs
        val = (0.5 * prm.rho_p * self._q(dxi, self.m_p)
               + prm.mu_p * self._q(deta, self.d_p)
               + 0.5 * prm.lambda_p * self._q(deta, self.div_p)
               + 0.5 * prm.rho_f * self._q(du, self.m_f)
               + 0.5 * prm.c0 * self._q(dphi, self.m_s))
        if self.bundles:
            z_f = fs1.u.coeffs - self._xi_on_fluid(bs0)
            z_p = bs1.xi.coeffs - self._u_on_solid(fs0)
            val += 0.5 * prm.dt * prm.gamma * (self._q(z_f, self.tt_f)
                                               + self._q(z_p, self.tt_p))
            val += 0.5 * prm.dt * self._q(dxi, self.tn_p)
        return val

    def forcing_norms(self, t):
        pr = self.problem
        f_f = fem.function_l2(pr.fluid_data.body_force, pr.fluid_mesh,
                              ncomp=2, t=t) if pr.fluid_data.body_force else 0.0
        f_g = 0.0
        if pr.fluid_data.traction is not None \
                and pr.fluid_traction_marker is not None:
            f_g = fem.boundary_function_l2(pr.fluid_data.traction,
                                           pr.fluid_mesh,
                                           pr.fluid_traction_marker,
                                           ncomp=2, t=t)
        f_d = fem.function_l2(pr.biot_data.source, pr.solid_mesh,
                              t=t) if pr.biot_data.source else 0.0
        return f_f, f_g, f_d

    def initial_row(self, states):
        self._cum_d = self.dissipation_step(states.fluid, states.biot)
        self._cum_n = 0.0
        f_f, f_g, f_d = self.forcing_norms(states.t)
        return EnergyRow(0, states.t, self.energy(states.fluid, states.biot),
                         self._cum_d,
                         self.interface_energy(states.fluid, states.biot),
                         0.0, f_f, f_g, f_d)

    def advance(self, fs0, bs0, fs1, bs1):
        self._cum_d += self.dissipation_step(fs1, bs1)
        self._cum_n += self.numerical_step(fs0, bs0, fs1, bs1)
        f_f, f_g, f_d = self.forcing_norms(fs1.t)
        return EnergyRow(fs1.step, fs1.t, self.energy(fs1, bs1), self._cum_d,
                         self.interface_energy(fs1, bs1), self._cum_n,
                         f_f, f_g, f_d)


@dataclass
class FixedPointReport:
    iterations: int
    converged: bool
    increments: list
    residuals: dict


class CouplingDriver:
    """Builds the discrete operators once and advances the coupled system.

    ``sequential`` replaces the two-task dispatch with back-to-back solves
    (order controlled by ``order``: "fluid-first" or "biot-first"); the
    results are identical because the subproblems share no data within a
    step beyond the immutable Robin traces.
    """

    def __init__(self, problem, sequential=False, order="fluid-first"):
        self.problem = problem
        self.params = problem.params
        self.sequential = sequential
        self.order = order
        self._pool = None

        fm, sm = problem.fluid_mesh, problem.solid_mesh
        self.v_f = fem.DofMap(fm, fem.P2, ncomp=2)
        self.q_f = fem.DofMap(fm, fem.P1)
        self.v_p = fem.DofMap(sm, fem.P2, ncomp=2)
        self.q_p = fem.DofMap(sm, fem.P1)
        self.s_f = fem.DofMap(fm, fem.P2)  # scalar P2 helper (diagnostics)
        self.bundles = [
            InterfaceBundle(p, fem.BoundaryTrace(p.fluid, self.v_f),
                            fem.BoundaryTrace(p.solid, self.v_p))
            for p in problem.pairings]
        self.ftraces = [b.fluid_trace for b in self.bundles]
        self.straces = [b.solid_trace for b in self.bundles]

        self.biot_op = BiotOperator(
            problem.params, sm, self.v_p, self.q_p, self.straces,
            disp_dirichlet_markers=problem.disp_dirichlet_markers,
            pres_dirichlet_markers=problem.pres_dirichlet_markers,
            flux_marker=problem.darcy_flux_marker,
            include_xi_normal=problem.include_xi_normal,
            corner_interface_precedence=problem.corner_interface_precedence,
            solver_tol=problem.solver_tol)
        if problem.moving:
            self.extension = HarmonicExtension(fm, self.v_f, self.ftraces,
                                               problem.solver_tol)
            self.fluid_op = None
        else:
            self.extension = None
            self.fluid_op = self._make_fluid_op(fm, convective=False,
                                                advect=None)
        self.monitor = EnergyMonitor(problem, self.v_f, self.q_f, self.v_p,
                                     self.q_p, self.bundles)

    def _make_fluid_op(self, mesh, convective, advect):
        pr = self.problem
        return FluidOperator(
            pr.params, mesh, self.v_f, self.q_f, self.ftraces,
            convective=convective, advect=advect,
            dirichlet_markers=pr.fluid_dirichlet_markers,
            traction_marker=pr.fluid_traction_marker,
            pressure_mean_zero=pr.pressure_mean_zero,
            corner_interface_precedence=pr.corner_interface_precedence,
            solver_tol=pr.solver_tol)

    # ------------------------------------------------------------------
    def initial_states(self):
        ini = self.problem.initial

        def interp(name, dofmap):
            f = getattr(ini, name, None)
            if f is None:
                return fem.zero_field(dofmap, 0.0)
            return fem.interpolate(f, dofmap, t=0.0)

        fs = FluidState(interp("u", self.v_f), interp("p", self.q_f), 0, 0.0)
        bs = BiotState(interp("eta", self.v_p), interp("xi", self.v_p),
                       interp("phi", self.q_p), 0, 0.0)
        ale = initial_ale_state(self.v_f) if self.problem.moving else None
        return StepStates(fs, bs, ale)

    # ------------------------------------------------------------------
    def _dispatch(self, tasks):
        """Run the two named subproblem tasks; exactly two workers."""
        if self.sequential:
            names = ["fluid", "biot"]
            if self.order == "biot-first":
                names.reverse()
            out = {}
            for name in names:
                out[name] = tasks[name]()
            return out["fluid"], out["biot"]
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=2)
        futures = {name: self._pool.submit(fn) for name, fn in tasks.items()}
        error = None
        results = {}
        for name in ("fluid", "biot"):
            try:
                results[name] = futures[name].result()
            except BaseException as exc:
                if error is None:
                    error = (name, exc)
                    sibling = "biot" if name == "fluid" else "fluid"
                    futures[sibling].cancel()
        if error is not None:
            name, exc = error
            msg = exc.args[0] if exc.args else ""
            exc.args = (f"[{name} subproblem] {msg}",) + tuple(exc.args[1:])
            raise exc
        return results["fluid"], results["biot"]

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=False)
            self._pool = None

    # ------------------------------------------------------------------
    def advance_step(self, states):
        """One loosely coupled step; returns (new states, energy row)."""
        fs, bs = states.fluid, states.biot
        if fs.step != bs.step:
            raise SynchronizationError(
                f"fluid state at step {fs.step}, biot state at {bs.step}")
        pr = self.problem
        ftr = fluid_interface_traces(fs, self.bundles, pr.fluid_mesh)
        btr = biot_interface_traces(bs, self.bundles, pr.solid_mesh)

        if pr.moving:
            robin_solid = compute_robin_data(
                ftr, btr, self.bundles, pr.fluid_mesh, pr.solid_mesh,
                self.params)

            def fluid_task():
                eta_tr = [b.to_fluid(b.solid_trace.extract(bs.eta))
                          for b in self.bundles]
                eta_f = self.extension.solve(eta_tr, t=fs.t)
                if fs.step == 0:
                    w = fem.zero_field(self.v_f, fs.t)
                    eta_prev = eta_f
                else:
                    eta_prev = states.ale.eta_f
                    w = mesh_velocity(eta_f, eta_prev, self.params.dt)
                mesh_n = deform_mesh(pr.fluid_mesh, eta_f.coeffs)
                r1, r2 = compute_fluid_robin(ftr, btr, self.bundles, mesh_n,
                                             self.params)
                advect = fem.Field(self.v_f, fs.u.coeffs - w.coeffs, fs.t)
                op = self._make_fluid_op(mesh_n, convective=pr.convective,
                                         advect=advect)
                fs1 = op.step(fs, (r1, r2), pr.fluid_data)
                reset_mesh(mesh_n)
                ale1 = ALEState(eta_f, eta_prev, w, fs.step + 1)
                return fs1, ale1

            def biot_task():
                return self.biot_op.step(
                    bs, (robin_solid.r3, robin_solid.r4, robin_solid.r5),
                    pr.biot_data)

            (fs1, ale1), bs1 = self._dispatch({"fluid": fluid_task,
                                               "biot": biot_task})
            row = self.monitor.advance(fs, bs, fs1, bs1)
            return StepStates(fs1, bs1, ale1), row

        robin = compute_robin_data(ftr, btr, self.bundles, pr.fluid_mesh,
                                   pr.solid_mesh, self.params)

        def fluid_task():
            return self.fluid_op.step(fs, (robin.r1, robin.r2), pr.fluid_data)

        def biot_task():
            return self.biot_op.step(bs, (robin.r3, robin.r4, robin.r5),
                                     pr.biot_data)

        fs1, bs1 = self._dispatch({"fluid": fluid_task, "biot": biot_task})
        row = self.monitor.advance(fs, bs, fs1, bs1)
        return StepStates(fs1, bs1, states.ale), row

    # ------------------------------------------------------------------
    def run(self, callback=None, snapshot_every=0):
        """Time loop from t = 0 to total_time; returns final states and the
        energy history.  ``callback(step, states)`` fires at the snapshot
        cadence (step 0 and the final step always included)."""
        states = self.initial_states()
        history = EnergyHistory()
        history.append(self.monitor.initial_row(states))
        if callback is not None:
            callback(0, states)
        n_steps = self.params.n_steps
        for n in range(n_steps):
            states, row = self.advance_step(states)
            history.append(row)
            if callback is not None and (
                    (snapshot_every and states.step % snapshot_every == 0)
                    or states.step == n_steps):
                callback(states.step, states)
        return states, history

    # ------------------------------------------------------------------
    def _robin_from(self, fs, bs, step):
        ftr = fluid_interface_traces(fs, self.bundles, self.problem.fluid_mesh)
        btr = biot_interface_traces(bs, self.bundles, self.problem.solid_mesh)
        ftr.step = step
        btr.step = step
        return compute_robin_data(ftr, btr, self.bundles,
                                  self.problem.fluid_mesh,
                                  self.problem.solid_mesh, self.params)

    def _robin_increment(self, new, old):
        """Max relative L2(Gamma) change across the five traces."""
        worst = 0.0
        for b, lists in zip(self.bundles, zip(new.r1, new.r2, new.r3, new.r4,
                                              new.r5, old.r1, old.r2, old.r3,
                                              old.r4, old.r5)):
            traces = [b.fluid_trace, b.fluid_trace, b.solid_trace,
                      b.solid_trace, b.solid_trace]
            meshes = [self.problem.fluid_mesh] * 2 + [self.problem.solid_mesh] * 3
            for i in range(5):
                tr, mesh = traces[i], meshes[i]
                diff = fem.trace_l2_norm(tr, lists[i] - lists[5 + i], mesh)
                scale = max(fem.trace_l2_norm(tr, lists[i], mesh), 1.0)
                worst = max(worst, diff / scale)
        return worst

    def fixed_point_iterate(self, states, tol=1e-10, maxit=50):
        """Sub-iterate the two-solve exchange inside one step until the
        interface traces stop changing; verification instrument for the
        compatibility identities (fixed-domain configurations only)."""
        if self.problem.moving:
            raise CapabilityError(
                "fixed-point verification runs on fixed-domain problems")
        fs, bs = states.fluid, states.biot
        robin_used = self._robin_from(fs, bs, fs.step)
        increments = []
        converged = False
        new_f, new_b = None, None
        iterations = 0
        for k in range(1, maxit + 1):
            iterations = k
            new_f = self.fluid_op.step(fs, (robin_used.r1, robin_used.r2),
                                       self.problem.fluid_data)
            new_b = self.biot_op.step(bs, (robin_used.r3, robin_used.r4,
                                           robin_used.r5),
                                      self.problem.biot_data)
            robin_next = self._robin_from(new_f, new_b, fs.step)
            inc = self._robin_increment(robin_next, robin_used)
            increments.append(inc)
            if inc < tol:
                converged = True
                break
            robin_used = robin_next
        residuals = self.interface_condition_residuals(states,
                                                       StepStates(new_f, new_b))
        return (StepStates(new_f, new_b, states.ale),
                FixedPointReport(iterations, converged, increments, residuals))

    # ------------------------------------------------------------------
    def interface_condition_residuals(self, states_n, states_new):
        """Weak residuals of the four interface conditions, evaluated with
        consistent boundary fluxes from the interior forms (no Robin
        terms) against interface test functions.  Conforming pairings
        only (the verification benchmark)."""
        pr = self.problem
        prm = self.params
        fs0, bs0 = states_n.fluid, states_n.biot
        fs1, bs1 = states_new.fluid, states_new.biot
        r_fu, _ = self.fluid_op.interior_residual(fs0, fs1, pr.fluid_data)
        r_bx, r_bp = self.biot_op.interior_residual(bs0, bs1, pr.biot_data)

        out = {"normal_velocity": 0.0, "bjs_tangential": 0.0,
               "normal_stress": 0.0, "stress_normal_balance": 0.0,
               "stress_tangential_balance": 0.0}

        def rel(a, b):
            scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
            return float(np.linalg.norm(a + b) / scale)

        for bnd in self.bundles:
            if not bnd.pairing.matching:
                raise CapabilityError("interface-condition residuals are "
                                      "defined on conforming pairings")
            ftr, strc = bnd.fluid_trace, bnd.solid_trace
            nf = ftr.normals(pr.fluid_mesh)
            tf = ftr.tangents(pr.fluid_mesh)
            npn = strc.normals(pr.solid_mesh)
            ns_f = self.v_f.n_scalar
            ns_p = self.v_p.n_scalar
            flux_f = np.column_stack([r_fu[ftr.nodes], r_fu[ftr.nodes + ns_f]])
            flux_p = np.column_stack([r_bx[strc.nodes],
                                      r_bx[strc.nodes + ns_p]])
            a = (flux_f * nf).sum(axis=1)       # <n. sigma_f n, psi_k>
            beta = (flux_f * tf).sum(axis=1)    # <tau. sigma_f n, psi_k>
            c = (flux_p * npn).sum(axis=1)      # <n_p. sigma_p n_p, psi_k>
            tp = strc.tangents(pr.solid_mesh)
            d = (flux_p * tp).sum(axis=1)

            u_vals = ftr.extract(fs1.u)
            xi_vals = strc.extract(bs1.xi)
            phi_vals = strc.extract(bs1.phi)

            # (2.6c): n. sigma_f n = -phi
            phi_f = bnd.to_fluid(phi_vals)
            m3 = ftr.scalar_load(phi_f, pr.fluid_mesh, self.s_f)[ftr.nodes]
            out["normal_stress"] = max(out["normal_stress"], rel(a, m3))

            # (2.6b): tau. sigma_f n = -gamma (u - xi). tau
            xi_f = bnd.to_fluid(xi_vals)
            w_t = ((u_vals - xi_f) * tf).sum(axis=1)
            m2 = prm.gamma * ftr.scalar_load(w_t, pr.fluid_mesh,
                                             self.s_f)[ftr.nodes]
            out["bjs_tangential"] = max(out["bjs_tangential"], rel(beta, m2))

            # (2.6a): K grad phi . n_p = (xi - u). n_p
            u_p = bnd.to_solid(u_vals)
            v1 = ((xi_vals - u_p) * npn).sum(axis=1)
            q_full = strc.scalar_load(v1, pr.solid_mesh, self.q_p)
            nv = self.q_p.n_vertices
            vertex_mask = strc.nodes < nv
            m1 = q_full[strc.nodes[vertex_mask]]
            q = r_bp[strc.nodes[vertex_mask]]
            out["normal_velocity"] = max(out["normal_velocity"], rel(q, -m1))

            # (2.6d): sigma_f n_f = sigma_p n_f on both components
            out["stress_normal_balance"] = max(out["stress_normal_balance"],
                                               rel(a, -c))
            out["stress_tangential_balance"] = max(
                out["stress_tangential_balance"], rel(beta, d))
        return out


def energy_report(driver, state_history):
    """Replay the energy quantities over a full list of StepStates."""
    if not state_history:
        raise InsufficientHistoryError("energy report needs at least the "
                                       "initial states")
    monitor = EnergyMonitor(driver.problem, driver.v_f, driver.q_f,
                            driver.v_p, driver.q_p, driver.bundles)
    history = EnergyHistory()
    history.append(monitor.initial_row(state_history[0]))
    for prev, cur in zip(state_history[:-1], state_history[1:]):
        if cur.step != prev.step + 1:
            raise InsufficientHistoryError(
                f"state history skips from step {prev.step} to {cur.step}")
        history.append(monitor.advance(prev.fluid, prev.biot, cur.fluid,
                                       cur.biot))
    return history


def advance_step(driver, states):
    """Functional alias for one loosely coupled step."""
    return driver.advance_step(states)
