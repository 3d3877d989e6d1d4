"""Convergence-study runner for the manufactured benchmark.

Couples the discretization ladder {dt, dx} = {0.05/n, 0.5/n} to the
loosely coupled driver, guards every run behind the strong-form residual
oracle, and reports final-time errors with observed orders.
"""

from __future__ import annotations

import numpy as np

from .coupling import CouplingDriver
from .errors import ResourceGuardError
from .manufactured import assert_residual_gate, error_norms
from .problems import benchmark_problem

RESOURCE_GUARD_N = 64

PAPER_TABLES = {
    1: {4: dict(e_eta=1.34e-1, e_xi=1.28e-1, e_phi=2.42e-2, e_u=1.34e-2,
                e_p=1.75e-1),
        8: dict(e_eta=6.63e-2, e_xi=6.49e-2, e_phi=5.77e-3, e_u=6.84e-3,
                e_p=8.98e-2),
        16: dict(e_eta=3.31e-2, e_xi=3.26e-2, e_phi=2.47e-3, e_u=3.46e-3,
                 e_p=4.55e-2),
        32: dict(e_eta=1.65e-2, e_xi=1.64e-2, e_phi=1.22e-3, e_u=1.74e-3,
                 e_p=2.29e-2),
        64: dict(e_eta=8.27e-3, e_xi=8.21e-3, e_phi=6.18e-4, e_u=8.75e-4,
                 e_p=1.15e-2)},
    2: {4: dict(e_eta=1.66e-1, e_xi=1.25e-1, e_phi=1.57e-2, e_u=1.41e-2,
                e_p=2.12e-1),
        8: dict(e_eta=8.49e-2, e_xi=6.36e-2, e_phi=6.60e-3, e_u=7.24e-3,
                e_p=1.06e-1),
        16: dict(e_eta=4.29e-2, e_xi=3.21e-2, e_phi=3.12e-3, e_u=3.67e-3,
                 e_p=5.32e-2),
        32: dict(e_eta=2.16e-2, e_xi=1.61e-2, e_phi=1.53e-3, e_u=1.85e-3,
                 e_p=2.66e-2),
        64: dict(e_eta=1.08e-2, e_xi=8.08e-3, e_phi=7.56e-4, e_u=9.29e-4,
                 e_p=1.33e-2)},
}


def run_benchmark(case_id, n, sequential=False, problem_patch=None):
    """One full benchmark run; returns (errors dict, final states, driver)."""
    problem = benchmark_problem(case_id, n)
    if problem_patch:
        for key, val in problem_patch.items():
            setattr(problem, key, val)
    driver = CouplingDriver(problem, sequential=sequential)
    try:
        states, history = driver.run()
    finally:
        driver.close()
    errs = error_norms(states.fluid.u, states.fluid.p, states.biot.eta,
                       states.biot.xi, states.biot.phi, problem.case,
                       states.t, problem.fluid_mesh,
                       problem.solid_mesh).as_dict()
    return errs, states, history


def convergence_study(case_id, n_list, sequential=False,
                      override_resource_guard=False, progress=None):
    """Errors over the ladder; refuses n > 64 unless overridden.

    Returns a list of (n, errors) rows in ascending n.  The manufactured
    forcings are gated through the finite-difference residual oracle
    before any run starts.
    """
    n_list = sorted(int(n) for n in n_list)
    if not n_list:
        raise ResourceGuardError("empty n list")
    if max(n_list) > RESOURCE_GUARD_N and not override_resource_guard:
        raise ResourceGuardError(
            f"n = {max(n_list)} exceeds the desk-scale guard "
            f"({RESOURCE_GUARD_N}); pass the override flag to proceed")
    from .manufactured import ManufacturedCase
    assert_residual_gate(ManufacturedCase(case_id))
    table = []
    for n in n_list:
        errs, _, _ = run_benchmark(case_id, n, sequential=sequential)
        table.append((n, errs))
        if progress is not None:
            progress(n, errs)
    return table


def least_squares_slopes(table):
    """Slope of log(e) against log(dt) over the whole ladder."""
    ns = np.array([row[0] for row in table], dtype=float)
    x = np.log(0.05 / ns)
    slopes = {}
    for key in table[0][1]:
        y = np.log([row[1][key] for row in table])
        slopes[key] = float(np.polyfit(x, y, 1)[0])
    return slopes


# ---------------------------------------------------------------------------
# unconditional-stability sweep

STABILITY_C0 = (1e-6, 1.0)
STABILITY_K = (1e-6, 1.0)
STABILITY_DT = (1e-3, 1e-2, 1e-1)
STABILITY_BOUND_FACTOR = 100.0


def stability_run(c0, kappa, dt, n=8, total_time=1.0, sequential=False,
                  include_xi_normal=True):
    """One zero-forcing run with L = 1/K; returns a summary row and the
    energy history.  The no-blowup bound stands in for the Gronwall
    estimate, whose constant is not computable."""
    from .parameters import PhysicalParams
    from .problems import stability_problem

    params = PhysicalParams(c0=c0, kappa=kappa, robin_L=1.0 / kappa, dt=dt,
                            total_time=total_time)
    problem = stability_problem(n, params,
                                include_xi_normal=include_xi_normal)
    driver = CouplingDriver(problem, sequential=sequential)
    try:
        states, history = driver.run()
    finally:
        driver.close()
    e = history.column("energy")
    row0 = history[0]
    bound = STABILITY_BOUND_FACTOR * (row0.energy + row0.dissipation
                                      + row0.interface)
    finite = bool(np.isfinite(states.fluid.u.coeffs).all()
                  and np.isfinite(states.fluid.p.coeffs).all()
                  and np.isfinite(states.biot.eta.coeffs).all()
                  and np.isfinite(states.biot.xi.coeffs).all()
                  and np.isfinite(states.biot.phi.coeffs).all()
                  and np.isfinite(e).all())
    row = dict(C0=c0, K=kappa, dt=dt, E0=row0.energy, D0=row0.dissipation,
               I0=row0.interface, max_E=float(e.max()), bound=bound,
               finite=finite,
               monotone=history.check_monotone_accumulators(),
               passed=finite and e.max() <= bound
               and history.check_monotone_accumulators())
    return row, history


def stability_sweep(n=8, total_time=1.0, sequential=False, progress=None):
    """The full parameter sweep of the no-blowup property."""
    rows = []
    histories = {}
    for c0 in STABILITY_C0:
        for kappa in STABILITY_K:
            for dt in STABILITY_DT:
                row, history = stability_run(c0, kappa, dt, n=n,
                                             total_time=total_time,
                                             sequential=sequential)
                rows.append(row)
                histories[(c0, kappa, dt)] = history
                if progress is not None:
                    progress(row)
    return rows, histories
