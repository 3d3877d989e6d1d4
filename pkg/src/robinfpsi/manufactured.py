"""Closed-form benchmark solutions, derived forcings and the strong-form
residual oracle.

Two cases share the structure displacement/velocity and differ in the
pore/fluid pressure time factor (exponential vs phase-shifted sine).  The
forcing expressions below were obtained by substituting the exact fields
into the time-dependent Stokes-Biot system with continuity source g_f;
:func:`residual_check` re-verifies them against finite differences of the
fields alone before any convergence run.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import mpmath
import numpy as np

from . import fem
from .errors import CapabilityError
from .parameters import PhysicalParams


def _case_functions(case_id, prm, be):
    """Fields and forcings over a scalar backend (numpy or mpmath)."""
    sin, cos, exp, pi = be.sin, be.cos, be.exp, be.pi

    if case_id == 1:
        def s(t):
            return exp(t)

        def ds(t):
            return exp(t)
    else:
        def s(t):
            return sin(pi * t + pi / 4)

        def ds(t):
            return pi * cos(pi * t + pi / 4)

    def w(x, y):
        return sin(pi * x) * cos(pi * y / 2)

    def w_x(x, y):
        return pi * cos(pi * x) * cos(pi * y / 2)

    def w_y(x, y):
        return -(pi / 2) * sin(pi * x) * sin(pi * y / 2)

    def eta(x, y, t):
        f = sin(pi * t)
        return (f * (-3 * x + cos(y)), f * (y + 1))

    def u(x, y, t):
        f = pi * cos(pi * t)
        return (f * (-3 * x + cos(y)), f * (y + 1))

    xi = u

    def phi(x, y, t):
        return s(t) * w(x, y)

    def p(x, y, t):
        return s(t) * w(x, y) + 2 * pi * cos(pi * t)

    def F_f(x, y, t):
        a = prm.rho_f * pi ** 2 * sin(pi * t)
        return (-a * (-3 * x + cos(y)) + s(t) * w_x(x, y)
                + prm.mu_f * pi * cos(pi * t) * cos(y),
                -a * (y + 1) + s(t) * w_y(x, y))

    def g_f(x, y, t):
        return -2 * pi * cos(pi * t) + 0 * x

    def F_e(x, y, t):
        a = prm.rho_p * pi ** 2 * sin(pi * t)
        return (-a * (-3 * x + cos(y)) + prm.mu_p * sin(pi * t) * cos(y)
                + prm.alpha * s(t) * w_x(x, y),
                -a * (y + 1) + prm.alpha * s(t) * w_y(x, y))

    def F_d(x, y, t):
        return (prm.c0 * ds(t) * w(x, y) - 2 * prm.alpha * pi * cos(pi * t)
                + prm.kappa * (5 * pi ** 2 / 4) * s(t) * w(x, y))

    def fluid_traction(x, y, t, n):
        """sigma_f(u, p) n with the exact fields."""
        f = pi * cos(pi * t)
        d11, d22 = -3 * f, f
        d12 = -f * sin(y) / 2
        pr = p(x, y, t)
        s11 = -pr + 2 * prm.mu_f * d11
        s22 = -pr + 2 * prm.mu_f * d22
        s12 = 2 * prm.mu_f * d12
        return (s11 * n[0] + s12 * n[1], s12 * n[0] + s22 * n[1])

    def darcy_flux(x, y, t, n):
        """(K grad phi) . n with the exact fields."""
        return prm.kappa * (s(t) * w_x(x, y) * n[0] + s(t) * w_y(x, y) * n[1])

    def solid_traction(x, y, t, n):
        """sigma_p(eta, phi) n with the exact fields."""
        f = sin(pi * t)
        d11, d22 = -3 * f, f
        d12 = -f * sin(y) / 2
        dv = -2 * f
        ph = phi(x, y, t)
        s11 = 2 * prm.mu_p * d11 + prm.lambda_p * dv - prm.alpha * ph
        s22 = 2 * prm.mu_p * d22 + prm.lambda_p * dv - prm.alpha * ph
        s12 = 2 * prm.mu_p * d12
        return (s11 * n[0] + s12 * n[1], s12 * n[0] + s22 * n[1])

    return SimpleNamespace(s=s, ds=ds, eta=eta, xi=xi, u=u, p=p, phi=phi,
                           F_f=F_f, g_f=g_f, F_e=F_e, F_d=F_d,
                           fluid_traction=fluid_traction,
                           solid_traction=solid_traction,
                           darcy_flux=darcy_flux)


class ManufacturedCase:
    """Benchmark case 1 or 2 with numpy-vectorized field closures."""

    def __init__(self, case_id, params=None):
        if case_id not in (1, 2):
            raise CapabilityError(f"unknown benchmark case {case_id}")
        self.case_id = case_id
        self.params = params or PhysicalParams.benchmark(4)
        f = _case_functions(case_id, self.params, np)
        self.eta = lambda x, y, t: np.asarray(f.eta(x, y, t))
        self.xi = lambda x, y, t: np.asarray(f.xi(x, y, t))
        self.u = lambda x, y, t: np.asarray(f.u(x, y, t))
        self.p = f.p
        self.phi = f.phi
        self.F_f = lambda x, y, t: np.asarray(f.F_f(x, y, t))
        self.g_f = f.g_f
        self.F_e = lambda x, y, t: np.asarray(f.F_e(x, y, t))
        self.F_d = f.F_d
        self.fluid_traction = lambda x, y, t, n: np.asarray(
            f.fluid_traction(x, y, t, n))
        self.solid_traction = lambda x, y, t, n: np.asarray(
            f.solid_traction(x, y, t, n))
        self.darcy_flux = f.darcy_flux


def exact_solution(case, t):
    """Exact fields at a fixed time, evaluable at (x, y)."""
    return SimpleNamespace(
        eta=lambda x, y: case.eta(x, y, t),
        xi=lambda x, y: case.xi(x, y, t),
        u=lambda x, y: case.u(x, y, t),
        p=lambda x, y: case.p(x, y, t),
        phi=lambda x, y: case.phi(x, y, t),
    )


def forcing_terms(case, t):
    """Forcings and boundary data at a fixed time."""
    return SimpleNamespace(
        F_f=lambda x, y: case.F_f(x, y, t),
        g_f=lambda x, y: case.g_f(x, y, t),
        F_e=lambda x, y: case.F_e(x, y, t),
        F_d=lambda x, y: case.F_d(x, y, t),
        fluid_traction=lambda x, y, n: case.fluid_traction(x, y, t, n),
        darcy_flux=lambda x, y, n: case.darcy_flux(x, y, t, n),
    )


# ---------------------------------------------------------------------------
# strong-form residual oracle

_EQUATIONS = ("fluid_momentum", "fluid_continuity", "solid_kinematics",
              "solid_momentum", "darcy")

PERTURBABLE = {"F_f": "fluid_momentum", "g_f": "fluid_continuity",
               "F_e": "solid_momentum", "F_d": "darcy"}


def residual_check(case, t=0.37, h=1e-4, points=50, seed=0, perturb=None,
                   dps=50):
    """Max strong-form residual of each benchmark equation at random
    interior points, with all derivatives taken by central differences of
    step ``h`` in ``dps``-digit arithmetic (so the O(h^2) truncation error
    is observable without roundoff).

    ``perturb`` names one forcing ("F_f", "g_f", "F_e", "F_d") to offset
    by +1, which must show up only in the matching equation's residual.
    """
    if perturb is not None and perturb not in PERTURBABLE:
        raise CapabilityError(f"cannot perturb {perturb!r}")
    prm = case.params
    rng = np.random.default_rng(seed)
    pts_f = rng.uniform([2 * h, 2 * h], [1 - 2 * h, 1 - 2 * h], (points, 2))
    pts_p = rng.uniform([2 * h, -1 + 2 * h], [1 - 2 * h, -2 * h], (points, 2))

    with mpmath.workdps(dps):
        f = _case_functions(case.case_id, prm, mpmath)
        hh = mpmath.mpf(h)
        tt = mpmath.mpf(t)

        def d_t(g, x, y):
            return (g(x, y, tt + hh) - g(x, y, tt - hh)) / (2 * hh)

        def d_x(g, x, y):
            return (g(x + hh, y, tt) - g(x - hh, y, tt)) / (2 * hh)

        def d_y(g, x, y):
            return (g(x, y + hh, tt) - g(x, y - hh, tt)) / (2 * hh)

        def d_xx(g, x, y):
            return (g(x + hh, y, tt) - 2 * g(x, y, tt)
                    + g(x - hh, y, tt)) / hh ** 2

        def d_yy(g, x, y):
            return (g(x, y + hh, tt) - 2 * g(x, y, tt)
                    + g(x, y - hh, tt)) / hh ** 2

        def d_xy(g, x, y):
            return (g(x + hh, y + hh, tt) - g(x + hh, y - hh, tt)
                    - g(x - hh, y + hh, tt)
                    + g(x - hh, y - hh, tt)) / (4 * hh ** 2)

        def comp(g, c):
            return lambda x, y, t_: g(x, y, t_)[c]

        off = mpmath.mpf(1 if perturb else 0)
        res = {name: 0.0 for name in _EQUATIONS}

        for xf, yf in pts_f:
            x, y = mpmath.mpf(xf), mpmath.mpf(yf)
            ux, uy = comp(f.u, 0), comp(f.u, 1)
            # div sigma_f = mu (lap u + grad div u) - grad p
            lap = (d_xx(ux, x, y) + d_yy(ux, x, y),
                   d_xx(uy, x, y) + d_yy(uy, x, y))
            gdiv = (d_xx(ux, x, y) + d_xy(uy, x, y),
                    d_xy(ux, x, y) + d_yy(uy, x, y))
            gp = (d_x(f.p, x, y), d_y(f.p, x, y))
            ff = f.F_f(x, y, tt)
            for c in range(2):
                r = (prm.rho_f * d_t(comp(f.u, c), x, y)
                     - prm.mu_f * (lap[c] + gdiv[c]) + gp[c]
                     - ff[c] - (off if perturb == "F_f" else 0))
                res["fluid_momentum"] = max(res["fluid_momentum"], abs(float(r)))
            div_u = d_x(ux, x, y) + d_y(uy, x, y)
            r = div_u - f.g_f(x, y, tt) - (off if perturb == "g_f" else 0)
            res["fluid_continuity"] = max(res["fluid_continuity"], abs(float(r)))

        for xp, yp in pts_p:
            x, y = mpmath.mpf(xp), mpmath.mpf(yp)
            ex, ey = comp(f.eta, 0), comp(f.eta, 1)
            xi = f.xi(x, y, tt)
            for c in range(2):
                r = d_t(comp(f.eta, c), x, y) - xi[c]
                res["solid_kinematics"] = max(res["solid_kinematics"],
                                              abs(float(r)))
            # div sigma_p = mu lap eta + (mu + lambda) grad div eta - alpha grad phi
            lap = (d_xx(ex, x, y) + d_yy(ex, x, y),
                   d_xx(ey, x, y) + d_yy(ey, x, y))
            gdiv = (d_xx(ex, x, y) + d_xy(ey, x, y),
                    d_xy(ex, x, y) + d_yy(ey, x, y))
            gphi = (d_x(f.phi, x, y), d_y(f.phi, x, y))
            fe = f.F_e(x, y, tt)
            for c in range(2):
                r = (prm.rho_p * d_t(comp(f.xi, c), x, y)
                     - prm.mu_p * lap[c] - (prm.mu_p + prm.lambda_p) * gdiv[c]
                     + prm.alpha * gphi[c]
                     - fe[c] - (off if perturb == "F_e" else 0))
                res["solid_momentum"] = max(res["solid_momentum"], abs(float(r)))
            lap_phi = d_xx(f.phi, x, y) + d_yy(f.phi, x, y)
            div_xi = d_x(comp(f.xi, 0), x, y) + d_y(comp(f.xi, 1), x, y)
            r = (prm.c0 * d_t(f.phi, x, y) + prm.alpha * div_xi
                 - prm.kappa * lap_phi
                 - f.F_d(x, y, tt) - (off if perturb == "F_d" else 0))
            res["darcy"] = max(res["darcy"], abs(float(r)))

    return res


RESIDUAL_GATE = 1e-6


def assert_residual_gate(case, h=1e-4, points=50):
    """Abort-before-compute gate used by every convergence run."""
    res = residual_check(case, h=h, points=points)
    bad = {k: v for k, v in res.items() if v > RESIDUAL_GATE}
    if bad:
        raise CapabilityError(
            f"manufactured forcing residuals exceed {RESIDUAL_GATE:g}: {bad}")
    return res


# ---------------------------------------------------------------------------
# error measures

@dataclass
class ErrorReport:
    e_eta: float
    e_xi: float
    e_phi: float
    e_u: float
    e_p: float

    def as_dict(self):
        return {"e_eta": self.e_eta, "e_xi": self.e_xi, "e_phi": self.e_phi,
                "e_u": self.e_u, "e_p": self.e_p}


def error_norms(u, p, eta, xi, phi, case, t, fluid_mesh, solid_mesh):
    """Final-time errors against the exact solution interpolated into the
    same discrete spaces: energy norm for eta, L2 for everything else."""
    prm = case.params

    def diff(fld, exact, mesh):
        ex = fem.interpolate(exact, fld.dofmap, mesh, t)
        return fem.Field(fld.dofmap, fld.coeffs - ex.coeffs, t)

    d_eta = diff(eta, case.eta, solid_mesh)
    return ErrorReport(
        e_eta=fem.energy_norm_S(d_eta, prm.mu_p, prm.lambda_p, solid_mesh),
        e_xi=fem.l2_norm(diff(xi, case.xi, solid_mesh), solid_mesh),
        e_phi=fem.l2_norm(diff(phi, case.phi, solid_mesh), solid_mesh),
        e_u=fem.l2_norm(diff(u, case.u, fluid_mesh), fluid_mesh),
        e_p=fem.l2_norm(diff(p, case.p, fluid_mesh), fluid_mesh),
    )
