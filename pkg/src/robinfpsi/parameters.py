"""Physical and numerical parameters shared by both subproblem solvers.

2D units: densities in g/cm^2, viscosity in dyne*s/cm^2, Lame parameters
in dyne/cm, storativity in cm/dyne, conductivity in cm^2*s/g, slip rate in
g/(cm*s); times in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigError


@dataclass(frozen=True)
class PhysicalParams:
    rho_f: float = 1.0
    mu_f: float = 1.0
    rho_p: float = 1.0
    mu_p: float = 1.0
    lambda_p: float = 1.0
    alpha: float = 1.0
    c0: float = 1.0
    kappa: float = 1.0        # isotropic hydraulic conductivity K = kappa * I
    gamma: float = 1.0        # BJS slip rate
    robin_L: float = 1.0      # Robin parameter L (L1 = 1/L3 = L, L2 = 1)
    dt: float = 0.0125
    total_time: float = 1.0

    def __post_init__(self):
        positive = ("rho_f", "mu_f", "rho_p", "mu_p", "lambda_p", "c0",
                    "kappa", "gamma", "robin_L", "dt", "total_time")
        for name in positive:
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be strictly positive "
                                  f"(got {getattr(self, name)})", key=name)
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1] (got {self.alpha})",
                              key="alpha")

    @property
    def n_steps(self):
        return int(round(self.total_time / self.dt))

    def replace(self, **kw):
        return replace(self, **kw)

    @classmethod
    def benchmark(cls, n):
        """Unit parameters of the convergence benchmark at ladder level n:
        dt = 0.05/n, mesh size 0.5/n, final time 1."""
        return cls(dt=0.05 / n, total_time=1.0)
