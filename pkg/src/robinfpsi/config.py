"""Line-oriented ``key = value`` configuration files.

Unknown keys are errors (not warnings); every value is validated with its
positivity/type constraint before any compute starts.  Defaults depend on
the problem kind: benchmark kinds apply the unit parameter set of the
convergence study, the demo kind applies the channel parameters with
L = 1/K and gamma = 1/sqrt(K).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field as dc_field, fields as dc_fields

from .errors import ConfigError
from .parameters import PhysicalParams
from .problems import DEMO_DEFAULTS

KINDS = ("benchmark-case1", "benchmark-case2", "stokes-biot-custom",
         "nsbiot-demo")

_UNSET = object()


@dataclass
class Config:
    kind: str = "benchmark-case1"
    n: int = 4
    dt: float = None
    T: float = None
    rho_f: float = None
    mu_f: float = None
    rho_p: float = None
    mu_p: float = None
    lambda_p: float = None
    alpha: float = None
    C0: float = None
    K: float = None
    gamma: float = None
    L: float = None
    out_dir: str = "out"
    snapshot_every: int = 0
    sequential: bool = False
    include_xi_normal_interface_term: bool = True
    corner_interface_precedence: bool = False
    override_resource_guard: bool = False
    pressure_mean_zero: bool = False
    solver_tol: float = 1e-10
    channel_length: float = DEMO_DEFAULTS["channel_length"]
    channel_height: float = DEMO_DEFAULTS["channel_height"]
    obstacle_x0: float = DEMO_DEFAULTS["obstacle_x0"]
    obstacle_x1: float = DEMO_DEFAULTS["obstacle_x1"]
    obstacle_height: float = DEMO_DEFAULTS["obstacle_height"]
    fluid_resolution: int = DEMO_DEFAULTS["fluid_resolution"]
    solid_resolution: int = DEMO_DEFAULTS["solid_resolution"]

    def physical_params(self):
        return PhysicalParams(
            rho_f=self.rho_f, mu_f=self.mu_f, rho_p=self.rho_p,
            mu_p=self.mu_p, lambda_p=self.lambda_p, alpha=self.alpha,
            c0=self.C0, kappa=self.K, gamma=self.gamma, robin_L=self.L,
            dt=self.dt, total_time=self.T)

    def geometry(self):
        return {k: getattr(self, k) for k in DEMO_DEFAULTS if k !=
                "inlet_coefficient"}


_BOOL_KEYS = {"sequential", "include_xi_normal_interface_term",
              "corner_interface_precedence", "override_resource_guard",
              "pressure_mean_zero"}
_INT_KEYS = {"n", "snapshot_every", "fluid_resolution", "solid_resolution"}
_STR_KEYS = {"kind", "out_dir"}
_POSITIVE_KEYS = {"dt", "T", "rho_f", "mu_f", "rho_p", "mu_p", "lambda_p",
                  "alpha", "C0", "K", "gamma", "L", "solver_tol",
                  "channel_length", "channel_height", "obstacle_height"}

_ALL_KEYS = {f.name for f in dc_fields(Config)}


def _parse_bool(raw, key, line):
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"line {line}: {key} expects a boolean, got {raw!r}",
                      key=key, line=line)


def _apply_defaults(cfg):
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown kind {cfg.kind!r} (expected one of "
                          f"{', '.join(KINDS)})", key="kind")
    unit = dict(rho_f=1.0, mu_f=1.0, rho_p=1.0, mu_p=1.0, lambda_p=1.0,
                alpha=1.0, C0=1.0, K=1.0, gamma=1.0)
    demo = dict(rho_f=1.0, mu_f=0.01, rho_p=1.2, mu_p=1.0336e3,
                lambda_p=4.9364e4, alpha=1.0, C0=1e-3, K=1e-3)
    base = demo if cfg.kind == "nsbiot-demo" else unit
    for key, val in base.items():
        if getattr(cfg, key) is None:
            setattr(cfg, key, val)
    if cfg.gamma is None:
        cfg.gamma = 1.0 / math.sqrt(cfg.K) if cfg.kind == "nsbiot-demo" \
            else 1.0
    if cfg.L is None:
        cfg.L = 1.0 / cfg.K
    if cfg.dt is None:
        cfg.dt = 1e-3 if cfg.kind == "nsbiot-demo" else 0.05 / cfg.n
    if cfg.T is None:
        cfg.T = 5.0 if cfg.kind == "nsbiot-demo" else 1.0
    return cfg


def _validate(cfg):
    if cfg.n < 1:
        raise ConfigError(f"n must be a positive integer (got {cfg.n})",
                          key="n")
    if cfg.snapshot_every < 0:
        raise ConfigError("snapshot_every must be nonnegative",
                          key="snapshot_every")
    for key in _POSITIVE_KEYS:
        val = getattr(cfg, key)
        if not val > 0.0:
            raise ConfigError(f"{key} must be strictly positive (got {val})",
                              key=key)
    if not 0.0 < cfg.alpha <= 1.0:
        raise ConfigError(f"alpha must lie in (0, 1] (got {cfg.alpha})",
                          key="alpha")
    if not 0.0 < cfg.obstacle_x0 < cfg.obstacle_x1 < cfg.channel_length:
        raise ConfigError("obstacles must satisfy 0 < obstacle_x0 < "
                          "obstacle_x1 < channel_length", key="obstacle_x0")
    return cfg


def parse_config(path):
    """Parse and fully validate a configuration file."""
    cfg = Config()
    seen = set()
    with open(path) as fh:
        for lineno, raw_line in enumerate(fh, start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', "
                                  f"got {line!r}", line=lineno)
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in _ALL_KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}",
                                  key=key, line=lineno)
            if key in seen:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}",
                                  key=key, line=lineno)
            seen.add(key)
            try:
                if key in _BOOL_KEYS:
                    val = _parse_bool(raw, key, lineno)
                elif key in _INT_KEYS:
                    val = int(raw)
                elif key in _STR_KEYS:
                    val = raw
                else:
                    val = float(raw)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: cannot parse value for "
                                  f"{key!r}: {raw!r}", key=key,
                                  line=lineno) from exc
            setattr(cfg, key, val)
    return _validate(_apply_defaults(cfg))


def default_config(kind, **overrides):
    """Config with all defaults applied, no file involved."""
    cfg = Config(kind=kind)
    for key, val in overrides.items():
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown key {key!r}", key=key)
        setattr(cfg, key, val)
    return _validate(_apply_defaults(cfg))


def write_config(cfg, path):
    """Serialize a Config so parse_config reproduces it exactly."""
    lines = [f"# robinfpsi configuration ({cfg.kind})"]
    for f in dc_fields(Config):
        val = getattr(cfg, f.name)
        if isinstance(val, bool):
            val = "true" if val else "false"
        elif isinstance(val, float):
            val = repr(val)
        lines.append(f"{f.name} = {val}")
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
