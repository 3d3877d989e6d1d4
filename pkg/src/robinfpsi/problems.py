"""Concrete coupled problems: the manufactured-solution benchmark, the
zero-forcing stability configuration, and the channel-with-obstacles
demo on a moving domain."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from types import SimpleNamespace

import numpy as np

from .biot import BiotData
from .errors import GeometryError
from .fluid import FluidData
from .interface import extract_interfaces
from .manufactured import ManufacturedCase
from .meshing import Marker, Mesh, build_rect_mesh, mark_boundary, remove_triangles
from .parameters import PhysicalParams

EPS = 1e-12


@dataclass
class CoupledProblem:
    """Everything the coupling driver needs to run one configuration."""

    label: str
    params: PhysicalParams
    fluid_mesh: Mesh
    solid_mesh: Mesh
    pairings: list
    fluid_data: FluidData
    biot_data: BiotData
    fluid_dirichlet_markers: tuple = (Marker.DIRICHLET_F,)
    fluid_traction_marker: object = Marker.NEUMANN_F
    disp_dirichlet_markers: tuple = (Marker.DIRICHLET_P,)
    pres_dirichlet_markers: tuple = (Marker.DIRICHLET_P,)
    darcy_flux_marker: object = Marker.NEUMANN_P
    convective: bool = False
    moving: bool = False
    pressure_mean_zero: bool = False
    include_xi_normal: bool = True
    # Dirichlet wins at interface corner dofs by default: leaving the corner
    # velocity free imposes a spurious do-nothing flux on the adjacent
    # Dirichlet edge fragment and wrecks the fluid convergence constant.
    corner_interface_precedence: bool = False
    solver_tol: float = 1e-10
    initial: SimpleNamespace = dc_field(default_factory=SimpleNamespace)
    case: object = None


def benchmark_meshes(n):
    """Unit-square subdomains at mesh size 0.5/n (2n cells per side):
    fluid above the interface y=0, solid below."""
    cells = 2 * n
    fluid = build_rect_mesh((0.0, 1.0, 0.0, 1.0), cells, cells)
    fluid = mark_boundary(fluid, [
        (lambda x, y: x > 1.0 - EPS, Marker.NEUMANN_F),
        (lambda x, y: y < EPS, Marker.INTERFACE),
        (lambda x, y: x < 1.0 - EPS and y > EPS, Marker.DIRICHLET_F),
    ])
    solid = build_rect_mesh((0.0, 1.0, -1.0, 0.0), cells, cells)
    solid = mark_boundary(solid, [
        (lambda x, y: y > -EPS, Marker.INTERFACE),
        (lambda x, y: y < -1.0 + EPS, Marker.NEUMANN_P),
        (lambda x, y: -1.0 + EPS < y < -EPS, Marker.DIRICHLET_P),
    ])
    return fluid, solid


def benchmark_problem(case_id, n, params=None, include_xi_normal=True,
                      solver_tol=1e-10):
    """Manufactured-solution Stokes-Biot benchmark at ladder level n.

    Boundary data comes from the exact solution: traction on the fluid
    right side, Darcy flux plus displacement Dirichlet on the solid
    bottom, Dirichlet everywhere else; the interface is Robin-coupled.
    """
    params = params or PhysicalParams.benchmark(n)
    case = ManufacturedCase(case_id, params)
    fluid_mesh, solid_mesh = benchmark_meshes(n)
    pairings = extract_interfaces(fluid_mesh, solid_mesh)
    fluid_data = FluidData(
        body_force=case.F_f,
        div_source=case.g_f,
        traction=lambda x, y, t: case.fluid_traction(x, y, t, (1.0, 0.0)),
        dirichlet=case.u,
    )
    biot_data = BiotData(
        body_force=case.F_e,
        source=case.F_d,
        darcy_flux=lambda x, y, t: case.darcy_flux(x, y, t, (0.0, -1.0)),
        dirichlet_velocity=case.xi,
        dirichlet_pressure=case.phi,
    )
    initial = SimpleNamespace(u=case.u, p=case.p, eta=case.eta, xi=case.xi,
                              phi=case.phi)
    return CoupledProblem(
        label=f"benchmark-case{case_id}-n{n}",
        params=params,
        fluid_mesh=fluid_mesh,
        solid_mesh=solid_mesh,
        pairings=pairings,
        fluid_data=fluid_data,
        biot_data=biot_data,
        disp_dirichlet_markers=(Marker.DIRICHLET_P, Marker.NEUMANN_P),
        pres_dirichlet_markers=(Marker.DIRICHLET_P,),
        include_xi_normal=include_xi_normal,
        solver_tol=solver_tol,
        initial=initial,
        case=case,
    )


def stability_problem(n, params, include_xi_normal=True, solver_tol=1e-10):
    """Zero forcing, zero Neumann data, homogeneous Dirichlet; the initial
    energy comes from the case-1 exact fields at t = 0."""
    case = ManufacturedCase(1, params)
    fluid_mesh, solid_mesh = benchmark_meshes(n)
    pairings = extract_interfaces(fluid_mesh, solid_mesh)
    initial = SimpleNamespace(u=case.u, p=case.p, eta=case.eta, xi=case.xi,
                              phi=case.phi)
    return CoupledProblem(
        label=f"stability-n{n}",
        params=params,
        fluid_mesh=fluid_mesh,
        solid_mesh=solid_mesh,
        pairings=pairings,
        fluid_data=FluidData(),
        biot_data=BiotData(),
        disp_dirichlet_markers=(Marker.DIRICHLET_P, Marker.NEUMANN_P),
        pres_dirichlet_markers=(Marker.DIRICHLET_P,),
        include_xi_normal=include_xi_normal,
        solver_tol=solver_tol,
        initial=initial,
    )


# ---------------------------------------------------------------------------
# channel demo (moving domain)

DEMO_DEFAULTS = dict(
    channel_length=12.0,
    channel_height=1.0,
    obstacle_x0=2.0,
    obstacle_x1=3.0,
    obstacle_height=1.0 / 3.0,
    fluid_resolution=12,      # fluid cells across the channel height
    solid_resolution=18,      # solid cells per unit length (non-matching)
    inlet_coefficient=20.0,
)


def demo_params(dt=1e-3, total_time=5.0):
    """Channel-demo physical parameters (kinematic viscosity 0.01,
    stiff obstacles, K = 1e-3, gamma = 1/sqrt(K), L = 1/K)."""
    kappa = 1e-3
    return PhysicalParams(
        rho_f=1.0, mu_f=0.01, rho_p=1.2, mu_p=1.0336e3, lambda_p=4.9364e4,
        alpha=1.0, c0=1e-3, kappa=kappa, gamma=1.0 / np.sqrt(kappa),
        robin_L=1.0 / kappa, dt=dt, total_time=total_time)


def _union_meshes(a, b):
    nodes = np.vstack([a.nodes, b.nodes])
    tris = np.vstack([a.triangles, b.triangles + a.num_nodes])
    return Mesh(nodes, tris)


def demo_problem(params=None, geometry=None):
    """2D channel with two poroelastic obstacles forming a constriction.

    The channel occupies (0, length) x (0, height); flow enters at x = 0
    with the parabolic profile (c * y(height-y)/height^2, 0).  Each
    obstacle spans (x0, x1) against one channel wall and is meshed
    independently of the fluid (non-matching interface).
    """
    params = params or demo_params()
    geo = dict(DEMO_DEFAULTS)
    if geometry:
        geo.update(geometry)
    length = geo["channel_length"]
    height = geo["channel_height"]
    x0, x1 = geo["obstacle_x0"], geo["obstacle_x1"]
    hb = geo["obstacle_height"]
    res = int(geo["fluid_resolution"])
    h = height / res
    for name, val in (("obstacle_x0", x0), ("obstacle_x1", x1),
                      ("obstacle_height", hb), ("channel_length", length)):
        if abs(round(val / h) * h - val) > 1e-9 * max(1.0, abs(val)):
            raise GeometryError(
                f"{name}={val} is not aligned with the fluid grid "
                f"(cell size {h}); choose multiples of height/resolution")
    if not (0 < x0 < x1 < length and 0 < 2 * hb < height):
        raise GeometryError("obstacles must sit strictly inside the channel "
                            "and leave an open lumen")

    nx = int(round(length / h))
    channel = build_rect_mesh((0.0, length, 0.0, height), nx, res)

    def in_bottom(x, y):
        return x0 < x < x1 and y < hb

    def in_top(x, y):
        return x0 < x < x1 and y > height - hb

    fluid_mesh = remove_triangles(channel, lambda x, y: in_bottom(x, y)
                                  or in_top(x, y))

    def on_obstacle_boundary(x, y):
        on_b = (abs(x - x0) < EPS or abs(x - x1) < EPS) and y < hb + EPS
        on_b = on_b or (abs(y - hb) < EPS and x0 - EPS < x < x1 + EPS)
        on_t = (abs(x - x0) < EPS or abs(x - x1) < EPS) \
            and y > height - hb - EPS
        on_t = on_t or (abs(y - (height - hb)) < EPS
                        and x0 - EPS < x < x1 + EPS)
        return on_b or on_t

    fluid_mesh = mark_boundary(fluid_mesh, [
        (lambda x, y: x < EPS, Marker.DIRICHLET_F),
        (lambda x, y: x > length - EPS, Marker.NEUMANN_F),
        (on_obstacle_boundary, Marker.INTERFACE),
        (lambda x, y: (y < EPS or y > height - EPS)
         and not on_obstacle_boundary(x, y) and EPS < x < length - EPS,
         Marker.WALL),
    ])

    ns = max(2, int(round(geo["solid_resolution"] * (x1 - x0))))
    nsy = max(2, int(round(geo["solid_resolution"] * hb)))
    bottom = build_rect_mesh((x0, x1, 0.0, hb), ns, nsy)
    top = build_rect_mesh((x0, x1, height - hb, height), ns, nsy)
    solid_mesh = _union_meshes(bottom, top)
    solid_mesh = mark_boundary(solid_mesh, [
        (lambda x, y: y < EPS or y > height - EPS, Marker.WALL),
        (lambda x, y: EPS < y < height - EPS, Marker.INTERFACE),
    ])
    pairings = extract_interfaces(fluid_mesh, solid_mesh)

    c = geo["inlet_coefficient"]

    def inlet(x, y, t):
        prof = c * y * (height - y) / height ** 2
        return np.array([prof, np.zeros_like(prof)])

    return CoupledProblem(
        label="demo-channel",
        params=params,
        fluid_mesh=fluid_mesh,
        solid_mesh=solid_mesh,
        pairings=pairings,
        fluid_data=FluidData(dirichlet=inlet),
        biot_data=BiotData(),
        fluid_dirichlet_markers=(Marker.DIRICHLET_F, Marker.WALL),
        fluid_traction_marker=Marker.NEUMANN_F,
        disp_dirichlet_markers=(Marker.WALL,),
        pres_dirichlet_markers=(),
        darcy_flux_marker=None,
        convective=True,
        moving=True,
        corner_interface_precedence=False,
        initial=SimpleNamespace(),
    )
