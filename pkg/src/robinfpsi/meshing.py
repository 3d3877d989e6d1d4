"""2D triangular meshes for the fluid and poroelastic subdomains.

Meshes are plain numpy containers: vertex coordinates, CCW triangles and
oriented boundary edges with one marker each.  They are immutable after
construction except through :func:`deform_mesh` / :func:`reset_mesh`,
which return new snapshots sharing the connectivity arrays, so meshes can
be handed to concurrent solver tasks safely.
"""

from __future__ import annotations

import enum

import numpy as np

from .errors import (
    AmbiguousMarkingError,
    DimensionError,
    GeometryError,
    MarkingIncompleteError,
    TangledMeshError,
)


class Marker(enum.IntEnum):
    """Boundary edge markers. UNMARKED is only legal before mark_boundary."""

    UNMARKED = 0
    DIRICHLET_F = 1
    NEUMANN_F = 2
    DIRICHLET_P = 3
    NEUMANN_P = 4
    INTERFACE = 5
    WALL = 6


def _signed_areas(nodes, triangles):
    p0 = nodes[triangles[:, 0]]
    p1 = nodes[triangles[:, 1]]
    p2 = nodes[triangles[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def _boundary_edges_of(triangles):
    """Edges owned by exactly one triangle, in that triangle's CCW order."""
    edges = {}
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            if key in edges:
                edges[key] = None
            else:
                edges[key] = (a, b)
    oriented = [ab for ab in edges.values() if ab is not None]
    return np.asarray(oriented, dtype=np.int64).reshape(-1, 2)


class Mesh:
    """Triangulation with oriented boundary edges and per-edge markers.

    Boundary edges are stored in the owning triangle's CCW order, so the
    domain lies to the left of each edge and the outward normal of edge
    direction t is (t_y, -t_x).
    """

    def __init__(self, nodes, triangles, boundary_edges=None,
                 boundary_markers=None, reference_nodes=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise GeometryError("nodes must be an (N, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise GeometryError("triangles must be an (N, 3) array")
        areas = _signed_areas(self.nodes, self.triangles)
        if len(areas) and areas.min() <= 0.0:
            bad = int(np.argmin(areas))
            raise GeometryError(
                f"triangle {bad} has non-positive area {areas.min():.3e}; "
                "triangles must be counterclockwise")
        if boundary_edges is None:
            boundary_edges = _boundary_edges_of(self.triangles)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64)
        if boundary_markers is None:
            boundary_markers = np.full(len(self.boundary_edges), int(Marker.UNMARKED),
                                       dtype=np.int64)
        self.boundary_markers = np.ascontiguousarray(boundary_markers, dtype=np.int64)
        if len(self.boundary_markers) != len(self.boundary_edges):
            raise GeometryError("one marker per boundary edge required")
        self.reference_nodes = (self.nodes.copy() if reference_nodes is None
                                else np.ascontiguousarray(reference_nodes, dtype=float))
        self._geom = None

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def triangle_areas(self):
        return _signed_areas(self.nodes, self.triangles)

    def area(self):
        return float(self.triangle_areas().sum())

    def diameter(self):
        lo = self.nodes.min(axis=0)
        hi = self.nodes.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def edge_midpoints(self):
        a = self.nodes[self.boundary_edges[:, 0]]
        b = self.nodes[self.boundary_edges[:, 1]]
        return 0.5 * (a + b)

    def edges_with_marker(self, marker):
        return np.nonzero(self.boundary_markers == int(marker))[0]

    def boundary_nodes(self, marker=None):
        """Vertex indices lying on (marker-filtered) boundary edges."""
        if marker is None:
            edges = self.boundary_edges
        else:
            edges = self.boundary_edges[self.edges_with_marker(marker)]
        return np.unique(edges.reshape(-1))

    def with_nodes(self, nodes):
        """New snapshot with moved vertices; connectivity and markers shared."""
        return Mesh(nodes, self.triangles, self.boundary_edges,
                    self.boundary_markers, self.reference_nodes)

    def geometry(self):
        """Per-triangle affine map data (cached): Jacobians, inverses, dets."""
        if self._geom is None:
            p0 = self.nodes[self.triangles[:, 0]]
            p1 = self.nodes[self.triangles[:, 1]]
            p2 = self.nodes[self.triangles[:, 2]]
            jac = np.stack([p1 - p0, p2 - p0], axis=2)  # (nt, 2, 2), columns e1,e2
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            inv = np.empty_like(jac)
            inv[:, 0, 0] = jac[:, 1, 1]
            inv[:, 0, 1] = -jac[:, 0, 1]
            inv[:, 1, 0] = -jac[:, 1, 0]
            inv[:, 1, 1] = jac[:, 0, 0]
            inv /= det[:, None, None]
            self._geom = (jac, inv, det, p0)
        return self._geom


def build_rect_mesh(bounds, nx, ny, diagonal="ne"):
    """Structured triangulation of an axis-aligned rectangle.

    Parameters
    ----------
    bounds : (xmin, xmax, ymin, ymax)
    nx, ny : cells per direction (>= 1)
    diagonal : "ne" splits each cell along the lower-left to upper-right
        diagonal (the reproducible default), "nw" along the other one.
    """
    xmin, xmax, ymin, ymax = map(float, bounds)
    if not (nx >= 1 and ny >= 1):
        raise GeometryError("nx and ny must be at least 1")
    if not (xmax > xmin and ymax > ymin):
        raise GeometryError(f"degenerate rectangle {bounds}")
    if diagonal not in ("ne", "nw"):
        raise GeometryError(f"unknown diagonal rule {diagonal!r}")

    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a = nid(i, j)
            b = nid(i + 1, j)
            c = nid(i + 1, j + 1)
            d = nid(i, j + 1)
            if diagonal == "ne":
                tris.append((a, b, c))
                tris.append((a, c, d))
            else:
                tris.append((a, b, d))
                tris.append((b, c, d))
    return Mesh(nodes, np.asarray(tris, dtype=np.int64))


def mark_boundary(mesh, predicates):
    """Assign exactly one marker to every boundary edge.

    ``predicates`` is a list of ``(fn, marker)`` pairs; ``fn`` receives the
    edge midpoint as ``(x, y)`` and returns truth.  Every edge must match
    exactly one predicate.
    """
    mids = mesh.edge_midpoints()
    markers = np.full(len(mids), int(Marker.UNMARKED), dtype=np.int64)
    for k, (x, y) in enumerate(mids):
        hits = [int(m) for fn, m in predicates if fn(x, y)]
        if not hits:
            raise MarkingIncompleteError(
                f"boundary edge {k} at midpoint ({x:.6g}, {y:.6g}) matched "
                "no predicate")
        if len(hits) > 1:
            raise AmbiguousMarkingError(
                f"boundary edge {k} at midpoint ({x:.6g}, {y:.6g}) matched "
                f"{len(hits)} predicates")
        markers[k] = hits[0]
    return Mesh(mesh.nodes, mesh.triangles, mesh.boundary_edges, markers,
                mesh.reference_nodes)


def remove_triangles(mesh, inside):
    """Drop triangles whose centroid satisfies ``inside(x, y)``.

    Used to carve rectangular obstacles out of a structured channel mesh.
    Unused nodes are removed and boundary edges recomputed (markers reset).
    """
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    keep = np.array([not inside(x, y) for x, y in cent], dtype=bool)
    tris = mesh.triangles[keep]
    if len(tris) == 0:
        raise GeometryError("predicate removed every triangle")
    used = np.unique(tris.reshape(-1))
    renum = -np.ones(mesh.num_nodes, dtype=np.int64)
    renum[used] = np.arange(len(used))
    return Mesh(mesh.nodes[used], renum[tris])


def _vertex_displacement(mesh, displacement):
    """Accept an (N_v, 2) array or a blocked coefficient vector and return
    per-vertex displacements.

    Blocked vectors lay out [all x-dofs; all y-dofs] with vertex dofs first
    within each component, which holds for both P1 and P2 coefficient
    vectors produced by this package.
    """
    disp = np.asarray(displacement, dtype=float)
    nv = mesh.num_nodes
    err = DimensionError(
        f"displacement of shape {disp.shape} not usable on a mesh with "
        f"{nv} vertices")
    if disp.ndim == 2:
        if disp.shape != (nv, 2):
            raise err
        return disp
    if disp.ndim == 1:
        half = disp.size // 2
        if disp.size % 2 or half < nv:
            raise err
        return np.column_stack([disp[:nv], disp[half:half + nv]])
    raise err


def deform_mesh(mesh, displacement):
    """Move vertices by ``displacement`` relative to the reference nodes.

    Raises :class:`TangledMeshError` if any triangle area becomes
    non-positive, aborting the time step.
    """
    disp = _vertex_displacement(mesh, displacement)
    nodes = mesh.reference_nodes + disp
    areas = _signed_areas(nodes, mesh.triangles)
    if len(areas) and areas.min() <= 0.0:
        bad = int(np.argmin(areas))
        raise TangledMeshError(
            f"deformation tangles triangle {bad} (area {areas.min():.3e})")
    return mesh.with_nodes(nodes)


def reset_mesh(mesh):
    """Restore reference vertex coordinates (ALE 'move mesh back')."""
    return mesh.with_nodes(mesh.reference_nodes.copy())
