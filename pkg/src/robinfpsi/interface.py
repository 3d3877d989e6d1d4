"""Interface identification and trace transfer between subdomain meshes.

Each coupling interface is an open polyline marked INTERFACE on both the
fluid and solid meshes.  A pairing records, for each side, the ordered
edge chain, vertex ordering and a normalized arclength parameterization;
both sides traverse the curve in the same canonical direction, so traces
move across by linear interpolation in arclength (an exact pass-through
when the discretizations match).
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, InterfaceMismatchError
from .meshing import Marker


class InterfaceSide:
    """Ordered view of one mesh's interface edges along a single curve."""

    def __init__(self, mesh, edge_ids, vertex_ids):
        self.mesh = mesh
        self.edge_ids = np.asarray(edge_ids, dtype=np.int64)
        self.vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
        pts = mesh.reference_nodes[self.vertex_ids]
        seg = np.hypot(*(pts[1:] - pts[:-1]).T)
        self.length = float(seg.sum())
        s = np.concatenate([[0.0], np.cumsum(seg)])
        self.vertex_s = s / self.length
        self.vertex_points = pts

    def point_at(self, s):
        """Reference-configuration point(s) at normalized arclength s."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        x = np.interp(s, self.vertex_s, self.vertex_points[:, 0])
        y = np.interp(s, self.vertex_s, self.vertex_points[:, 1])
        return np.column_stack([x, y])


class InterfacePairing:
    """Matched fluid/solid views of one interface curve."""

    def __init__(self, fluid, solid, matching, tol):
        self.fluid = fluid
        self.solid = solid
        self.matching = matching
        self.tol = tol

    def side(self, name):
        return self.fluid if name == "fluid" else self.solid


def _chain_edges(mesh, edge_ids):
    """Order interface edges into one open chain; canonical start is the
    lexicographically smallest endpoint so both meshes traverse alike."""
    edges = mesh.boundary_edges[edge_ids]
    adj = {}
    for eid, (a, b) in zip(edge_ids, edges):
        adj.setdefault(int(a), []).append((int(b), int(eid)))
        adj.setdefault(int(b), []).append((int(a), int(eid)))
    ends = [v for v, nbrs in adj.items() if len(nbrs) == 1]
    if len(ends) != 2 or any(len(n) > 2 for n in adj.values()):
        raise InterfaceMismatchError(
            "interface edges do not form a single open chain")
    pts = mesh.reference_nodes
    start = min(ends, key=lambda v: (pts[v][0], pts[v][1]))
    chain_vertices = [start]
    chain_edges = []
    used = set()
    cur = start
    while True:
        nxt = [(v, e) for v, e in adj[cur] if e not in used]
        if not nxt:
            break
        v, e = nxt[0]
        used.add(e)
        chain_edges.append(e)
        chain_vertices.append(v)
        cur = v
    if len(chain_edges) != len(edge_ids):
        raise InterfaceMismatchError("interface chain traversal incomplete")
    return InterfaceSide(mesh, chain_edges, chain_vertices)


def _split_components(mesh, edge_ids):
    """Connected components of the given boundary edges (by shared vertex)."""
    edges = mesh.boundary_edges[edge_ids]
    parent = {}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a, b in edges:
        parent.setdefault(int(a), int(a))
        parent.setdefault(int(b), int(b))
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
    comps = {}
    for eid, (a, _b) in zip(edge_ids, edges):
        comps.setdefault(find(int(a)), []).append(int(eid))
    return list(comps.values())


def _pair_sides(fside, sside, tol):
    """Validate geometric agreement and decide conformity."""
    if abs(fside.length - sside.length) > tol * max(fside.length, 1.0):
        raise InterfaceMismatchError(
            f"interface lengths differ: fluid {fside.length:.12g} vs "
            f"solid {sside.length:.12g}")
    for a, b in ((fside, sside), (sside, fside)):
        probe = b.point_at(a.vertex_s)
        dist = np.hypot(*(probe - a.vertex_points).T)
        if dist.max() > tol:
            raise InterfaceMismatchError(
                f"interface curves deviate by {dist.max():.3e} (tol {tol:.3e})")
    matching = (len(fside.vertex_ids) == len(sside.vertex_ids)
                and np.hypot(*(fside.vertex_points - sside.vertex_points).T).max()
                <= tol)
    return InterfacePairing(fside, sside, matching, tol)


def extract_interface(fluid_mesh, solid_mesh, tol=None):
    """Pair the single INTERFACE curve shared by the two meshes."""
    pairings = extract_interfaces(fluid_mesh, solid_mesh, tol)
    if len(pairings) != 1:
        raise InterfaceMismatchError(
            f"expected one interface curve, found {len(pairings)}")
    return pairings[0]


def extract_interfaces(fluid_mesh, solid_mesh, tol=None):
    """Pair all INTERFACE curves (one pairing per connected component)."""
    if tol is None:
        tol = 1e-10 * max(fluid_mesh.diameter(), solid_mesh.diameter())
    f_ids = fluid_mesh.edges_with_marker(Marker.INTERFACE)
    s_ids = solid_mesh.edges_with_marker(Marker.INTERFACE)
    if len(f_ids) == 0 or len(s_ids) == 0:
        raise InterfaceMismatchError("both meshes need INTERFACE-marked edges")
    f_comps = _split_components(fluid_mesh, f_ids)
    s_comps = _split_components(solid_mesh, s_ids)
    if len(f_comps) != len(s_comps):
        raise InterfaceMismatchError(
            f"{len(f_comps)} fluid interface components vs {len(s_comps)} solid")
    f_sides = [_chain_edges(fluid_mesh, c) for c in f_comps]
    s_sides = [_chain_edges(solid_mesh, c) for c in s_comps]
    f_sides.sort(key=lambda s: tuple(s.vertex_points[0]))
    s_sides.sort(key=lambda s: tuple(s.vertex_points[0]))
    return [_pair_sides(f, s, tol) for f, s in zip(f_sides, s_sides)]


def transfer_values(values, s_src, s_dst, matching=False):
    """Linear interpolation in arclength; exact copy on matching grids."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != len(s_src):
        raise DimensionError(
            f"{values.shape[0]} trace values for {len(s_src)} source nodes")
    if matching and len(s_src) == len(s_dst):
        return values.copy()
    if values.ndim == 1:
        return np.interp(s_dst, s_src, values)
    return np.column_stack([np.interp(s_dst, s_src, values[:, c])
                            for c in range(values.shape[1])])


def interface_transfer(values, pairing, direction):
    """Move a vertex-nodal trace across the pairing.

    ``direction`` is ``"fluid_to_solid"`` or ``"solid_to_fluid"``; values are
    indexed by the source side's ordered interface vertices.
    """
    if direction == "fluid_to_solid":
        src, dst = pairing.fluid, pairing.solid
    elif direction == "solid_to_fluid":
        src, dst = pairing.solid, pairing.fluid
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return transfer_values(values, src.vertex_s, dst.vertex_s,
                           pairing.matching)
