"""P1/P2 finite elements on triangles: quadrature, dof maps, assembly,
boundary traces, Dirichlet elimination and sparse direct solves.

Conventions
-----------
* Reference triangle: vertices (0,0), (1,0), (0,1); barycentric
  coordinates lam = (1-x-y, x, y).
* P2 local dofs: three vertices then the midpoints opposite each vertex
  (dof 3 on edge v1-v2, dof 4 on v0-v2, dof 5 on v0-v1).
* Vector dof layout is blocked: global dof = comp * n_scalar + node.
* Domain quadrature defaults to order 4 (order 5 for convection);
  boundary integrals use 5-point Gauss on each edge.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    CapabilityError,
    ConstraintConflictError,
    DimensionError,
    DomainError,
    EvaluationError,
    SingularSystemError,
    SolverError,
)

P1 = "P1"
P2 = "P2"

_LOCAL_DOFS = {P1: 3, P2: 6}

# gradients of barycentric coordinates wrt reference (x, y)
_GRAD_LAM = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def reference_basis(kind, bary):
    """Basis values and reference gradients at one barycentric point."""
    lam = np.asarray(bary, dtype=float)
    if lam.shape != (3,):
        raise DimensionError("barycentric point must have three coordinates")
    if lam.min() < -1e-14 or abs(lam.sum() - 1.0) > 1e-14:
        raise DomainError(f"invalid barycentric point {lam}")
    if kind == P1:
        return lam.copy(), _GRAD_LAM.copy()
    if kind != P2:
        raise CapabilityError(f"unknown element kind {kind!r}")
    vals = np.empty(6)
    grads = np.empty((6, 2))
    for i in range(3):
        vals[i] = lam[i] * (2.0 * lam[i] - 1.0)
        grads[i] = (4.0 * lam[i] - 1.0) * _GRAD_LAM[i]
    for k, (i, j) in enumerate(((1, 2), (0, 2), (0, 1))):
        vals[3 + k] = 4.0 * lam[i] * lam[j]
        grads[3 + k] = 4.0 * (lam[i] * _GRAD_LAM[j] + lam[j] * _GRAD_LAM[i])
    return vals, grads


def _rule_points(groups):
    """Expand (barycentric group, weight) pairs into reference points."""
    pts, wts = [], []
    for bary, w in groups:
        seen = set()
        for perm in {(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0),
                     (2, 0, 1), (2, 1, 0)}:
            p = tuple(bary[k] for k in perm)
            if p in seen:
                continue
            seen.add(p)
            pts.append((p[1], p[2]))  # reference coords (x, y) = (lam1, lam2)
            wts.append(w)
    order = np.lexsort((np.array(pts)[:, 1], np.array(pts)[:, 0]))
    pts = np.array(pts)[order]
    wts = np.array(wts)[order]
    wts *= 0.5 / wts.sum()  # exact normalization to the reference area
    return pts, wts


def _deg4_rule():
    s10 = math.sqrt(10.0)
    r = math.sqrt(38.0 - 44.0 * math.sqrt(0.4))
    a1 = (8.0 - s10 + r) / 18.0
    a2 = (8.0 - s10 - r) / 18.0
    q = math.sqrt(213125.0 - 53320.0 * s10)
    w1 = (620.0 + q) / 3720.0
    w2 = (620.0 - q) / 3720.0
    return _rule_points([((1 - 2 * a1, a1, a1), w1),
                         ((1 - 2 * a2, a2, a2), w2)])


def _deg5_rule():
    s15 = math.sqrt(15.0)
    a1 = (6.0 + s15) / 21.0
    a2 = (6.0 - s15) / 21.0
    w1 = (155.0 + s15) / 1200.0
    w2 = (155.0 - s15) / 1200.0
    third = 1.0 / 3.0
    return _rule_points([((third, third, third), 0.225),
                         ((1 - 2 * a1, a1, a1), w1),
                         ((1 - 2 * a2, a2, a2), w2)])


def _deg6_rule():
    a1, w1 = 0.063089014491502, 0.050844906370207
    a2, w2 = 0.249286745170910, 0.116786275726379
    b = (0.636502499121399, 0.310352451033785, 0.053145049844816)
    w3 = 0.082851075618374
    return _rule_points([((1 - 2 * a1, a1, a1), w1),
                         ((1 - 2 * a2, a2, a2), w2),
                         (b, w3)])


_TRI_RULES = {}


def triangle_quadrature(order):
    """(points, weights) on the reference triangle, exact to ``order``.

    Weights are positive and sum to 1/2.
    """
    if order not in (1, 2, 3, 4, 5, 6):
        raise CapabilityError(f"quadrature order {order} unsupported (1..6)")
    if not _TRI_RULES:
        third = 1.0 / 3.0
        _TRI_RULES[1] = (np.array([[third, third]]), np.array([0.5]))
        _TRI_RULES[2] = _rule_points([((2 / 3, 1 / 6, 1 / 6), 1 / 3)])
        _TRI_RULES[4] = _deg4_rule()
        _TRI_RULES[3] = _TRI_RULES[4]
        _TRI_RULES[5] = _deg5_rule()
        _TRI_RULES[6] = _deg6_rule()
    pts, wts = _TRI_RULES[order]
    return pts.copy(), wts.copy()


def edge_quadrature(npts=5):
    """Gauss points/weights on [0, 1]; weights sum to 1."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _basis_table(kind, pts):
    """values (nloc, nq) and reference gradients (nloc, nq, 2)."""
    nloc = _LOCAL_DOFS[kind]
    nq = len(pts)
    val = np.empty((nloc, nq))
    dval = np.empty((nloc, nq, 2))
    for q, (x, y) in enumerate(pts):
        v, g = reference_basis(kind, np.array([1.0 - x - y, x, y]))
        val[:, q] = v
        dval[:, q, :] = g
    return val, dval


def _edge_basis(kind, s):
    """Trace basis on one edge, parameterized by s in [0, 1]."""
    s = np.asarray(s)
    if kind == P1:
        return np.stack([1.0 - s, s])
    return np.stack([(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0),
                     4.0 * s * (1.0 - s)])


class DofMap:
    """Scalar node structure (vertices, plus edge midpoints for P2) with a
    blocked component layout for vector fields.

    The map depends only on connectivity, so one DofMap serves every
    deformed snapshot of its mesh.
    """

    def __init__(self, mesh, kind, ncomp=1):
        if kind not in (P1, P2):
            raise CapabilityError(f"unknown element kind {kind!r}")
        self.kind = kind
        self.ncomp = ncomp
        self.mesh = mesh
        nv = mesh.num_nodes
        self.n_vertices = nv
        if kind == P1:
            self.cell_nodes = mesh.triangles.copy()
            self.edge_index = None
            self.n_scalar = nv
        else:
            edge_index = {}
            tris = mesh.triangles
            cell = np.empty((len(tris), 6), dtype=np.int64)
            cell[:, :3] = tris
            for t, tri in enumerate(tris):
                for k, (i, j) in enumerate(((tri[1], tri[2]),
                                            (tri[0], tri[2]),
                                            (tri[0], tri[1]))):
                    key = (min(i, j), max(i, j))
                    eid = edge_index.setdefault(key, len(edge_index))
                    cell[t, 3 + k] = nv + eid
            self.cell_nodes = cell
            self.edge_index = edge_index
            self.n_scalar = nv + len(edge_index)
        self.n_dofs = self.ncomp * self.n_scalar
        edges = np.empty((self.n_scalar - nv, 2), dtype=np.int64)
        if self.edge_index:
            for (i, j), eid in self.edge_index.items():
                edges[eid] = (i, j)
        self.edge_vertices = edges

    def dof_coords(self, mesh=None):
        """Scalar node coordinates on the given mesh snapshot."""
        mesh = self.mesh if mesh is None else mesh
        if self.kind == P1:
            return mesh.nodes.copy()
        mid = 0.5 * (mesh.nodes[self.edge_vertices[:, 0]]
                     + mesh.nodes[self.edge_vertices[:, 1]])
        return np.vstack([mesh.nodes, mid])

    def midpoint_node(self, v0, v1):
        """Scalar node id of the midpoint between two vertices (P2)."""
        return self.n_vertices + self.edge_index[(min(v0, v1), max(v0, v1))]

    def component_dofs(self, scalar_nodes, comp):
        return comp * self.n_scalar + np.asarray(scalar_nodes, dtype=np.int64)

    def zeros(self):
        return np.zeros(self.n_dofs)


@dataclass
class Field:
    """Coefficient vector on a DofMap, stamped with a time."""

    dofmap: DofMap
    coeffs: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.dofmap.n_dofs,):
            raise DimensionError(
                f"coefficients shape {self.coeffs.shape} does not match "
                f"dofmap with {self.dofmap.n_dofs} dofs")

    def copy(self):
        return Field(self.dofmap, self.coeffs.copy(), self.t)

    def components(self):
        n = self.dofmap.n_scalar
        return [self.coeffs[c * n:(c + 1) * n] for c in range(self.dofmap.ncomp)]

    def vertex_values(self):
        """Per-vertex values, shape (N_v,) or (N_v, 2)."""
        nv = self.dofmap.n_vertices
        comps = [c[:nv] for c in self.components()]
        if self.dofmap.ncomp == 1:
            return comps[0].copy()
        return np.column_stack(comps)


def zero_field(dofmap, t=0.0):
    return Field(dofmap, dofmap.zeros(), t)


# ---------------------------------------------------------------------------
# domain assembly

DEFAULT_ORDER = 4
CONVECTION_ORDER = 5
BOUNDARY_QPTS = 5


def _domain_tables(mesh, trial, test, order):
    pts, wts = triangle_quadrature(order)
    val_u, dval_u = _basis_table(trial.kind, pts)
    if test.kind == trial.kind:
        val_v, dval_v = val_u, dval_u
    else:
        val_v, dval_v = _basis_table(test.kind, pts)
    _, inv, det, p0 = mesh.geometry()
    weights = np.abs(det)[:, None] * wts[None, :]  # (ne, nq)
    return pts, weights, (val_u, dval_u), (val_v, dval_v), inv, p0


def _physical_grads(dval, inv):
    """(ne, nloc, nq, 2) physical gradients from reference ones."""
    return np.einsum("iqk,ekd->eiqd", dval, inv)


def _scatter(local, rows, cols, shape):
    """Accumulate (ne, ni, nj) local blocks into a CSR matrix."""
    ne, ni, nj = local.shape
    r = np.repeat(rows, nj, axis=1).ravel()
    c = np.tile(cols, (1, ni)).ravel()
    mat = sp.coo_matrix((local.ravel(), (r, c)), shape=shape)
    return mat.tocsr()


def _quad_coords(mesh, pts):
    """Physical coordinates of quadrature points, shape (ne, nq, 2)."""
    jac, _inv, _det, p0 = mesh.geometry()
    return p0[:, None, :] + np.einsum("eds,qs->eqd", jac, pts)


def assemble_form(form, trial, test, mesh, coefficient=None, marker=None,
                  quad_order=None):
    """Assemble one bilinear form into a CSR matrix of shape
    (test dofs) x (trial dofs).

    Domain forms: MASS, VECTOR_MASS, STIFFNESS, SYM_GRAD, GRAD_DIV,
    DIV_PRESSURE, CONVECTION.  Boundary forms (need ``marker``):
    BOUNDARY_MASS, BOUNDARY_NORMAL, BOUNDARY_TANGENT,
    BOUNDARY_NORMAL_SCALAR.
    """
    if form in ("BOUNDARY_MASS", "BOUNDARY_NORMAL", "BOUNDARY_TANGENT",
                "BOUNDARY_NORMAL_SCALAR"):
        return _assemble_boundary_form(form, trial, test, mesh, coefficient,
                                       marker)
    if form == "CONVECTION" and coefficient is None:
        raise DimensionError("CONVECTION requires a vector coefficient field")
    order = quad_order or (CONVECTION_ORDER if form == "CONVECTION"
                           else DEFAULT_ORDER)
    pts, W, (val_u, dval_u), (val_v, dval_v), inv, _p0 = _domain_tables(
        mesh, trial, test, order)
    coef = 1.0 if coefficient is None else coefficient
    shape = (test.n_dofs, trial.n_dofs)
    rows_s = test.cell_nodes
    cols_s = trial.cell_nodes
    ns_v, ns_u = test.n_scalar, trial.n_scalar

    if form == "MASS":
        loc = coef * np.einsum("eq,iq,jq->eij", W, val_v, val_u)
        return _scatter(loc, rows_s, cols_s, shape)

    if form == "VECTOR_MASS":
        loc = coef * np.einsum("eq,iq,jq->eij", W, val_v, val_u)
        mat = sp.csr_matrix(shape)
        for c in range(2):
            mat += _scatter(loc, rows_s + c * ns_v, cols_s + c * ns_u, shape)
        return mat

    g_u = _physical_grads(dval_u, inv)
    g_v = g_u if (trial is test) else _physical_grads(dval_v, inv)

    if form == "STIFFNESS":
        loc = coef * np.einsum("eq,eiqd,ejqd->eij", W, g_v, g_u)
        mat = sp.csr_matrix(shape)
        for c in range(test.ncomp):
            mat += _scatter(loc, rows_s + c * ns_v, cols_s + c * ns_u, shape)
        return mat

    if form == "SYM_GRAD":
        mu = coef
        lap = np.einsum("eq,eiqd,ejqd->eij", W, g_v, g_u)
        mat = sp.csr_matrix(shape)
        for r in range(2):
            for c in range(2):
                blk = mu * np.einsum("eq,eiq,ejq->eij", W, g_v[:, :, :, c],
                                     g_u[:, :, :, r])
                if r == c:
                    blk = blk + mu * lap
                mat += _scatter(blk, rows_s + r * ns_v, cols_s + c * ns_u,
                                shape)
        return mat

    if form == "GRAD_DIV":
        lam = coef
        mat = sp.csr_matrix(shape)
        for r in range(2):
            for c in range(2):
                blk = lam * np.einsum("eq,eiq,ejq->eij", W, g_v[:, :, :, r],
                                      g_u[:, :, :, c])
                mat += _scatter(blk, rows_s + r * ns_v, cols_s + c * ns_u,
                                shape)
        return mat

    if form == "DIV_PRESSURE":
        # (psi_i, d_c phi_j): scalar test, vector trial
        mat = sp.csr_matrix(shape)
        for c in range(2):
            blk = np.einsum("eq,iq,ejq->eij", W, val_v, g_u[:, :, :, c])
            mat += _scatter(blk, rows_s, cols_s + c * ns_u, shape)
        return mat

    if form == "CONVECTION":
        b_qp = evaluate_field(coefficient, mesh, pts)  # (ne, nq, 2)
        adv = np.einsum("eqc,ejqc->ejq", b_qp, g_u)
        loc = np.einsum("eq,iq,ejq->eij", W, val_v, adv)
        mat = sp.csr_matrix(shape)
        for c in range(2):
            mat += _scatter(loc, rows_s + c * ns_v, cols_s + c * ns_u, shape)
        return mat

    raise CapabilityError(f"unknown form {form!r}")


def evaluate_field(field, mesh, pts):
    """Field values at reference quadrature points, (ne, nq, ncomp)."""
    val, _ = _basis_table(field.dofmap.kind, pts)
    cells = field.dofmap.cell_nodes
    out = np.empty((len(cells), val.shape[1], field.dofmap.ncomp))
    for c, comp in enumerate(field.components()):
        out[:, :, c] = np.einsum("ei,iq->eq", comp[cells], val)
    return out


def _marked_edges(mesh, marker):
    ids = mesh.edges_with_marker(marker)
    if len(ids) == 0:
        warnings.warn(f"no boundary edges carry marker {marker!r}; "
                      "assembling a zero contribution", stacklevel=3)
    return ids


def _edge_nodes(dofmap, a, b):
    if dofmap.kind == P1:
        return [a, b]
    return [a, b, dofmap.midpoint_node(a, b)]


def _assemble_boundary_form(form, trial, test, mesh, coefficient, marker):
    if marker is None:
        raise DimensionError(f"{form} requires a boundary marker")
    coef = 1.0 if coefficient is None else float(coefficient)
    sq, wq = edge_quadrature(BOUNDARY_QPTS)
    chi_u = _edge_basis(trial.kind, sq)
    chi_v = _edge_basis(test.kind, sq)
    base = np.einsum("q,iq,jq->ij", wq, chi_v, chi_u)
    shape = (test.n_dofs, trial.n_dofs)
    rows, cols, vals = [], [], []
    for eid in _marked_edges(mesh, marker):
        a, b = mesh.boundary_edges[eid]
        pa, pb = mesh.nodes[a], mesh.nodes[b]
        ell = float(np.hypot(*(pb - pa)))
        tvec = (pb - pa) / ell
        nvec = np.array([tvec[1], -tvec[0]])
        loc = coef * ell * base
        n_u = _edge_nodes(trial, a, b)
        n_v = _edge_nodes(test, a, b)
        if form == "BOUNDARY_MASS":
            for i, gi in enumerate(n_v):
                for j, gj in enumerate(n_u):
                    rows.append(gi)
                    cols.append(gj)
                    vals.append(loc[i, j])
        elif form in ("BOUNDARY_NORMAL", "BOUNDARY_TANGENT"):
            d = nvec if form == "BOUNDARY_NORMAL" else tvec
            for r in range(2):
                for c in range(2):
                    f = d[r] * d[c]
                    if f == 0.0:
                        continue
                    for i, gi in enumerate(n_v):
                        for j, gj in enumerate(n_u):
                            rows.append(gi + r * test.n_scalar)
                            cols.append(gj + c * trial.n_scalar)
                            vals.append(f * loc[i, j])
        elif form == "BOUNDARY_NORMAL_SCALAR":
            # <psi, zeta . n>: vector test, scalar trial
            for r in range(2):
                if nvec[r] == 0.0:
                    continue
                for i, gi in enumerate(n_v):
                    for j, gj in enumerate(n_u):
                        rows.append(gi + r * test.n_scalar)
                        cols.append(gj)
                        vals.append(nvec[r] * loc[i, j])
        else:
            raise CapabilityError(f"unknown boundary form {form!r}")
    mat = sp.coo_matrix((vals, (rows, cols)), shape=shape)
    return mat.tocsr()


# ---------------------------------------------------------------------------
# functionals

def _call_data(data, x, y, t):
    out = data(x, y, t) if t is not None else data(x, y)
    return np.asarray(out, dtype=float)


def assemble_functional(functional, test, mesh, data, marker=None, t=None,
                        quad_order=None):
    """Assemble one linear functional into a dense rhs vector.

    DOMAIN_LOAD and DIVERGENCE_SOURCE integrate a callable (or Field)
    against domain test functions; BOUNDARY_LOAD integrates a callable on
    marked edges.  Trace-data Robin loads use the BoundaryTrace helpers.
    """
    rhs = np.zeros(test.n_dofs)
    if functional in ("DOMAIN_LOAD", "DIVERGENCE_SOURCE"):
        order = quad_order or DEFAULT_ORDER
        pts, wts = triangle_quadrature(order)
        val, _ = _basis_table(test.kind, pts)
        _, _, det, _ = mesh.geometry()
        W = np.abs(det)[:, None] * wts[None, :]
        xy = _quad_coords(mesh, pts)
        if isinstance(data, Field):
            f_qp = evaluate_field(data, mesh, pts)
        else:
            raw = _call_data(data, xy[:, :, 0], xy[:, :, 1], t)
            if test.ncomp == 1:
                f_qp = np.broadcast_to(raw, xy.shape[:2])[:, :, None]
            else:
                f_qp = np.moveaxis(
                    np.broadcast_to(raw, (2,) + xy.shape[:2]), 0, -1)
        if not np.isfinite(f_qp).all():
            raise EvaluationError(f"{functional} data is not finite")
        for c in range(test.ncomp):
            loc = np.einsum("eq,iq->ei", W * f_qp[:, :, c], val)
            np.add.at(rhs, test.cell_nodes + c * test.n_scalar, loc)
        return rhs

    if functional == "BOUNDARY_LOAD":
        sq, wq = edge_quadrature(BOUNDARY_QPTS)
        chi = _edge_basis(test.kind, sq)
        for eid in _marked_edges(mesh, marker):
            a, b = mesh.boundary_edges[eid]
            pa, pb = mesh.nodes[a], mesh.nodes[b]
            ell = float(np.hypot(*(pb - pa)))
            xq = pa[0] + (pb[0] - pa[0]) * sq
            yq = pa[1] + (pb[1] - pa[1]) * sq
            raw = _call_data(data, xq, yq, t)
            if test.ncomp == 1:
                comps = [np.broadcast_to(raw, sq.shape)]
            else:
                comps = np.broadcast_to(raw, (2, len(sq)))
            nodes = _edge_nodes(test, a, b)
            for c in range(test.ncomp):
                loc = ell * np.einsum("q,iq->i", wq * comps[c], chi)
                rhs[np.asarray(nodes) + c * test.n_scalar] += loc
        return rhs

    raise CapabilityError(f"unknown functional {functional!r}")


# ---------------------------------------------------------------------------
# interface traces

class BoundaryTrace:
    """Ordered P2-node trace of a dofmap along one interface side.

    Trace nodes are the side's vertices plus edge midpoints, sorted by the
    pairing's canonical arclength, so both sides of a matching interface
    enumerate corresponding nodes in the same order.  Geometric data
    (tangents and outward normals) are evaluated against a mesh snapshot,
    which may be a deformed configuration.
    """

    def __init__(self, side, dofmap):
        if dofmap.kind != P2:
            raise CapabilityError("traces are built on the P2 node structure")
        self.side = side
        self.dofmap = dofmap
        nodes = []
        s = []
        vs = side.vertex_s
        for k, v in enumerate(side.vertex_ids):
            nodes.append(int(v))
            s.append(vs[k])
            if k < len(side.vertex_ids) - 1:
                w = side.vertex_ids[k + 1]
                nodes.append(dofmap.midpoint_node(int(v), int(w)))
                s.append(0.5 * (vs[k] + vs[k + 1]))
        self.nodes = np.asarray(nodes, dtype=np.int64)
        self.s = np.asarray(s)
        index = {n: i for i, n in enumerate(nodes)}
        self.edges = []
        mesh = side.mesh
        for k, eid in enumerate(side.edge_ids):
            va = int(side.vertex_ids[k])
            vb = int(side.vertex_ids[k + 1])
            mid = dofmap.midpoint_node(va, vb)
            sa, sb = mesh.boundary_edges[eid]  # stored (outward-consistent)
            self.edges.append({
                "edge_id": int(eid),
                "va": va, "vb": vb, "mid": mid,
                "local": (index[va], index[vb], index[mid]),
                "flipped": (va, vb) != (int(sa), int(sb)),
            })

    def __len__(self):
        return len(self.nodes)

    def coords(self, mesh):
        return self.dofmap.dof_coords(mesh)[self.nodes]

    def edge_frames(self, mesh):
        """Per-edge (length, chain tangent, outward normal) on a snapshot."""
        frames = []
        for e in self.edges:
            pa = mesh.nodes[e["va"]]
            pb = mesh.nodes[e["vb"]]
            ell = float(np.hypot(*(pb - pa)))
            tvec = (pb - pa) / ell
            stored = -tvec if e["flipped"] else tvec
            nvec = np.array([stored[1], -stored[0]])
            frames.append((ell, tvec, nvec))
        return frames

    def normals(self, mesh):
        """Nodal outward normals (unit), averaged at shared vertices."""
        acc = np.zeros((len(self.nodes), 2))
        for e, (_ell, _t, nvec) in zip(self.edges, self.edge_frames(mesh)):
            for loc in e["local"]:
                acc[loc] += nvec
        norms = np.hypot(acc[:, 0], acc[:, 1])
        return acc / norms[:, None]

    def tangents(self, mesh):
        """Nodal unit tangents along increasing arclength."""
        acc = np.zeros((len(self.nodes), 2))
        for e, (_ell, tvec, _n) in zip(self.edges, self.edge_frames(mesh)):
            for loc in e["local"]:
                acc[loc] += tvec
        norms = np.hypot(acc[:, 0], acc[:, 1])
        return acc / norms[:, None]

    def extract(self, fld):
        """Nodal trace of a Field; P1 fields are sampled exactly at the
        midpoint nodes by endpoint averaging."""
        dm = fld.dofmap
        comps = []
        for comp in fld.components():
            if dm.kind == P2:
                comps.append(comp[self.nodes])
            else:
                vals = np.empty(len(self.nodes))
                nv = dm.n_vertices
                for i, node in enumerate(self.nodes):
                    if node < nv:
                        vals[i] = comp[node]
                    else:
                        a, b = self.dofmap.edge_vertices[node - nv]
                        vals[i] = 0.5 * (comp[a] + comp[b])
                comps.append(vals)
        if fld.dofmap.ncomp == 1:
            return comps[0]
        return np.column_stack(comps)

    def scatter(self, values, dofmap=None):
        """Embed nodal trace values into a zero full coefficient vector."""
        dm = dofmap or self.dofmap
        out = np.zeros(dm.n_dofs)
        values = np.atleast_2d(np.asarray(values, dtype=float).T).T
        if values.shape[0] != len(self.nodes):
            raise DimensionError("trace value count mismatch")
        for c in range(values.shape[1]):
            out[self.nodes + c * dm.n_scalar] = values[:, c]
        return out

    def dot_normal(self, values, mesh):
        n = self.normals(mesh)
        return np.einsum("kc,kc->k", np.asarray(values, dtype=float), n)

    def project_tangent(self, values, mesh):
        tau = self.tangents(mesh)
        comp = np.einsum("kc,kc->k", np.asarray(values, dtype=float), tau)
        return comp[:, None] * tau

    # Robin-load integrals against this trace's data -----------------------

    def _edge_values(self, values):
        values = np.asarray(values, dtype=float)
        for e in self.edges:
            ia, ib, im = e["local"]
            yield e, values[[ia, ib, im]]

    def normal_load(self, values, mesh, dofmap):
        """<r, v . n> over the trace; r given at trace nodes."""
        rhs = np.zeros(dofmap.n_dofs)
        sq, wq = edge_quadrature(BOUNDARY_QPTS)
        chi = _edge_basis(P2, sq)
        frames = self.edge_frames(mesh)
        for (e, vloc), (ell, _t, nvec) in zip(self._edge_values(values),
                                              frames):
            r_q = vloc @ chi
            loc = ell * np.einsum("q,iq->i", wq * r_q, chi)
            nodes = np.array([e["va"], e["vb"], e["mid"]])
            for c in range(2):
                rhs[nodes + c * dofmap.n_scalar] += nvec[c] * loc
        return rhs

    def tangent_load(self, values, mesh, dofmap):
        """<R, P v> over the trace; R is a vector trace at trace nodes."""
        rhs = np.zeros(dofmap.n_dofs)
        sq, wq = edge_quadrature(BOUNDARY_QPTS)
        chi = _edge_basis(P2, sq)
        frames = self.edge_frames(mesh)
        values = np.asarray(values, dtype=float)
        for e, (ell, tvec, _n) in zip(self.edges, frames):
            ia, ib, im = e["local"]
            r_q = np.stack([values[[ia, ib, im], c] @ chi for c in range(2)])
            rt_q = tvec[0] * r_q[0] + tvec[1] * r_q[1]
            loc = ell * np.einsum("q,iq->i", wq * rt_q, chi)
            nodes = np.array([e["va"], e["vb"], e["mid"]])
            for c in range(2):
                rhs[nodes + c * dofmap.n_scalar] += tvec[c] * loc
        return rhs

    def scalar_load(self, values, mesh, dofmap):
        """<r, psi> over the trace against a scalar test space."""
        rhs = np.zeros(dofmap.n_dofs)
        sq, wq = edge_quadrature(BOUNDARY_QPTS)
        chi = _edge_basis(P2, sq)
        chi_t = _edge_basis(dofmap.kind, sq)
        frames = self.edge_frames(mesh)
        for (e, vloc), (ell, _t, _n) in zip(self._edge_values(values), frames):
            r_q = vloc @ chi
            loc = ell * np.einsum("q,iq->i", wq * r_q, chi_t)
            nodes = _edge_nodes(dofmap, e["va"], e["vb"])
            rhs[np.asarray(nodes)] += loc
        return rhs

    def mass_weights(self, mesh):
        """Lumped arc-length weights for discrete L2(Gamma) trace norms."""
        w = np.zeros(len(self.nodes))
        sq, wq = edge_quadrature(BOUNDARY_QPTS)
        chi = _edge_basis(P2, sq)
        lump = chi @ wq
        for e, (ell, _t, _n) in zip(self.edges, self.edge_frames(mesh)):
            for loc, lw in zip(e["local"], lump):
                w[loc] += ell * lw
        return w


def trace_l2_norm(trace, values, mesh):
    values = np.asarray(values, dtype=float)
    w = trace.mass_weights(mesh)
    if values.ndim == 1:
        return float(np.sqrt(np.sum(w * values ** 2)))
    return float(np.sqrt(np.sum(w[:, None] * values ** 2)))


def boundary_scalar_nodes(dofmap, mesh, markers, exclude_markers=()):
    """Scalar node ids (vertices, P2 midpoints) on edges with the given
    markers, optionally removing nodes that also touch ``exclude_markers``
    (used to give interface conditions precedence at shared corners)."""

    def collect(marker_set):
        nodes = set()
        for eid in range(len(mesh.boundary_edges)):
            if mesh.boundary_markers[eid] not in marker_set:
                continue
            a, b = mesh.boundary_edges[eid]
            nodes.add(int(a))
            nodes.add(int(b))
            if dofmap.kind == P2:
                nodes.add(dofmap.midpoint_node(int(a), int(b)))
        return nodes

    marker_set = {int(m) for m in markers}
    nodes = collect(marker_set)
    if exclude_markers:
        nodes -= collect({int(m) for m in exclude_markers})
    return np.asarray(sorted(nodes), dtype=np.int64)


# ---------------------------------------------------------------------------
# linear systems

@dataclass
class SparseSystem:
    """Constrained sparse system with its Dirichlet record."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    constraints: dict = dc_field(default_factory=dict)
    lu: object = None
    meta: dict = None

    def copy(self):
        return SparseSystem(self.matrix.copy(), self.rhs.copy(),
                            dict(self.constraints))


def merge_constraints(*dicts):
    """Union of dof->value maps; conflicting duplicates are an error."""
    out = {}
    for d in dicts:
        for k, v in d.items():
            k = int(k)
            if k in out and out[k] != v:
                raise ConstraintConflictError(
                    f"dof {k} constrained to both {out[k]} and {v}")
            out[k] = float(v)
    return out


def eliminate_matrix(matrix, dofs):
    """Zero constrained rows/columns and set unit diagonals.

    Returns the constrained matrix together with the original columns of
    the constrained dofs (for rhs lifting), so the factorization can be
    reused across time steps with changing boundary values.
    """
    dofs = np.asarray(sorted(dofs), dtype=np.int64)
    n = matrix.shape[0]
    if len(dofs) == 0:
        return matrix.tocsr(), None, dofs
    lift = matrix.tocsc()[:, dofs].tocsr()
    keep = np.ones(n)
    keep[dofs] = 0.0
    d_keep = sp.diags(keep)
    eye = sp.coo_matrix((np.ones(len(dofs)), (dofs, dofs)), shape=(n, n))
    out = (d_keep @ matrix @ d_keep + eye).tocsr()
    return out, lift, dofs


def eliminate_rhs(rhs, lift, dofs, values):
    """Apply boundary lifting to a raw rhs for a pre-eliminated matrix."""
    out = rhs.copy()
    if len(dofs):
        out -= lift @ values
        out[dofs] = values
    return out


def apply_dirichlet(system, constraints):
    """Symmetric elimination of Dirichlet constraints on a SparseSystem."""
    merged = merge_constraints(system.constraints, constraints)
    if not merged:
        return SparseSystem(system.matrix.tocsr(), system.rhs.copy(), {})
    dofs = np.asarray(sorted(merged), dtype=np.int64)
    if dofs.min() < 0 or dofs.max() >= system.matrix.shape[0]:
        raise ConstraintConflictError("constrained dof out of range")
    values = np.array([merged[int(k)] for k in dofs])
    mat, lift, dofs = eliminate_matrix(system.matrix, dofs)
    rhs = eliminate_rhs(system.rhs, lift, dofs, values)
    return SparseSystem(mat, rhs, merged)


class LUSolver:
    """Sparse direct factorization with the package residual contract."""

    def __init__(self, matrix, tol=1e-10):
        self.matrix = matrix.tocsc()
        self.tol = tol
        try:
            self.lu = spla.splu(self.matrix)
        except RuntimeError as exc:  # SuperLU signals exact singularity
            raise SingularSystemError(
                f"sparse factorization failed: {exc}; "
                f"{_singular_hint(self.matrix)}") from exc

    def solve(self, rhs):
        x = self.lu.solve(rhs)
        if not np.isfinite(x).all():
            raise SingularSystemError(
                "factorization produced non-finite solution; "
                + _singular_hint(self.matrix))
        nb = np.linalg.norm(rhs)
        res = np.linalg.norm(self.matrix @ x - rhs)
        if res > self.tol * (nb if nb > 0.0 else 1.0):
            raise SolverError(
                f"linear solve residual {res:.3e} exceeds {self.tol:.1e} "
                f"relative to ||b|| = {nb:.3e}")
        return x


def _singular_hint(matrix):
    csr = matrix.tocsr()
    row_nnz = np.diff(csr.indptr)
    empty_rows = np.nonzero(row_nnz == 0)[0]
    if len(empty_rows):
        return f"first structurally empty row (pivot) at {empty_rows[0]}"
    csc = matrix.tocsc()
    col_nnz = np.diff(csc.indptr)
    empty_cols = np.nonzero(col_nnz == 0)[0]
    if len(empty_cols):
        return f"first structurally empty column (pivot) at {empty_cols[0]}"
    return "no structurally empty row/column; numerically singular pivot"


def solve_sparse(system, tol=1e-10):
    """Solve a (constrained) SparseSystem by sparse LU."""
    if system.lu is None:
        system.lu = LUSolver(system.matrix, tol)
    return system.lu.solve(system.rhs)


# ---------------------------------------------------------------------------
# interpolation and norms

def interpolate(f, dofmap, mesh=None, t=0.0):
    """Nodal interpolation of a closed-form function onto a dof map."""
    mesh = dofmap.mesh if mesh is None else mesh
    xy = dofmap.dof_coords(mesh)
    raw = np.asarray(f(xy[:, 0], xy[:, 1], t), dtype=float)
    if dofmap.ncomp == 1:
        coeffs = np.broadcast_to(raw, (dofmap.n_scalar,)).copy()
    else:
        if raw.shape == (2,):  # constant vector
            raw = raw[:, None]
        raw = np.broadcast_to(raw, (2, dofmap.n_scalar))
        coeffs = np.concatenate([raw[0], raw[1]])
    if not np.isfinite(coeffs).all():
        raise EvaluationError("interpolated function returned non-finite values")
    return Field(dofmap, coeffs, t)


def mass_matrix(dofmap, mesh=None):
    mesh = dofmap.mesh if mesh is None else mesh
    form = "VECTOR_MASS" if dofmap.ncomp == 2 else "MASS"
    return assemble_form(form, dofmap, dofmap, mesh)


def l2_norm(fld, mesh=None):
    """L2 norm of a Field via the order-4 mass matrix."""
    mesh = fld.dofmap.mesh if mesh is None else mesh
    m = mass_matrix(fld.dofmap, mesh)
    return float(np.sqrt(max(fld.coeffs @ (m @ fld.coeffs), 0.0)))


def function_l2(f, mesh, ncomp=1, t=0.0, order=DEFAULT_ORDER):
    """L2 norm over the mesh of a closed-form function (not a Field)."""
    pts, wts = triangle_quadrature(order)
    _, _, det, _ = mesh.geometry()
    W = np.abs(det)[:, None] * wts[None, :]
    xy = _quad_coords(mesh, pts)
    raw = np.asarray(f(xy[:, :, 0], xy[:, :, 1], t), dtype=float)
    if ncomp == 1:
        sq = np.broadcast_to(raw, xy.shape[:2]) ** 2
    else:
        sq = (np.broadcast_to(raw, (2,) + xy.shape[:2]) ** 2).sum(axis=0)
    return float(np.sqrt(np.sum(W * sq)))


def boundary_function_l2(f, mesh, marker, ncomp=1, t=0.0):
    """L2 norm over marked boundary edges of a closed-form function."""
    sq, wq = edge_quadrature(BOUNDARY_QPTS)
    total = 0.0
    for eid in mesh.edges_with_marker(marker):
        a, b = mesh.boundary_edges[eid]
        pa, pb = mesh.nodes[a], mesh.nodes[b]
        ell = float(np.hypot(*(pb - pa)))
        xq = pa[0] + (pb[0] - pa[0]) * sq
        yq = pa[1] + (pb[1] - pa[1]) * sq
        raw = np.asarray(f(xq, yq, t), dtype=float)
        if ncomp == 1:
            vals = np.broadcast_to(raw, sq.shape) ** 2
        else:
            vals = (np.broadcast_to(raw, (2, len(sq))) ** 2).sum(axis=0)
        total += ell * float(np.sum(wq * vals))
    return float(np.sqrt(total))


def strain_matrices(dofmap, mesh=None):
    """(D(u), D(v)) and (div u, div v) matrices for energy evaluations."""
    mesh = dofmap.mesh if mesh is None else mesh
    sym = assemble_form("SYM_GRAD", dofmap, dofmap, mesh, coefficient=0.5)
    div = assemble_form("GRAD_DIV", dofmap, dofmap, mesh, coefficient=1.0)
    return sym, div


def energy_norm_S(eta, mu_p, lambda_p, mesh=None):
    """Elastic energy norm sqrt(2 mu ||D(eta)||^2 + lambda ||div eta||^2)."""
    mesh = eta.dofmap.mesh if mesh is None else mesh
    sym, div = strain_matrices(eta.dofmap, mesh)
    x = eta.coeffs
    val = 2.0 * mu_p * (x @ (sym @ x)) + lambda_p * (x @ (div @ x))
    return float(np.sqrt(max(val, 0.0)))
