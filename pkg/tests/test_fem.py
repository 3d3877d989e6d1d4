import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from robinfpsi import fem
from robinfpsi.errors import (
    CapabilityError,
    ConstraintConflictError,
    DomainError,
    SingularSystemError,
)
from robinfpsi.fem import (
    BoundaryTrace,
    DofMap,
    Field,
    SparseSystem,
    apply_dirichlet,
    assemble_form,
    assemble_functional,
    boundary_scalar_nodes,
    energy_norm_S,
    interpolate,
    l2_norm,
    reference_basis,
    solve_sparse,
    triangle_quadrature,
    zero_field,
)
from robinfpsi.interface import extract_interface
from robinfpsi.meshing import Marker, Mesh, build_rect_mesh, mark_boundary

from test_meshing import benchmark_fluid_mesh, benchmark_solid_mesh, mark_all


def reference_triangle():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return mark_all(Mesh(nodes, np.array([[0, 1, 2]])))


def quad_integrate(order, fn):
    pts, wts = triangle_quadrature(order)
    return float(np.sum(wts * fn(pts[:, 0], pts[:, 1])))


class TestReferenceBasis:
    def test_p1_nodal_at_vertex(self):
        vals, _ = reference_basis("P1", np.array([1.0, 0.0, 0.0]))
        np.testing.assert_array_equal(vals, [1.0, 0.0, 0.0])

    def test_p2_nodal_at_midpoint(self):
        # midpoint opposite vertex 0 sits at lam = (0, 1/2, 1/2): dof 3
        vals, _ = reference_basis("P2", np.array([0.0, 0.5, 0.5]))
        np.testing.assert_allclose(vals[3], 1.0, atol=1e-15)
        np.testing.assert_allclose(np.delete(vals, 3), 0.0, atol=1e-15)

    def test_p2_partition_of_unity_at_centroid(self):
        vals, _ = reference_basis("P2", np.array([1, 1, 1]) / 3.0)
        assert abs(vals.sum() - 1.0) <= 1e-15

    def test_invalid_point_rejected(self):
        with pytest.raises(DomainError):
            reference_basis("P1", np.array([0.7, 0.7, -0.4]))

    @given(st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=50, deadline=None)
    def test_partition_of_unity_property(self, a, b):
        l1 = a
        l2 = (1.0 - a) * b
        lam = np.array([1.0 - l1 - l2, l1, l2])
        lam /= lam.sum()
        for kind in ("P1", "P2"):
            vals, grads = reference_basis(kind, lam)
            assert abs(vals.sum() - 1.0) <= 1e-14
            np.testing.assert_allclose(grads.sum(axis=0), 0.0, atol=1e-14)


class TestQuadrature:
    @pytest.mark.parametrize("order", [1, 2, 3, 4, 5, 6])
    def test_weights_positive_and_normalized(self, order):
        _, wts = triangle_quadrature(order)
        assert (wts > 0).all()
        assert abs(wts.sum() - 0.5) <= 1e-15

    @pytest.mark.parametrize("order", [1, 2, 3, 4, 5, 6])
    def test_linear_identity(self, order):
        assert abs(quad_integrate(order, lambda x, y: x + y) - 1.0 / 3.0) <= 1e-14

    @pytest.mark.parametrize("order", [4, 5, 6])
    def test_quartic_identity(self, order):
        # analytic: int over x+y<=1 of x^2 y^2 = 1/180
        val = quad_integrate(order, lambda x, y: x ** 2 * y ** 2)
        assert abs(val - 1.0 / 180.0) <= 1e-14

    def test_exactness_by_degree(self):
        # each rule integrates all monomials of its degree exactly
        import math
        for order in (1, 2, 3, 4, 5, 6):
            for p in range(order + 1):
                for q in range(order + 1 - p):
                    exact = (math.factorial(p) * math.factorial(q)
                             / math.factorial(p + q + 2))
                    got = quad_integrate(order, lambda x, y: x ** p * y ** q)
                    assert abs(got - exact) <= 1e-14, (order, p, q)

    def test_unsupported_order(self):
        with pytest.raises(CapabilityError):
            triangle_quadrature(9)


class TestAssembly:
    def test_p1_mass_reference_triangle(self):
        mesh = reference_triangle()
        dm = DofMap(mesh, "P1")
        m = assemble_form("MASS", dm, dm, mesh).toarray()
        expected = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0
        np.testing.assert_allclose(m, expected, rtol=0, atol=1e-15)

    def test_stiffness_row_sums_zero(self):
        mesh = reference_triangle()
        dm = DofMap(mesh, "P1")
        k = assemble_form("STIFFNESS", dm, dm, mesh).toarray()
        np.testing.assert_allclose(k.sum(axis=1), 0.0, atol=1e-15)

    def test_div_pressure_annihilates_rotation(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 4, 4))
        v2 = DofMap(mesh, "P2", ncomp=2)
        q1 = DofMap(mesh, "P1")
        b = assemble_form("DIV_PRESSURE", v2, q1, mesh)
        rot = interpolate(lambda x, y, t: np.array([-y, x]), v2, mesh)
        assert np.abs(b @ rot.coeffs).max() <= 1e-13

    @pytest.mark.parametrize("form,kwargs", [
        ("MASS", {}),
        ("STIFFNESS", {}),
        ("SYM_GRAD", {"coefficient": 1.0}),
        ("GRAD_DIV", {"coefficient": 1.0}),
    ])
    def test_symmetry(self, form, kwargs):
        mesh = mark_all(build_rect_mesh((0, 2, -1, 1), 3, 4))
        ncomp = 2 if form in ("SYM_GRAD", "GRAD_DIV") else 1
        dm = DofMap(mesh, "P2", ncomp=ncomp)
        a = assemble_form(form, dm, dm, mesh, **kwargs)
        diff = (a - a.T)
        denom = sp.linalg.norm(a)
        assert sp.linalg.norm(diff) <= 1e-13 * denom

    def test_mass_sum_equals_area(self):
        mesh = mark_all(build_rect_mesh((0, 2, 0, 3), 5, 4))
        for kind in ("P1", "P2"):
            dm = DofMap(mesh, kind)
            m = assemble_form("MASS", dm, dm, mesh)
            assert abs(m.sum() - 6.0) <= 1e-12 * 6.0

    def test_vector_mass_block_structure(self):
        mesh = reference_triangle()
        dm = DofMap(mesh, "P1", ncomp=2)
        m = assemble_form("VECTOR_MASS", dm, dm, mesh).toarray()
        np.testing.assert_allclose(m[:3, 3:], 0.0)
        np.testing.assert_allclose(m[:3, :3], m[3:, 3:])

    def test_sym_grad_energy_matches_analytic(self):
        # eta = (x, y): 2 mu ||D(eta)||^2 = 2*mu*2*area with mu=1
        mesh = mark_all(build_rect_mesh((0, 1, -1, 0), 4, 4))
        dm = DofMap(mesh, "P2", ncomp=2)
        k = assemble_form("SYM_GRAD", dm, dm, mesh, coefficient=1.0)
        eta = interpolate(lambda x, y, t: np.array([x, y]), dm, mesh)
        val = eta.coeffs @ (k @ eta.coeffs)
        assert abs(val - 4.0) <= 1e-12

    def test_convection_zero_field(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 3, 3))
        dm = DofMap(mesh, "P2", ncomp=2)
        c = assemble_form("CONVECTION", dm, dm, mesh,
                          coefficient=zero_field(dm))
        assert abs(c).max() == 0.0

    def test_convection_antisymmetric_in_advecting_field(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 3, 3))
        dm = DofMap(mesh, "P2", ncomp=2)
        b = interpolate(lambda x, y, t: np.array([y + 0.3, x * x]), dm, mesh)
        bneg = Field(dm, -b.coeffs)
        cpos = assemble_form("CONVECTION", dm, dm, mesh, coefficient=b)
        cneg = assemble_form("CONVECTION", dm, dm, mesh, coefficient=bneg)
        assert abs(cpos + cneg).max() <= 1e-14


class TestFunctionals:
    def test_zero_domain_load(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 2, 2))
        dm = DofMap(mesh, "P2", ncomp=2)
        rhs = assemble_functional("DOMAIN_LOAD", dm, mesh,
                                  lambda x, y, t: np.zeros((2,) + x.shape), t=0.0)
        assert np.all(rhs == 0.0)

    def test_constant_load_sums_to_area(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 3, 3))
        dm = DofMap(mesh, "P2", ncomp=2)
        rhs = assemble_functional(
            "DOMAIN_LOAD", dm, mesh,
            lambda x, y, t: np.array([np.ones_like(x), np.zeros_like(x)]),
            t=0.0)
        ns = dm.n_scalar
        assert abs(rhs[:ns].sum() - 1.0) <= 1e-13
        assert abs(rhs[ns:].sum()) <= 1e-13

    def test_boundary_normal_load_constant(self):
        fm = benchmark_fluid_mesh(4)
        sm = benchmark_solid_mesh(4)
        pairing = extract_interface(fm, sm)
        v2 = DofMap(fm, "P2", ncomp=2)
        trace = BoundaryTrace(pairing.fluid, v2)
        rhs = trace.normal_load(np.ones(len(trace)), fm, v2)
        # n_f = (0,-1) on y=0 for the upper fluid domain; length 1
        assert abs(rhs.sum() - (-1.0)) <= 1e-13

    def test_boundary_load_length(self):
        fm = benchmark_fluid_mesh(4)
        q = DofMap(fm, "P1")
        rhs = assemble_functional("BOUNDARY_LOAD", q, fm,
                                  lambda x, y, t: np.ones_like(x),
                                  marker=Marker.NEUMANN_F, t=0.0)
        assert abs(rhs.sum() - 1.0) <= 1e-13

    def test_empty_marker_warns(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 2, 2))
        dm = DofMap(mesh, "P1")
        with pytest.warns(UserWarning):
            m = assemble_form("BOUNDARY_MASS", dm, dm, mesh,
                              marker=Marker.INTERFACE)
        assert m.nnz == 0


class TestDirichletAndSolve:
    def test_no_constraints_unchanged(self):
        a = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
        system = SparseSystem(a, np.array([3.0, 3.0]))
        out = apply_dirichlet(system, {})
        np.testing.assert_array_equal(out.matrix.toarray(), a.toarray())
        np.testing.assert_array_equal(out.rhs, system.rhs)

    def test_all_constrained_identity(self):
        a = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
        system = SparseSystem(a, np.array([3.0, 3.0]))
        out = apply_dirichlet(system, {0: 0.0, 1: 0.0})
        np.testing.assert_array_equal(out.matrix.toarray(), np.eye(2))
        np.testing.assert_array_equal(out.rhs, [0.0, 0.0])

    def test_three_dof_laplace_hand_solve(self):
        a = sp.csr_matrix(np.array([[1.0, -1.0, 0.0],
                                    [-1.0, 2.0, -1.0],
                                    [0.0, -1.0, 1.0]]))
        system = SparseSystem(a, np.zeros(3))
        out = apply_dirichlet(system, {0: 0.0, 2: 1.0})
        x = solve_sparse(out)
        np.testing.assert_allclose(x, [0.0, 0.5, 1.0], atol=1e-14)

    def test_conflicting_constraints(self):
        a = sp.csr_matrix(np.eye(2))
        system = SparseSystem(a, np.zeros(2), constraints={0: 1.0})
        with pytest.raises(ConstraintConflictError):
            apply_dirichlet(system, {0: 2.0})

    def test_identity_solve(self):
        rhs = np.array([4.0, -1.0, 2.5])
        system = SparseSystem(sp.identity(3, format="csr"), rhs)
        np.testing.assert_array_equal(solve_sparse(system), rhs)

    def test_two_by_two_hand_solve(self):
        a = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
        x = solve_sparse(SparseSystem(a, np.array([3.0, 3.0])))
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-14)

    def test_random_diag_dominant_residual(self):
        rng = np.random.default_rng(42)
        a = rng.standard_normal((50, 50))
        a += np.diag(np.abs(a).sum(axis=1) + 1.0)
        b = rng.standard_normal(50)
        system = SparseSystem(sp.csr_matrix(a), b)
        x = solve_sparse(system)
        assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_singular_system_reports_pivot(self):
        a = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(SingularSystemError):
            solve_sparse(SparseSystem(a, np.ones(2)))


class TestInterpolationAndNorms:
    def test_zero_function(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 2, 2))
        dm = DofMap(mesh, "P1")
        f = interpolate(lambda x, y, t: np.zeros_like(x), dm, mesh)
        assert np.all(f.coeffs == 0.0)

    def test_p1_nodal_exactness(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 3, 3))
        dm = DofMap(mesh, "P1")
        f = interpolate(lambda x, y, t: x, dm, mesh)
        np.testing.assert_array_equal(f.coeffs, mesh.nodes[:, 0])

    def test_p2_reproduces_quadratics_at_quad_points(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 3, 3))
        dm = DofMap(mesh, "P2")
        f = interpolate(lambda x, y, t: x ** 2, dm, mesh)
        pts, _ = triangle_quadrature(4)
        vals = fem.evaluate_field(f, mesh, pts)[:, :, 0]
        xy = fem._quad_coords(mesh, pts)
        np.testing.assert_allclose(vals, xy[:, :, 0] ** 2, atol=1e-13)

    def test_p2_vector_quadratic_patch(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 4, 4))
        dm = DofMap(mesh, "P2", ncomp=2)

        def quad(x, y, t):
            return np.array([1 + 2 * x + 3 * y + x * y + x ** 2,
                             0.5 * y ** 2 - x + 2 * x * y])

        f = interpolate(quad, dm, mesh)
        pts, _ = triangle_quadrature(4)
        vals = fem.evaluate_field(f, mesh, pts)
        xy = fem._quad_coords(mesh, pts)
        exact = np.moveaxis(np.asarray(quad(xy[:, :, 0], xy[:, :, 1], 0.0)), 0, -1)
        assert np.abs(vals - exact).max() <= 1e-12

    def test_l2_norm_of_one_is_area(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 3, 3))
        dm = DofMap(mesh, "P1")
        f = interpolate(lambda x, y, t: np.ones_like(x), dm, mesh)
        assert abs(l2_norm(f, mesh) - 1.0) <= 1e-13

    def test_zero_field_energy(self):
        mesh = mark_all(build_rect_mesh((0, 1, -1, 0), 2, 2))
        dm = DofMap(mesh, "P2", ncomp=2)
        assert energy_norm_S(zero_field(dm), 1.0, 1.0, mesh) == 0.0

    def test_energy_norm_analytic(self):
        # eta = (x, y) on area-1 domain: ||eta||_S^2 = 2*2 + 4 = 8
        mesh = mark_all(build_rect_mesh((0, 1, -1, 0), 4, 4))
        dm = DofMap(mesh, "P2", ncomp=2)
        eta = interpolate(lambda x, y, t: np.array([x, y]), dm, mesh)
        assert abs(energy_norm_S(eta, 1.0, 1.0, mesh) ** 2 - 8.0) <= 1e-12


class TestPatchTests:
    @pytest.mark.parametrize("kind", ["P1", "P2"])
    def test_affine_galerkin_exactness(self, kind):
        mesh = mark_all(build_rect_mesh((0, 1.3, -0.2, 1), 5, 4))
        dm = DofMap(mesh, kind)
        k = assemble_form("STIFFNESS", dm, dm, mesh)

        def affine(x, y, t):
            return 1.0 + 2.0 * x - 3.0 * y

        exact = interpolate(affine, dm, mesh)
        bnodes = boundary_scalar_nodes(dm, mesh, [Marker.DIRICHLET_F])
        constraints = {int(n): exact.coeffs[n] for n in bnodes}
        system = apply_dirichlet(SparseSystem(k.tocsr(), np.zeros(dm.n_dofs)),
                                 constraints)
        x = solve_sparse(system)
        np.testing.assert_allclose(x, exact.coeffs, atol=1e-10)


class TestBoundaryTrace:
    def setup_method(self):
        self.fm = benchmark_fluid_mesh(4)
        self.sm = benchmark_solid_mesh(4)
        self.pairing = extract_interface(self.fm, self.sm)
        self.v2f = DofMap(self.fm, "P2", ncomp=2)
        self.v2s = DofMap(self.sm, "P2", ncomp=2)
        self.ftrace = BoundaryTrace(self.pairing.fluid, self.v2f)
        self.strace = BoundaryTrace(self.pairing.solid, self.v2s)

    def test_node_count_and_order(self):
        # 4 edges: 5 vertices + 4 midpoints
        assert len(self.ftrace) == 9
        assert (np.diff(self.ftrace.s) > 0).all()

    def test_outward_normals(self):
        nf = self.ftrace.normals(self.fm)
        np.testing.assert_allclose(nf, np.tile([0.0, -1.0], (9, 1)), atol=1e-15)
        npn = self.strace.normals(self.sm)
        np.testing.assert_allclose(npn, np.tile([0.0, 1.0], (9, 1)), atol=1e-15)

    def test_extract_p2_field(self):
        u = interpolate(lambda x, y, t: np.array([x, np.zeros_like(x)]),
                        self.v2f, self.fm)
        vals = self.ftrace.extract(u)
        np.testing.assert_allclose(vals[:, 0], self.ftrace.s, atol=1e-14)

    def test_extract_p1_field_midpoint_average(self):
        q = DofMap(self.fm, "P1")
        phi = interpolate(lambda x, y, t: 2.0 * x + 1.0, q, self.fm)
        vals = self.ftrace.extract(phi)
        np.testing.assert_allclose(vals, 2.0 * self.ftrace.s + 1.0, atol=1e-14)

    def test_dot_normal_and_project(self):
        u = interpolate(lambda x, y, t: np.array([np.full_like(x, 3.0),
                                                  np.full_like(x, -1.0)]),
                        self.v2f, self.fm)
        vals = self.ftrace.extract(u)
        un = self.ftrace.dot_normal(vals, self.fm)
        np.testing.assert_allclose(un, 1.0, atol=1e-14)
        pt = self.ftrace.project_tangent(vals, self.fm)
        np.testing.assert_allclose(pt[:, 0], 3.0, atol=1e-14)
        np.testing.assert_allclose(pt[:, 1], 0.0, atol=1e-14)

    def test_scatter_roundtrip(self):
        vals = np.column_stack([self.ftrace.s, 1.0 - self.ftrace.s])
        full = self.ftrace.scatter(vals)
        u = Field(self.v2f, full)
        back = self.ftrace.extract(u)
        np.testing.assert_array_equal(back, vals)
