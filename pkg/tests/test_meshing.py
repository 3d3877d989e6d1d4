import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robinfpsi.errors import (
    AmbiguousMarkingError,
    GeometryError,
    InterfaceMismatchError,
    MarkingIncompleteError,
    TangledMeshError,
)
from robinfpsi.interface import extract_interface, interface_transfer
from robinfpsi.meshing import (
    Marker,
    build_rect_mesh,
    deform_mesh,
    mark_boundary,
    reset_mesh,
)


def shoelace_area(nodes, tri):
    p = nodes[tri]
    return 0.5 * abs((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                     - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))


def mark_all(mesh, marker=Marker.DIRICHLET_F):
    return mark_boundary(mesh, [(lambda x, y: True, marker)])


def benchmark_fluid_mesh(n):
    mesh = build_rect_mesh((0.0, 1.0, 0.0, 1.0), n, n)
    return mark_boundary(mesh, [
        (lambda x, y: x > 1.0 - 1e-12, Marker.NEUMANN_F),
        (lambda x, y: y < 1e-12, Marker.INTERFACE),
        (lambda x, y: (x < 1.0 - 1e-12) and (y > 1e-12), Marker.DIRICHLET_F),
    ])


def benchmark_solid_mesh(n):
    mesh = build_rect_mesh((0.0, 1.0, -1.0, 0.0), n, n)
    return mark_boundary(mesh, [
        (lambda x, y: y > -1e-12, Marker.INTERFACE),
        (lambda x, y: y < -1.0 + 1e-12, Marker.NEUMANN_P),
        (lambda x, y: abs(y) < 1.0 - 1e-12 and y < -1e-12, Marker.DIRICHLET_P),
    ])


class TestBuildRectMesh:
    def test_smallest_mesh_counts(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 1, 1)
        assert mesh.num_triangles == 2
        assert mesh.num_nodes == 4
        assert len(mesh.boundary_edges) == 4

    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_counting_identity(self, n):
        mesh = build_rect_mesh((0, 1, 0, 1), n, n)
        assert mesh.num_nodes == (n + 1) ** 2
        assert mesh.num_triangles == 2 * n ** 2

    def test_total_area_oracle(self):
        # oracle: sum of shoelace areas of each triangle
        mesh = build_rect_mesh((0.0, 1.0, -1.0, 0.0), 2, 2)
        total = sum(shoelace_area(mesh.nodes, tri) for tri in mesh.triangles)
        assert abs(total - 1.0) <= 1e-14
        assert abs(mesh.area() - total) <= 1e-14

    def test_degenerate_rectangle_rejected(self):
        with pytest.raises(GeometryError):
            build_rect_mesh((0, 0, 0, 1), 1, 1)

    def test_positive_ccw_areas(self):
        mesh = build_rect_mesh((0, 3, -2, 5), 4, 3, diagonal="nw")
        assert mesh.triangle_areas().min() > 0

    def test_boundary_edges_unique_to_one_triangle(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 3, 3)
        # every boundary edge occurs in exactly one triangle
        for a, b in mesh.boundary_edges:
            owners = [t for t in mesh.triangles
                      if a in t and b in t]
            assert len(owners) == 1


class TestMarkBoundary:
    def test_benchmark_markers(self):
        mesh = benchmark_fluid_mesh(4)
        mids = mesh.edge_midpoints()
        for k, (x, y) in enumerate(mids):
            m = Marker(mesh.boundary_markers[k])
            if abs(x - 1.0) < 1e-12:
                assert m == Marker.NEUMANN_F
            elif abs(y) < 1e-12:
                assert m == Marker.INTERFACE
            else:
                assert m == Marker.DIRICHLET_F

    def test_empty_predicates(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 2, 2)
        with pytest.raises(MarkingIncompleteError):
            mark_boundary(mesh, [])

    def test_overlapping_predicates(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 2, 2)
        with pytest.raises(AmbiguousMarkingError):
            mark_boundary(mesh, [
                (lambda x, y: True, Marker.DIRICHLET_F),
                (lambda x, y: x > 1 - 1e-12, Marker.NEUMANN_F),
            ])

    def test_partition_property(self):
        mesh = benchmark_solid_mesh(3)
        assert (mesh.boundary_markers != Marker.UNMARKED).all()


class TestInterfacePairing:
    def test_conforming_interface(self):
        fm = benchmark_fluid_mesh(4)
        sm = benchmark_solid_mesh(4)
        pairing = extract_interface(fm, sm)
        assert pairing.matching
        assert len(pairing.fluid.vertex_ids) == len(pairing.solid.vertex_ids)
        assert pairing.fluid.vertex_s[0] == 0.0
        assert pairing.fluid.vertex_s[-1] == 1.0

    def test_refined_interface_not_matching(self):
        fm = benchmark_fluid_mesh(8)
        sm = benchmark_solid_mesh(4)
        pairing = extract_interface(fm, sm)
        assert not pairing.matching
        assert pairing.fluid.vertex_s[-1] == 1.0
        assert pairing.solid.vertex_s[-1] == 1.0

    def test_geometric_disagreement(self):
        fm = benchmark_fluid_mesh(4)
        sm = build_rect_mesh((0.0, 1.0, -1.0, 0.1), 4, 4)
        sm = mark_boundary(sm, [
            (lambda x, y: y > 0.1 - 1e-12, Marker.INTERFACE),
            (lambda x, y: y < 0.1 - 1e-12, Marker.DIRICHLET_P),
        ])
        with pytest.raises(InterfaceMismatchError):
            extract_interface(fm, sm)

    def test_transfer_identity_on_matching(self):
        fm = benchmark_fluid_mesh(4)
        sm = benchmark_solid_mesh(4)
        pairing = extract_interface(fm, sm)
        values = np.sin(np.arange(len(pairing.fluid.vertex_ids), dtype=float))
        out = interface_transfer(values, pairing, "fluid_to_solid")
        np.testing.assert_array_equal(out, values)

    def test_transfer_preserves_constants(self):
        fm = benchmark_fluid_mesh(8)
        sm = benchmark_solid_mesh(4)
        pairing = extract_interface(fm, sm)
        values = np.full(len(pairing.solid.vertex_ids), 3.25)
        out = interface_transfer(values, pairing, "solid_to_fluid")
        np.testing.assert_allclose(out, 3.25, rtol=0, atol=1e-15)

    def test_transfer_affine_oracle(self):
        # oracle: evaluate s -> 2s at the target arclengths directly
        fm = benchmark_fluid_mesh(8)  # 2n segments
        sm = benchmark_solid_mesh(4)  # n segments
        pairing = extract_interface(fm, sm)
        src = 2.0 * pairing.solid.vertex_s
        out = interface_transfer(src, pairing, "solid_to_fluid")
        expected = 2.0 * pairing.fluid.vertex_s
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-14)

    @given(st.integers(min_value=1, max_value=4).map(lambda k: 2 ** k),
           st.floats(min_value=-2.0, max_value=2.0),
           st.floats(min_value=-2.0, max_value=2.0))
    @settings(max_examples=20, deadline=None)
    def test_transfer_affine_property(self, n, a, b):
        fm = benchmark_fluid_mesh(2 * n)
        sm = benchmark_solid_mesh(n)
        pairing = extract_interface(fm, sm)
        src = a * pairing.solid.vertex_s + b
        out = interface_transfer(src, pairing, "solid_to_fluid")
        expected = a * pairing.fluid.vertex_s + b
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-13)


class TestDeformReset:
    def test_zero_displacement(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 3, 3))
        out = deform_mesh(mesh, np.zeros((mesh.num_nodes, 2)))
        np.testing.assert_array_equal(out.nodes, mesh.nodes)

    def test_rigid_translation(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 3, 3))
        disp = np.zeros((mesh.num_nodes, 2))
        disp[:, 0] = 0.7
        out = deform_mesh(mesh, disp)
        np.testing.assert_allclose(out.nodes[:, 0], mesh.nodes[:, 0] + 0.7)
        np.testing.assert_allclose(out.triangle_areas(), mesh.triangle_areas(),
                                   rtol=0, atol=1e-14)

    def test_flip_raises_tangled(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 1, 1))
        # reflect one vertex across the opposite edge: move (0,0) to (1.5,1.5)
        disp = np.zeros((mesh.num_nodes, 2))
        disp[0] = (1.5, 1.5)
        with pytest.raises(TangledMeshError):
            deform_mesh(mesh, disp)

    def test_deform_then_reset_is_identity_bitwise(self):
        mesh = mark_all(build_rect_mesh((0, 2, 0, 1), 4, 2))
        rng = np.random.default_rng(7)
        disp = 0.01 * rng.standard_normal((mesh.num_nodes, 2))
        out = reset_mesh(deform_mesh(mesh, disp))
        assert (out.nodes == mesh.nodes).all()

    def test_area_preserved_after_deform_reset(self):
        mesh = mark_all(build_rect_mesh((0, 1, -1, 0), 5, 5))
        rng = np.random.default_rng(3)
        disp = 0.02 * rng.standard_normal((mesh.num_nodes, 2))
        out = reset_mesh(deform_mesh(mesh, disp))
        assert abs(out.area() - 1.0) <= 1e-12

    def test_blocked_coefficient_vector_accepted(self):
        mesh = mark_all(build_rect_mesh((0, 1, 0, 1), 2, 2))
        nv = mesh.num_nodes
        coeffs = np.zeros(2 * (nv + 5))  # P2-like layout, vertices first
        coeffs[:nv] = 0.25  # x-displacement at vertices
        out = deform_mesh(mesh, coeffs)
        np.testing.assert_allclose(out.nodes[:, 0] - mesh.nodes[:, 0], 0.25)
