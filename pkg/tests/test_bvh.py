import numpy as np
import pytest

from tests_support import triangle_soup

from quartershot.bvh import brute_force_query, build_bvh, closest_face
from quartershot.errors import ValidationError
from quartershot.geometry import TriangleMesh, closest_point_on_triangle


def python_scan(mesh, q):
    """Reference scan through the pure-python closest-point routine."""
    best = (np.inf, -1, None)
    for fid, face in enumerate(mesh.faces):
        tri = mesh.vertices[face]
        point, _ = closest_point_on_triangle(q, *tri)
        d = np.linalg.norm(q - point)
        if d < best[0]:
            best = (d, fid, point)
    return best


class TestBVHEquivalence:
    @pytest.mark.parametrize("n_faces", [10, 200, 2000])
    def test_matches_brute_force_kernel(self, rng, n_faces):
        mesh = triangle_soup(rng, n_faces)
        bvh = build_bvh(mesh)
        queries = rng.uniform(-1.5, 1.5, (1500, 3))
        f_b, p_b, d_b, bary_b = bvh.query(queries)
        f_r, p_r, d_r, bary_r = brute_force_query(mesh, queries)
        np.testing.assert_allclose(d_b, d_r, atol=1e-9)
        np.testing.assert_array_equal(f_b, f_r)
        np.testing.assert_allclose(p_b, p_r, atol=1e-9)
        np.testing.assert_allclose(bary_b, bary_r, atol=1e-9)

    def test_matches_pure_python_scan(self, rng):
        """Cross-checks the compiled kernels against an independent
        implementation path."""
        mesh = triangle_soup(rng, 60)
        bvh = build_bvh(mesh)
        for _ in range(100):
            q = rng.uniform(-2, 2, 3)
            hit = closest_face(bvh, q)
            d_ref, f_ref, p_ref = python_scan(mesh, q)
            assert hit.distance == pytest.approx(d_ref, abs=1e-9)
            assert hit.face_id == f_ref
            np.testing.assert_allclose(hit.point, p_ref, atol=1e-9)

    def test_far_outside_query(self, rng):
        mesh = triangle_soup(rng, 50)
        bvh = build_bvh(mesh)
        q = np.array([500.0, -300.0, 800.0])
        hit = closest_face(bvh, q)
        d_ref, f_ref, _ = python_scan(mesh, q)
        assert hit.face_id == f_ref
        assert hit.distance == pytest.approx(d_ref, abs=1e-6)


class TestTieBreak:
    def test_equidistant_faces_resolve_to_lowest_id(self):
        # faces 3 and 7 are geometrically identical; a query straight above
        # them is exactly equidistant to both
        tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
        verts = []
        faces = []
        for k in range(8):
            offset = np.array([3.0 * k, 0.0, 0.0])
            if k == 7:
                offset = np.array([9.0, 0.0, 0.0])  # same place as face 3
            verts.append(tri + offset)
            faces.append([3 * k, 3 * k + 1, 3 * k + 2])
        mesh = TriangleMesh(np.concatenate(verts), np.array(faces))
        bvh = build_bvh(mesh)
        hit = closest_face(bvh, [9.2, 0.2, 1.0])
        assert hit.face_id == 3

    def test_shared_vertex_query(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0.0]])
        mesh = TriangleMesh(verts, np.array([[0, 1, 2], [0, 3, 4]]))
        hit = closest_face(build_bvh(mesh), [0.0, 0.0, 2.0])
        assert hit.face_id == 0
        assert hit.distance == pytest.approx(2.0, abs=1e-12)


class TestConstruction:
    def test_single_face_bvh_matches_triangle_routine(self, rng):
        tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
        mesh = TriangleMesh(tri, np.array([[0, 1, 2]]))
        bvh = build_bvh(mesh)
        for _ in range(50):
            q = rng.normal(size=3)
            hit = closest_face(bvh, q)
            point, _ = closest_point_on_triangle(q, *tri)
            np.testing.assert_allclose(hit.point, point, atol=1e-12)

    def test_empty_mesh_rejected(self):
        mesh = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
        with pytest.raises(ValidationError):
            build_bvh(mesh)

    def test_empty_subset_rejected(self, rng):
        mesh = triangle_soup(rng, 10)
        with pytest.raises(ValidationError):
            build_bvh(mesh, np.array([], dtype=np.int64))

    def test_subset_reports_original_face_ids(self, rng):
        mesh = triangle_soup(rng, 100)
        subset = np.arange(40, 100, dtype=np.int64)
        bvh = build_bvh(mesh, subset)
        queries = rng.uniform(-1.5, 1.5, (200, 3))
        f_sub, _, d_sub, _ = bvh.query(queries)
        assert set(f_sub) <= set(subset.tolist())
        f_ref, _, d_ref, _ = brute_force_query(mesh, queries, subset)
        np.testing.assert_array_equal(f_sub, f_ref)
        np.testing.assert_allclose(d_sub, d_ref, atol=1e-12)

    def test_repeated_queries_deterministic(self, rng):
        mesh = triangle_soup(rng, 300)
        bvh = build_bvh(mesh)
        queries = rng.uniform(-1, 1, (500, 3))
        f1, p1, d1, b1 = bvh.query(queries)
        f2, p2, d2, b2 = bvh.query(queries)
        np.testing.assert_array_equal(f1, f2)
        np.testing.assert_array_equal(p1, p2)
        np.testing.assert_array_equal(d1, d2)
        np.testing.assert_array_equal(b1, b2)
