"""Bounding-volume hierarchy over mesh faces for exact closest-face queries.

The tree is built once in numpy (median split on the longest axis, which is
deterministic) and flattened into arrays; queries run through numba kernels.
Results are identical to a brute-force scan over all faces, with ties between
equidistant faces broken toward the lowest face id.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import ValidationError
from .geometry import ClosestHit, TriangleMesh, as_vec3

LEAF_SIZE = 4
_STACK_DEPTH = 128


@njit(cache=True, inline="always")
def _closest_on_tri(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point on one triangle; returns (x, y, z, b0, b1, b2)."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    aqx, aqy, aqz = px - ax, py - ay, pz - az

    d1 = abx * aqx + aby * aqy + abz * aqz
    d2 = acx * aqx + acy * aqy + acz * aqz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az, 1.0, 0.0, 0.0

    bqx, bqy, bqz = px - bx, py - by, pz - bz
    d3 = abx * bqx + aby * bqy + abz * bqz
    d4 = acx * bqx + acy * bqy + acz * bqz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz, 0.0, 1.0, 0.0

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz, 1.0 - v, v, 0.0

    cqx, cqy, cqz = px - cx, py - cy, pz - cz
    d5 = abx * cqx + aby * cqy + abz * cqz
    d6 = acx * cqx + acy * cqy + acz * cqz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz, 0.0, 0.0, 1.0

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz, 1.0 - w, 0.0, w

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return (
            bx + w * (cx - bx),
            by + w * (cy - by),
            bz + w * (cz - bz),
            0.0,
            1.0 - w,
            w,
        )

    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (
        ax + v * abx + w * acx,
        ay + v * aby + w * acy,
        az + v * abz + w * acz,
        1.0 - v - w,
        v,
        w,
    )


@njit(cache=True)
def _query_kernel(
    points,
    node_min,
    node_max,
    node_left,
    node_right,
    node_start,
    node_count,
    tri_a,
    tri_b,
    tri_c,
    tri_face_id,
    out_face,
    out_point,
    out_bary,
    out_dist2,
):
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    for i in range(points.shape[0]):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        best_d2 = np.inf
        best_face = -1
        bx = by = bz = 0.0
        b0 = b1 = b2 = 0.0

        top = 0
        stack[0] = 0
        while top >= 0:
            node = stack[top]
            top -= 1
            # squared distance from the query to the node AABB
            dx = max(node_min[node, 0] - px, 0.0, px - node_max[node, 0])
            dy = max(node_min[node, 1] - py, 0.0, py - node_max[node, 1])
            dz = max(node_min[node, 2] - pz, 0.0, pz - node_max[node, 2])
            if dx * dx + dy * dy + dz * dz > best_d2:
                continue
            if node_left[node] < 0:  # leaf
                start = node_start[node]
                for k in range(start, start + node_count[node]):
                    qx, qy, qz, u, v, w = _closest_on_tri(
                        px, py, pz,
                        tri_a[k, 0], tri_a[k, 1], tri_a[k, 2],
                        tri_b[k, 0], tri_b[k, 1], tri_b[k, 2],
                        tri_c[k, 0], tri_c[k, 1], tri_c[k, 2],
                    )
                    ex, ey, ez = px - qx, py - qy, pz - qz
                    d2 = ex * ex + ey * ey + ez * ez
                    fid = tri_face_id[k]
                    if d2 < best_d2 or (d2 == best_d2 and fid < best_face):
                        best_d2 = d2
                        best_face = fid
                        bx, by, bz = qx, qy, qz
                        b0, b1, b2 = u, v, w
            else:
                # push the farther child first so the nearer one is explored next
                l, r = node_left[node], node_right[node]
                lx = max(node_min[l, 0] - px, 0.0, px - node_max[l, 0])
                ly = max(node_min[l, 1] - py, 0.0, py - node_max[l, 1])
                lz = max(node_min[l, 2] - pz, 0.0, pz - node_max[l, 2])
                rx = max(node_min[r, 0] - px, 0.0, px - node_max[r, 0])
                ry = max(node_min[r, 1] - py, 0.0, py - node_max[r, 1])
                rz = max(node_min[r, 2] - pz, 0.0, pz - node_max[r, 2])
                dl = lx * lx + ly * ly + lz * lz
                dr = rx * rx + ry * ry + rz * rz
                if dl <= dr:
                    top += 1
                    stack[top] = r
                    top += 1
                    stack[top] = l
                else:
                    top += 1
                    stack[top] = l
                    top += 1
                    stack[top] = r

        out_face[i] = best_face
        out_point[i, 0], out_point[i, 1], out_point[i, 2] = bx, by, bz
        out_bary[i, 0], out_bary[i, 1], out_bary[i, 2] = b0, b1, b2
        out_dist2[i] = best_d2


@njit(cache=True)
def _brute_force_kernel(points, tri_a, tri_b, tri_c, out_face, out_point, out_bary, out_dist2):
    for i in range(points.shape[0]):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        best_d2 = np.inf
        best_face = -1
        bx = by = bz = 0.0
        b0 = b1 = b2 = 0.0
        for k in range(tri_a.shape[0]):
            qx, qy, qz, u, v, w = _closest_on_tri(
                px, py, pz,
                tri_a[k, 0], tri_a[k, 1], tri_a[k, 2],
                tri_b[k, 0], tri_b[k, 1], tri_b[k, 2],
                tri_c[k, 0], tri_c[k, 1], tri_c[k, 2],
            )
            ex, ey, ez = px - qx, py - qy, pz - qz
            d2 = ex * ex + ey * ey + ez * ez
            if d2 < best_d2:  # first (lowest) face id wins ties
                best_d2 = d2
                best_face = k
                bx, by, bz = qx, qy, qz
                b0, b1, b2 = u, v, w
        out_face[i] = best_face
        out_point[i, 0], out_point[i, 1], out_point[i, 2] = bx, by, bz
        out_bary[i, 0], out_bary[i, 1], out_bary[i, 2] = b0, b1, b2
        out_dist2[i] = best_d2


class FaceBVH:
    """Immutable BVH over a subset of mesh faces.

    Face ids reported by queries are indices into the ORIGINAL mesh face
    list, so a culled BVH still pairs with the full canonical mesh.
    """

    def __init__(self, mesh: TriangleMesh, face_ids=None):
        if face_ids is None:
            face_ids = np.arange(mesh.num_faces, dtype=np.int64)
        else:
            face_ids = np.asarray(face_ids, dtype=np.int64)
        if face_ids.size == 0:
            raise ValidationError("cannot build a BVH over an empty face set")
        self.mesh = mesh
        self.face_ids = face_ids

        v, f = mesh.vertices, mesh.faces[face_ids]
        a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        tri_min = np.minimum(np.minimum(a, b), c)
        tri_max = np.maximum(np.maximum(a, b), c)
        centroids = (a + b + c) / 3.0

        n_max = 2 * len(face_ids)  # a binary tree over m leaves has < 2m nodes
        self._node_min = np.empty((n_max, 3))
        self._node_max = np.empty((n_max, 3))
        self._node_left = np.full(n_max, -1, dtype=np.int64)
        self._node_right = np.full(n_max, -1, dtype=np.int64)
        self._node_start = np.zeros(n_max, dtype=np.int64)
        self._node_count = np.zeros(n_max, dtype=np.int64)
        self._order: list[np.ndarray] = []
        self._n_nodes = 0
        self._n_placed = 0
        self._build(np.arange(len(face_ids), dtype=np.int64), tri_min, tri_max, centroids)

        order = np.concatenate(self._order)
        del self._order
        self._tri_a = np.ascontiguousarray(a[order])
        self._tri_b = np.ascontiguousarray(b[order])
        self._tri_c = np.ascontiguousarray(c[order])
        self._tri_face_id = np.ascontiguousarray(face_ids[order])
        for arr in (self._node_min, self._node_max, self._node_left, self._node_right,
                    self._node_start, self._node_count):
            arr.flags.writeable = False

    def _build(self, idx, tri_min, tri_max, centroids) -> int:
        node = self._n_nodes
        self._n_nodes += 1
        self._node_min[node] = tri_min[idx].min(axis=0)
        self._node_max[node] = tri_max[idx].max(axis=0)
        if len(idx) <= LEAF_SIZE:
            self._node_start[node] = self._n_placed
            self._node_count[node] = len(idx)
            self._order.append(idx)
            self._n_placed += len(idx)
            return node
        axis = int(np.argmax(self._node_max[node] - self._node_min[node]))
        order = np.argsort(centroids[idx, axis], kind="stable")
        mid = len(idx) // 2
        left = self._build(idx[order[:mid]], tri_min, tri_max, centroids)
        right = self._build(idx[order[mid:]], tri_min, tri_max, centroids)
        self._node_left[node] = left
        self._node_right[node] = right
        return node

    @property
    def num_faces(self) -> int:
        return len(self._tri_face_id)

    def query(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Batch closest-face query.

        Returns (face_ids (n,), closest points (n, 3), distances (n,),
        barycentrics (n, 3)).
        """
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        n = pts.shape[0]
        out_face = np.empty(n, dtype=np.int64)
        out_point = np.empty((n, 3))
        out_bary = np.empty((n, 3))
        out_dist2 = np.empty(n)
        _query_kernel(
            pts,
            self._node_min, self._node_max, self._node_left, self._node_right,
            self._node_start, self._node_count,
            self._tri_a, self._tri_b, self._tri_c, self._tri_face_id,
            out_face, out_point, out_bary, out_dist2,
        )
        return out_face, out_point, np.sqrt(out_dist2), out_bary


def build_bvh(mesh: TriangleMesh, face_ids=None) -> FaceBVH:
    """Build an immutable BVH over a validated mesh (optionally a face subset)."""
    if mesh.num_faces == 0:
        raise ValidationError("cannot build a BVH over an empty mesh")
    return FaceBVH(mesh, face_ids)


def closest_face(bvh: FaceBVH, q) -> ClosestHit:
    """Single-point closest-face query through the BVH."""
    q = as_vec3(q)
    face, point, dist, bary = bvh.query(q[None, :])
    return ClosestHit(
        int(face[0]), point[0], float(dist[0]),
        (float(bary[0, 0]), float(bary[0, 1]), float(bary[0, 2])),
    )


def brute_force_query(mesh: TriangleMesh, points, face_ids=None):
    """Exhaustive scan over all faces; same tie-break rule as the BVH path."""
    if face_ids is None:
        faces = mesh.faces
        ids = np.arange(mesh.num_faces, dtype=np.int64)
    else:
        ids = np.asarray(face_ids, dtype=np.int64)
        faces = mesh.faces[ids]
    if len(faces) == 0:
        raise ValidationError("empty face set")
    v = mesh.vertices
    a = np.ascontiguousarray(v[faces[:, 0]])
    b = np.ascontiguousarray(v[faces[:, 1]])
    c = np.ascontiguousarray(v[faces[:, 2]])
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    n = pts.shape[0]
    out_face = np.empty(n, dtype=np.int64)
    out_point = np.empty((n, 3))
    out_bary = np.empty((n, 3))
    out_dist2 = np.empty(n)
    _brute_force_kernel(pts, a, b, c, out_face, out_point, out_bary, out_dist2)
    return ids[out_face], out_point, np.sqrt(out_dist2), out_bary
