"""Triangle-mesh geometry primitives: closest-point queries, per-face local
frames, rigid/similarity transforms, and a minimal ASCII OBJ reader/writer.

Conventions: vectors are numpy float64 arrays of shape (3,), matrices (3, 3).
Meshes are immutable after validation; all queries are read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormatError, NumericError, ValidationError

Vec3 = np.ndarray  # shape (3,)
Mat3 = np.ndarray  # shape (3, 3)

MIN_FACE_AREA = 1e-12
ORTHONORMAL_TOL = 1e-6


def as_vec3(x) -> Vec3:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (3,):
        raise ValidationError(f"expected a 3-vector, got shape {v.shape}")
    return v


def normalize(v: Vec3) -> Vec3:
    n = np.linalg.norm(v)
    if n < 1e-30:
        raise NumericError("cannot normalize a zero-length vector")
    return v / n


def axis_angle_to_matrix(aa) -> Mat3:
    """Rodrigues rotation: axis-angle 3-vector (radians) to a 3x3 matrix."""
    aa = as_vec3(aa)
    angle = np.linalg.norm(aa)
    if angle < 1e-12:
        return np.eye(3)
    k = aa / angle
    kx = np.array([
        [0.0, -k[2], k[1]],
        [k[2], 0.0, -k[0]],
        [-k[1], k[0], 0.0],
    ])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def cross3(a: Vec3, b: Vec3) -> Vec3:
    """Cross product of two 3-vectors (faster than np.cross for scalars)."""
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def is_rotation(m: Mat3, tol: float = ORTHONORMAL_TOL) -> bool:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        return False
    gram = m.T @ m
    gram[0, 0] -= 1.0
    gram[1, 1] -= 1.0
    gram[2, 2] -= 1.0
    if np.abs(gram).max() > tol:
        return False
    det = (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
           - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
           + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))
    return det > 0


@dataclass(frozen=True)
class RigidTransform:
    """x -> scale * rotation @ x + translation (scale=1 gives a rigid motion)."""

    rotation: Mat3
    translation: Vec3
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", as_vec3(self.translation))
        if not is_rotation(self.rotation):
            raise ValidationError("rotation part is not orthonormal with det +1")
        if not self.scale > 0:
            raise ValidationError(f"scale must be positive, got {self.scale}")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), 1.0)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * (pts @ self.rotation.T) + self.translation

    def inverse(self) -> "RigidTransform":
        inv_s = 1.0 / self.scale
        inv_r = self.rotation.T
        return RigidTransform(inv_r, -inv_s * (inv_r @ self.translation), inv_s)

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """Return the transform equivalent to applying `inner` first, then self."""
        return RigidTransform(
            self.rotation @ inner.rotation,
            self.scale * (self.rotation @ inner.translation) + self.translation,
            self.scale * inner.scale,
        )


class TriangleMesh:
    """Indexed triangle mesh. Arrays are frozen (read-only) after validation.

    vertices: (n, 3) float64; faces: (m, 3) int64, each row three distinct
    in-range vertex indices spanning a face of area > MIN_FACE_AREA.
    """

    def __init__(self, vertices, faces, drop_degenerate: bool = False):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValidationError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValidationError(f"faces must be (m, 3), got {self.faces.shape}")
        if not np.all(np.isfinite(self.vertices)):
            raise ValidationError("vertices contain non-finite values")
        self._validate_faces(drop_degenerate)
        self.vertices.flags.writeable = False
        self.faces.flags.writeable = False

    def _validate_faces(self, drop_degenerate: bool):
        n = len(self.vertices)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise ValidationError("face index out of range")
        f = self.faces
        repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if repeated.any():
            raise ValidationError(f"{int(repeated.sum())} faces have repeated vertex indices")
        degenerate = self.face_areas() <= MIN_FACE_AREA
        if degenerate.any():
            if not drop_degenerate:
                raise ValidationError(
                    f"{int(degenerate.sum())} faces are degenerate (area <= {MIN_FACE_AREA})"
                )
            self.faces = np.ascontiguousarray(self.faces[~degenerate])

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def face_corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The three (m, 3) corner arrays of every face."""
        v, f = self.vertices, self.faces
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    def face_areas(self) -> np.ndarray:
        a, b, c = self.face_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def face_normals(self) -> np.ndarray:
        a, b, c = self.face_corners()
        n = np.cross(b - a, c - a)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def aabb(self) -> tuple[Vec3, Vec3]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        """Same topology with replaced vertex positions."""
        return TriangleMesh(vertices, self.faces)


@dataclass(frozen=True)
class ClosestHit:
    """Result of a closest-point query against a face set."""

    face_id: int
    point: Vec3
    distance: float
    barycentric: tuple[float, float, float]


def closest_point_on_triangle(q, a, b, c) -> tuple[Vec3, np.ndarray]:
    """Closest point on triangle (a, b, c) to q, with barycentric coordinates.

    Region-based projection (vertex / edge / interior), exact for all query
    positions. Raises on degenerate triangles.
    """
    q, a, b, c = as_vec3(q), as_vec3(a), as_vec3(b), as_vec3(c)
    if 0.5 * np.linalg.norm(np.cross(b - a, c - a)) <= MIN_FACE_AREA:
        raise ValidationError("degenerate triangle")

    ab = b - a
    ac = c - a
    aq = q - a
    d1 = ab @ aq
    d2 = ac @ aq
    if d1 <= 0.0 and d2 <= 0.0:  # vertex region A
        return a.copy(), np.array([1.0, 0.0, 0.0])

    bq = q - b
    d3 = ab @ bq
    d4 = ac @ bq
    if d3 >= 0.0 and d4 <= d3:  # vertex region B
        return b.copy(), np.array([0.0, 1.0, 0.0])

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:  # edge AB
        v = d1 / (d1 - d3)
        return a + v * ab, np.array([1.0 - v, v, 0.0])

    cq = q - c
    d5 = ab @ cq
    d6 = ac @ cq
    if d6 >= 0.0 and d5 <= d6:  # vertex region C
        return c.copy(), np.array([0.0, 0.0, 1.0])

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:  # edge AC
        w = d2 / (d2 - d6)
        return a + w * ac, np.array([1.0 - w, 0.0, w])

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:  # edge BC
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b), np.array([0.0, 1.0 - w, w])

    denom = 1.0 / (va + vb + vc)  # interior
    v = vb * denom
    w = vc * denom
    return a + v * ab + w * ac, np.array([1.0 - v - w, v, w])


def closest_hit_on_triangle(q, tri: Sequence, face_id: int = 0) -> ClosestHit:
    """ClosestHit wrapper around closest_point_on_triangle."""
    a, b, c = tri
    point, bary = closest_point_on_triangle(q, a, b, c)
    dist = float(np.linalg.norm(as_vec3(q) - point))
    return ClosestHit(face_id, point, dist, (float(bary[0]), float(bary[1]), float(bary[2])))


@dataclass(frozen=True)
class LocalFrame:
    """Orthonormal per-face frame: origin at the first face vertex, u along
    the first edge, h along the face normal, v = h x u."""

    origin: Vec3
    axes: Mat3  # columns are (u, v, h)

    def to_local(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return (p - self.origin) @ self.axes

    def from_local(self, uvh) -> np.ndarray:
        uvh = np.asarray(uvh, dtype=np.float64)
        return self.origin + uvh @ self.axes.T


def local_frame(mesh: TriangleMesh, face_id: int) -> LocalFrame:
    """The local frame of one face; raises on out-of-range ids."""
    if not 0 <= face_id < mesh.num_faces:
        raise ValidationError(f"face_id {face_id} out of range")
    origins, axes = face_frames(mesh, np.array([face_id]))
    return LocalFrame(origins[0], axes[0])


def face_frames(mesh: TriangleMesh, face_ids=None) -> tuple[np.ndarray, np.ndarray]:
    """Batched local frames: origins (m, 3) and axes (m, 3, 3), columns (u, v, h)."""
    faces = mesh.faces if face_ids is None else mesh.faces[np.asarray(face_ids)]
    v = mesh.vertices
    a, b, c = v[faces[:, 0]], v[faces[:, 1]], v[faces[:, 2]]
    u = b - a
    u_len = np.linalg.norm(u, axis=1, keepdims=True)
    h = np.cross(b - a, c - a)
    h_len = np.linalg.norm(h, axis=1, keepdims=True)
    if np.any(u_len < 1e-15) or np.any(h_len < 2 * MIN_FACE_AREA):
        raise NumericError("degenerate face encountered while building local frames")
    u = u / u_len
    h = h / h_len
    w = np.cross(h, u)
    return a, np.stack([u, w, h], axis=2)


def to_local(frame: LocalFrame, p) -> np.ndarray:
    return frame.to_local(p)


def from_local(frame: LocalFrame, uvh) -> np.ndarray:
    return frame.from_local(uvh)


def load_obj(path) -> TriangleMesh:
    """Read the ASCII OBJ subset: `v x y z` and `f i j k` (1-based indices).

    Face tokens of the form i/..., i//... are accepted; only the vertex index
    is used. Anything but triangles is rejected.
    """
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts or parts[0].startswith("#"):
                    continue
                tag = parts[0]
                if tag == "v":
                    if len(parts) < 4:
                        raise FormatError(f"{path}:{lineno}: malformed vertex record")
                    vertices.append([float(x) for x in parts[1:4]])
                elif tag == "f":
                    if len(parts) != 4:
                        raise FormatError(f"{path}:{lineno}: only triangular faces are supported")
                    idx = [int(tok.split("/")[0]) for tok in parts[1:4]]
                    if any(i == 0 for i in idx):
                        raise FormatError(f"{path}:{lineno}: OBJ indices are 1-based")
                    faces.append([i - 1 if i > 0 else len(vertices) + i for i in idx])
                # other record types (vn, vt, o, g, s, usemtl...) are ignored
    except OSError as exc:
        raise FormatError(f"cannot read OBJ file {path}: {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"cannot parse OBJ file {path}: {exc}") from exc
    if not vertices:
        raise FormatError(f"{path}: no vertices found")
    return TriangleMesh(np.array(vertices), np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(path, mesh: TriangleMesh) -> None:
    """Write a mesh using the same v/f OBJ subset read by load_obj."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
