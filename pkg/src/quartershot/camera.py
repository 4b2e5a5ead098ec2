"""Camera model: poses on a fixed-radius sphere around a look-at point.

Every camera sits at distance 2.7 from the look-at target, aims at it with a
fixed world-up, and shares one constant intrinsic matrix (focal length in
units of image size, principal point centered). Spherical coordinates
(mu, nu) parameterize the sphere: mu is yaw over the full 360-degree range
with mu = pi/2 the frontal view (positive mu in front of the subject,
negative behind), nu is the polar angle from world-up with nu = pi/2 at eye
level. The subject faces +z, so their right side is -x: cameras with mu in
[-pi/2, pi/2] see the subject from their right, and the horizontal mirror
(across the sagittal x = 0 plane) maps mu to pi - mu.

Extrinsics are 4x4 world-to-camera matrices, flattened row-major when
serialized; a serialized camera is the 25-vector extrinsic(16) + intrinsic(9).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import as_vec3, cross3, is_rotation

SPHERE_RADIUS = 2.7
FOCAL_LENGTH = 4.26  # in units of image size
PRINCIPAL_POINT = 0.5
DEFAULT_LOOKAT = np.array([0.0, 0.06, 0.0])
WORLD_UP = np.array([0.0, 1.0, 0.0])
DEFAULT_LOOKAT.flags.writeable = False
WORLD_UP.flags.writeable = False

INTRINSIC = np.array([
    [FOCAL_LENGTH, 0.0, PRINCIPAL_POINT],
    [0.0, FOCAL_LENGTH, PRINCIPAL_POINT],
    [0.0, 0.0, 1.0],
])
INTRINSIC.flags.writeable = False

_POLE_EPS = 1e-9
_ANGLE_EPS = 1e-12


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    out = (a + np.pi) % (2.0 * np.pi) - np.pi
    return np.pi if out == -np.pi else float(out)


@dataclass(frozen=True)
class SphericalPose:
    """Position on the camera sphere: yaw mu, polar angle nu, fixed radius."""

    mu: float
    nu: float
    radius: float = SPHERE_RADIUS

    def __post_init__(self):
        if not (0.0 < self.nu < np.pi):
            raise ValidationError(f"nu must lie strictly inside (0, pi), got {self.nu}")
        if abs(self.radius - SPHERE_RADIUS) > 1e-9:
            raise ValidationError(f"radius is fixed at {SPHERE_RADIUS}, got {self.radius}")


@dataclass(frozen=True)
class Ray:
    """Ray origin and unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", as_vec3(self.origin))
        object.__setattr__(self, "direction", as_vec3(self.direction))
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValidationError("ray direction must be unit length")

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class CameraParams:
    """World-to-camera extrinsic (4, 4) plus the fixed intrinsic (3, 3)."""

    extrinsic: np.ndarray
    intrinsic: np.ndarray

    def __post_init__(self):
        ext = np.asarray(self.extrinsic, dtype=np.float64)
        intr = np.asarray(self.intrinsic, dtype=np.float64)
        if ext.shape != (4, 4):
            raise ValidationError(f"extrinsic must be 4x4, got {ext.shape}")
        if not np.array_equal(ext[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValidationError("extrinsic last row must be [0, 0, 0, 1]")
        if not is_rotation(ext[:3, :3]):
            raise ValidationError("extrinsic rotation part is not orthonormal")
        if not np.array_equal(intr, INTRINSIC):
            raise ValidationError("intrinsic must equal the fixed constant matrix")
        object.__setattr__(self, "extrinsic", ext)
        object.__setattr__(self, "intrinsic", intr)
        ext.flags.writeable = False

    @property
    def rotation_c2w(self) -> np.ndarray:
        return self.extrinsic[:3, :3].T

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.extrinsic[:3, :3].T @ self.extrinsic[:3, 3]

    def as_vector(self) -> np.ndarray:
        """Flattened 25-vector: row-major extrinsic then row-major intrinsic."""
        return np.concatenate([self.extrinsic.ravel(), self.intrinsic.ravel()])

    @classmethod
    def from_vector(cls, vec) -> "CameraParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (25,):
            raise ValidationError(f"camera vector must have 25 entries, got {vec.shape}")
        return cls(vec[:16].reshape(4, 4), vec[16:].reshape(3, 3))


def camera_from_spherical(mu: float, nu: float, lookat=DEFAULT_LOOKAT) -> CameraParams:
    """Camera at spherical (mu, nu) on the fixed sphere, aimed at lookat.

    The poles (nu = 0 or pi) are rejected: the up-vector is degenerate there.
    """
    if not (_POLE_EPS < nu < np.pi - _POLE_EPS):
        raise ValidationError(f"nu too close to a pole: {nu}")
    lookat = as_vec3(lookat)
    sin_nu = np.sin(nu)
    offset = SPHERE_RADIUS * np.array([-sin_nu * np.cos(mu), np.cos(nu), sin_nu * np.sin(mu)])
    center = lookat + offset

    forward = -offset / SPHERE_RADIUS
    right = cross3(forward, WORLD_UP)
    right /= np.linalg.norm(right)
    down = cross3(forward, right)

    ext = np.eye(4)  # world-to-camera rows: right, down, forward
    ext[0, :3] = right
    ext[1, :3] = down
    ext[2, :3] = forward
    ext[:3, 3] = -(ext[:3, :3] @ center)
    return CameraParams(ext, INTRINSIC.copy())


def spherical_from_camera(cam: CameraParams, lookat=DEFAULT_LOOKAT) -> SphericalPose:
    """Invert camera_from_spherical; rejects centers off the sphere by > 1e-3."""
    v = cam.center - as_vec3(lookat)
    radius = np.linalg.norm(v)
    if abs(radius - SPHERE_RADIUS) > 1e-3:
        raise ValidationError(
            f"camera center is {radius:.6f} from the look-at point, expected {SPHERE_RADIUS}"
        )
    nu = float(np.arccos(np.clip(v[1] / radius, -1.0, 1.0)))
    mu = float(np.arctan2(v[2], -v[0]))
    return SphericalPose(mu, nu)


def needs_flip(cam: CameraParams, lookat=DEFAULT_LOOKAT) -> bool:
    """True when the camera sees the subject's right side: mu in [-pi/2, pi/2]."""
    mu = spherical_from_camera(cam, lookat).mu
    return -np.pi / 2 - _ANGLE_EPS <= mu <= np.pi / 2 + _ANGLE_EPS


def flip_camera(cam: CameraParams, lookat=DEFAULT_LOOKAT) -> CameraParams:
    """Mirror the camera across the subject's sagittal plane: mu -> pi - mu."""
    pose = spherical_from_camera(cam, lookat)
    return camera_from_spherical(wrap_angle(np.pi - pose.mu), pose.nu, lookat)


def generate_rays(cam: CameraParams, width: int, height: int):
    """One ray per pixel center: origins and unit directions, both (h, w, 3).

    Pixel (i, j) means column i, row j, row 0 at the top of the image.
    """
    if width < 1 or height < 1:
        raise ValidationError("image dimensions must be positive")
    u = (np.arange(width) + 0.5) / width
    v = (np.arange(height) + 0.5) / height
    fx, fy = cam.intrinsic[0, 0], cam.intrinsic[1, 1]
    cx, cy = cam.intrinsic[0, 2], cam.intrinsic[1, 2]
    dirs_cam = np.empty((height, width, 3))
    dirs_cam[..., 0] = ((u - cx) / fx)[None, :]
    dirs_cam[..., 1] = ((v - cy) / fy)[:, None]
    dirs_cam[..., 2] = 1.0
    dirs = np.einsum("ab,hwb->hwa", cam.rotation_c2w, dirs_cam)
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    origins = np.broadcast_to(cam.center, dirs.shape).copy()
    return origins, dirs


def pixel_ray(cam: CameraParams, i: int, j: int, width: int, height: int) -> Ray:
    """The single ray through pixel center (column i, row j)."""
    origins, dirs = generate_rays(cam, width, height)
    return Ray(origins[j, i], dirs[j, i])


def camera_to_json(cam: CameraParams) -> dict:
    return {
        "extrinsic": cam.extrinsic.ravel().tolist(),
        "intrinsic": cam.intrinsic.ravel().tolist(),
    }


def camera_from_json(data: dict, lookat=DEFAULT_LOOKAT) -> CameraParams:
    """Accept either {extrinsic: [16], intrinsic: [9]} or {mu: ..., nu: ...}."""
    if "mu" in data and "nu" in data:
        return camera_from_spherical(float(data["mu"]), float(data["nu"]), lookat)
    if "extrinsic" not in data:
        raise ValidationError("camera JSON needs either extrinsic/intrinsic or mu/nu")
    ext = np.asarray(data["extrinsic"], dtype=np.float64).reshape(4, 4)
    intr = (
        np.asarray(data["intrinsic"], dtype=np.float64).reshape(3, 3)
        if "intrinsic" in data
        else INTRINSIC.copy()
    )
    return CameraParams(ext, intr)


def load_camera(path, lookat=DEFAULT_LOOKAT) -> CameraParams:
    with open(path, "r", encoding="utf-8") as fh:
        return camera_from_json(json.load(fh), lookat)


def save_camera(path, cam: CameraParams) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(camera_to_json(cam), fh)
