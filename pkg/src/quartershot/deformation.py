"""Observation-to-canonical deformation fields guided by the posed template.

Two modes are provided:

* ``translation``: the displacement of the nearest posed-surface point to its
  canonical position (by barycentric transfer), attenuated by
  exp(-d^2) where d is the distance from the sample to that nearest point.
  The displacement ignores the sample's orientation relative to the surface,
  which misplaces features under large poses.
* ``local_frame``: express the sample in the orthonormal frame of its nearest
  posed face and re-emit those (u, v, h) coordinates in the matching
  canonical face's frame, so the sample keeps its positional relationship to
  the surface. Samples farther than ``alpha`` from the nearest face are left
  untouched (the field has compact support).

Both fields are exact identities at the neutral pose. Contexts are immutable
and all warps are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .body import BodyPose, PosedMesh, RiggedTemplate, pose_mesh
from .bvh import FaceBVH, build_bvh
from .errors import ValidationError
from .geometry import face_frames

MODE_TRANSLATION = "translation"
MODE_LOCAL_FRAME = "local_frame"
DEFAULT_ALPHA = 0.25

_MODES = (MODE_TRANSLATION, MODE_LOCAL_FRAME)


@dataclass(frozen=True)
class DeformationConfig:
    """Field settings: support radius alpha (scene units), warp mode, and an
    optional axis-aligned face-culling box."""

    alpha: float = DEFAULT_ALPHA
    mode: str = MODE_LOCAL_FRAME
    cull_bbox: Optional[tuple] = None  # ((xmin, ymin, zmin), (xmax, ymax, zmax))

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")
        if self.mode not in _MODES:
            raise ValidationError(f"mode must be one of {_MODES}, got '{self.mode}'")
        if self.cull_bbox is not None:
            lo, hi = (np.asarray(b, dtype=np.float64) for b in self.cull_bbox)
            if lo.shape != (3,) or hi.shape != (3,) or np.any(lo >= hi):
                raise ValidationError("cull_bbox must be a valid (min, max) corner pair")


class DeformationContext:
    """Frozen pairing of a posed mesh with its canonical template.

    The BVH covers only retained faces (all of them without a cull box);
    reported face ids always index the full face list, so posed and canonical
    frames stay paired by face id.
    """

    def __init__(self, template: RiggedTemplate, pose: BodyPose, config: DeformationConfig):
        self.template = template
        self.pose = pose
        self.config = config
        self.posed: PosedMesh = pose_mesh(template, pose)

        face_ids = None
        if config.cull_bbox is not None:
            lo, hi = (np.asarray(b, dtype=np.float64) for b in config.cull_bbox)
            a, b, c = self.posed.mesh.face_corners()
            fmin = np.minimum(np.minimum(a, b), c)
            fmax = np.maximum(np.maximum(a, b), c)
            keep = np.all(fmax >= lo, axis=1) & np.all(fmin <= hi, axis=1)
            if not keep.any():
                raise ValidationError("cull_bbox excludes every face")
            face_ids = np.flatnonzero(keep)
        self.face_ids = face_ids
        self.bvh: FaceBVH = build_bvh(self.posed.mesh, face_ids)

        # per-face frames of both meshes, indexed by original face id
        self._posed_origins, self._posed_axes = face_frames(self.posed.mesh)
        self._canon_origins, self._canon_axes = face_frames(template.mesh)

    @property
    def num_retained_faces(self) -> int:
        return self.bvh.num_faces

    def closest(self, points):
        """(face_ids, surface points, distances, barycentrics) for a batch."""
        return self.bvh.query(points)


def build_context(
    template: RiggedTemplate,
    pose: BodyPose,
    config: DeformationConfig = DeformationConfig(),
) -> DeformationContext:
    return DeformationContext(template, pose, config)


def deform_translation(ctx: DeformationContext, points) -> np.ndarray:
    """Displacement field of the translation mode for a batch of points."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if ctx.pose.is_zero():
        return np.zeros_like(pts)
    faces, surface, dist, bary = ctx.closest(pts)
    canon = ctx.template.mesh.vertices[ctx.template.mesh.faces[faces]]  # (n, 3, 3)
    surface_canon = np.einsum("nc,ncd->nd", bary, canon)
    return (surface_canon - surface) * np.exp(-dist * dist)[:, None]


def deform_local_frame(ctx: DeformationContext, points) -> np.ndarray:
    """Displacement field of the local-frame mode for a batch of points.

    Exactly zero for points at distance >= alpha from the nearest face.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    delta = np.zeros_like(pts)
    if ctx.pose.is_zero():
        return delta
    faces, _, dist, _ = ctx.closest(pts)
    near = dist < ctx.config.alpha
    if not near.any():
        return delta
    f = faces[near]
    local = np.einsum("ni,nij->nj", pts[near] - ctx._posed_origins[f], ctx._posed_axes[f])
    restored = ctx._canon_origins[f] + np.einsum("nij,nj->ni", ctx._canon_axes[f], local)
    delta[near] = restored - pts[near]
    return delta


def deformation_delta(ctx: DeformationContext, points) -> np.ndarray:
    """Mode-dispatched displacement for a batch of points."""
    if ctx.config.mode == MODE_TRANSLATION:
        return deform_translation(ctx, points)
    return deform_local_frame(ctx, points)


def warp_points(ctx: DeformationContext, points) -> np.ndarray:
    """Map observation-space points to canonical space: x' = x + delta(x)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return pts + deformation_delta(ctx, pts)
