"""Dataset alignment: map upstream full-body estimates onto the canonical
template and normalized camera labels.

Per record: extract the neck/head pose from the 69-entry pose vector, pose
the template with it, then solve the closed-form similarity (or rigid)
Procrustes transform that carries the estimate's head, neck, and shoulder
joints onto the posed template's. The same transform moves the estimator's
camera, whose center is then re-projected onto the fixed-radius sphere with
the constant intrinsics, and a uniform square crop is computed by projecting
the template's head-neck-shoulder region through the normalized camera.

The upstream estimate's joints are modeled as the posed template joints under
the record's global rotation (about the origin) and translation; any producer
of records documented this way can be aligned, and the reported residual
plus the wireframe overlay stand in for a manual quality pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .body import BodyPose, FullBodyParams, RiggedTemplate, extract_neck_head_pose, pose_mesh
from .camera import CameraParams, DEFAULT_LOOKAT, camera_from_json, camera_from_spherical
from .errors import NumericError, ValidationError
from .geometry import RigidTransform, as_vec3, axis_angle_to_matrix

CROP_PAD = 1.1  # uniform expansion of the projected region to the final square

ALIGNMENT_JOINTS = ("neck", "head", "left-shoulder", "right-shoulder")


@dataclass(frozen=True)
class AlignmentInput:
    """One record: upstream body estimate, the estimator's camera, image size."""

    body: FullBodyParams
    camera: CameraParams
    image_size: tuple[int, int] = (512, 512)


@dataclass(frozen=True)
class CropRect:
    """Square crop in source pixels; `clamped` marks crops that had to be
    cut back to fit the image."""

    x0: float
    y0: float
    size: float
    clamped: bool = False


@dataclass(frozen=True)
class AlignmentResult:
    camera: CameraParams
    pose: BodyPose
    transform: RigidTransform
    crop: CropRect
    residual: float


def similarity_procrustes(source, dst, with_scale: bool = True) -> RigidTransform:
    """Least-squares similarity transform mapping `source` onto `dst`.

    Closed form (SVD of the cross-covariance with a determinant sign fix);
    minimizes sum |s R x + t - y|^2 over rotation, translation, and
    (optionally) uniform scale. Collinear point sets are rejected.
    """
    src = np.asarray(source, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3 or src.shape[0] < 3:
        raise ValidationError("need matching (n >= 3, 3) point arrays")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    cov = xd.T @ xs / len(src)
    u, d, vt = np.linalg.svd(cov)
    if d[1] <= 1e-12 * max(d[0], 1e-300):
        raise NumericError("joint configuration is (near-)collinear; transform is ambiguous")
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rotation = u @ s @ vt
    if with_scale:
        var_s = (xs * xs).sum() / len(src)
        scale = float((d * np.diag(s)).sum() / var_s)
        if not scale > 0:
            raise NumericError("recovered a non-positive scale")
    else:
        scale = 1.0
    translation = mu_d - scale * rotation @ mu_s
    return RigidTransform(rotation, translation, scale)


def estimated_joints(body: FullBodyParams, template: RiggedTemplate) -> np.ndarray:
    """World-space alignment joints of the upstream estimate.

    The estimate is the template posed with the record's neck/head pose,
    globally rotated about the origin and translated; shape values are
    accepted but ignored (the template keeps the standard shape).
    """
    pose = extract_neck_head_pose(body)
    posed = pose_mesh(template, pose)
    ids = [template.joint_index(n) for n in ALIGNMENT_JOINTS]
    joints = posed.joints[ids]
    r = axis_angle_to_matrix(body.rot)
    return joints @ r.T + body.trans


def solve_alignment(
    inp: AlignmentInput,
    template: RiggedTemplate,
    with_scale: bool = True,
    lookat=DEFAULT_LOOKAT,
) -> AlignmentResult:
    """Align one record; see the module docstring for the full procedure."""
    pose = extract_neck_head_pose(inp.body)
    posed = pose_mesh(template, pose)
    ids = [template.joint_index(n) for n in ALIGNMENT_JOINTS]
    target = posed.joints[ids]
    source = estimated_joints(inp.body, template)

    transform = similarity_procrustes(source, target, with_scale)
    residual = float(np.sqrt(np.mean(np.sum((transform.apply(source) - target) ** 2, axis=1))))

    center = transform.apply(inp.camera.center)
    v = center - as_vec3(lookat)
    radius = np.linalg.norm(v)
    if radius < 1e-9:
        raise NumericError("transformed camera center coincides with the look-at point")
    nu = float(np.arccos(np.clip(v[1] / radius, -1.0, 1.0)))
    mu = float(np.arctan2(v[2], -v[0]))
    camera = camera_from_spherical(mu, nu, lookat)

    crop = compute_crop(camera, inp.image_size, portrait_region(template))
    return AlignmentResult(camera, pose, transform, crop, residual)


def portrait_region(template: RiggedTemplate, pad: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Fixed head-neck-shoulder bounding box of the template, symmetric in x."""
    lo, hi = template.mesh.aabb()
    half_x = max(abs(lo[0]), abs(hi[0]))
    lo = np.array([-half_x, lo[1], lo[2]]) - pad
    hi = np.array([half_x, hi[1], hi[2]]) + pad
    return lo, hi


def compute_crop(camera: CameraParams, image_size, region) -> CropRect:
    """Uniform square crop: project the region's corners, take their bounding
    square (padded by CROP_PAD), and clamp it into the image if needed."""
    w, h = int(image_size[0]), int(image_size[1])
    if w < 1 or h < 1:
        raise ValidationError("image size must be positive")
    lo, hi = (as_vec3(region[0]), as_vec3(region[1]))
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])
                        for z in (lo[2], hi[2])])
    cam_pts = corners @ camera.extrinsic[:3, :3].T + camera.extrinsic[:3, 3]
    if np.any(cam_pts[:, 2] <= 1e-9):
        raise NumericError("crop region extends behind the camera")
    proj = cam_pts[:, :2] / cam_pts[:, 2:3]
    fx, fy = camera.intrinsic[0, 0], camera.intrinsic[1, 1]
    cx, cy = camera.intrinsic[0, 2], camera.intrinsic[1, 2]
    px = (proj[:, 0] * fx + cx) * w
    py = (proj[:, 1] * fy + cy) * h

    center = np.array([(px.min() + px.max()) / 2, (py.min() + py.max()) / 2])
    side = CROP_PAD * max(px.max() - px.min(), py.max() - py.min())

    clamped = False
    if side > min(w, h):
        side = float(min(w, h))
        clamped = True
    x0, y0 = center[0] - side / 2, center[1] - side / 2
    if x0 < 0 or y0 < 0 or x0 + side > w or y0 + side > h:
        clamped = True
        x0 = min(max(x0, 0.0), w - side)
        y0 = min(max(y0, 0.0), h - side)
    return CropRect(float(x0), float(y0), float(side), clamped)


def render_overlay(result: AlignmentResult, template: RiggedTemplate,
                   image: Optional[np.ndarray] = None,
                   image_size: Optional[tuple[int, int]] = None) -> np.ndarray:
    """Wireframe of the posed template drawn over the source image (or black).

    A visual QA aid: well-aligned records show the wireframe hugging the
    subject's head and shoulders. Returns an (h, w, 3) float image in [0, 1].
    """
    from PIL import Image, ImageDraw

    if image is not None:
        base = np.asarray(image, dtype=np.float64)
        if base.ndim != 3 or base.shape[2] != 3:
            raise ValidationError("overlay base image must be (h, w, 3)")
        h, w = base.shape[:2]
    else:
        if image_size is None:
            raise ValidationError("need an image or an image_size")
        w, h = int(image_size[0]), int(image_size[1])
        base = np.zeros((h, w, 3))

    posed = pose_mesh(template, result.pose)
    verts = posed.mesh.vertices
    cam_pts = verts @ result.camera.extrinsic[:3, :3].T + result.camera.extrinsic[:3, 3]
    z = np.maximum(cam_pts[:, 2], 1e-9)
    fx, fy = result.camera.intrinsic[0, 0], result.camera.intrinsic[1, 1]
    cx, cy = result.camera.intrinsic[0, 2], result.camera.intrinsic[1, 2]
    px = (cam_pts[:, 0] / z * fx + cx) * w
    py = (cam_pts[:, 1] / z * fy + cy) * h

    faces = posed.mesh.faces
    edges = np.unique(np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]],
                                              faces[:, [0, 2]]]), axis=1), axis=0)
    canvas = Image.fromarray((np.clip(base, 0.0, 1.0) * 255).astype(np.uint8))
    draw = ImageDraw.Draw(canvas)
    for a, b in edges:
        draw.line([(px[a], py[a]), (px[b], py[b])], fill=(0, 255, 0), width=1)
    return np.asarray(canvas, dtype=np.float64) / 255.0


def record_to_input(record: dict, lookat=DEFAULT_LOOKAT) -> AlignmentInput:
    """Parse one JSON-lines record into an AlignmentInput."""
    body = FullBodyParams(
        np.asarray(record["trans"], dtype=np.float64),
        np.asarray(record["rot"], dtype=np.float64),
        np.asarray(record["beta"], dtype=np.float64),
        np.asarray(record["theta"], dtype=np.float64),
    )
    camera = camera_from_json(record["camera"], lookat)
    size = tuple(record.get("image_size", (512, 512)))
    return AlignmentInput(body, camera, size)


def result_to_record(result: AlignmentResult) -> dict:
    """Serialize a result as the output label layout: camera 25-vector plus
    the 6-entry pose, crop, and residual."""
    return {
        "camera": result.camera.as_vector().tolist(),
        "pose": result.pose.as_vector().tolist(),
        "crop": {
            "x0": result.crop.x0,
            "y0": result.crop.y0,
            "size": result.crop.size,
            "clamped": result.crop.clamped,
        },
        "residual": result.residual,
    }


def read_records(path):
    """Yield (line number, parsed JSON) for each non-empty JSONL line."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield lineno, json.loads(line)
