"""Rigged body template and neck/head posing.

The template is a triangle mesh with a named joint hierarchy and per-vertex
skinning weights. Posing rotates only the neck and head joints (axis-angle,
parent-to-child, each rotation pivoting about its joint position); every
other joint keeps an identity transform, so shoulders stay put. The neck
joint sits at the world origin and is therefore a fixed point of posing.

Full-body parameter records (translation, global rotation, 10 shape values,
69 pose values) are accepted for interoperability with upstream estimators;
only the neck and head entries of the 69-vector are ever used.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import TriangleMesh, as_vec3, axis_angle_to_matrix, load_obj, save_obj

REQUIRED_JOINTS = ("pelvis-root", "neck", "head", "left-shoulder", "right-shoulder")

# Joint index convention of 69-entry pose vectors: 23 body joints, 3 values
# each; joint j (1-based) occupies entries [3*(j-1), 3*j). Neck is joint 12,
# head is joint 15.
THETA_NUM_JOINTS = 23
NECK_THETA_JOINT = 12
HEAD_THETA_JOINT = 15


def _theta_slice(joint: int) -> slice:
    return slice(3 * (joint - 1), 3 * joint)


@dataclass(frozen=True)
class BodyPose:
    """Axis-angle neck and head rotations, radians."""

    neck: np.ndarray
    head: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "neck", as_vec3(self.neck))
        object.__setattr__(self, "head", as_vec3(self.head))
        if not (np.all(np.isfinite(self.neck)) and np.all(np.isfinite(self.head))):
            raise ValidationError("pose components must be finite")
        if np.abs(self.as_vector()).max() > np.pi:
            warnings.warn("pose component magnitude exceeds pi radians", stacklevel=2)

    @classmethod
    def zero(cls) -> "BodyPose":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, vec) -> "BodyPose":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (6,):
            raise ValidationError(f"pose vector must have 6 entries, got {vec.shape}")
        return cls(vec[:3], vec[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.neck, self.head])

    def is_zero(self) -> bool:
        return not (self.neck.any() or self.head.any())


def flip_pose(pose: BodyPose) -> BodyPose:
    """Mirror a pose across the sagittal (x = 0) plane.

    Each axis-angle (ax, ay, az) maps to (ax, -ay, -az); applying twice is
    the identity, and pure nod rotations (x only) are fixed points.
    """
    flip = np.array([1.0, -1.0, -1.0])
    return BodyPose(pose.neck * flip, pose.head * flip)


@dataclass(frozen=True)
class FullBodyParams:
    """Upstream body-estimate record: global motion plus shape/pose vectors."""

    trans: np.ndarray
    rot: np.ndarray
    betas: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "trans", as_vec3(self.trans))
        object.__setattr__(self, "rot", as_vec3(self.rot))
        object.__setattr__(self, "betas", np.asarray(self.betas, dtype=np.float64))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64))
        if self.betas.shape != (10,):
            raise ValidationError(f"betas must have 10 entries, got {self.betas.shape}")
        if self.theta.shape != (3 * THETA_NUM_JOINTS,):
            raise ValidationError(
                f"theta must have {3 * THETA_NUM_JOINTS} entries, got {self.theta.shape}"
            )


def extract_neck_head_pose(params: FullBodyParams) -> BodyPose:
    """Select the neck and head axis-angle triples from a 69-entry pose vector."""
    return BodyPose(
        params.theta[_theta_slice(NECK_THETA_JOINT)],
        params.theta[_theta_slice(HEAD_THETA_JOINT)],
    )


def embed_neck_head_pose(pose: BodyPose) -> np.ndarray:
    """Place a neck/head pose into an otherwise-zero 69-entry pose vector."""
    theta = np.zeros(3 * THETA_NUM_JOINTS)
    theta[_theta_slice(NECK_THETA_JOINT)] = pose.neck
    theta[_theta_slice(HEAD_THETA_JOINT)] = pose.head
    return theta


class RiggedTemplate:
    """Canonical rigged mesh: geometry, joints, and skinning weights.

    Invariants enforced at construction: all required joints present, the
    neck joint at the origin (within 1e-6), an acyclic parent hierarchy, and
    nonnegative per-vertex weights summing to 1 (within 1e-6).
    """

    def __init__(self, mesh: TriangleMesh, joint_names, joint_positions, joint_parents, weights):
        self.mesh = mesh
        self.joint_names = tuple(joint_names)
        self.joint_positions = np.asarray(joint_positions, dtype=np.float64)
        self.joint_parents = np.asarray(joint_parents, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self._validate()
        self.joint_positions.flags.writeable = False
        self.joint_parents.flags.writeable = False
        self.weights.flags.writeable = False

    def _validate(self):
        n_joints = len(self.joint_names)
        if self.joint_positions.shape != (n_joints, 3):
            raise ValidationError("joint_positions shape does not match joint count")
        if self.joint_parents.shape != (n_joints,):
            raise ValidationError("joint_parents shape does not match joint count")
        for name in REQUIRED_JOINTS:
            if name not in self.joint_names:
                raise ValidationError(f"rig is missing required joint '{name}'")
        if np.linalg.norm(self.joint_positions[self.joint_index("neck")]) > 1e-6:
            raise ValidationError("neck joint must sit at the origin (within 1e-6)")
        # parents-before-children ordering implies an acyclic hierarchy
        for j in range(n_joints):
            if self.joint_parents[j] >= j:
                raise ValidationError("joints must be ordered parents-before-children")
        if self.weights.shape != (self.mesh.num_vertices, n_joints):
            raise ValidationError("weights shape must be (num_vertices, num_joints)")
        if self.weights.min() < 0:
            raise ValidationError("skinning weights must be nonnegative")
        sums = self.weights.sum(axis=1)
        bad = np.abs(sums - 1.0) > 1e-6
        if bad.any():
            raise ValidationError(
                f"skinning weights must sum to 1 per vertex; {int(bad.sum())} vertices violate"
            )

    def joint_index(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise ValidationError(f"unknown joint '{name}'") from None

    def required_joint_positions(self) -> np.ndarray:
        """Positions of (neck, head, left-shoulder, right-shoulder), in that order."""
        ids = [self.joint_index(n) for n in ("neck", "head", "left-shoulder", "right-shoulder")]
        return self.joint_positions[ids]


@dataclass(frozen=True)
class PosedMesh:
    """A posed copy of the template: same topology, transformed vertices."""

    mesh: TriangleMesh
    pose: BodyPose
    template: RiggedTemplate
    joints: np.ndarray  # posed joint positions, (J, 3)


def joint_world_transforms(template: RiggedTemplate, pose: BodyPose):
    """Per-joint world affines (R (J,3,3), t (J,3)) for a neck/head pose.

    Each joint's local rotation pivots about its rest position; world
    transforms compose parent-to-child. Only neck and head rotations can be
    non-identity.
    """
    n = len(template.joint_names)
    local_rot = [np.eye(3)] * n
    local_rot[template.joint_index("neck")] = axis_angle_to_matrix(pose.neck)
    local_rot[template.joint_index("head")] = axis_angle_to_matrix(pose.head)

    world_r = np.empty((n, 3, 3))
    world_t = np.empty((n, 3))
    # joints are stored parents-before-children; verify while composing
    for j in range(n):
        g = template.joint_positions[j]
        r_local = local_rot[j]
        t_local = g - r_local @ g  # rotate about the joint position
        p = int(template.joint_parents[j])
        if p < 0:
            world_r[j] = r_local
            world_t[j] = t_local
        else:
            world_r[j] = world_r[p] @ r_local
            world_t[j] = world_r[p] @ t_local + world_t[p]
    return world_r, world_t


def pose_mesh(template: RiggedTemplate, pose: BodyPose) -> PosedMesh:
    """Linear-blend-skin the template into a posed mesh.

    The zero pose returns vertices bitwise equal to the template's.
    """
    if pose.is_zero():
        return PosedMesh(template.mesh, pose, template, template.joint_positions.copy())
    world_r, world_t = joint_world_transforms(template, pose)
    v = template.mesh.vertices
    w = template.weights
    posed = np.einsum("vj,jab,vb->va", w, world_r, v, optimize=True) + w @ world_t
    joints = np.empty_like(template.joint_positions)
    for j in range(len(joints)):
        p = int(template.joint_parents[j])
        g = template.joint_positions[j]
        joints[j] = g if p < 0 else world_r[p] @ g + world_t[p]
    return PosedMesh(template.mesh.with_vertices(posed), pose, template, joints)


def _smoothstep(x, lo, hi):
    t = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def generate_standin_template(seed: int = 0, detail_level: int = 2) -> RiggedTemplate:
    """Procedural watertight head/neck/shoulder bust with a five-joint rig.

    Deterministic for a fixed seed; detail_level scales the surface-extraction
    resolution (each level roughly 2.5x the face count of the previous).
    """
    from skimage import measure

    if detail_level < 1:
        raise ValidationError("detail_level must be >= 1")
    rng = np.random.default_rng(seed)
    jit = rng.uniform(-0.05, 0.05, size=4)

    head_c = np.array([0.0, 0.17, 0.01 * (1 + jit[3])])
    head_r = 0.105 * (1 + jit[0])
    neck_a, neck_b = np.array([0.0, -0.03, 0.0]), np.array([0.0, 0.10, 0.0])
    neck_r = 0.050 * (1 + jit[1])
    torso_c = np.array([0.0, -0.18, 0.0])
    torso_ax = np.array([0.27, 0.115, 0.115]) * (1 + 0.4 * jit[2])

    def sdf(p):
        d_head = np.linalg.norm(p - head_c, axis=-1) - head_r
        seg = neck_b - neck_a
        t = np.clip(((p - neck_a) @ seg) / (seg @ seg), 0.0, 1.0)
        d_neck = np.linalg.norm(p - (neck_a + t[..., None] * seg), axis=-1) - neck_r
        d_torso = (np.linalg.norm((p - torso_c) / torso_ax, axis=-1) - 1.0) * torso_ax.min()
        k = 0.02  # smooth-union blending radius
        stack = np.stack([d_head, d_neck, d_torso], axis=-1)
        return -k * np.log(np.exp(-stack / k).sum(axis=-1))

    res = 28 * detail_level + 20
    lo = np.array([-0.42, -0.38, -0.30])
    hi = np.array([0.42, 0.34, 0.30])
    axes = [np.linspace(lo[i], hi[i], res) for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    volume = sdf(grid)
    spacing = tuple((hi - lo) / (res - 1))
    verts, faces, _, _ = measure.marching_cubes(volume, level=0.0, spacing=spacing)
    verts = verts + lo
    mesh = TriangleMesh(verts, faces.astype(np.int64), drop_degenerate=True)

    y = mesh.vertices[:, 1]
    w_head = _smoothstep(y, 0.055, 0.115)
    w_upper = _smoothstep(y, -0.115, -0.045)  # everything above the shoulder line
    weights = np.zeros((mesh.num_vertices, 5))
    weights[:, 0] = 1.0 - w_upper
    weights[:, 1] = w_upper - w_head
    weights[:, 2] = w_head
    weights /= weights.sum(axis=1, keepdims=True)

    return RiggedTemplate(
        mesh,
        REQUIRED_JOINTS,
        np.array([
            [0.0, -0.30, 0.0],   # pelvis-root
            [0.0, 0.0, 0.0],     # neck
            [0.0, 0.09, 0.0],    # head
            [0.19, -0.10, 0.0],   # left-shoulder (subject faces +z, so left is +x)
            [-0.19, -0.10, 0.0],  # right-shoulder
        ]),
        np.array([-1, 0, 1, 0, 0]),
        weights,
    )


def load_template(obj_path, rig_path=None) -> RiggedTemplate:
    """Load a template mesh plus its rig sidecar JSON.

    The sidecar defaults to `<mesh stem>.rig.json` beside the OBJ. The whole
    rig is translated so the neck joint lands exactly at the origin.
    """
    obj_path = Path(obj_path)
    rig_path = Path(rig_path) if rig_path else obj_path.with_suffix(".rig.json")
    mesh = load_obj(obj_path)
    with open(rig_path, "r", encoding="utf-8") as fh:
        rig = json.load(fh)

    joints = rig["joints"]
    names = [j["name"] for j in joints]
    positions = np.array([j["position"] for j in joints], dtype=np.float64)
    parents = np.array([j["parent"] for j in joints], dtype=np.int64)
    weights = np.zeros((mesh.num_vertices, len(joints)))
    for vertex, joint, value in rig["weights"]:
        weights[int(vertex), int(joint)] += float(value)

    if "neck" not in names:
        raise ValidationError("rig is missing required joint 'neck'")
    offset = positions[names.index("neck")]
    positions = positions - offset
    mesh = mesh.with_vertices(mesh.vertices - offset)
    return RiggedTemplate(mesh, names, positions, parents, weights)


def save_template(obj_path, template: RiggedTemplate, rig_path=None) -> None:
    """Write the OBJ + rig sidecar pair read back by load_template."""
    obj_path = Path(obj_path)
    rig_path = Path(rig_path) if rig_path else obj_path.with_suffix(".rig.json")
    save_obj(obj_path, template.mesh)
    vids, jids = np.nonzero(template.weights)
    rig = {
        "joints": [
            {
                "name": template.joint_names[j],
                "position": template.joint_positions[j].tolist(),
                "parent": int(template.joint_parents[j]),
            }
            for j in range(len(template.joint_names))
        ],
        "weights": [
            [int(v), int(j), float(template.weights[v, j])] for v, j in zip(vids, jids)
        ],
    }
    with open(rig_path, "w", encoding="utf-8") as fh:
        json.dump(rig, fh)


def load_pose(path) -> BodyPose:
    """Read a pose JSON file: {"p_n": [3 radians], "p_h": [3 radians]}."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return BodyPose(np.asarray(data["p_n"], dtype=np.float64),
                    np.asarray(data["p_h"], dtype=np.float64))


def save_pose(path, pose: BodyPose) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"p_n": pose.neck.tolist(), "p_h": pose.head.tolist()}, fh)
