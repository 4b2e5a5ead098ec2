import json

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from quartershot.body import (
    BodyPose,
    FullBodyParams,
    RiggedTemplate,
    embed_neck_head_pose,
    extract_neck_head_pose,
    flip_pose,
    generate_standin_template,
    load_pose,
    load_template,
    pose_mesh,
    save_pose,
    save_template,
)
from quartershot.errors import ValidationError


def lbs_oracle(template, pose):
    """Independent skinning reference: scipy rotations, explicit 4x4 affine
    chain, plain per-vertex loop."""
    n = len(template.joint_names)
    locals_ = [np.eye(4) for _ in range(n)]
    for name, aa in (("neck", pose.neck), ("head", pose.head)):
        j = template.joint_index(name)
        g = template.joint_positions[j]
        m = np.eye(4)
        m[:3, :3] = Rotation.from_rotvec(aa).as_matrix()
        m[:3, 3] = g - m[:3, :3] @ g
        locals_[j] = m
    world = [None] * n
    for j in range(n):
        p = template.joint_parents[j]
        world[j] = locals_[j] if p < 0 else world[p] @ locals_[j]
    out = np.empty_like(template.mesh.vertices)
    for vid, v in enumerate(template.mesh.vertices):
        acc = np.zeros(3)
        for j in range(n):
            w = template.weights[vid, j]
            if w:
                acc += w * (world[j][:3, :3] @ v + world[j][:3, 3])
        out[vid] = acc
    return out


def mirror_x(template):
    """Template with vertices and joints mirrored across x = 0 (same
    topology and weights)."""
    flip = np.array([-1.0, 1.0, 1.0])
    return RiggedTemplate(
        template.mesh.with_vertices(template.mesh.vertices * flip),
        template.joint_names,
        template.joint_positions * flip,
        template.joint_parents,
        template.weights,
    )


class TestPoseMesh:
    def test_zero_pose_is_bitwise_identity(self, template):
        posed = pose_mesh(template, BodyPose.zero())
        np.testing.assert_array_equal(posed.mesh.vertices, template.mesh.vertices)
        np.testing.assert_array_equal(posed.mesh.faces, template.mesh.faces)

    def test_matches_independent_lbs_oracle(self, template, rng):
        pose = BodyPose(rng.uniform(-0.8, 0.8, 3), rng.uniform(-0.8, 0.8, 3))
        posed = pose_mesh(template, pose)
        np.testing.assert_allclose(posed.mesh.vertices, lbs_oracle(template, pose), atol=1e-9)

    def test_quarter_turn_moves_head_not_shoulders(self, template):
        pose = BodyPose(np.array([0.0, np.pi / 2, 0.0]), np.zeros(3))
        posed = pose_mesh(template, pose)
        np.testing.assert_allclose(posed.mesh.vertices, lbs_oracle(template, pose), atol=1e-9)
        neck_j = template.joint_index("neck")
        unmoved = template.weights[:, neck_j] == 0.0
        head_j = template.joint_index("head")
        unmoved &= template.weights[:, head_j] == 0.0
        assert unmoved.sum() > 100  # shoulder band exists
        np.testing.assert_array_equal(posed.mesh.vertices[unmoved],
                                      template.mesh.vertices[unmoved])

    def test_head_only_vertices_see_composed_rotation(self, template):
        pose = BodyPose(np.array([0.2, -0.3, 0.1]), np.array([-0.4, 0.2, 0.5]))
        r_n = Rotation.from_rotvec(pose.neck).as_matrix()
        r_h = Rotation.from_rotvec(pose.head).as_matrix()
        g = template.joint_positions[template.joint_index("head")]
        rigid = template.weights[:, template.joint_index("head")] == 1.0
        assert rigid.sum() > 100
        v = template.mesh.vertices[rigid]
        # neck pivots about the origin, then the head pivots about its joint
        expected = (g + (v - g) @ r_h.T) @ r_n.T
        posed = pose_mesh(template, pose)
        np.testing.assert_allclose(posed.mesh.vertices[rigid], expected, atol=1e-9)

    def test_neck_joint_stays_at_origin(self, template, rng):
        pose = BodyPose(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        posed = pose_mesh(template, pose)
        np.testing.assert_allclose(posed.joints[template.joint_index("neck")], np.zeros(3),
                                   atol=1e-15)

    def test_topology_preserved(self, template, rng):
        posed = pose_mesh(template, BodyPose(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)))
        assert posed.mesh.num_vertices == template.mesh.num_vertices
        np.testing.assert_array_equal(posed.mesh.faces, template.mesh.faces)

    def test_convex_combination_of_rigid_images(self, template, rng):
        """Every posed vertex is the weighted mean of its per-joint rigid
        images (skinning is a convex combination)."""
        from quartershot.body import joint_world_transforms

        pose = BodyPose(rng.uniform(-0.7, 0.7, 3), rng.uniform(-0.7, 0.7, 3))
        world_r, world_t = joint_world_transforms(template, pose)
        v = template.mesh.vertices
        images = np.einsum("jab,vb->jva", world_r, v) + world_t[:, None, :]
        recombined = np.einsum("vj,jva->va", template.weights, images)
        posed = pose_mesh(template, pose)
        np.testing.assert_allclose(posed.mesh.vertices, recombined, atol=1e-12)
        assert template.weights.min() >= 0.0
        np.testing.assert_allclose(template.weights.sum(axis=1), 1.0, atol=1e-6)


class TestFlipPose:
    def test_involution(self, rng):
        pose = BodyPose(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        back = flip_pose(flip_pose(pose))
        np.testing.assert_array_equal(back.neck, pose.neck)
        np.testing.assert_array_equal(back.head, pose.head)

    def test_pure_nod_is_fixed_point(self):
        pose = BodyPose(np.array([0.4, 0.0, 0.0]), np.array([-0.2, 0.0, 0.0]))
        flipped = flip_pose(pose)
        np.testing.assert_array_equal(flipped.neck, pose.neck)
        np.testing.assert_array_equal(flipped.head, pose.head)

    def test_mirrored_template_posed_with_flipped_pose(self, template, rng):
        """mirror(pose(T, p)) == pose(mirror(T), flip(p)) vertex-for-vertex."""
        pose = BodyPose(rng.uniform(-0.9, 0.9, 3), rng.uniform(-0.9, 0.9, 3))
        lhs = pose_mesh(template, pose).mesh.vertices * np.array([-1.0, 1.0, 1.0])
        rhs = pose_mesh(mirror_x(template), flip_pose(pose)).mesh.vertices
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestThetaExtraction:
    def _params(self, theta):
        return FullBodyParams(np.zeros(3), np.zeros(3), np.zeros(10), theta)

    def test_zero_theta(self):
        pose = extract_neck_head_pose(self._params(np.zeros(69)))
        assert pose.is_zero()

    def test_neck_slot_selection(self):
        theta = np.zeros(69)
        theta[33:36] = [0.1, 0.2, 0.3]  # joint 12 of the 23-joint layout
        pose = extract_neck_head_pose(self._params(theta))
        np.testing.assert_allclose(pose.neck, [0.1, 0.2, 0.3])
        np.testing.assert_array_equal(pose.head, np.zeros(3))

    def test_embed_extract_roundtrip(self, rng):
        pose = BodyPose(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        theta = embed_neck_head_pose(pose)
        assert theta.shape == (69,)
        recovered = extract_neck_head_pose(self._params(theta))
        np.testing.assert_array_equal(recovered.as_vector(), pose.as_vector())

    def test_wrong_theta_length(self):
        with pytest.raises(ValidationError):
            self._params(np.zeros(68))

    def test_wrong_beta_length(self):
        with pytest.raises(ValidationError):
            FullBodyParams(np.zeros(3), np.zeros(3), np.zeros(9), np.zeros(69))


class TestStandinTemplate:
    def test_same_seed_is_byte_identical(self):
        a = generate_standin_template(seed=3, detail_level=1)
        b = generate_standin_template(seed=3, detail_level=1)
        assert a.mesh.vertices.tobytes() == b.mesh.vertices.tobytes()
        assert a.mesh.faces.tobytes() == b.mesh.faces.tobytes()
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_different_seed_differs(self):
        a = generate_standin_template(seed=0, detail_level=1)
        b = generate_standin_template(seed=1, detail_level=1)
        assert a.mesh.vertices.shape != b.mesh.vertices.shape or not np.array_equal(
            a.mesh.vertices, b.mesh.vertices)

    def test_detail_level_scales_face_count(self):
        lo = generate_standin_template(detail_level=1)
        hi = generate_standin_template(detail_level=2)
        assert hi.mesh.num_faces >= 2 * lo.mesh.num_faces

    def test_default_detail_face_budget(self):
        assert generate_standin_template().mesh.num_faces >= 2000

    def test_watertight(self, template):
        """Every edge is shared by exactly two faces."""
        faces = template.mesh.faces
        edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]],
                                        faces[:, [0, 2]]]), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        assert (counts == 2).all()

    def test_roundtrips_through_template_io(self, template, tmp_path):
        save_template(tmp_path / "t.obj", template)
        loaded = load_template(tmp_path / "t.obj")
        np.testing.assert_array_equal(loaded.mesh.vertices, template.mesh.vertices)
        np.testing.assert_allclose(loaded.weights, template.weights, atol=1e-15)
        assert loaded.joint_names == template.joint_names


class TestTemplateValidation:
    def test_bad_weight_sum_rejected(self, template, tmp_path):
        save_template(tmp_path / "t.obj", template)
        rig = json.loads((tmp_path / "t.rig.json").read_text())
        rig["weights"] = [[v, j, 0.9 * w] for v, j, w in rig["weights"]]
        (tmp_path / "t.rig.json").write_text(json.dumps(rig))
        with pytest.raises(ValidationError, match="sum to 1"):
            load_template(tmp_path / "t.obj")

    def test_missing_head_joint_named_in_error(self, template, tmp_path):
        save_template(tmp_path / "t.obj", template)
        rig = json.loads((tmp_path / "t.rig.json").read_text())
        for joint in rig["joints"]:
            if joint["name"] == "head":
                joint["name"] = "skull"
        (tmp_path / "t.rig.json").write_text(json.dumps(rig))
        with pytest.raises(ValidationError, match="head"):
            load_template(tmp_path / "t.obj")

    def test_neck_recentered_to_origin(self, template, tmp_path):
        save_template(tmp_path / "t.obj", template)
        rig = json.loads((tmp_path / "t.rig.json").read_text())
        shift = np.array([0.3, -0.2, 0.1])
        for joint in rig["joints"]:
            joint["position"] = (np.array(joint["position"]) + shift).tolist()
        (tmp_path / "t.rig.json").write_text(json.dumps(rig))
        verts = template.mesh.vertices + shift
        lines = ["v %.17g %.17g %.17g" % tuple(v) for v in verts]
        lines += ["f %d %d %d" % tuple(f + 1) for f in template.mesh.faces]
        (tmp_path / "t.obj").write_text("\n".join(lines) + "\n")
        loaded = load_template(tmp_path / "t.obj")
        np.testing.assert_allclose(
            loaded.joint_positions[loaded.joint_index("neck")], np.zeros(3), atol=1e-12)
        np.testing.assert_allclose(loaded.mesh.vertices, template.mesh.vertices, atol=1e-9)

    def test_negative_weight_rejected(self, template):
        weights = np.array(template.weights)
        weights[0, 0] += 0.5
        weights[0, 1] -= 0.5
        if weights[0, 1] >= 0:
            weights[0, 1] -= weights[0, 1] + 0.1
            weights[0, 0] = 1.1
        with pytest.raises(ValidationError):
            RiggedTemplate(template.mesh, template.joint_names, template.joint_positions,
                           template.joint_parents, weights)

    def test_neck_off_origin_rejected(self, template):
        positions = np.array(template.joint_positions)
        positions[template.joint_index("neck")] = [0.01, 0, 0]
        with pytest.raises(ValidationError, match="neck"):
            RiggedTemplate(template.mesh, template.joint_names, positions,
                           template.joint_parents, template.weights)


class TestPoseType:
    def test_magnitude_warning(self):
        with pytest.warns(UserWarning):
            BodyPose(np.array([3.5, 0.0, 0.0]), np.zeros(3))

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            BodyPose(np.array([np.nan, 0, 0]), np.zeros(3))

    def test_vector_roundtrip(self, rng):
        pose = BodyPose(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        np.testing.assert_array_equal(BodyPose.from_vector(pose.as_vector()).as_vector(),
                                      pose.as_vector())

    def test_pose_file_roundtrip(self, tmp_path, rng):
        pose = BodyPose(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        save_pose(tmp_path / "p.json", pose)
        loaded = load_pose(tmp_path / "p.json")
        np.testing.assert_array_equal(loaded.as_vector(), pose.as_vector())
