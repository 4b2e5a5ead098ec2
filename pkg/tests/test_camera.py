import json

import numpy as np
import pytest

from quartershot.camera import (
    DEFAULT_LOOKAT,
    INTRINSIC,
    SPHERE_RADIUS,
    CameraParams,
    Ray,
    camera_from_json,
    camera_from_spherical,
    camera_to_json,
    flip_camera,
    generate_rays,
    load_camera,
    needs_flip,
    pixel_ray,
    save_camera,
    spherical_from_camera,
    wrap_angle,
)
from quartershot.errors import ValidationError

FRONTAL = (np.pi / 2, np.pi / 2)


def mirror_x(v):
    return v * np.array([-1.0, 1.0, 1.0])


class TestSphericalConstruction:
    def test_frontal_center(self):
        cam = camera_from_spherical(*FRONTAL)
        np.testing.assert_allclose(cam.center, DEFAULT_LOOKAT + [0, 0, SPHERE_RADIUS],
                                   atol=1e-12)

    def test_sphere_constraint_random(self, rng):
        for _ in range(300):
            mu = rng.uniform(-np.pi, np.pi)
            nu = rng.uniform(0.05, np.pi - 0.05)
            cam = camera_from_spherical(mu, nu)
            assert abs(np.linalg.norm(cam.center - DEFAULT_LOOKAT) - SPHERE_RADIUS) < 1e-6

    def test_subject_right_side_sign(self):
        # cameras in the flip range sit on the subject's right (-x) side
        assert camera_from_spherical(0.0, np.pi / 2).center[0] < 0
        assert camera_from_spherical(np.pi, np.pi / 2).center[0] > 0

    def test_rear_view_negative_mu(self):
        cam = camera_from_spherical(-np.pi / 2, np.pi / 2)
        assert cam.center[2] < 0  # behind the subject
        assert spherical_from_camera(cam).mu == pytest.approx(-np.pi / 2, abs=1e-9)

    def test_roundtrip(self, rng):
        for _ in range(200):
            mu = rng.uniform(-np.pi + 1e-6, np.pi)
            nu = rng.uniform(0.05, np.pi - 0.05)
            pose = spherical_from_camera(camera_from_spherical(mu, nu))
            assert pose.mu == pytest.approx(mu, abs=1e-9)
            assert pose.nu == pytest.approx(nu, abs=1e-9)

    def test_pole_rejected(self):
        with pytest.raises(ValidationError):
            camera_from_spherical(0.0, 0.0)
        with pytest.raises(ValidationError):
            camera_from_spherical(0.0, np.pi)

    def test_off_sphere_rejected(self):
        cam = camera_from_spherical(*FRONTAL)
        ext = np.array(cam.extrinsic)
        ext[:3, 3] *= 1.01  # moves the center off the sphere
        with pytest.raises(ValidationError):
            spherical_from_camera(CameraParams(ext, INTRINSIC.copy()))

    def test_custom_lookat(self, rng):
        lookat = rng.normal(size=3)
        cam = camera_from_spherical(1.0, 1.2, lookat)
        assert np.linalg.norm(cam.center - lookat) == pytest.approx(SPHERE_RADIUS, abs=1e-9)


class TestFlip:
    def test_involution(self, rng):
        for _ in range(100):
            cam = camera_from_spherical(rng.uniform(-np.pi, np.pi),
                                        rng.uniform(0.1, np.pi - 0.1))
            back = flip_camera(flip_camera(cam))
            np.testing.assert_allclose(back.extrinsic, cam.extrinsic, atol=1e-9)

    def test_frontal_is_fixed_point(self):
        cam = camera_from_spherical(*FRONTAL)
        np.testing.assert_allclose(flip_camera(cam).extrinsic, cam.extrinsic, atol=1e-12)

    def test_flip_mirrors_center(self, rng):
        cam = camera_from_spherical(0.8, 1.1)
        flipped = flip_camera(cam)
        lookat = DEFAULT_LOOKAT
        np.testing.assert_allclose(flipped.center - lookat, mirror_x(cam.center - lookat),
                                   atol=1e-9)

    def test_flip_commutes_with_spherical_mirror(self, rng):
        mu, nu = 0.3, 1.2
        flipped = spherical_from_camera(flip_camera(camera_from_spherical(mu, nu)))
        assert flipped.mu == pytest.approx(wrap_angle(np.pi - mu), abs=1e-9)
        assert flipped.nu == pytest.approx(nu, abs=1e-9)


class TestNeedsFlip:
    @pytest.mark.parametrize("mu,expected", [
        (0.0, True),
        (np.pi / 2, True),     # boundary inclusive
        (-np.pi / 2, True),    # boundary inclusive
        (np.pi, False),
        (2.0, False),
        (-2.0, False),
    ])
    def test_range(self, mu, expected):
        assert needs_flip(camera_from_spherical(mu, np.pi / 2)) is expected


class TestIntrinsics:
    def test_constant_across_cameras(self, rng):
        cams = [camera_from_spherical(rng.uniform(-3, 3), rng.uniform(0.2, 2.9))
                for _ in range(20)]
        for cam in cams:
            assert cam.intrinsic.tobytes() == INTRINSIC.tobytes()

    def test_nonstandard_intrinsic_rejected(self):
        cam = camera_from_spherical(*FRONTAL)
        bad = np.array(INTRINSIC)
        bad[0, 0] *= 2
        with pytest.raises(ValidationError):
            CameraParams(cam.extrinsic, bad)

    def test_vector_layout(self):
        cam = camera_from_spherical(*FRONTAL)
        vec = cam.as_vector()
        assert vec.shape == (25,)
        np.testing.assert_array_equal(vec[:16].reshape(4, 4), cam.extrinsic)
        np.testing.assert_array_equal(vec[16:].reshape(3, 3), cam.intrinsic)
        again = CameraParams.from_vector(vec)
        np.testing.assert_array_equal(again.extrinsic, cam.extrinsic)


class TestRays:
    def test_directions_unit_length(self):
        cam = camera_from_spherical(1.2, 0.9)
        _, dirs = generate_rays(cam, 32, 24)
        np.testing.assert_allclose(np.linalg.norm(dirs, axis=2), 1.0, atol=1e-12)

    def test_center_pixel_hits_lookat(self):
        cam = camera_from_spherical(0.7, 1.3)
        ray = pixel_ray(cam, 32, 32, 65, 65)  # odd size puts a pixel center on axis
        t = np.linalg.norm(DEFAULT_LOOKAT - ray.origin)
        np.testing.assert_allclose(ray.at(t), DEFAULT_LOOKAT, atol=1e-4)

    def test_mirrored_pixels_under_flip(self):
        cam = camera_from_spherical(0.9, 1.2)
        flipped = flip_camera(cam)
        w = h = 17
        _, dirs = generate_rays(cam, w, h)
        _, dirs_f = generate_rays(flipped, w, h)
        np.testing.assert_allclose(dirs_f[:, ::-1] * np.array([-1.0, 1.0, 1.0]), dirs,
                                   atol=1e-9)

    def test_origin_is_camera_center(self):
        cam = camera_from_spherical(*FRONTAL)
        origins, _ = generate_rays(cam, 4, 4)
        np.testing.assert_allclose(origins, np.broadcast_to(cam.center, origins.shape))

    def test_bad_dimensions(self):
        cam = camera_from_spherical(*FRONTAL)
        with pytest.raises(ValidationError):
            generate_rays(cam, 0, 4)

    def test_ray_type_validates_direction(self):
        with pytest.raises(ValidationError):
            Ray(np.zeros(3), np.array([1.0, 1.0, 0.0]))


class TestJsonIO:
    def test_roundtrip(self, tmp_path):
        cam = camera_from_spherical(0.4, 1.0)
        save_camera(tmp_path / "c.json", cam)
        loaded = load_camera(tmp_path / "c.json")
        np.testing.assert_array_equal(loaded.extrinsic, cam.extrinsic)
        np.testing.assert_array_equal(loaded.intrinsic, cam.intrinsic)

    def test_spherical_form_accepted(self):
        cam = camera_from_json({"mu": 0.4, "nu": 1.0})
        ref = camera_from_spherical(0.4, 1.0)
        np.testing.assert_allclose(cam.extrinsic, ref.extrinsic, atol=1e-15)

    def test_missing_keys_rejected(self):
        with pytest.raises(ValidationError):
            camera_from_json({"mu": 0.4})

    def test_serialized_floats_are_exact(self):
        cam = camera_from_spherical(0.123456789, 1.23456789)
        data = json.loads(json.dumps(camera_to_json(cam)))
        again = camera_from_json(data)
        assert again.extrinsic.tobytes() == cam.extrinsic.tobytes()


class TestWrapAngle:
    def test_wraps_into_half_open_interval(self):
        assert wrap_angle(np.pi) == pytest.approx(np.pi)
        assert wrap_angle(-np.pi) == pytest.approx(np.pi)
        assert wrap_angle(3.1416) == pytest.approx(3.1416 - 2 * np.pi, abs=1e-12)
        assert wrap_angle(0.5) == pytest.approx(0.5)
