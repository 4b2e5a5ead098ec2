import json

import numpy as np
import pytest

from conftest import DATA_DIR
from quartershot.body import BodyPose, save_pose
from quartershot.cli import main
from quartershot.images import read_f32, read_png
from quartershot.manifest import RunManifest


@pytest.fixture(scope="module")
def assets(tmp_path_factory):
    """One shared asset directory generated through the CLI itself."""
    out = tmp_path_factory.mktemp("assets")
    assert main(["gen-assets", "--out", str(out), "--detail", "1"]) == 0
    return out


def render_args(assets, out, extra=()):
    return ["render",
            "--field", str(DATA_DIR / "bust_field.qsg"),
            "--weights", str(DATA_DIR / "bust_decoder.qsd"),
            "--resolution", "32",
            "--out", str(out), *extra]


class TestRenderCommand:
    def test_writes_images_and_manifest(self, assets, tmp_path):
        out = tmp_path / "render"
        assert main(render_args(assets, out, ["--float-dump"])) == 0
        for name in ("raw.png", "mask.png", "composed.png", "upsampled.png",
                     "raw.f32", "mask.f32", "composed.f32", "manifest.json"):
            assert (out / name).exists()
        assert read_png(out / "composed.png").shape == (32, 32, 3)
        assert read_png(out / "upsampled.png").shape == (128, 128, 3)
        manifest = RunManifest.load(out / "manifest.json")
        assert manifest.command == "render"
        assert len(manifest.inputs) == 2

    def test_reruns_are_bit_identical(self, assets, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(render_args(assets, out_a, ["--float-dump"])) == 0
        assert main(render_args(assets, out_b, ["--float-dump"])) == 0
        assert (out_a / "composed.png").read_bytes() == (out_b / "composed.png").read_bytes()
        np.testing.assert_array_equal(read_f32(out_a / "composed.f32"),
                                      read_f32(out_b / "composed.f32"))

    def test_matches_library_render(self, assets, tmp_path):
        from quartershot.camera import camera_from_spherical
        from quartershot.rendering import RenderConfig, render
        from quartershot.trigrid import load_decoder, load_grid

        out = tmp_path / "render"
        assert main(render_args(assets, out, ["--float-dump"])) == 0
        grid = load_grid(DATA_DIR / "bust_field.qsg")
        dec = load_decoder(DATA_DIR / "bust_decoder.qsd")
        cam = camera_from_spherical(np.pi / 2, np.pi / 2)
        direct = render(grid, dec, None, None, cam, RenderConfig(resolution=32))
        np.testing.assert_allclose(read_f32(out / "composed.f32"), direct.composed,
                                   atol=1e-6)

    def test_mu_wraps(self, assets, tmp_path):
        out = tmp_path / "wrapped"
        assert main(render_args(assets, out, ["--mu", "3.1416"])) == 0

    def test_missing_weights_is_io_error(self, assets, tmp_path):
        code = main(["render", "--field", str(DATA_DIR / "bust_field.qsg"),
                     "--weights", str(tmp_path / "absent.qsd"),
                     "--out", str(tmp_path / "x")])
        assert code == 2

    def test_bad_resolution_is_validation_error(self, assets, tmp_path):
        code = main(render_args(assets, tmp_path / "x", ["--resolution", "63"]))
        assert code == 3

    def test_deformed_render_with_template(self, assets, tmp_path):
        out = tmp_path / "deformed"
        pose_path = tmp_path / "pose.json"
        save_pose(pose_path, BodyPose(np.array([0.0, 0.6, 0.0]), np.zeros(3)))
        args = render_args(assets, out, [
            "--template", str(assets / "template.obj"),
            "--pose", str(pose_path),
            "--cull",
        ])
        assert main(args) == 0
        assert (out / "composed.png").exists()

    def test_config_file_defaults_and_flag_priority(self, assets, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text("resolution = 16\nupsample_factor = 1\n")
        out = tmp_path / "cfgout"
        args = ["--config", str(cfg)] + render_args(assets, out)
        args.remove("--resolution")
        args.remove("32")
        assert main(args) == 0
        assert read_png(out / "composed.png").shape == (16, 16, 3)
        out2 = tmp_path / "cfgout2"
        assert main(["--config", str(cfg)] + render_args(assets, out2)) == 0
        assert read_png(out2 / "composed.png").shape == (32, 32, 3)  # flag wins


class TestTurntableCommand:
    def test_frame_count_and_contact_sheet(self, assets, tmp_path):
        out = tmp_path / "turn"
        args = ["turntable", "--field", str(DATA_DIR / "bust_field.qsg"),
                "--weights", str(DATA_DIR / "bust_decoder.qsd"),
                "--frames", "4", "--resolution", "16", "--out", str(out)]
        assert main(args) == 0
        for k in range(4):
            assert (out / f"frame_{k:03d}.png").exists()
        assert (out / "contact_sheet.png").exists()
        assert (out / "manifest.json").exists()

    def test_zero_frames_rejected(self, assets, tmp_path):
        args = ["turntable", "--field", str(DATA_DIR / "bust_field.qsg"),
                "--weights", str(DATA_DIR / "bust_decoder.qsd"),
                "--frames", "0", "--out", str(tmp_path / "x")]
        assert main(args) == 3


class TestPosesweepCommand:
    def test_mode_divergence_reported(self, assets, tmp_path, capsys):
        out = tmp_path / "sweep"
        pose_turn = tmp_path / "turn.json"
        save_pose(pose_turn, BodyPose(np.array([0.0, np.pi / 2, 0.0]), np.zeros(3)))
        args = ["posesweep", "--field", str(DATA_DIR / "bust_field.qsg"),
                "--weights", str(DATA_DIR / "bust_decoder.qsd"),
                "--template", str(assets / "template.obj"),
                "--pose-a", str(pose_turn), "--pose-b", str(pose_turn),
                "--frames", "1", "--resolution", "32", "--compare-modes",
                "--out", str(out)]
        assert main(args) == 0
        rows = (out / "sweep.csv").read_text().strip().splitlines()
        assert rows[0] == "frame,blend,mean_l1"
        assert float(rows[1].split(",")[2]) > 0.01
        assert (out / "sweep_grid.png").exists()
        assert (out / "frame_000_translation.png").exists()
        assert (out / "frame_000_local_frame.png").exists()

    def test_neutral_pose_modes_agree(self, assets, tmp_path):
        out = tmp_path / "sweep0"
        pose_zero = tmp_path / "zero.json"
        save_pose(pose_zero, BodyPose.zero())
        args = ["posesweep", "--field", str(DATA_DIR / "bust_field.qsg"),
                "--weights", str(DATA_DIR / "bust_decoder.qsd"),
                "--template", str(assets / "template.obj"),
                "--pose-a", str(pose_zero), "--pose-b", str(pose_zero),
                "--frames", "1", "--resolution", "16", "--compare-modes",
                "--out", str(out)]
        assert main(args) == 0
        rows = (out / "sweep.csv").read_text().strip().splitlines()
        assert float(rows[1].split(",")[2]) < 1e-9

    def test_frame_interpolation_count(self, assets, tmp_path):
        out = tmp_path / "sweepN"
        pose_zero = tmp_path / "zero.json"
        pose_turn = tmp_path / "turn.json"
        save_pose(pose_zero, BodyPose.zero())
        save_pose(pose_turn, BodyPose(np.array([0.0, 0.8, 0.0]), np.zeros(3)))
        args = ["posesweep", "--field", str(DATA_DIR / "bust_field.qsg"),
                "--weights", str(DATA_DIR / "bust_decoder.qsd"),
                "--template", str(assets / "template.obj"),
                "--pose-a", str(pose_zero), "--pose-b", str(pose_turn),
                "--frames", "3", "--resolution", "16",
                "--out", str(out)]
        assert main(args) == 0
        assert len(list(out.glob("frame_*_local_frame.png"))) == 3


class TestIsosurfaceCommand:
    def test_sphere_obj(self, assets, tmp_path):
        from quartershot.assets import SPHERE_LEVEL
        from quartershot.geometry import load_obj

        out = tmp_path / "sphere.obj"
        args = ["isosurface", "--field", str(assets / "sphere_field.qsg"),
                "--weights", str(assets / "sphere_decoder.qsd"),
                "--level", str(SPHERE_LEVEL), "--res", "48", "--out", str(out)]
        assert main(args) == 0
        mesh = load_obj(out)
        radii = np.linalg.norm(mesh.vertices - np.array([0, 0, 0.0]), axis=1)
        assert np.abs(radii - 0.25).max() < 2 * (2 / 48)

    def test_empty_level_warns_and_writes_empty(self, assets, tmp_path, capsys):
        out = tmp_path / "empty.obj"
        args = ["isosurface", "--field", str(assets / "sphere_field.qsg"),
                "--weights", str(assets / "sphere_decoder.qsd"),
                "--level", "1e9", "--res", "16", "--out", str(out)]
        assert main(args) == 0
        assert "empty" in capsys.readouterr().err
        assert out.read_text().strip() == ""


class TestAlignCommand:
    def _write_records(self, path, n_good=2, with_bad=False):
        from quartershot.camera import camera_from_spherical

        cam = camera_from_spherical(0.6, 1.3)
        record = {
            "trans": [0.2, -0.1, 0.3], "rot": [0.1, 0.2, -0.1],
            "beta": [0.0] * 10, "theta": [0.0] * 69,
            "camera": {"extrinsic": cam.extrinsic.ravel().tolist(),
                       "intrinsic": cam.intrinsic.ravel().tolist()},
        }
        lines = [json.dumps(record)] * n_good
        if with_bad:
            lines.insert(1, json.dumps({"trans": [0, 0, 0]}))  # missing keys
        path.write_text("\n".join(lines) + "\n")

    def test_aligns_and_writes_labels(self, assets, tmp_path, capsys):
        records = tmp_path / "records.jsonl"
        self._write_records(records)
        out = tmp_path / "labels.jsonl"
        args = ["align", "--input", str(records), "--template",
                str(assets / "template.obj"), "--out", str(out),
                "--overlay-dir", str(tmp_path / "overlays")]
        assert main(args) == 0
        labels = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(labels) == 2
        assert len(labels[0]["camera"]) == 25 and len(labels[0]["pose"]) == 6
        assert labels[0]["residual"] < 1e-6
        assert len(list((tmp_path / "overlays").glob("*.png"))) == 2

    def test_malformed_record_skipped_run_continues(self, assets, tmp_path, capsys):
        records = tmp_path / "records.jsonl"
        self._write_records(records, with_bad=True)
        out = tmp_path / "labels.jsonl"
        args = ["align", "--input", str(records), "--template",
                str(assets / "template.obj"), "--out", str(out)]
        assert main(args) == 0
        assert len(out.read_text().splitlines()) == 2
        assert "record 2" in capsys.readouterr().err


class TestVerifyCommand:
    def test_schedule_suite_passes(self, capsys):
        assert main(["verify", "--suite", "schedule"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_unknown_suite_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["verify", "--suite", "bogus"])
        assert exc.value.code == 2


class TestReportCommand:
    def test_writes_csv_and_figure(self, tmp_path):
        out = tmp_path / "report"
        assert main(["report", "--out", str(out)]) == 0
        assert (out / "schedule.png").exists()
        rows = (out / "schedule.csv").read_text().splitlines()
        header = rows[0].split(",")
        assert {"images_seen", "lambda_preg", "swap_probability",
                "neural_resolution", "stage"} <= set(header)
        table = {int(r.split(",")[0]): dict(zip(header, r.split(","))) for r in rows[1:]}
        assert float(table[300_000]["lambda_preg"]) == 0.25
        assert int(table[10_500_000]["neural_resolution"]) == 96
        assert float(table[500_000]["swap_probability"]) == 0.85


class TestGenAssets:
    def test_outputs_load(self, assets):
        from quartershot.body import load_template
        from quartershot.trigrid import load_decoder, load_grid

        template = load_template(assets / "template.obj")
        assert template.mesh.num_faces > 1000
        grid = load_grid(assets / "bust_field.qsg")
        dec = load_decoder(assets / "bust_decoder.qsd")
        assert dec.in_features == grid.channels

    def test_shipped_fixture_matches_generator(self):
        """The committed field/decoder binaries are exactly what the
        generator produces."""
        from quartershot.assets import make_bust_field
        from quartershot.trigrid import load_decoder, load_grid

        grid, dec = make_bust_field()
        shipped_grid = load_grid(DATA_DIR / "bust_field.qsg")
        shipped_dec = load_decoder(DATA_DIR / "bust_decoder.qsd")
        assert shipped_grid.planes.tobytes() == grid.planes.tobytes()
        for (w1, b1), (w2, b2) in zip(shipped_dec.layers, dec.layers):
            assert w1.tobytes() == w2.tobytes() and b1.tobytes() == b2.tobytes()
