"""Command-line surface.

Subcommands: render, turntable, posesweep, isosurface, align, verify,
report, gen-assets. Every command writes a manifest.json beside its outputs
(command, config snapshot, input hashes, seed, version) so runs reproduce
exactly. Exit codes: 0 success, 1 verify-suite failure, 2 file/format
problems, 3 validation problems, 4 numeric problems.

Options may also come from a TOML config file (--config); explicit flags win
over config values. The QUARTERSHOT_WORKERS environment variable sets the
default worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, alignment, figures, verification
from .assets import SPHERE_LEVEL, make_bust_field, make_sphere_field, symmetrize_grid
from .body import BodyPose, generate_standin_template, load_pose, load_template, save_pose, save_template
from .camera import DEFAULT_LOOKAT, camera_from_spherical, load_camera, save_camera, wrap_angle
from .deformation import DeformationConfig, MODE_LOCAL_FRAME, MODE_TRANSLATION
from .errors import FormatError, NumericError, ValidationError
from .geometry import save_obj
from .images import write_f32, write_png
from .manifest import RunManifest
from .rendering import RenderConfig, render, turntable_yaws
from .trigrid import extract_isosurface, load_decoder, load_grid, save_decoder, save_grid

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4


def _add_render_flags(p: argparse.ArgumentParser, needs_camera: bool = True):
    p.add_argument("--field", required=True, help="tri-grid field file")
    p.add_argument("--weights", required=True, help="decoder weights file")
    p.add_argument("--template", help="template OBJ (rig sidecar auto-located)")
    p.add_argument("--pose", help="pose JSON file {p_n, p_h}")
    if needs_camera:
        p.add_argument("--camera", help="camera JSON file")
        p.add_argument("--mu", type=float, help="camera yaw (radians), wraps into (-pi, pi]")
    p.add_argument("--nu", type=float, default=np.pi / 2, help="camera pitch (radians)")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--samples", type=int, default=48)
    p.add_argument("--importance", type=int, default=0, help="importance samples per ray")
    p.add_argument("--t-near", type=float, default=2.25)
    p.add_argument("--t-far", type=float, default=3.3)
    p.add_argument("--upsample-factor", type=int, default=4)
    p.add_argument("--background", default="1,1,1", help="background color r,g,b in [0,1]")
    p.add_argument("--deform-mode", choices=[MODE_TRANSLATION, MODE_LOCAL_FRAME],
                   default=MODE_LOCAL_FRAME)
    p.add_argument("--alpha", type=float, default=0.25, help="warp support radius")
    p.add_argument("--cull", action="store_true",
                   help="cull template faces outside the render volume")
    p.add_argument("--jitter", action="store_true", help="jittered stratified sampling")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int,
                   default=int(os.environ.get("QUARTERSHOT_WORKERS", "1")))
    p.add_argument("--float-dump", action="store_true", help="also write .f32 rasters")


def _render_config(args) -> RenderConfig:
    bg = tuple(float(x) for x in str(args.background).split(","))
    if len(bg) != 3:
        raise ValidationError("--background must be r,g,b")
    return RenderConfig(
        resolution=args.resolution,
        samples_per_ray=args.samples,
        importance_samples=args.importance,
        t_near=args.t_near,
        t_far=args.t_far,
        upsample_factor=args.upsample_factor,
        background=bg,
        stratified_jitter=args.jitter,
        seed=args.seed,
        n_workers=args.workers,
    )


def _deform_config(args) -> DeformationConfig:
    cull = ((-1.0 - args.alpha,) * 3, (1.0 + args.alpha,) * 3) if args.cull else None
    return DeformationConfig(alpha=args.alpha, mode=args.deform_mode, cull_bbox=cull)


def _load_render_inputs(args, manifest: RunManifest):
    grid = load_grid(args.field)
    decoder = load_decoder(args.weights)
    manifest.add_input(args.field)
    manifest.add_input(args.weights)
    template = pose = None
    if args.template:
        template = load_template(args.template)
        manifest.add_input(args.template)
    if args.pose:
        pose = load_pose(args.pose)
        manifest.add_input(args.pose)
    if template is not None and pose is None:
        pose = BodyPose.zero()
    return grid, decoder, template, pose


def _camera_from_args(args, manifest: RunManifest):
    if getattr(args, "camera", None):
        manifest.add_input(args.camera)
        return load_camera(args.camera)
    mu = args.mu if args.mu is not None else np.pi / 2
    return camera_from_spherical(wrap_angle(mu), args.nu, DEFAULT_LOOKAT)


def _new_manifest(name: str, args) -> RunManifest:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out", "config")}
    return RunManifest(command=name, config=config, seed=getattr(args, "seed", 0))


def _write_render_output(out_dir: Path, prefix: str, output, float_dump: bool):
    write_png(out_dir / f"{prefix}raw.png", output.raw)
    write_png(out_dir / f"{prefix}mask.png", output.mask)
    write_png(out_dir / f"{prefix}composed.png", output.composed)
    write_png(out_dir / f"{prefix}upsampled.png", output.upsampled)
    if float_dump:
        write_f32(out_dir / f"{prefix}raw.f32", output.raw)
        write_f32(out_dir / f"{prefix}mask.f32", output.mask)
        write_f32(out_dir / f"{prefix}composed.f32", output.composed)


def cmd_render(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _new_manifest("render", args)
    grid, decoder, template, pose = _load_render_inputs(args, manifest)
    camera = _camera_from_args(args, manifest)
    output = render(grid, decoder, template, pose, camera, _render_config(args),
                    _deform_config(args))
    _write_render_output(out_dir, "", output, args.float_dump)
    manifest.write(out_dir / "manifest.json")
    return EXIT_OK


def cmd_turntable(args) -> int:
    if args.frames < 1:
        raise ValidationError("--frames must be >= 1")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _new_manifest("turntable", args)
    grid, decoder, template, pose = _load_render_inputs(args, manifest)
    config = _render_config(args)
    deform = _deform_config(args)
    composed = []
    for k, mu in enumerate(turntable_yaws(args.frames)):
        cam = camera_from_spherical(mu, args.nu, DEFAULT_LOOKAT)
        output = render(grid, decoder, template, pose, cam, config, deform)
        write_png(out_dir / f"frame_{k:03d}.png", output.composed)
        if args.float_dump:
            write_f32(out_dir / f"frame_{k:03d}.f32", output.composed)
        composed.append((mu, output.composed))
    figures.save_image_grid(
        [img for _, img in composed],
        out_dir / "contact_sheet.png",
        titles=[f"yaw {mu:+.2f}" for mu, _ in composed],
    )
    manifest.write(out_dir / "manifest.json")
    return EXIT_OK


def cmd_posesweep(args) -> int:
    if args.frames < 1:
        raise ValidationError("--frames must be >= 1")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _new_manifest("posesweep", args)
    grid, decoder, template, _ = _load_render_inputs(args, manifest)
    if template is None:
        raise ValidationError("posesweep needs --template")
    pose_a = load_pose(args.pose_a)
    pose_b = load_pose(args.pose_b)
    manifest.add_input(args.pose_a)
    manifest.add_input(args.pose_b)
    camera = _camera_from_args(args, manifest)
    config = _render_config(args)

    modes = ([MODE_TRANSLATION, MODE_LOCAL_FRAME] if args.compare_modes
             else [args.deform_mode])
    rows = []
    grid_images, grid_titles = [], []
    for k in range(args.frames):
        t = 0.0 if args.frames == 1 else k / (args.frames - 1)
        pose = BodyPose.from_vector((1 - t) * pose_a.as_vector() + t * pose_b.as_vector())
        per_mode = {}
        for mode in modes:
            deform = DeformationConfig(alpha=args.alpha, mode=mode,
                                       cull_bbox=_deform_config(args).cull_bbox)
            output = render(grid, decoder, template, pose, camera, config, deform)
            write_png(out_dir / f"frame_{k:03d}_{mode}.png", output.composed)
            per_mode[mode] = output.composed
            grid_images.append(output.composed)
            grid_titles.append(f"t={t:.2f} {mode}")
        row = {"frame": k, "blend": t}
        if args.compare_modes:
            row["mean_l1"] = float(np.abs(per_mode[MODE_TRANSLATION]
                                          - per_mode[MODE_LOCAL_FRAME]).mean())
        rows.append(row)

    with open(out_dir / "sweep.csv", "w", encoding="utf-8") as fh:
        keys = list(rows[0].keys())
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(str(row[k]) for k in keys) + "\n")
    figures.save_image_grid(grid_images, out_dir / "sweep_grid.png", titles=grid_titles,
                            ncols=len(modes) if args.compare_modes else 4)
    manifest.write(out_dir / "manifest.json")
    if args.compare_modes:
        for row in rows:
            print(f"frame {row['frame']}: mean L1 between modes = {row['mean_l1']:.6f}")
    return EXIT_OK


def cmd_isosurface(args) -> int:
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    manifest = _new_manifest("isosurface", args)
    grid = load_grid(args.field)
    decoder = load_decoder(args.weights)
    manifest.add_input(args.field)
    manifest.add_input(args.weights)
    mesh = extract_isosurface(grid, decoder, args.level, args.res)
    if mesh.num_faces == 0:
        print("warning: level set is empty; writing an empty mesh", file=sys.stderr)
    save_obj(out_path, mesh)
    manifest.write(out_path.with_suffix(".manifest.json"))
    print(f"wrote {mesh.num_vertices} vertices, {mesh.num_faces} faces to {out_path}")
    return EXIT_OK


def cmd_align(args) -> int:
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    manifest = _new_manifest("align", args)
    template = load_template(args.template)
    manifest.add_input(args.template)
    manifest.add_input(args.input)
    overlay_dir = Path(args.overlay_dir) if args.overlay_dir else None
    if overlay_dir:
        overlay_dir.mkdir(parents=True, exist_ok=True)

    n_ok = n_bad = 0
    with open(out_path, "w", encoding="utf-8") as out_fh:
        for lineno, record in alignment.read_records(args.input):
            try:
                inp = alignment.record_to_input(record)
                result = alignment.solve_alignment(inp, template, with_scale=not args.rigid)
                out_fh.write(json.dumps(alignment.result_to_record(result)) + "\n")
                if overlay_dir:
                    overlay = alignment.render_overlay(result, template,
                                                       image_size=inp.image_size)
                    write_png(overlay_dir / f"record_{lineno:05d}.png", overlay)
                n_ok += 1
            except (KeyError, ValueError, ValidationError, NumericError) as exc:
                print(f"record {lineno}: {exc}", file=sys.stderr)
                n_bad += 1
    manifest.write(out_path.with_suffix(".manifest.json"))
    print(f"aligned {n_ok} records, {n_bad} failed")
    return EXIT_OK if n_ok or not n_bad else EXIT_VALIDATION


def cmd_verify(args) -> int:
    names = list(verification.SUITES) if args.suite == "all" else [args.suite]
    results = verification.run_suites(names)
    width = max(len(r.name) for r in results) + 2
    n_fail = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        n_fail += not r.passed
        print(f"[{r.suite:<8}] {r.name:<{width}} {status}  ({r.detail})")
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_CHECK_FAILED


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    figures.write_schedule_csv(out_dir / "schedule.csv")
    figures.plot_schedules(out_dir / "schedule.png")
    _new_manifest("report", args).write(out_dir / "manifest.json")
    print(f"wrote schedule.csv and schedule.png to {out_dir}")
    return EXIT_OK


def cmd_gen_assets(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    template = generate_standin_template(seed=args.seed, detail_level=args.detail)
    save_template(out_dir / "template.obj", template)

    grid, decoder = make_bust_field()
    save_grid(out_dir / "bust_field.qsg", grid)
    save_decoder(out_dir / "bust_decoder.qsd", decoder)
    save_grid(out_dir / "bust_field_symmetric.qsg", symmetrize_grid(grid))

    sphere_grid, sphere_decoder = make_sphere_field()
    save_grid(out_dir / "sphere_field.qsg", sphere_grid)
    save_decoder(out_dir / "sphere_decoder.qsd", sphere_decoder)

    save_camera(out_dir / "camera_frontal.json", camera_from_spherical(np.pi / 2, np.pi / 2))
    save_pose(out_dir / "pose_zero.json", BodyPose.zero())
    save_pose(out_dir / "pose_turn.json",
              BodyPose(np.array([0.0, np.pi / 2, 0.0]), np.zeros(3)))
    print(f"wrote stand-in template, fields, decoders, camera, poses to {out_dir}")
    print(f"sphere iso-surface level: {SPHERE_LEVEL:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quartershot",
        description="Deterministic renderer and geometry engine for posed "
                    "one-quarter headshot fields.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="TOML file with default option values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render one still")
    _add_render_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("turntable", help="render a full yaw sweep")
    _add_render_flags(p, needs_camera=False)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_turntable)

    p = sub.add_parser("posesweep", help="render interpolated poses, optionally both warp modes")
    _add_render_flags(p)
    p.add_argument("--pose-a", required=True)
    p.add_argument("--pose-b", required=True)
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--compare-modes", action="store_true",
                   help="render both warp modes and report per-frame L1 differences")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_posesweep)

    p = sub.add_parser("isosurface", help="extract a density iso-surface as OBJ")
    p.add_argument("--field", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--res", type=int, default=64)
    p.add_argument("--out", required=True, help="output OBJ path")
    p.set_defaults(func=cmd_isosurface)

    p = sub.add_parser("align", help="align upstream body-estimate records")
    p.add_argument("--input", required=True, help="JSONL records")
    p.add_argument("--template", required=True, help="template OBJ")
    p.add_argument("--out", required=True, help="output JSONL labels")
    p.add_argument("--overlay-dir", help="write wireframe QA overlays here")
    p.add_argument("--rigid", action="store_true", help="disable the scale term")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("verify", help="run the oracle check suites")
    p.add_argument("--suite", choices=[*verification.SUITES, "all"], default="all")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="write the schedule table and figures")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-assets", help="generate the stand-in template and test fields")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--detail", type=int, default=2)
    p.set_defaults(func=cmd_gen_assets)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv) -> list[str]:
    """Fold TOML config values into subparser defaults; explicit flags win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError:
        parser.error("--config needs a path")
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            values = tomllib.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read config file {path}: {exc}") from exc
    for action in parser._subparsers._group_actions:
        for sub_parser in action.choices.values():
            known = {a.dest for a in sub_parser._actions}
            sub_parser.set_defaults(**{k: v for k, v in values.items() if k in known})
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
