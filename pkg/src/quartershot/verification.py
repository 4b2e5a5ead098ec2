"""Self-contained oracle checks behind the CLI verify command.

Each check compares an implementation path against an independent reference
(dense sampling, exhaustive scan, closed form, or symmetry argument) and
reports pass/fail with a measured detail string. Suites are sized to finish
in seconds; the pytest suite runs the same style of checks at full size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import alignment, schedules
from .assets import SPHERE_LEVEL, make_bust_field, make_sphere_field, symmetrize_grid
from .body import BodyPose, generate_standin_template, pose_mesh
from .bvh import brute_force_query, build_bvh, closest_face
from .camera import camera_from_spherical, flip_camera
from .deformation import (
    MODE_LOCAL_FRAME,
    MODE_TRANSLATION,
    DeformationConfig,
    build_context,
    deformation_delta,
    warp_points,
)
from .geometry import RigidTransform, TriangleMesh, axis_angle_to_matrix, closest_point_on_triangle, face_frames
from .rendering import RenderConfig, composite, quadrature_batch, render
from .trigrid import extract_isosurface


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str


def _check(results, suite, name, passed, detail):
    results.append(CheckResult(suite, name, bool(passed), detail))


def _random_soup(rng, n_faces, spread=1.0):
    """Triangle soup with no degenerate faces."""
    base = rng.uniform(-spread, spread, (n_faces, 3))
    v1 = base + rng.uniform(0.05, 0.3, (n_faces, 3)) * rng.choice([-1, 1], (n_faces, 3))
    v2 = base + rng.uniform(0.05, 0.3, (n_faces, 3)) * rng.choice([-1, 1], (n_faces, 3))
    verts = np.concatenate([base, v1, v2])
    faces = np.arange(3 * n_faces).reshape(3, n_faces).T
    return TriangleMesh(verts, faces, drop_degenerate=True)


def geometry_suite() -> list[CheckResult]:
    results: list[CheckResult] = []
    rng = np.random.default_rng(7)

    # closest point vs dense barycentric sampling
    worst = 0.0
    for _ in range(100):
        tri = rng.normal(size=(3, 3))
        while 0.5 * np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0])) < 1e-3:
            tri = rng.normal(size=(3, 3))
        q = rng.normal(size=3) * 2
        point, _ = closest_point_on_triangle(q, *tri)
        d = np.linalg.norm(q - point)
        grid = np.linspace(0, 1, 60)
        uu, vv = np.meshgrid(grid, grid)
        keep = uu + vv <= 1.0
        samples = (
            tri[0][None, :]
            + uu[keep][:, None] * (tri[1] - tri[0])
            + vv[keep][:, None] * (tri[2] - tri[0])
        )
        d_ref = np.linalg.norm(samples - q, axis=1).min()
        worst = max(worst, d - d_ref)  # sampled distance can only overestimate
    _check(results, "geometry", "closest-point vs dense sampling", worst <= 1e-3,
           f"max excess distance {worst:.2e}")

    # BVH equals exhaustive scan
    mesh = _random_soup(rng, 2000)
    bvh = build_bvh(mesh)
    queries = rng.uniform(-1.5, 1.5, (2000, 3))
    _, _, d_bvh, _ = bvh.query(queries)
    _, _, d_ref, _ = brute_force_query(mesh, queries)
    err = np.abs(d_bvh - d_ref).max()
    _check(results, "geometry", "BVH vs brute-force scan", err <= 1e-9, f"max |d| gap {err:.2e}")

    # deterministic tie-break at a shared vertex
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0.0]])
    shared = TriangleMesh(verts, np.array([[0, 1, 2], [0, 3, 4]]))
    hit = closest_face(build_bvh(shared), [0, 0, 1.0])
    _check(results, "geometry", "equidistant tie-break to lowest face id", hit.face_id == 0,
           f"face_id {hit.face_id}")

    # local frames: orthonormal and rotation-equivariant
    template = generate_standin_template(detail_level=1)
    origins, axes = face_frames(template.mesh)
    gram = np.einsum("nij,nik->njk", axes, axes)
    ortho = np.abs(gram - np.eye(3)).max()
    rot = axis_angle_to_matrix(rng.normal(size=3))
    rotated = template.mesh.with_vertices(template.mesh.vertices @ rot.T)
    _, axes_rot = face_frames(rotated)
    equiv = np.abs(np.einsum("ab,nbc->nac", rot, axes) - axes_rot).max()
    _check(results, "geometry", "local frames orthonormal", ortho <= 1e-9, f"max gram gap {ortho:.2e}")
    _check(results, "geometry", "local frames rotation-equivariant", equiv <= 1e-9,
           f"max axis gap {equiv:.2e}")

    # barycentrics reconstruct the returned point
    bvh_t = build_bvh(template.mesh)
    pts = rng.uniform(-0.4, 0.4, (500, 3))
    faces, points, _, bary = bvh_t.query(pts)
    corners = template.mesh.vertices[template.mesh.faces[faces]]
    recon = np.einsum("nc,ncd->nd", bary, corners)
    gap = np.abs(recon - points).max()
    _check(results, "geometry", "barycentric reconstruction", gap <= 1e-6, f"max gap {gap:.2e}")
    return results


def deform_suite() -> list[CheckResult]:
    results: list[CheckResult] = []
    rng = np.random.default_rng(11)
    template = generate_standin_template(detail_level=1)

    pts = rng.uniform(-0.6, 0.6, (20000, 3))
    for mode in (MODE_TRANSLATION, MODE_LOCAL_FRAME):
        ctx = build_context(template, BodyPose.zero(), DeformationConfig(mode=mode))
        gap = np.abs(deformation_delta(ctx, pts)).max()
        _check(results, "deform", f"neutral pose is the identity ({mode})", gap < 1e-9,
               f"max |delta| {gap:.2e}")

    pose = BodyPose(np.array([0.3, 0.4, -0.2]), np.array([-0.1, 0.2, 0.3]))
    ctx = build_context(template, pose, DeformationConfig())
    _, _, dist, _ = ctx.closest(pts)
    far = pts[dist >= ctx.config.alpha]
    delta = deformation_delta(ctx, far)
    _check(results, "deform", "compact support beyond alpha",
           delta.size > 0 and not delta.any(), f"{len(far)} far points, all deltas exactly 0")

    # one-bone rig: warp equals the inverse rotation inside the support shell
    worst = 0.0
    bone = _one_bone_template(template)
    for angle in (np.pi / 6, np.pi / 3, np.pi / 2):
        rot_pose = BodyPose(np.array([0.0, angle, 0.0]), np.zeros(3))
        ctx_r = build_context(bone, rot_pose, DeformationConfig())
        shell = _points_near_surface(rng, ctx_r, 2000)
        expected = shell @ axis_angle_to_matrix([0.0, angle, 0.0])  # R^-1 x = x @ R
        worst = max(worst, np.abs(warp_points(ctx_r, shell) - expected).max())
    _check(results, "deform", "rigid pose inverts exactly (one-bone rig)", worst <= 1e-6,
           f"max warp gap {worst:.2e}")

    # translation mode against the hand-rolled formula on one triangle
    tri_posed = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]]), np.array([[0, 1, 2]]))
    tri_canon = np.array([[0.2, 0.1, 0.3], [1.3, 0.2, 0.4], [0.1, 1.2, 0.5]])
    q = np.array([[0.2, 0.2, 0.7]])
    ctx_t = _raw_context(tri_posed, tri_posed.with_vertices(tri_canon), MODE_TRANSLATION)
    got = deformation_delta(ctx_t, q)[0]
    surf = np.array([0.2, 0.2, 0.0])
    bary = np.array([0.6, 0.2, 0.2])
    expect = (bary @ tri_canon - surf) * np.exp(-0.49)
    gap = np.abs(got - expect).max()
    _check(results, "deform", "translation formula on one triangle", gap <= 1e-12,
           f"max gap {gap:.2e}")
    return results


def _one_bone_template(template):
    """Clone of a template with every vertex skinned rigidly to the neck."""
    from .body import RiggedTemplate

    weights = np.zeros_like(template.weights)
    weights[:, template.joint_index("neck")] = 1.0
    return RiggedTemplate(template.mesh, template.joint_names, template.joint_positions,
                          template.joint_parents, weights)


def _points_near_surface(rng, ctx, count):
    """Observation-space points strictly inside the warp support shell."""
    verts = ctx.posed.mesh.vertices
    idx = rng.integers(0, len(verts), count)
    offsets = rng.uniform(-0.2, 0.2, (count, 3))
    pts = verts[idx] + offsets
    _, _, dist, _ = ctx.closest(pts)
    return pts[dist < 0.9 * ctx.config.alpha]


class _RawContext:
    """Deformation-context stand-in over an explicit posed/canonical mesh
    pair, for checks that need full control of both meshes."""

    def __init__(self, posed_mesh, canon_mesh, mode):
        self.config = DeformationConfig(mode=mode)
        self.bvh = build_bvh(posed_mesh)
        self.posed = type("P", (), {"mesh": posed_mesh})()
        self.template = type("T", (), {"mesh": canon_mesh})()
        self.pose = BodyPose(np.array([1e-9, 0, 0]), np.zeros(3))  # non-zero: no shortcut
        self._posed_origins, self._posed_axes = face_frames(posed_mesh)
        self._canon_origins, self._canon_axes = face_frames(canon_mesh)

    def closest(self, points):
        return self.bvh.query(points)


def _raw_context(posed_mesh, canon_mesh, mode):
    return _RawContext(posed_mesh, canon_mesh, mode)


def render_suite() -> list[CheckResult]:
    results: list[CheckResult] = []
    rng = np.random.default_rng(3)

    # quadrature against the closed-form constant-medium integral
    sigma, t_near, t_far = 2.0, 2.25, 3.3
    expected = 1.0 - np.exp(-sigma * (t_far - t_near))
    errors = []
    for n in (256, 512, 1024, 2048):
        h = (t_far - t_near) / n
        ts = (t_near + (np.arange(n) + 0.5) * h)[None, :]
        _, mask = quadrature_batch(ts, np.full((1, n), sigma), np.ones((1, n, 3)), t_far)
        errors.append(abs(float(mask[0]) - expected))
    halves = all(errors[i + 1] <= 0.6 * errors[i] for i in range(3))
    _check(results, "render", "quadrature matches closed form", errors[0] <= 1e-3,
           f"error at 256 samples {errors[0]:.2e}")
    _check(results, "render", "quadrature error halves with sample doubling", halves,
           "errors " + ", ".join(f"{e:.1e}" for e in errors))

    # compositing identities
    raw = rng.uniform(0, 1, (16, 16, 3))
    mask = rng.uniform(0, 1, (16, 16))
    bg = rng.uniform(0, 1, (16, 16, 3))
    exact = np.abs(composite(raw, mask, bg) - ((1 - mask)[..., None] * bg + raw)).max()
    zero_case = np.array_equal(composite(np.zeros_like(raw), np.zeros_like(mask), bg), bg)
    one_case = np.array_equal(composite(raw, np.ones_like(mask), bg), raw)
    _check(results, "render", "compositing formula exact", exact <= 1e-12, f"max gap {exact:.2e}")
    _check(results, "render", "compositing identities at mask 0/1", zero_case and one_case,
           "mask=0 gives bg, mask=1 gives raw")

    # end-to-end mirror symmetry
    grid, dec = make_bust_field()
    sym = symmetrize_grid(grid)
    cam = camera_from_spherical(1.1, 1.3)
    cfg = RenderConfig(resolution=48)
    out_a = render(sym, dec, None, None, cam, cfg)
    out_b = render(sym, dec, None, None, flip_camera(cam), cfg)
    gap = np.abs(out_a.composed - out_b.composed[:, ::-1]).max()
    _check(results, "render", "mirrored camera renders the mirror image", gap < 1e-5,
           f"max pixel gap {gap:.2e}")

    # warp-mode divergence under a large pose, agreement at neutral
    template = generate_standin_template(detail_level=1)
    pose = BodyPose(np.array([0.0, np.pi / 2, 0.0]), np.zeros(3))
    cam_f = camera_from_spherical(np.pi / 2, np.pi / 2)
    cfg_s = RenderConfig(resolution=48)
    img_t = render(grid, dec, template, pose, cam_f, cfg_s,
                   DeformationConfig(mode=MODE_TRANSLATION)).composed
    img_l = render(grid, dec, template, pose, cam_f, cfg_s,
                   DeformationConfig(mode=MODE_LOCAL_FRAME)).composed
    diff = np.abs(img_t - img_l).mean()
    zero_t = render(grid, dec, template, BodyPose.zero(), cam_f, cfg_s,
                    DeformationConfig(mode=MODE_TRANSLATION)).composed
    zero_l = render(grid, dec, template, BodyPose.zero(), cam_f, cfg_s,
                    DeformationConfig(mode=MODE_LOCAL_FRAME)).composed
    same = np.abs(zero_t - zero_l).max()
    _check(results, "render", "warp modes diverge under a large pose", diff > 0.01,
           f"mean L1 {diff:.4f}")
    _check(results, "render", "warp modes agree at the neutral pose", same < 1e-9,
           f"max gap {same:.2e}")

    # silhouette of an opaque sphere vs its analytic projection
    sphere_grid, sphere_dec = make_sphere_field(radius=0.25, center=(0.0, 0.06, 0.0))
    out = render(sphere_grid, sphere_dec, None, None, cam_f, RenderConfig(resolution=128))
    area = float((out.mask > 0.5).sum())
    from .camera import FOCAL_LENGTH, SPHERE_RADIUS
    rho = FOCAL_LENGTH * 0.25 / np.sqrt(SPHERE_RADIUS**2 - 0.25**2)
    analytic = np.pi * (rho * 128) ** 2
    rel = abs(area - analytic) / analytic
    _check(results, "render", "sphere silhouette area matches projection", rel < 0.05,
           f"relative error {rel:.3f}")

    # worker-count independence
    o1 = render(grid, dec, None, None, cam, RenderConfig(resolution=48, n_workers=1))
    o4 = render(grid, dec, None, None, cam, RenderConfig(resolution=48, n_workers=4))
    same_bits = np.array_equal(o1.composed, o4.composed) and np.array_equal(o1.mask, o4.mask)
    _check(results, "render", "renders are worker-count independent", same_bits, "bit-identical")

    # camera sphere constraint
    mus = rng.uniform(-np.pi, np.pi, 2000)
    nus = rng.uniform(0.2, np.pi - 0.2, 2000)
    from .camera import DEFAULT_LOOKAT
    worst_r = max(
        abs(np.linalg.norm(camera_from_spherical(m, n).center - DEFAULT_LOOKAT) - SPHERE_RADIUS)
        for m, n in zip(mus, nus)
    )
    _check(results, "render", "cameras sit on the fixed sphere", worst_r <= 1e-6,
           f"max radius gap {worst_r:.2e}")

    # iso-surface of an exact sphere level set
    iso_grid, iso_dec = make_sphere_field(radius=0.5, sharpness=40.0, resolution=192)
    mesh = extract_isosurface(iso_grid, iso_dec, SPHERE_LEVEL, 64)
    radii = np.linalg.norm(mesh.vertices, axis=1)
    err = np.abs(radii - 0.5).max()
    _check(results, "render", "iso-surface recovers the sphere", err < 2 * (2 / 64),
           f"max radial error {err:.4f}")
    empty = extract_isosurface(iso_grid, iso_dec, 1e9, 32)
    _check(results, "render", "empty level set gives an empty mesh", empty.num_faces == 0,
           f"{empty.num_faces} faces")
    return results


def schedule_suite() -> list[CheckResult]:
    results: list[CheckResult] = []
    checks = [
        ("pose-reg weight at stated breakpoints",
         schedules.lambda_preg(0) == 0.5 and schedules.lambda_preg(200_000) == 0.5
         and schedules.lambda_preg(300_000) == 0.25 and schedules.lambda_preg(400_000) == 0.0
         and schedules.lambda_preg(5_000_000) == 0.0),
        ("swap probability at stated breakpoints",
         schedules.swap_probability(0) == 1.0 and schedules.swap_probability(500_000) == 0.85
         and schedules.swap_probability(1_000_000) == 0.7
         and schedules.swap_probability(9_000_000) == 0.7),
        ("resolution ramp at stated breakpoints",
         schedules.neural_resolution(9_000_000) == 64
         and schedules.neural_resolution(10_500_000) == 96
         and schedules.neural_resolution(11_000_000) == 128
         and schedules.neural_resolution(12_000_000) == 128),
        ("stage boundaries and flags",
         schedules.stage_of(5_000_000) == schedules.StagePhase(1, False, False)
         and schedules.stage_of(100_000) == schedules.StagePhase(1, True, False)
         and schedules.stage_of(8_000_000) == schedules.StagePhase(2, False, True)
         and schedules.stage_of(12_000_000) == schedules.StagePhase(3, False, True)),
    ]
    for name, ok in checks:
        _check(results, "schedule", name, ok, "exact comparison")

    a = BodyPose(np.array([0.1, 0.2, 0.3]), np.array([0.4, 0.5, 0.6]))
    b = BodyPose(np.array([0.2, 0.2, 0.3]), np.array([0.4, 0.5, 0.6]))
    ok = (schedules.pose_loss(a, a) == 0.0
          and abs(schedules.pose_loss(a, b) - 0.01) < 1e-15
          and schedules.pose_loss(a, b) == schedules.pose_loss(b, a))
    _check(results, "schedule", "pose loss arithmetic", ok, "zero/symmetry/unit checks")

    # alignment round-trip on a synthetic similarity motion
    rng = np.random.default_rng(5)
    template = generate_standin_template(detail_level=1)
    src = pose_mesh(template, BodyPose.zero()).joints[:4] + rng.normal(0, 0.05, (4, 3))
    motion = RigidTransform(axis_angle_to_matrix(rng.normal(size=3)), rng.normal(size=3), 1.3)
    solved = alignment.similarity_procrustes(motion.apply(src), src)
    gap = np.abs(solved.apply(motion.apply(src)) - src).max()
    _check(results, "schedule", "similarity alignment inverts a known motion", gap < 1e-9,
           f"max joint gap {gap:.2e}")
    return results


SUITES: dict[str, Callable[[], list[CheckResult]]] = {
    "geometry": geometry_suite,
    "deform": deform_suite,
    "render": render_suite,
    "schedule": schedule_suite,
}


def run_suites(names) -> list[CheckResult]:
    results: list[CheckResult] = []
    for name in names:
        results.extend(SUITES[name]())
    return results
