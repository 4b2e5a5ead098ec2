"""Volume rendering of the (optionally deformed) canonical field.

Per ray: sample depths on [t_near, t_far] (midpoint stratification by
default, jittered stratification behind a seed), warp each sample point into
canonical space through the deformation context, sample and decode the
tri-grid, then alpha-composite:

    delta_i = t_{i+1} - t_i            (final delta runs to t_far)
    a_i     = 1 - exp(-sigma_i delta_i)
    T_i     = prod_{j<i} (1 - a_j)
    color   = sum_i T_i a_i f_i        mask = sum_i T_i a_i

The accumulated mask composes the raw render over a background:
composed = (1 - mask) * bg + raw. A bilinear upsampler stands in for a
learned super-resolution stage.

Rendering is deterministic: rays are processed in fixed-size row tiles whose
results are written by index, so the output is bit-identical for any worker
count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .camera import CameraParams, camera_from_spherical, generate_rays, wrap_angle
from .deformation import DeformationConfig, DeformationContext, build_context, warp_points
from .errors import ValidationError
from .trigrid import FieldDecoder, FieldSample, TriGrid, check_field_compatible

_TILE_ROWS = 16


@dataclass(frozen=True)
class RenderConfig:
    """Renderer settings; defaults hold for all tests.

    importance_samples > 0 enables a second, weight-guided sampling pass.
    """

    resolution: int = 64
    samples_per_ray: int = 48
    importance_samples: int = 0
    t_near: float = 2.25
    t_far: float = 3.3
    upsample_factor: int = 4
    background: tuple = (1.0, 1.0, 1.0)
    stratified_jitter: bool = False
    seed: int = 0
    n_workers: int = 1

    def __post_init__(self):
        if not self.t_near < self.t_far:
            raise ValidationError("t_near must be < t_far")
        if self.samples_per_ray < 2:
            raise ValidationError("samples_per_ray must be >= 2")
        if self.importance_samples < 0:
            raise ValidationError("importance_samples must be >= 0")
        if self.resolution < 8 or self.resolution % 4 != 0:
            raise ValidationError("resolution must be a multiple of 4, >= 8")
        if self.upsample_factor < 1:
            raise ValidationError("upsample_factor must be >= 1")
        if self.n_workers < 1:
            raise ValidationError("n_workers must be >= 1")


@dataclass(frozen=True)
class RenderOutput:
    """raw/mask at render resolution, composed = (1-mask)*bg + raw, and the
    bilinearly upsampled composed image."""

    raw: np.ndarray        # (res, res, 3)
    mask: np.ndarray       # (res, res)
    composed: np.ndarray   # (res, res, 3)
    upsampled: np.ndarray  # (res*factor, res*factor, 3)


def quadrature(ts, densities, colors, t_far: Optional[float] = None):
    """Alpha-composite one ray; returns (rgb (3,), mask scalar).

    Sample positions must be strictly increasing. Without t_far the last
    sample has no interval and contributes nothing.
    """
    rgb, mask = quadrature_batch(
        np.asarray(ts, dtype=np.float64)[None, :],
        np.asarray(densities, dtype=np.float64)[None, :],
        np.asarray(colors, dtype=np.float64)[None, :, :],
        t_far,
    )
    return rgb[0], float(mask[0])


def quadrature_samples(samples, t_far: Optional[float] = None):
    """quadrature() over a list of (t, FieldSample) pairs."""
    ts = np.array([t for t, _ in samples], dtype=np.float64)
    densities = np.array([s.density for _, s in samples], dtype=np.float64)
    colors = np.array([s.color for _, s in samples], dtype=np.float64)
    return quadrature(ts, densities, colors, t_far)


def quadrature_batch(ts, densities, colors, t_far: Optional[float] = None):
    """Vectorized quadrature over rays: ts/densities (R, N), colors (R, N, 3).

    Returns (rgb (R, 3), mask (R,)).
    """
    ts = np.asarray(ts, dtype=np.float64)
    densities = np.asarray(densities, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64)
    if np.any(np.diff(ts, axis=1) <= 0):
        raise ValidationError("sample positions must be strictly increasing")
    if t_far is not None:
        if np.any(ts[:, -1] > t_far):
            raise ValidationError("samples extend beyond t_far")
        deltas = np.concatenate([np.diff(ts, axis=1), t_far - ts[:, -1:]], axis=1)
    else:
        deltas = np.diff(ts, axis=1)
        densities = densities[:, :-1]
        colors = colors[:, :-1, :]
    alpha = 1.0 - np.exp(-densities * deltas)
    trans = np.cumprod(1.0 - alpha, axis=1)
    trans = np.concatenate([np.ones_like(trans[:, :1]), trans[:, :-1]], axis=1)
    weights = trans * alpha
    return np.einsum("rn,rnc->rc", weights, colors), weights.sum(axis=1)


def composite(raw, mask, background):
    """Compose a raw render over a background: (1 - mask) * bg + raw."""
    raw = np.asarray(raw, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if raw.shape[:2] != mask.shape:
        raise ValidationError(f"raw {raw.shape} and mask {mask.shape} disagree")
    bg = np.asarray(background, dtype=np.float64)
    if bg.shape == (3,):
        bg = np.broadcast_to(bg, raw.shape)
    elif bg.shape != raw.shape:
        raise ValidationError(f"background shape {bg.shape} does not match render {raw.shape}")
    return (1.0 - mask)[..., None] * bg + raw


def upsample(image, factor: int) -> np.ndarray:
    """Bilinear upsampling by an integer factor; factor 1 is the identity."""
    if factor < 1:
        raise ValidationError("factor must be >= 1")
    img = np.asarray(image, dtype=np.float64)
    if factor == 1:
        return img.copy()
    h, w = img.shape[:2]
    ys = (np.arange(h * factor) + 0.5) / factor - 0.5
    xs = (np.arange(w * factor) + 0.5) / factor - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.clip(np.floor(ys), 0, h - 2).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, w - 2).astype(np.int64)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    if img.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = (1 - fx) * img[y0][:, x0] + fx * img[y0][:, x0 + 1]
    bot = (1 - fx) * img[y0 + 1][:, x0] + fx * img[y0 + 1][:, x0 + 1]
    return (1 - fy) * top + fy * bot


def _ray_ts(config: RenderConfig, n_rays: int) -> np.ndarray:
    """Stratified depths (n_rays, N): one sample per equal bin, midpoint
    placement unless jitter is enabled."""
    n = config.samples_per_ray
    h = (config.t_far - config.t_near) / n
    if config.stratified_jitter:
        offsets = np.random.default_rng(config.seed).uniform(0.0, 1.0, size=(n_rays, n))
    else:
        offsets = np.full((n_rays, n), 0.5)
    return config.t_near + (np.arange(n)[None, :] + offsets) * h


def _importance_ts(ts: np.ndarray, weights: np.ndarray, n_new: int, t_far: float) -> np.ndarray:
    """Inverse-CDF resampling of per-ray intervals proportional to coarse
    quadrature weights; returns merged, sorted depths.

    Weights are blurred (neighbor max, then a small uniform floor) so the
    fine pass also covers the onset bin just before a density step.
    """
    r, n = ts.shape
    edges = np.concatenate([ts, np.full((r, 1), t_far)], axis=1)  # (r, n+1)
    padded = np.concatenate([weights[:, :1], weights, weights[:, -1:]], axis=1)
    pooled = np.maximum(padded[:, :-1], padded[:, 1:])
    w = 0.5 * (pooled[:, :-1] + pooled[:, 1:]) + 0.01 / n
    cdf = np.cumsum(w, axis=1)
    cdf = cdf / cdf[:, -1:]
    cdf = np.concatenate([np.zeros((r, 1)), cdf], axis=1)
    quantiles = (np.arange(n_new) + 0.5) / n_new
    idx = np.empty((r, n_new), dtype=np.int64)
    for i in range(r):  # searchsorted has no batched form
        idx[i] = np.searchsorted(cdf[i], quantiles, side="right") - 1
    idx = np.clip(idx, 0, n - 1)
    lo = np.take_along_axis(cdf, idx, axis=1)
    hi = np.take_along_axis(cdf, idx + 1, axis=1)
    frac = (quantiles[None, :] - lo) / np.maximum(hi - lo, 1e-12)
    t0 = np.take_along_axis(edges, idx, axis=1)
    t1 = np.take_along_axis(edges, idx + 1, axis=1)
    new_ts = t0 + frac * (t1 - t0)
    merged = np.sort(np.concatenate([ts, new_ts], axis=1), axis=1)
    # enforce strict monotonicity after merging duplicates
    eps = 1e-9
    merged = np.maximum.accumulate(merged + eps * np.arange(merged.shape[1])[None, :], axis=1)
    return merged


def render(
    grid: TriGrid,
    decoder: FieldDecoder,
    template,
    pose,
    camera: CameraParams,
    config: RenderConfig = RenderConfig(),
    deform: DeformationConfig = DeformationConfig(),
) -> RenderOutput:
    """Full render pipeline for one camera.

    template/pose may both be None for an undeformed canonical render.
    """
    check_field_compatible(grid, decoder)
    ctx: Optional[DeformationContext] = None
    if template is not None and pose is not None:
        ctx = build_context(template, pose, deform)

    res = config.resolution
    origins, dirs = generate_rays(camera, res, res)
    origins = origins.reshape(-1, 3)
    dirs = dirs.reshape(-1, 3)
    ts_all = _ray_ts(config, res * res)

    raw = np.empty((res * res, 3))
    mask = np.empty(res * res)

    def eval_field(points: np.ndarray):
        if ctx is not None:
            points = warp_points(ctx, points)
        colors, densities = decoder.forward(grid.sample(points))
        return colors, densities

    def run_tile(start: int, stop: int):
        o, d, ts = origins[start:stop], dirs[start:stop], ts_all[start:stop]
        n_rays, n = ts.shape
        pts = o[:, None, :] + ts[..., None] * d[:, None, :]
        colors, densities = eval_field(pts.reshape(-1, 3))
        colors = colors.reshape(n_rays, n, 3)
        densities = densities.reshape(n_rays, n)
        if config.importance_samples > 0:
            _, coarse_w = quadrature_batch(ts, densities, colors, config.t_far)
            deltas = np.concatenate([np.diff(ts, axis=1), config.t_far - ts[:, -1:]], axis=1)
            alpha = 1.0 - np.exp(-densities * deltas)
            trans = np.cumprod(1.0 - alpha, axis=1)
            trans = np.concatenate([np.ones_like(trans[:, :1]), trans[:, :-1]], axis=1)
            ts = _importance_ts(ts, trans * alpha, config.importance_samples, config.t_far)
            n = ts.shape[1]
            pts = o[:, None, :] + ts[..., None] * d[:, None, :]
            colors, densities = eval_field(pts.reshape(-1, 3))
            colors = colors.reshape(n_rays, n, 3)
            densities = densities.reshape(n_rays, n)
        rgb, m = quadrature_batch(ts, densities, colors, config.t_far)
        raw[start:stop] = rgb
        mask[start:stop] = m

    tile = _TILE_ROWS * res  # fixed tile size keeps results worker-count independent
    spans = [(s, min(s + tile, res * res)) for s in range(0, res * res, tile)]
    if config.n_workers == 1:
        for span in spans:
            run_tile(*span)
    else:
        with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
            list(pool.map(lambda sp: run_tile(*sp), spans))

    raw = raw.reshape(res, res, 3)
    mask = np.clip(mask.reshape(res, res), 0.0, 1.0)
    composed = composite(raw, mask, config.background)
    return RenderOutput(raw, mask, composed, upsample(composed, config.upsample_factor))


def turntable_yaws(n_frames: int) -> list[float]:
    """Yaw sequence for a full turn starting at the frontal view."""
    if n_frames < 1:
        raise ValidationError("n_frames must be >= 1")
    return [wrap_angle(np.pi / 2 + 2.0 * np.pi * k / n_frames) for k in range(n_frames)]


def render_turntable(
    grid: TriGrid,
    decoder: FieldDecoder,
    template,
    pose,
    nu: float,
    n_frames: int,
    config: RenderConfig = RenderConfig(),
    deform: DeformationConfig = DeformationConfig(),
    lookat=None,
) -> list[tuple[float, RenderOutput]]:
    """Render a full yaw sweep at fixed nu; returns (mu, output) pairs."""
    from .camera import DEFAULT_LOOKAT

    lookat = DEFAULT_LOOKAT if lookat is None else lookat
    outs = []
    for mu in turntable_yaws(n_frames):
        cam = camera_from_spherical(mu, nu, lookat)
        outs.append((mu, render(grid, decoder, template, pose, cam, config, deform)))
    return outs
