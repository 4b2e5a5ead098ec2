"""Canonical 3D field: three axis-aligned multi-layer feature grids plus a
small fixed-weight MLP decoder producing color and density.

A sample point inside the [-1, 1]^3 cube is projected onto the XY, YZ, and XZ
planes. Each plane holds D depth layers of R x R x C features; the layer is
chosen by nearest-neighbor lookup along the plane's orthogonal axis and the
feature is bilinearly interpolated in-plane. The three plane features are
summed and decoded. Points outside the cube yield a zero feature vector.

Grid and decoder binaries are little-endian float32 with self-describing
headers, so round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError
from .geometry import TriangleMesh

GRID_MAGIC = b"QSG1"
DECODER_MAGIC = b"QSD1"
FORMAT_VERSION = 1

# (first spatial axis, second spatial axis, depth axis) per plane: XY, YZ, XZ
PLANE_AXES = ((0, 1, 2), (1, 2, 0), (0, 2, 1))


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class FieldSample:
    """Decoded field value at one point: RGB in [0, 1] and density >= 0."""

    color: np.ndarray
    density: float


class TriGrid:
    """Three feature planes of shape (D, R, R, C) over the [-1, 1]^3 cube.

    planes[p, layer, i, j, c]: i indexes the plane's first spatial axis and
    j the second (node i sits at coordinate -1 + 2i/(R-1)); layer centers are
    evenly spaced along the orthogonal axis.
    """

    def __init__(self, planes):
        planes = np.ascontiguousarray(planes, dtype=np.float32)
        if planes.ndim != 5 or planes.shape[0] != 3:
            raise ValidationError(f"planes must be (3, D, R, R, C), got {planes.shape}")
        _, d, r1, r2, c = planes.shape
        if r1 != r2:
            raise ValidationError("plane grids must be square")
        if d < 1 or r1 < 2 or c < 1:
            raise ValidationError("need D >= 1, R >= 2, C >= 1")
        if not np.all(np.isfinite(planes)):
            raise ValidationError("grid features must be finite")
        self.planes = planes
        self.planes.flags.writeable = False

    @property
    def depth(self) -> int:
        return self.planes.shape[1]

    @property
    def resolution(self) -> int:
        return self.planes.shape[2]

    @property
    def channels(self) -> int:
        return self.planes.shape[4]

    @classmethod
    def zeros(cls, depth: int, resolution: int, channels: int) -> "TriGrid":
        return cls(np.zeros((3, depth, resolution, resolution, channels), dtype=np.float32))

    def sample(self, points) -> np.ndarray:
        """Summed tri-plane features for a batch of points, (n, C) float64.

        Out-of-cube points return zeros.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.zeros((pts.shape[0], self.channels))
        inside = np.all(np.abs(pts) <= 1.0, axis=1)
        if not inside.any():
            return out
        p = pts[inside]
        acc = np.zeros((p.shape[0], self.channels))
        for plane, (si, ti, di) in enumerate(PLANE_AXES):
            acc += self._sample_plane(plane, p[:, si], p[:, ti], p[:, di])
        out[inside] = acc
        return out

    def _sample_plane(self, plane: int, s, t, depth_coord) -> np.ndarray:
        r, d = self.resolution, self.depth
        if d == 1:
            layer = np.zeros(len(s), dtype=np.int64)
        else:
            layer = np.clip(np.rint((depth_coord + 1.0) * 0.5 * (d - 1)), 0, d - 1).astype(np.int64)
        gs = (s + 1.0) * 0.5 * (r - 1)
        gt = (t + 1.0) * 0.5 * (r - 1)
        i0 = np.clip(np.floor(gs), 0, r - 2).astype(np.int64)
        j0 = np.clip(np.floor(gt), 0, r - 2).astype(np.int64)
        fs = (gs - i0)[:, None]
        ft = (gt - j0)[:, None]
        grid = self.planes[plane]
        f00 = grid[layer, i0, j0]
        f10 = grid[layer, i0 + 1, j0]
        f01 = grid[layer, i0, j0 + 1]
        f11 = grid[layer, i0 + 1, j0 + 1]
        return ((1 - fs) * (1 - ft) * f00 + fs * (1 - ft) * f10
                + (1 - fs) * ft * f01 + fs * ft * f11)


def sample_trigrid(grid: TriGrid, point) -> np.ndarray:
    """Feature vector (C,) at a single point."""
    return grid.sample(np.asarray(point, dtype=np.float64)[None, :])[0]


class FieldDecoder:
    """Fully-connected decoder: softplus hidden activations, then a 4-channel
    output squashed to RGB (sigmoid) and density (softplus)."""

    def __init__(self, layers, grid_binding=None):
        self.layers = [
            (np.ascontiguousarray(w, dtype=np.float32), np.ascontiguousarray(b, dtype=np.float32))
            for w, b in layers
        ]
        if not self.layers:
            raise ValidationError("decoder needs at least one layer")
        prev = None
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValidationError(f"layer {i}: weight/bias shapes are inconsistent")
            if prev is not None and w.shape[1] != prev:
                raise ValidationError(f"layer {i}: input width {w.shape[1]} != previous output {prev}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {i}: non-finite weights")
            prev = w.shape[0]
        if prev != 4:
            raise ValidationError(f"final layer must output 4 channels (RGB + density), got {prev}")
        self.grid_binding = tuple(int(v) for v in grid_binding) if grid_binding else None

    @property
    def in_features(self) -> int:
        return self.layers[0][0].shape[1]

    @classmethod
    def random(cls, in_features: int, hidden=(64,), seed: int = 0) -> "FieldDecoder":
        """Deterministic random decoder (scaled normal init)."""
        rng = np.random.default_rng(seed)
        dims = [in_features, *hidden, 4]
        layers = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            scale = 1.0 / np.sqrt(d_in)
            layers.append((rng.normal(0.0, scale, (d_out, d_in)), rng.normal(0.0, 0.1, d_out)))
        return cls(layers)

    def forward(self, features) -> tuple[np.ndarray, np.ndarray]:
        """Batch decode: (colors (n, 3) in [0, 1], densities (n,) >= 0)."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.in_features:
            raise ValidationError(
                f"feature length {x.shape[1]} != decoder input width {self.in_features}"
            )
        for w, b in self.layers[:-1]:
            x = softplus(x @ w.T.astype(np.float64) + b.astype(np.float64))
        w, b = self.layers[-1]
        x = x @ w.T.astype(np.float64) + b.astype(np.float64)
        return sigmoid(x[:, :3]), softplus(x[:, 3])


def decode(decoder: FieldDecoder, feature) -> FieldSample:
    """Decode a single feature vector."""
    colors, density = decoder.forward(np.asarray(feature, dtype=np.float64)[None, :])
    return FieldSample(colors[0], float(density[0]))


def check_field_compatible(grid: TriGrid, decoder: FieldDecoder) -> None:
    """Raise if the decoder cannot consume this grid's features."""
    if decoder.in_features != grid.channels:
        raise ValidationError(
            f"decoder expects {decoder.in_features} channels, grid provides {grid.channels}"
        )


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}")
    return data


def save_grid(path, grid: TriGrid) -> None:
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<4I", FORMAT_VERSION, grid.depth, grid.resolution, grid.channels))
        fh.write(np.ascontiguousarray(grid.planes, dtype="<f4").tobytes())


def load_grid(path) -> TriGrid:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != GRID_MAGIC:
            raise FormatError(f"{path}: not a tri-grid file (bad magic)")
        version, depth, res, chans = struct.unpack("<4I", _read_exact(fh, 16, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        count = 3 * depth * res * res * chans
        data = np.frombuffer(_read_exact(fh, 4 * count, "grid data"), dtype="<f4")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after grid data")
    return TriGrid(data.reshape(3, depth, res, res, chans))


def save_decoder(path, decoder: FieldDecoder) -> None:
    binding = decoder.grid_binding or (decoder.in_features, 0, 0)
    with open(path, "wb") as fh:
        fh.write(DECODER_MAGIC)
        fh.write(struct.pack("<2I", FORMAT_VERSION, len(decoder.layers)))
        for w, _ in decoder.layers:
            fh.write(struct.pack("<2I", w.shape[0], w.shape[1]))
        fh.write(struct.pack("<3I", *binding))
        for w, b in decoder.layers:
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_decoder(path) -> FieldDecoder:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != DECODER_MAGIC:
            raise FormatError(f"{path}: not a decoder weights file (bad magic)")
        version, n_layers = struct.unpack("<2I", _read_exact(fh, 8, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if not 1 <= n_layers <= 64:
            raise FormatError(f"{path}: implausible layer count {n_layers}")
        shapes = [
            struct.unpack("<2I", _read_exact(fh, 8, f"layer {i} shape"))
            for i in range(n_layers)
        ]
        binding = struct.unpack("<3I", _read_exact(fh, 12, "grid binding"))
        layers = []
        for i, (out_dim, in_dim) in enumerate(shapes):
            w = np.frombuffer(
                _read_exact(fh, 4 * out_dim * in_dim, f"layer {i} weights"), dtype="<f4"
            ).reshape(out_dim, in_dim)
            b = np.frombuffer(_read_exact(fh, 4 * out_dim, f"layer {i} bias"), dtype="<f4")
            layers.append((w, b))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after decoder data")
    return FieldDecoder(layers, grid_binding=binding)


def density_volume(grid: TriGrid, decoder: FieldDecoder, grid_res: int) -> np.ndarray:
    """Decoded density on a grid_res^3 lattice over the cube, indexed [ix, iy, iz]."""
    check_field_compatible(grid, decoder)
    axis = np.linspace(-1.0, 1.0, grid_res)
    vol = np.empty((grid_res, grid_res, grid_res))
    yy, zz = np.meshgrid(axis, axis, indexing="ij")
    slab = np.empty((grid_res * grid_res, 3))
    slab[:, 1] = yy.ravel()
    slab[:, 2] = zz.ravel()
    for ix, x in enumerate(axis):  # slab at a time to bound memory
        slab[:, 0] = x
        _, density = decoder.forward(grid.sample(slab))
        vol[ix] = density.reshape(grid_res, grid_res)
    return vol


def extract_isosurface(grid: TriGrid, decoder: FieldDecoder, level: float,
                       grid_res: int) -> TriangleMesh:
    """Marching-cubes mesh of the density level set over [-1, 1]^3.

    A level outside the sampled density range yields an empty mesh rather
    than an error.
    """
    from skimage import measure

    if grid_res < 8:
        raise ValidationError(f"grid_res must be >= 8, got {grid_res}")
    vol = density_volume(grid, decoder, grid_res)
    h = 2.0 / (grid_res - 1)
    try:
        verts, faces, _, _ = measure.marching_cubes(vol, level=level, spacing=(h, h, h))
    except ValueError:  # level set is empty
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    verts = verts - 1.0
    return TriangleMesh(verts, faces.astype(np.int64), drop_degenerate=True)
