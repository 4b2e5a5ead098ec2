"""Procedural stand-in assets: structured tri-grid fields with hand-crafted
decoders, used by the CLI's gen-assets command and as deterministic fixtures.

The bust field stores quadric distance channels for a head blob and a
shoulder blob plus raw coordinate channels; its decoder turns the quadrics
into a union-of-blobs density and mixes the coordinate channels into a
smooth color gradient. Everything is exactly reproducible: no randomness,
float32 grids, fixed weights.
"""

from __future__ import annotations

import numpy as np

from .trigrid import FieldDecoder, TriGrid

BUST_GRID_RESOLUTION = 96
BUST_GRID_DEPTH = 2

HEAD_CENTER_Y = 0.16
HEAD_RADIUS = 0.15
BODY_CENTER_Y = -0.18
BODY_AXES = (0.30, 0.16, 0.22)


def make_bust_field() -> tuple[TriGrid, FieldDecoder]:
    """A head-and-shoulders test field: two quadric blobs plus color channels.

    Channels: 0 = head quadric, 1 = shoulder quadric, 2..4 = x/y/z coordinate
    ramps (channel 2 carries a small depth-layer offset so the layer-selection
    path shows up in rendered output).
    """
    r = BUST_GRID_RESOLUTION
    coords = np.linspace(-1.0, 1.0, r)
    planes = np.zeros((3, BUST_GRID_DEPTH, r, r, 5), dtype=np.float32)

    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    planes[0, :, :, :, 0] = xx**2 + (yy - HEAD_CENTER_Y) ** 2
    planes[0, :, :, :, 1] = (xx / BODY_AXES[0]) ** 2 + ((yy - BODY_CENTER_Y) / BODY_AXES[1]) ** 2
    planes[0, 0, :, :, 2] = xx
    planes[0, 1, :, :, 2] = xx + 0.05
    planes[0, :, :, :, 3] = yy

    yy, zz = np.meshgrid(coords, coords, indexing="ij")
    planes[1, :, :, :, 0] = zz**2
    planes[1, :, :, :, 1] = (zz / BODY_AXES[2]) ** 2
    planes[1, :, :, :, 4] = zz

    grid = TriGrid(planes)

    w1 = np.zeros((5, 5))
    b1 = np.zeros(5)
    w1[0, 0], b1[0] = -120.0, 120.0 * HEAD_RADIUS**2   # head blob gate
    w1[1, 1], b1[1] = -25.0, 25.0                      # shoulder blob gate
    w1[2, 2], b1[2] = 3.0, 1.0                         # x ramp
    w1[3, 3], b1[3] = 3.0, 1.0                         # y ramp
    w1[4, 4], b1[4] = 3.0, 1.0                         # z ramp

    w2 = np.array([
        [0.0, 0.1, 0.8, -0.5, 0.0],
        [0.0, 0.0, 0.0, 0.7, 0.3],
        [0.2, 0.0, -0.6, 0.0, 0.5],
        [40.0, 30.0, 0.0, 0.0, 0.0],
    ])
    b2 = np.array([-1.0, -1.2, -0.8, -8.0])
    decoder = FieldDecoder(
        [(w1, b1), (w2, b2)],
        grid_binding=(grid.channels, grid.depth, grid.resolution),
    )
    return grid, decoder


def symmetrize_grid(grid: TriGrid) -> TriGrid:
    """Average a grid with its x-mirror so the decoded field satisfies
    f(x, y, z) = f(-x, y, z)."""
    planes = np.array(grid.planes)
    mirrored = np.empty_like(planes)
    mirrored[0] = planes[0][:, ::-1]   # XY plane: x is the first spatial axis
    mirrored[1] = planes[1][::-1]      # YZ plane: x is the depth axis
    mirrored[2] = planes[2][:, ::-1]   # XZ plane: x is the first spatial axis
    return TriGrid((planes + mirrored) * np.float32(0.5))


def make_sphere_field(
    radius: float = 0.25,
    sharpness: float = 20000.0,
    center=(0.0, 0.0, 0.0),
    resolution: int = 128,
) -> tuple[TriGrid, FieldDecoder]:
    """A single-channel field whose density level set {softplus = ln 2} is
    exactly the sphere |x - center| = radius, with constant color.

    density(x) = softplus(sharpness * (radius^2 - |x - center|^2)); the ln 2
    level sits at the sphere for any sharpness, which only controls how hard
    the shell is.
    """
    cx, cy, cz = center
    coords = np.linspace(-1.0, 1.0, resolution)
    planes = np.zeros((3, 1, resolution, resolution, 1), dtype=np.float32)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    planes[0, 0, :, :, 0] = (xx - cx) ** 2 + (yy - cy) ** 2
    _, zz = np.meshgrid(coords, coords, indexing="ij")
    planes[1, 0, :, :, 0] = (zz - cz) ** 2

    grid = TriGrid(planes)
    w = np.array([[0.0], [0.0], [0.0], [-sharpness]])
    b = np.array([0.2, 0.2, 0.2, sharpness * radius * radius])
    return grid, FieldDecoder([(w, b)], grid_binding=(1, 1, resolution))

SPHERE_LEVEL = float(np.log(2.0))  # density at the exact sphere surface
