#!/usr/bin/env python3
"""Regenerate the binary fixtures and frozen golden values under tests/data.

Everything here is deterministic; rerunning must reproduce the committed
files byte-for-byte (golden renders are frozen float32 rasters).
"""

import json
from pathlib import Path

import numpy as np

from quartershot.assets import make_bust_field, symmetrize_grid
from quartershot.camera import camera_from_spherical
from quartershot.images import write_f32
from quartershot.rendering import RenderConfig, render
from quartershot.trigrid import save_decoder, save_grid

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    grid, decoder = make_bust_field()
    save_grid(DATA / "bust_field.qsg", grid)
    save_decoder(DATA / "bust_decoder.qsd", decoder)
    save_grid(DATA / "bust_field_symmetric.qsg", symmetrize_grid(grid))

    rng = np.random.default_rng(2024)
    features = np.round(rng.uniform(-1.0, 1.0, (16, grid.channels)), 6)
    colors, densities = decoder.forward(features)
    (DATA / "golden_decode.json").write_text(json.dumps({
        "features": features.tolist(),
        "colors": colors.tolist(),
        "densities": densities.tolist(),
    }, indent=1))

    cam = camera_from_spherical(np.pi / 2, np.pi / 2)
    for res in (64, 128):
        out = render(grid, decoder, None, None, cam, RenderConfig(resolution=res))
        write_f32(DATA / f"golden_composed_{res}.f32", out.composed)
        write_f32(DATA / f"golden_mask_{res}.f32", out.mask)
    print(f"wrote fixtures to {DATA}")


if __name__ == "__main__":
    main()
