"""Synthetic two-layer demo chip, 16x16 logo and config.

``python -m artistic.demo OUTDIR`` regenerates the files shipped in
``artistic/data/demo``; the output is fully deterministic.
"""

from __future__ import annotations

import json
import os
import sys
from importlib import resources

import numpy as np

from .gdsii import ARef, Boundary, GdsLibrary, GdsStructure, GdsTransform, GdsUnits, Path, SRef, write_gds
from .png import write_png

UM = 1000  # dbu per micrometre at 1 nm dbu
ACTIVE, TOP_METAL = (1, 0), (134, 0)

LOGO = [
    "................",
    "......####......",
    "....########....",
    "...##########...",
    "..####....####..",
    "..###......###..",
    ".###..#..#..###.",
    ".###........###.",
    ".###.#....#.###.",
    ".###..####..###.",
    "..###......###..",
    "..####....####..",
    "...##########...",
    "....########....",
    "......####......",
    "................",
]


def _rect(layer, x0, y0, x1, y1) -> Boundary:
    return Boundary(layer[0], layer[1], ((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def demo_library() -> GdsLibrary:
    cell = GdsStructure("UNIT", (
        _rect(ACTIVE, 0, 0, 6 * UM, 4 * UM),
        _rect(ACTIVE, 1 * UM, 5 * UM, 5 * UM, 8 * UM),
        Path(*TOP_METAL, ((500, 2 * UM), (5500, 2 * UM), (5500, 7 * UM)), width=800, pathtype=0),
    ))
    pad = GdsStructure("PAD", (
        _rect(TOP_METAL, 0, 0, 10 * UM, 10 * UM),
        _rect(ACTIVE, 2 * UM, 2 * UM, 8 * UM, 8 * UM),
    ))
    top = GdsStructure("TOP", (
        # 5 x 4 array of units in the lower-left quadrant
        ARef("UNIT", GdsTransform(translate=(10 * UM, 10 * UM)), 5, 4, (8 * UM, 0), (0, 10 * UM)),
        # pads along the left edge and a rotated one at the top
        ARef("PAD", GdsTransform(translate=(2 * UM, 60 * UM)), 1, 4, (0, 0), (0, 14 * UM)),
        SRef("PAD", GdsTransform(angle_deg=90.0, translate=(30 * UM, 105 * UM))),
        # power ring and two straps crossing the logo area
        Path(*TOP_METAL, ((1 * UM, 1 * UM), (119 * UM, 1 * UM), (119 * UM, 119 * UM),
                          (1 * UM, 119 * UM), (1 * UM, 1 * UM)), width=2 * UM, pathtype=2),
        Path(*TOP_METAL, ((60 * UM, 80 * UM), (115 * UM, 80 * UM)), width=1500, pathtype=1),
        _rect(TOP_METAL, 90 * UM, 60 * UM, 92 * UM, 64 * UM),
        Boundary(*ACTIVE, ((60 * UM, 10 * UM), (110 * UM, 10 * UM), (85 * UM, 45 * UM))),
    ))
    return GdsLibrary("DEMO", GdsUnits(1e-3, 1e-9), (cell, pad, top))


def demo_logo() -> np.ndarray:
    ink = np.array([[c == "#" for c in row] for row in LOGO])
    return np.where(ink, 0, 255).astype(np.uint8)


def demo_config() -> dict:
    return {
        "gds_in": "chip.gds",
        "top_cell": "TOP",
        "top_metal": "134/0",
        "logo": {
            "path": "logo.png",
            "placement": [64.0, 64.0, 112.0, 112.0],
            "threshold": 128,
            "rules": {"cell_size": 2.0, "gap": 1.0, "min_cells": 1, "max_cells": 4,
                      "keepout": 0.5, "density_window": 4, "max_density": 0.6, "seed": 7,
                      "min_width": 1.0, "min_spacing": 1.0, "max_width": 6.0},
        },
        "frame": {"nm_per_px": 100.0, "window": "auto", "supersample": 4,
                  "max_tile_px": 262144, "downscale": 2, "dpi": 300.0, "part_max_px": 200000},
        "stack": [
            {"layer": "1/0", "color": "#3cb44b", "opacity": 0.8},
            {"layer": "134/0", "color": "#ffd700", "opacity": 0.6},
        ],
        "background": "#000000",
        "outputs": {"gds_out": "out/chip_art.gds", "png_out": "out/chip.png",
                    "pdf_out": "out/chip.pdf", "svg_out": "out/art.svg"},
    }


def write_demo(directory: str) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = [os.path.join(directory, n) for n in ("chip.gds", "logo.png", "demo.json")]
    write_gds(demo_library(), paths[0])
    write_png(paths[1], demo_logo())
    with open(paths[2], "w") as fh:
        json.dump(demo_config(), fh, indent=2)
        fh.write("\n")
    return paths


def demo_dir() -> str:
    """Directory of the demo files shipped with the package."""
    return str(resources.files("artistic") / "data" / "demo")


if __name__ == "__main__":
    for p in write_demo(sys.argv[1] if len(sys.argv) > 1 else "."):
        print(p)
