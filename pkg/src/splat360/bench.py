"""Coordinate-system benchmark runner over the synthetic room."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import imgio
from .coordsys import (CoordSys, equal_budget_systems, init_collision_stats,
                       manhattan_alignment, sampling_projection_map)
from .geometry import ImageDims
from .scene import SceneSpec, gen_scene


def room_systems(spec: SceneSpec, budget: int) -> dict[str, CoordSys]:
    """Equal-budget systems whose bounds all cover the room from its center."""
    half = 0.5 * np.asarray(spec.room)
    diag = float(np.linalg.norm(half))
    return equal_budget_systems(
        budget,
        cart_bound=float(half.max()),
        sph_radius=diag,
        cyl_radius=float(np.hypot(half[0], half[2])),
        cyl_half_height=float(half[1]),
    )


def run_benchmark(spec: SceneSpec, budget: int, dims: ImageDims,
                  out_dir: str | Path, oversample: int = 4) -> dict:
    """Collision, coverage, and Manhattan-alignment tables + coverage PNGs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = gen_scene(spec)
    points = scene.cloud.positions.astype(np.float64)
    surfaces = {name: points[slice(*rng)] for name, rng in scene.surface_ranges.items()}
    systems = room_systems(spec, budget)

    collision_rows = []
    coverage_rows = []
    manhattan_rows = []
    results = {"systems": {k: s.resolutions for k, s in systems.items()},
               "budget": budget}

    for name, system in systems.items():
        hist = init_collision_stats(system, points)
        for plane, stats in hist.summary().items():
            collision_rows.append({"system": name, "plane": plane, **stats})
        results[f"{name}_collision_fraction"] = hist.collision_fraction

        coverages = []
        for shell in range(system.resolutions[0]):
            cov = sampling_projection_map(system, shell, dims, oversample)
            coverages.append(cov.coverage)
            coverage_rows.append({"system": name, "shell": shell,
                                  "shell_value": cov.shell_value,
                                  "coverage": cov.coverage})
            gray = (cov.hits / max(cov.hits.max(), 1)) ** 0.5  # sqrt for visibility
            imgio.write_png(out / f"coverage_{name}_shell{shell:02d}.png",
                            np.repeat(gray[..., None], 3, axis=2))
        results[f"{name}_coverage"] = coverages

        align = manhattan_alignment(system, surfaces)
        for label, frac in align.items():
            manhattan_rows.append({"system": name, "label": label, "fraction": frac})
        results[f"{name}_manhattan"] = align

    for fname, rows in (("collisions.csv", collision_rows),
                        ("coverage.csv", coverage_rows),
                        ("manhattan.csv", manhattan_rows)):
        with open(out / fname, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return results
