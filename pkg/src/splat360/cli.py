"""Command-line interface exposing every pipeline stage.

Each stage reads its predecessor's artifacts from disk, so any step can
be rerun in isolation. Failures exit nonzero after printing a
machine-readable JSON error object.
"""

from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import imgio
from .bench import run_benchmark
from .config import RunConfig
from .gaussians import depth_prune
from .geometry import ImageDims, Pose
from .metrics import evaluate_pair, write_reports
from .pipeline import run_pipeline, source_views
from .ply import ply_read, ply_write
from .rasterizer import RenderOptions, render_cubemap, render_equirect
from .retrieval import colorize_cloud
from .scene import SceneSpec, gen_scene, load_scene, save_scene
from .triplane import (AttentionParams, DecoderParams, TriplaneGrid,
                       cross_plane_attention, decode_gaussians, init_from_points,
                       seeded_base, triplane_to_image_attention)


def _fail_json(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:  # noqa: BLE001 - the CLI boundary reports everything
            click.echo(json.dumps({"error": {"type": type(exc).__name__,
                                             "message": str(exc)}}))
            sys.exit(1)
    return wrapper


def _load_pose(poses_file: str | None, camera: int, position: str | None) -> Pose:
    if position is not None:
        xyz = [float(v) for v in position.split(",")]
        return Pose(np.eye(3), np.asarray(xyz))
    if poses_file is None:
        raise click.UsageError("provide --poses/--camera or --position x,y,z")
    doc = json.loads(Path(poses_file).read_text())
    return Pose.from_matrix(np.asarray(doc["cameras"][camera]["cam_to_world"]))


def _read_image(path: str) -> np.ndarray:
    p = Path(path)
    if p.suffix.lower() == ".png":
        return imgio.read_png(p)
    if p.suffix.lower() == ".exr":
        return imgio.read_exr(p)
    raise ValueError(f"unsupported image format: {p.suffix}")


def _dims(width: int, height: int) -> ImageDims:
    return ImageDims(width, height)


@click.group()
def main() -> None:
    """Cylindrical-triplane panoramic Gaussian splatting toolkit."""


_render_opts = [
    click.option("--width", default=1024, show_default=True),
    click.option("--height", default=512, show_default=True),
    click.option("--threads", default=1, show_default=True),
    click.option("--tile-size", default=16, show_default=True),
    click.option("--background", default="0,0,0", show_default=True,
                 help="background color r,g,b in [0,1]"),
    click.option("--pole-clamp-deg", default=89.5, show_default=True),
    click.option("--no-exr", is_flag=True, help="skip EXR outputs"),
]


def _with_options(options):
    def deco(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn
    return deco


def _make_opts(threads, tile_size, background, pole_clamp_deg, **extra) -> RenderOptions:
    bg = tuple(float(v) for v in background.split(","))
    return RenderOptions(tile_size=tile_size, background=bg,
                         pole_clamp_deg=pole_clamp_deg, threads=threads, **extra)


def _render_common(cloud_path, out, renderer, width, height, threads, tile_size,
                   background, pole_clamp_deg, no_exr, poses, camera, position):
    cloud = ply_read(cloud_path)
    pose = _load_pose(poses, camera, position)
    opts = _make_opts(threads, tile_size, background, pole_clamp_deg)
    t0 = time.perf_counter()
    pano = renderer(cloud, pose, _dims(width, height), opts)
    dt = time.perf_counter() - t0
    written = pano.save(out, exr=not no_exr)
    for p in written:
        click.echo(str(p))
    click.echo(json.dumps({"render_seconds": round(dt, 3), "gaussians": len(cloud)}))


@main.command()
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, help="output stem (writes .png/.exr/_depth.exr)")
@click.option("--poses", type=click.Path(exists=True))
@click.option("--camera", default=0, show_default=True)
@click.option("--position", help="camera position x,y,z (identity rotation)")
@_with_options(_render_opts)
@_fail_json
def render(cloud_path, out, poses, camera, position, width, height, threads,
           tile_size, background, pole_clamp_deg, no_exr):
    """Render a PLY cloud to an equirectangular panorama (direct path)."""
    _render_common(cloud_path, out, render_equirect, width, height, threads,
                   tile_size, background, pole_clamp_deg, no_exr, poses, camera,
                   position)


@main.command("render-cubemap")
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True)
@click.option("--poses", type=click.Path(exists=True))
@click.option("--camera", default=0, show_default=True)
@click.option("--position", help="camera position x,y,z (identity rotation)")
@_with_options(_render_opts)
@_fail_json
def render_cubemap_cmd(cloud_path, out, poses, camera, position, width, height,
                       threads, tile_size, background, pole_clamp_deg, no_exr):
    """Render via six pinhole faces stitched into a panorama (oracle path)."""
    _render_common(cloud_path, out, render_cubemap, width, height, threads,
                   tile_size, background, pole_clamp_deg, no_exr, poses, camera,
                   position)


@main.command("metrics")
@click.option("--render", "render_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--depth", "depth_path", type=click.Path(exists=True))
@click.option("--gt-depth", "gt_depth_path", type=click.Path(exists=True))
@click.option("--json-out", type=click.Path())
@click.option("--csv-out", type=click.Path())
@_fail_json
def metrics_cmd(render_path, gt_path, depth_path, gt_depth_path, json_out, csv_out):
    """Quality metrics for a render/reference pair (PNG or EXR inputs)."""
    report = evaluate_pair(
        _read_image(render_path), _read_image(gt_path),
        imgio.read_exr(depth_path) if depth_path else None,
        imgio.read_exr(gt_depth_path) if gt_depth_path else None,
        name=Path(render_path).stem,
    )
    if json_out or csv_out:
        write_reports([report], json_out, csv_out)
    click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))


@main.command("gen-scene")
@click.option("--out", required=True, type=click.Path())
@click.option("--width", default=1024, show_default=True)
@click.option("--height", default=512, show_default=True)
@click.option("--room", default="6,3,4", show_default=True, help="extents x,y,z meters")
@click.option("--checker-size", default=0.5, show_default=True)
@click.option("--spacing", default=0.05, show_default=True)
@click.option("--cameras", default="-0.5,0,0;0.5,0,0", show_default=True,
              help="semicolon-separated camera positions")
@click.option("--feature-height", default=64, show_default=True)
@click.option("--feature-dim", default=16, show_default=True)
@click.option("--mask-surface", type=click.Choice(
    ["wall_xneg", "wall_xpos", "ceiling", "floor", "wall_zneg", "wall_zpos"]),
    help="omit one surface from the emitted cloud.ply")
@click.option("--seed", default=0, show_default=True)
@_fail_json
def gen_scene_cmd(out, width, height, room, checker_size, spacing, cameras,
                  feature_height, feature_dim, mask_surface, seed):
    """Generate a synthetic room scene with analytic ground truth."""
    spec = SceneSpec(
        room=tuple(float(v) for v in room.split(",")),
        checker_size=checker_size, spacing=spacing,
        camera_positions=tuple(tuple(float(v) for v in c.split(","))
                               for c in cameras.split(";")),
        feature_height=feature_height, feature_dim=feature_dim, seed=seed,
    )
    manifest = save_scene(gen_scene(spec), out, _dims(width, height), mask_surface)
    click.echo(json.dumps(manifest, indent=2, sort_keys=True))


@main.command("triplane-init")
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--camera", default=0, show_default=True)
@click.option("--mode", type=click.Choice(["shared", "isolated"]), default="shared",
              show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--base-scale", default=0.1, show_default=True)
@click.option("--radius", default=10.0, show_default=True)
@click.option("--half-height", default=5.0, show_default=True)
@click.option("--resolution", default="16,64,128", show_default=True,
              help="n_r,n_z,n_theta")
@click.option("--fine-resolution", default="8,32,64", show_default=True)
@click.option("--dump-exr", type=click.Path(), help="debug-dump planes as EXR here")
@_fail_json
def triplane_init_cmd(scene_dir, camera, mode, out, seed, base_scale, radius,
                      half_height, resolution, fine_resolution, dump_exr):
    """Initialize one camera's triplane from the scene's feature points."""
    from .triplane import TriplaneConfig
    scene, meta = load_scene(scene_dir)
    n_r, n_z, n_theta = (int(v) for v in resolution.split(","))
    f_r, f_z, f_theta = (int(v) for v in fine_resolution.split(","))
    cfg = TriplaneConfig(radius, half_height, n_r, n_z, n_theta, f_r, f_z, f_theta,
                         scene.spec.feature_dim)
    base = seeded_base(cfg, seed + 4, base_scale)
    grid = init_from_points(scene.feature_points(), cfg, scene.poses[camera],
                            mode=mode, origin_camera=camera, base=base)
    grid.save(out)
    if dump_exr:
        dump = Path(dump_exr)
        dump.mkdir(parents=True, exist_ok=True)
        for name, plane in grid.planes().items():
            for c0 in range(0, plane.shape[2], 3):
                block = plane[:, :, c0:c0 + 3]
                if block.shape[2] < 3:
                    block = np.pad(block, ((0, 0), (0, 0), (0, 3 - block.shape[2])))
                imgio.write_exr(dump / f"{name}_c{c0:03d}.exr", block)
    click.echo(str(out))


@main.command("triplane-attend")
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--scene", "scene_dir", type=click.Path(exists=True),
              help="required for the image-attention pass")
@click.option("--cross-plane/--no-cross-plane", default=True, show_default=True)
@click.option("--image/--no-image", default=True, show_default=True)
@click.option("--params", "params_path", type=click.Path(exists=True),
              help="attention weight file (.bin); otherwise seeded")
@click.option("--seed", default=0, show_default=True)
@_fail_json
def triplane_attend_cmd(grid_path, out, scene_dir, cross_plane, image,
                        params_path, seed):
    """Run cross-plane and/or triplane-to-image attention on a saved grid."""
    grid = TriplaneGrid.load(grid_path)
    d = grid.config.feature_dim
    if cross_plane:
        params = (AttentionParams.load(params_path) if params_path
                  else AttentionParams.seeded(d, d, seed + 1))
        grid = cross_plane_attention(grid, params)
    if image:
        if scene_dir is None:
            raise click.UsageError("--scene is required for the image pass")
        scene, _ = load_scene(scene_dir)
        fmaps = [scene.feature_pano(i) for i in range(len(scene.poses))]
        fdims = ImageDims(2 * scene.spec.feature_height, scene.spec.feature_height)
        params = (AttentionParams.load(params_path) if params_path
                  else AttentionParams.seeded(d, d, seed + 2))
        grid = triplane_to_image_attention(grid, fmaps, scene.poses, fdims, params)
    grid.save(out)
    click.echo(str(out))


@main.command("triplane-decode")
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--decoder", "decoder_path", type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--decoder-hidden", default=32, show_default=True)
@_fail_json
def triplane_decode_cmd(grid_path, out, decoder_path, seed, decoder_hidden):
    """Decode a saved triplane grid into a volume-branch Gaussian PLY."""
    grid = TriplaneGrid.load(grid_path)
    decoder = (DecoderParams.load(decoder_path) if decoder_path
               else DecoderParams.seeded(grid.config.feature_dim, decoder_hidden,
                                         seed + 3))
    cloud = decode_gaussians(grid, decoder, grid.origin)
    ply_write(cloud, out)
    click.echo(json.dumps({"out": str(out), "gaussians": len(cloud)}))


def _views_from_files(scene_dir: str | Path):
    """Source views loaded from the scene directory's RGB/depth EXR files."""
    from .retrieval import SourceView
    scene_dir = Path(scene_dir)
    doc = json.loads((scene_dir / "poses.json").read_text())
    views = []
    for i, cam in enumerate(doc["cameras"]):
        pose = Pose.from_matrix(np.asarray(cam["cam_to_world"]))
        rgb = imgio.read_exr(scene_dir / f"rgb_cam{i}.exr")
        depth = imgio.read_exr(scene_dir / f"depth_cam{i}.exr")
        views.append(SourceView(np.clip(rgb, 0.0, 1.0), depth, pose, index=i))
    return views


@main.command("retrieve-rgb")
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--temperature", default=1.0, show_default=True)
@click.option("--head", "head_path", type=click.Path(exists=True),
              help="weight file with a 3x3 'head' tensor; identity if omitted")
@_fail_json
def retrieve_rgb_cmd(cloud_path, scene_dir, out, temperature, head_path):
    """Assign visibility-weighted colors from the scene's view files."""
    from .weights import load_tensors
    cloud = ply_read(cloud_path)
    views = _views_from_files(scene_dir)
    head = load_tensors(head_path)[0]["head"] if head_path else None
    ply_write(colorize_cloud(cloud, views, head=head, temperature=temperature), out)
    click.echo(str(out))


@main.command("prune")
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--deviation-threshold", default=0.5, show_default=True)
@click.option("--opacity-factor", default=0.1, show_default=True)
@click.option("--opacity-floor", default=1.0 / 255.0, show_default=True)
@_fail_json
def prune_cmd(cloud_path, scene_dir, out, deviation_threshold, opacity_factor,
              opacity_floor):
    """Depth-guided opacity down-weighting and pruning (file-fed depths)."""
    cloud = ply_read(cloud_path)
    views = _views_from_files(scene_dir)
    pruned = depth_prune(cloud, [v.ref_depth for v in views],
                         [v.pose for v in views], views[0].dims,
                         deviation_threshold, opacity_factor, opacity_floor)
    ply_write(pruned, out)
    click.echo(json.dumps({"out": str(out), "kept": len(pruned),
                           "removed": len(cloud) - len(pruned)}))


@main.command("bench-coords")
@click.option("--out", required=True, type=click.Path())
@click.option("--budget", default=11264, show_default=True,
              help="total plane cells per system")
@click.option("--width", default=256, show_default=True)
@click.option("--height", default=128, show_default=True)
@click.option("--room", default="6,3,4", show_default=True)
@click.option("--spacing", default=0.05, show_default=True)
@click.option("--oversample", default=4, show_default=True)
@_fail_json
def bench_coords_cmd(out, budget, width, height, room, spacing, oversample):
    """Cartesian vs spherical vs cylindrical benchmark tables and maps."""
    spec = SceneSpec(room=tuple(float(v) for v in room.split(",")), spacing=spacing)
    results = run_benchmark(spec, budget, _dims(width, height), out, oversample)
    summary = {k: v for k, v in results.items() if "coverage" not in k
               and "manhattan" not in k}
    click.echo(json.dumps(summary, indent=2, sort_keys=True, default=str))


@main.command("pipeline")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--scene", "scene_dir", type=click.Path(exists=True),
              help="reuse a generated scene instead of generating one")
@click.option("--seed", type=int, help="override the config seed")
@click.option("--threads", type=int, help="override rasterizer threads")
@click.option("--dump-default-config", "dump_cfg", type=click.Path(),
              help="write the default config JSON and exit")
@_fail_json
def pipeline_cmd(config_path, out, scene_dir, seed, threads, dump_cfg):
    """Full chain: init -> attention -> decode -> retrieval -> union -> render."""
    if dump_cfg:
        RunConfig().dump(dump_cfg)
        click.echo(str(dump_cfg))
        return
    cfg = RunConfig.from_file(config_path) if config_path else RunConfig()
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    if threads is not None:
        cfg = cfg.model_copy(update={
            "rasterizer": cfg.rasterizer.model_copy(update={"threads": threads})})
    manifest = run_pipeline(cfg, out, scene_dir)
    click.echo(json.dumps(manifest, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
