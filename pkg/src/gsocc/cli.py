"""Command-line interface: one subcommand per pipeline stage.

Exit codes: 0 success, 2 config error, 3 stage failure, 4 undefined metric.
Every subcommand is a pure function of its inputs plus the declared seed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import formats, metrics, synth
from .core import GaussianSet
from .errors import ConfigError, GsoccError, StageError, UndefinedMetricError
from .initialize import init_gaussians
from .losses import compute_loss_report
from .pipeline import (
    GroundTruthClassAttributes,
    PipelineConfig,
    distinct_occupied_voxels,
    run_pipeline,
)
from .refine import SurfaceSnapWeights, default_basis, refine_positions, zero_weights
from .render import render_grid
from .sampling import sample_representatives


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="pipeline config JSON; flags override fields")
    p.add_argument("--seed", type=int, help="base seed (u64)")
    p.add_argument("--grid-size", type=float, dest="grid_size", help="sampling cell size, meters")
    p.add_argument("--refine", choices=("off", "zero", "oracle-snap"))
    p.add_argument("--ray-stride", type=int, dest="ray_stride")
    p.add_argument("--threads", type=int)
    p.add_argument("--noise", type=float, dest="noise_std", help="depth noise std-dev, meters")
    p.add_argument("--rig", choices=tuple(synth.RIGS))
    p.add_argument("--dump-probs", action="store_true", dest="dump_probs", default=None)
    p.add_argument("--out", type=Path, help="output directory")


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    doc = cfg.to_dict()
    overrides = {
        "seed": args.seed,
        "grid_size": args.grid_size,
        "refine": args.refine,
        "ray_stride": args.ray_stride,
        "threads": args.threads,
        "noise_std": args.noise_std,
        "rig": args.rig,
        "dump_probs": args.dump_probs,
        "out_dir": str(args.out) if args.out else None,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_dict(doc)


def _read_scene(path) -> synth.SceneSpec:
    try:
        return synth.SceneSpec.from_json(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read scene {path}: {e}") from e


def _emit(doc: dict, path: Path | None):
    text = json.dumps(doc, sort_keys=True, indent=2)
    if path is None:
        print(text)
    else:
        path.write_text(text)


def cmd_gen_scene(args) -> int:
    cfg = _load_config(args)
    scene = synth.generate_scene(cfg.seed, cfg.scene_config())
    out = args.scene or Path("scene.json")
    out.write_text(scene.to_json())
    return 0


def cmd_render_depth(args) -> int:
    cfg = _load_config(args)
    scene = _read_scene(args.scene)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, dm in enumerate(synth.render_depth_maps(scene, cfg.cameras(), cfg.noise_std)):
        formats.write_depth_map(out_dir / f"depth_{i:03d}.dpm", dm)
    return 0


def cmd_init(args) -> int:
    cfg = _load_config(args)
    scene = _read_scene(args.scene)
    cams = cfg.cameras()
    depths = [formats.read_depth_map(p) for p in args.depths]
    attrs = GroundTruthClassAttributes(
        scene, cams, cfg.gauss_scale, cfg.gauss_opacity, cfg.num_classes
    )
    gs = init_gaussians(cams, depths, attrs, n_workers=cfg.threads)
    formats.write_gaussian_set(args.output, gs)
    return 0


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    gs = formats.read_gaussian_set(args.gaussians)
    spec = cfg.sampling_spec()
    if args.dry_run:
        _emit(
            {
                "input_count": len(gs),
                "distinct_occupied_voxels": distinct_occupied_voxels(gs, spec),
            },
            None,
        )
        return 0
    sampled = sample_representatives(gs, spec, cfg.seed, n_workers=cfg.threads)
    formats.write_gaussian_set(args.output, sampled)
    return 0


def cmd_refine(args) -> int:
    cfg = _load_config(args)
    gs = formats.read_gaussian_set(args.gaussians)
    basis = default_basis(cfg.grid_size / 2.0)
    if cfg.refine == "off":
        refined = gs
    elif cfg.refine == "zero":
        refined = refine_positions(gs, basis, zero_weights(gs, basis))
    else:
        if not args.scene:
            raise ConfigError("--refine oracle-snap needs --scene")
        weights = SurfaceSnapWeights(_read_scene(args.scene))(gs, basis)
        refined = refine_positions(gs, basis, weights)
    formats.write_gaussian_set(args.output, refined)
    return 0


def cmd_render(args) -> int:
    cfg = _load_config(args)
    gs = formats.read_gaussian_set(args.gaussians)
    dims = cfg.grid_dims()
    field = render_grid(gs, dims, np.asarray(cfg.extents_min), cfg.voxel_size)
    formats.write_occupancy(
        args.output,
        field.to_grid(),
        cfg.num_classes,
        probs=field.probs if cfg.dump_probs else None,
    )
    return 0


def cmd_metrics(args) -> int:
    cfg = _load_config(args)
    pred, _, _ = formats.read_occupancy(args.pred)
    gt, _, _ = formats.read_occupancy(args.gt)
    gaussians = formats.read_gaussian_set(args.gaussians) if args.gaussians else None
    thresholds = (
        tuple(float(t) for t in args.ray_thresholds.split(","))
        if args.ray_thresholds
        else cfg.ray_thresholds
    )
    report = metrics.evaluate(
        pred,
        gt,
        cams=cfg.cameras(),
        gaussians=gaussians,
        thresholds=thresholds,
        stride=cfg.ray_stride,
    )
    text = report.to_json()
    if args.output:
        args.output.write_text(text)
    else:
        print(text)
    return 0


def cmd_eval_loss(args) -> int:
    cfg = _load_config(args)
    pred, _, probs = formats.read_occupancy(args.pred)
    if probs is None:
        raise ConfigError(f"{args.pred} has no probability dump; render with --dump-probs")
    gt, _, _ = formats.read_occupancy(args.gt)
    pred_depths = [formats.read_depth_map(p) for p in args.pred_depths or []]
    gt_depths = [formats.read_depth_map(p) for p in args.gt_depths or []]
    report = compute_loss_report(
        np.asarray(probs, dtype=np.float64).reshape(-1, probs.shape[-1]),
        gt.labels.reshape(-1),
        pred_depths=pred_depths or None,
        gt_depths=gt_depths or None,
        lambda_occ=cfg.lambda_occ,
        lambda_depth=cfg.lambda_depth,
        alpha_unc=cfg.alpha_unc,
    )
    text = report.to_json()
    if args.output:
        args.output.write_text(text)
    else:
        print(text)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    summary = run_pipeline(cfg)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    rng = np.random.default_rng(cfg.seed)
    n = args.count
    lo = np.asarray(cfg.extents_min)
    hi = np.asarray(cfg.extents_max)
    c = cfg.num_classes
    gs = GaussianSet(
        means=rng.uniform(lo, hi, size=(n, 3)),
        scales=np.full((n, 3), 0.2),
        rotations=np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1)),
        opacities=np.full(n, 0.5),
        semantics=np.zeros((n, c)),
        source_index=np.zeros((n, 3), dtype=np.uint32),
    )
    spec = cfg.sampling_spec()
    t0 = time.perf_counter()
    sampled = sample_representatives(gs, spec, cfg.seed, n_workers=1)
    elapsed = time.perf_counter() - t0
    _emit(
        {
            "count": n,
            "sampled": len(sampled),
            "seconds": elapsed,
            "gaussians_per_second": n / elapsed,
        },
        None,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsocc",
        description="Gaussian semantic-occupancy pipeline: initialize, sample, refine, render, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="generate a seeded synthetic scene")
    p.add_argument("--scene", type=Path, help="output scene JSON (default scene.json)")
    _add_common(p)
    p.set_defaults(fn=cmd_gen_scene)

    p = sub.add_parser("render-depth", help="render per-camera depth maps for a scene")
    p.add_argument("--scene", type=Path, required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_render_depth)

    p = sub.add_parser("init", help="pixel-aligned Gaussian initialization from depth maps")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--depths", type=Path, nargs="+", required=True)
    p.add_argument("--output", type=Path, required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("sample", help="grid-based sampling of a Gaussian set")
    p.add_argument("--gaussians", type=Path, required=True)
    p.add_argument("--output", type=Path)
    p.add_argument("--dry-run", action="store_true", help="print the distinct-voxel count only")
    _add_common(p)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("refine", help="positional refinement of a Gaussian set")
    p.add_argument("--gaussians", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--scene", type=Path, help="scene JSON (for oracle-snap)")
    _add_common(p)
    p.set_defaults(fn=cmd_refine)

    p = sub.add_parser("render", help="render a Gaussian set into an occupancy grid")
    p.add_argument("--gaussians", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("metrics", help="evaluate predicted vs ground-truth grids")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--gaussians", type=Path, help="optional set for Perc./Dist.")
    p.add_argument("--ray-thresholds", help="comma-separated meters, e.g. 1,2,4")
    p.add_argument("--output", type=Path)
    _add_common(p)
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("eval-loss", help="evaluate objectives on rendered probabilities")
    p.add_argument("--pred", type=Path, required=True, help="OCC1 file with probability dump")
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--pred-depths", type=Path, nargs="*")
    p.add_argument("--gt-depths", type=Path, nargs="*")
    p.add_argument("--output", type=Path)
    _add_common(p)
    p.set_defaults(fn=cmd_eval_loss)

    p = sub.add_parser("pipeline", help="run all stages end to end")
    _add_common(p)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("bench", help="time voxelize + sort + sample on random Gaussians")
    p.add_argument("--count", type=int, default=1_000_000)
    _add_common(p)
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except UndefinedMetricError as e:
        print(f"undefined metric: {e}", file=sys.stderr)
        return 4
    except StageError as e:
        print(f"stage failure: {e}", file=sys.stderr)
        return 3
    except GsoccError as e:
        print(f"error ({args.command}): {e}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
