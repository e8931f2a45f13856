"""End-to-end orchestration: scene -> depth -> initialize -> sample ->
refine -> render -> metrics/losses, with every stage's artifact written to
disk.

Artifacts of a stage are written to <name>.partial and committed by rename
when the stage completes, so a failed stage leaves its partial outputs
behind for inspection. The rendered grid is produced from the *reloaded*
refined set, which makes the standalone `render` subcommand reproduce
pred.occ bitwise from gaussians_refined.gsb.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats, metrics, synth
from .core import GaussianSet, VoxelGridSpec
from .errors import ConfigError, GsoccError, StageError
from .initialize import init_gaussians
from .losses import compute_loss_report
from .refine import SurfaceSnapWeights, default_basis, refine_positions, zero_weights
from .render import render_grid
from .sampling import sample_representatives, voxel_keys, OUT_OF_BOUNDS

LOGIT_STRENGTH = 12.0

REFINE_MODES = ("off", "zero", "oracle-snap")


@dataclass
class PipelineConfig:
    seed: int = 0
    # synthetic scene
    num_boxes: int = 6
    box_classes: tuple = (2, 3, 4)
    num_classes: int = 4
    ground_z: float = -2.0
    ground_class: int = 1
    extents_min: tuple = (-16.0, -16.0, -4.0)
    extents_max: tuple = (16.0, 16.0, 4.0)
    # camera rig
    rig: str = "surround6"
    resolution: tuple = (48, 64)
    focal: float = 32.0
    cam_height: float = 0.5
    pitch_deg: float = 12.0
    downsample: int = 1
    noise_std: float = 0.0
    # gaussian attributes
    gauss_scale: float = 0.3
    gauss_opacity: float = 0.9
    # sampling / refinement / rendering
    grid_size: float = 0.5
    refine: str = "zero"
    voxel_size: float = 0.5
    # objectives and metrics
    lambda_occ: float = 1.0
    lambda_depth: float = 0.05
    alpha_unc: float = 0.5
    ray_stride: int = 4
    ray_thresholds: tuple = (1.0, 2.0, 4.0)
    # execution
    threads: int = 1
    dump_probs: bool = False
    out_dir: str = "out"

    def __post_init__(self):
        if self.refine not in REFINE_MODES:
            raise ConfigError(f"refine mode must be one of {REFINE_MODES}")
        if self.rig not in synth.RIGS:
            raise ConfigError(f"unknown rig '{self.rig}'")
        if self.grid_size <= 0 or self.voxel_size <= 0:
            raise ConfigError("grid sizes must be positive")
        if self.downsample < 1:
            raise ConfigError("downsample ratio must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.num_classes < 1 or self.ground_class > self.num_classes or any(
            c > self.num_classes or c < 1 for c in self.box_classes
        ):
            raise ConfigError("class ids must lie in [1, num_classes]")

    @staticmethod
    def from_file(path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return PipelineConfig.from_dict(doc)

    @staticmethod
    def from_dict(doc: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(PipelineConfig)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        doc = {
            k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()
        }
        return PipelineConfig(**doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # derived geometry -----------------------------------------------------

    def scene_config(self) -> synth.SceneConfig:
        return synth.SceneConfig(
            num_boxes=self.num_boxes,
            box_classes=self.box_classes,
            ground_z=self.ground_z,
            ground_class=self.ground_class,
            extents_min=self.extents_min,
            extents_max=self.extents_max,
        )

    def cameras(self) -> list:
        rig = synth.RIGS[self.rig](
            resolution=self.resolution,
            focal=self.focal,
            height=self.cam_height,
            pitch_deg=self.pitch_deg,
        )
        if self.downsample > 1:
            rig = [cam.scaled(1.0 / self.downsample) for cam in rig]
        return rig

    def grid_dims(self) -> tuple:
        lo = np.asarray(self.extents_min)
        hi = np.asarray(self.extents_max)
        counts = (hi - lo) / self.voxel_size
        if np.abs(counts - np.round(counts)).max() > 1e-9:
            raise ConfigError("extents must span an integer number of voxels")
        return tuple(int(round(d)) for d in counts)

    def sampling_spec(self) -> VoxelGridSpec:
        return VoxelGridSpec(
            min_corner=np.asarray(self.extents_min, dtype=np.float64),
            max_corner=np.asarray(self.extents_max, dtype=np.float64),
            grid_size=self.grid_size,
        )


class GroundTruthClassAttributes:
    """Attribute provider that labels each pixel's Gaussian with the class
    of the surface its ray hits. Scale/rotation/opacity are constants."""

    def __init__(self, scene, cams, scale: float, opacity: float, num_classes: int):
        self.num_classes = num_classes
        self.scale = float(scale)
        self.opacity = float(opacity)
        self.class_maps = []
        for cam in cams:
            rr, cc = np.meshgrid(np.arange(cam.height), np.arange(cam.width), indexing="ij")
            _, cls = synth.ray_hit_classes(scene, cam.origin, cam.ray_directions(rr.ravel(), cc.ravel()))
            self.class_maps.append(cls.reshape(cam.height, cam.width))

    def __call__(self, view: int, rows: np.ndarray, cols: np.ndarray):
        n = len(rows)
        cls = self.class_maps[view][rows, cols]
        logits = np.zeros((n, self.num_classes))
        hit = cls > 0
        logits[np.flatnonzero(hit), cls[hit] - 1] = LOGIT_STRENGTH
        return (
            np.full((n, 3), self.scale),
            np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1)),
            np.full(n, self.opacity),
            logits,
        )


class _Stage:
    """Commit-on-success artifact writer for one pipeline stage."""

    def __init__(self, name: str, out_dir: Path):
        self.name = name
        self.out_dir = out_dir
        self.pending = []

    def path(self, filename: str) -> Path:
        p = self.out_dir / (filename + ".partial")
        self.pending.append((p, self.out_dir / filename))
        return p

    def commit(self):
        for partial, final in self.pending:
            os.replace(partial, final)
        self.pending.clear()


def _run_stage(name, out_dir, fn):
    stage = _Stage(name, out_dir)
    try:
        result = fn(stage)
        stage.commit()
    except GsoccError:
        raise
    except Exception as e:
        raise StageError(name, str(e)) from e
    return result


def distinct_occupied_voxels(gs: GaussianSet, spec: VoxelGridSpec) -> int:
    keys = voxel_keys(gs.means, spec)
    keys = keys[keys != OUT_OF_BOUNDS]
    return int(np.unique(keys).size)


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute all stages; returns the run summary dict."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cams = config.cameras()
    dims = config.grid_dims()
    origin = np.asarray(config.extents_min, dtype=np.float64)

    scene = _run_stage(
        "gen-scene",
        out,
        lambda st: _write_scene(st, config),
    )
    gt_grid = _run_stage("rasterize-gt", out, lambda st: _write_gt(st, scene, config, dims, origin))
    depths = _run_stage("render-depth", out, lambda st: _write_depths(st, scene, cams, config))
    attrs = GroundTruthClassAttributes(
        scene, cams, config.gauss_scale, config.gauss_opacity, config.num_classes
    )
    _run_stage("init", out, lambda st: _write_init(st, cams, depths, attrs, config))
    # Each stage below consumes the artifact it reloads, not the in-memory
    # float64 set, so standalone subcommands reproduce the same bytes.
    init_set = formats.read_gaussian_set(out / "gaussians_init.gsb")
    spec = config.sampling_spec()
    _run_stage("sample", out, lambda st: _write_sampled(st, init_set, spec, config))
    sampled = formats.read_gaussian_set(out / "gaussians_sampled.gsb")
    _run_stage("refine", out, lambda st: _write_refined(st, sampled, scene, config))
    refined = formats.read_gaussian_set(out / "gaussians_refined.gsb")
    field = _run_stage(
        "render", out, lambda st: _write_render(st, refined, dims, origin, config)
    )
    report = _run_stage(
        "metrics",
        out,
        lambda st: _write_metrics(st, field, gt_grid, cams, init_set, config),
    )
    losses = _run_stage(
        "eval-loss", out, lambda st: _write_losses(st, field, gt_grid, depths, scene, cams, config)
    )
    summary = {
        "initial_count": len(init_set),
        "sampled_count": len(sampled),
        "refined_count": len(refined),
        "distinct_occupied_voxels": distinct_occupied_voxels(init_set, spec),
        "iou": report.iou,
        "miou": report.miou,
        "rayiou": report.rayiou,
        "perc": report.perc,
        "dist": report.dist,
        "loss_total": losses.total,
    }
    stage = _Stage("summary", out)
    stage.path("summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2))
    stage.commit()
    return summary


def _write_scene(stage, config):
    scene = synth.generate_scene(config.seed, config.scene_config())
    stage.path("scene.json").write_text(scene.to_json())
    return scene


def _write_gt(stage, scene, config, dims, origin):
    grid = synth.rasterize_gt_grid(scene, dims, origin, config.voxel_size)
    formats.write_occupancy(stage.path("gt.occ"), grid, config.num_classes)
    return grid


def _write_depths(stage, scene, cams, config):
    depths = synth.render_depth_maps(scene, cams, noise_std=config.noise_std)
    for i, dm in enumerate(depths):
        formats.write_depth_map(stage.path(f"depth_{i:03d}.dpm"), dm)
    return depths


def _write_init(stage, cams, depths, attrs, config):
    gs = init_gaussians(cams, depths, attrs, n_workers=config.threads)
    formats.write_gaussian_set(stage.path("gaussians_init.gsb"), gs)
    return gs


def _write_sampled(stage, gs, spec, config):
    sampled = sample_representatives(gs, spec, config.seed, n_workers=config.threads)
    formats.write_gaussian_set(stage.path("gaussians_sampled.gsb"), sampled)
    return sampled


def _write_refined(stage, sampled, scene, config):
    basis = default_basis(config.grid_size / 2.0)
    if config.refine == "off":
        refined = sampled
    elif config.refine == "zero":
        refined = refine_positions(sampled, basis, zero_weights(sampled, basis))
    else:
        weights = SurfaceSnapWeights(scene)(sampled, basis)
        refined = refine_positions(sampled, basis, weights)
    formats.write_gaussian_set(stage.path("gaussians_refined.gsb"), refined)
    return refined


def _write_render(stage, refined, dims, origin, config):
    field = render_grid(refined, dims, origin, config.voxel_size)
    formats.write_occupancy(
        stage.path("pred.occ"),
        field.to_grid(),
        config.num_classes,
        probs=field.probs if config.dump_probs else None,
    )
    return field


def _write_metrics(stage, field, gt_grid, cams, init_set, config):
    report = metrics.evaluate(
        field.to_grid(),
        gt_grid,
        cams=cams,
        gaussians=init_set,
        thresholds=config.ray_thresholds,
        stride=config.ray_stride,
    )
    stage.path("metrics.json").write_text(report.to_json())
    return report


def _write_losses(stage, field, gt_grid, depths, scene, cams, config):
    clean = (
        depths
        if config.noise_std == 0
        else synth.render_depth_maps(scene, cams, noise_std=0.0)
    )
    report = compute_loss_report(
        field.probs.reshape(-1, field.probs.shape[-1]),
        gt_grid.labels.reshape(-1),
        pred_depths=depths,
        gt_depths=clean,
        lambda_occ=config.lambda_occ,
        lambda_depth=config.lambda_depth,
        alpha_unc=config.alpha_unc,
    )
    stage.path("losses.json").write_text(report.to_json())
    return report
