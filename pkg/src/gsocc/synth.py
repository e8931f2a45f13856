"""Deterministic synthetic scenes: ground plane plus yaw-oriented boxes.

Provides the ground-truth occupancy grids and per-camera depth maps that
let the whole pipeline be verified end-to-end on a desk. Everything is a
pure function of (seed, config, cameras): box placement uses a seeded
generator, and depth noise is drawn per view from a spawned seed sequence
so no execution schedule can change results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import CameraModel, DepthMap, OccupancyGrid
from .errors import ConfigError


@dataclass(frozen=True)
class Box:
    """Solid box: center, half extents (meters) and yaw about +z."""

    center: np.ndarray
    half_extents: np.ndarray
    yaw: float
    class_id: int

    def _to_local(self, points: np.ndarray) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return (np.atleast_2d(points) - self.center) @ rot  # rows: Rz(-yaw) @ d

    def contains(self, points: np.ndarray) -> np.ndarray:
        local = self._to_local(points)
        return (np.abs(local) <= self.half_extents).all(axis=1)

    def nearest_surface(self, points: np.ndarray) -> np.ndarray:
        """Closest point on the box surface to each query point."""
        local = self._to_local(points)
        q = np.clip(local, -self.half_extents, self.half_extents)
        inside = (q == local).all(axis=1)
        if inside.any():
            gaps = self.half_extents - np.abs(local[inside])
            axis = gaps.argmin(axis=1)
            rows = np.arange(len(axis))
            snapped = local[inside].copy()
            snapped[rows, axis] = np.sign(snapped[rows, axis] + 0.0) * self.half_extents[axis]
            # A point dead on the box center has sign 0; push it to +face.
            zero = snapped[rows, axis] == 0.0
            snapped[rows[zero], axis[zero]] = self.half_extents[axis[zero]]
            q[inside] = snapped
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return q @ rot.T + self.center

    def ray_hits(self, o: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Along-ray hit distance per direction, +inf where the ray misses."""
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        o_l = (o - self.center) @ rot
        d_l = dirs @ rot
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-self.half_extents - o_l) / d_l
            t2 = (self.half_extents - o_l) / d_l
        t_lo = np.minimum(t1, t2)
        t_hi = np.maximum(t1, t2)
        # Parallel-axis rays: inside the slab -> unbounded, outside -> miss.
        par = d_l == 0.0
        inside_slab = np.broadcast_to(np.abs(o_l) <= self.half_extents, d_l.shape)
        t_lo[par] = np.where(inside_slab[par], -np.inf, np.inf)
        t_hi[par] = np.where(inside_slab[par], np.inf, -np.inf)
        t_near = t_lo.max(axis=1)
        t_far = t_hi.min(axis=1)
        hit = (t_near <= t_far) & (t_far > 0)
        t = np.where(t_near > 0, t_near, 0.0)
        return np.where(hit, t, np.inf)


@dataclass(frozen=True)
class SceneSpec:
    """Seeded scene description: boxes over a ground plane inside extents."""

    seed: int
    boxes: tuple
    ground_z: float
    ground_class: int
    extents_min: np.ndarray
    extents_max: np.ndarray

    def __post_init__(self):
        for b in self.boxes:
            reach = np.linalg.norm(b.half_extents)
            if ((b.center + reach) < self.extents_min).any() or (
                (b.center - reach) > self.extents_max
            ).any():
                raise ConfigError("box does not intersect the scene extents")

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "ground_z": self.ground_z,
            "ground_class": self.ground_class,
            "extents_min": list(map(float, self.extents_min)),
            "extents_max": list(map(float, self.extents_max)),
            "boxes": [
                {
                    "center": list(map(float, b.center)),
                    "half_extents": list(map(float, b.half_extents)),
                    "yaw": float(b.yaw),
                    "class_id": b.class_id,
                }
                for b in self.boxes
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "SceneSpec":
        doc = json.loads(text)
        boxes = tuple(
            Box(
                center=np.array(b["center"], dtype=np.float64),
                half_extents=np.array(b["half_extents"], dtype=np.float64),
                yaw=float(b["yaw"]),
                class_id=int(b["class_id"]),
            )
            for b in doc["boxes"]
        )
        return SceneSpec(
            seed=int(doc["seed"]),
            boxes=boxes,
            ground_z=float(doc["ground_z"]),
            ground_class=int(doc["ground_class"]),
            extents_min=np.array(doc["extents_min"], dtype=np.float64),
            extents_max=np.array(doc["extents_max"], dtype=np.float64),
        )


@dataclass(frozen=True)
class SceneConfig:
    """Ranges for seeded scene generation."""

    num_boxes: int = 6
    center_radius: tuple = (4.0, 13.0)
    half_extent_range: tuple = (0.5, 2.0)
    box_classes: tuple = (2, 3, 4)
    ground_z: float = -2.0
    ground_class: int = 1
    extents_min: tuple = (-16.0, -16.0, -4.0)
    extents_max: tuple = (16.0, 16.0, 4.0)

    def __post_init__(self):
        lo = np.asarray(self.extents_min, dtype=np.float64)
        hi = np.asarray(self.extents_max, dtype=np.float64)
        if not (lo < hi).all():
            raise ConfigError("scene extents must have positive volume on all axes")
        if self.num_boxes < 0:
            raise ConfigError("num_boxes must be >= 0")
        if self.center_radius[0] > self.center_radius[1] or self.center_radius[0] < 0:
            raise ConfigError("invalid center_radius range")
        if self.half_extent_range[0] <= 0 or self.half_extent_range[0] > self.half_extent_range[1]:
            raise ConfigError("invalid half_extent_range")


def generate_scene(seed: int, config: SceneConfig = SceneConfig()) -> SceneSpec:
    """Seeded placement of boxes resting on the ground plane."""
    rng = np.random.default_rng(seed)
    boxes = []
    for _ in range(config.num_boxes):
        radius = rng.uniform(*config.center_radius)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        he = rng.uniform(config.half_extent_range[0], config.half_extent_range[1], size=3)
        yaw = rng.uniform(0.0, 2.0 * np.pi)
        cls = int(rng.choice(np.asarray(config.box_classes)))
        center = np.array(
            [radius * np.cos(angle), radius * np.sin(angle), config.ground_z + he[2]]
        )
        boxes.append(Box(center=center, half_extents=he, yaw=yaw, class_id=cls))
    return SceneSpec(
        seed=seed,
        boxes=tuple(boxes),
        ground_z=config.ground_z,
        ground_class=config.ground_class,
        extents_min=np.asarray(config.extents_min, dtype=np.float64),
        extents_max=np.asarray(config.extents_max, dtype=np.float64),
    )


def rasterize_gt_grid(scene: SceneSpec, dims, origin, voxel_size: float) -> OccupancyGrid:
    """Label voxels by containing solid: boxes override ground, later boxes
    override earlier ones. Ground claims the voxel layer whose z-extent
    contains the plane; boxes claim voxels by center containment."""
    dims = tuple(int(d) for d in dims)
    origin = np.asarray(origin, dtype=np.float64)
    labels = np.zeros(dims, dtype=np.uint8)
    k = int(np.floor((scene.ground_z - origin[2]) / voxel_size))
    if 0 <= k < dims[2]:
        labels[:, :, k] = scene.ground_class
    idx = np.stack(
        np.meshgrid(*(np.arange(d) for d in dims), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    centers = origin + (idx + 0.5) * voxel_size
    for box in scene.boxes:
        inside = box.contains(centers).reshape(dims)
        labels[inside] = box.class_id
    return OccupancyGrid(
        dims=dims, origin=origin, voxel_size=float(voxel_size), labels=labels, empty_id=0
    )


def ray_hit_classes(scene: SceneSpec, o: np.ndarray, dirs: np.ndarray):
    """(depths, class ids) of the nearest scene surface per ray.

    Misses get depth +inf and class 0.
    """
    dirs = np.atleast_2d(dirs)
    best = np.full(dirs.shape[0], np.inf)
    cls = np.zeros(dirs.shape[0], dtype=np.int64)
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_plane = (scene.ground_z - o[2]) / dz
    plane_hit = (dz != 0) & (t_plane > 0)
    best[plane_hit] = t_plane[plane_hit]
    cls[plane_hit] = scene.ground_class
    for box in scene.boxes:
        t = box.ray_hits(o, dirs)
        closer = t < best
        best[closer] = t[closer]
        cls[closer] = box.class_id
    return best, cls


def ray_depths(scene: SceneSpec, o: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Along-ray distance to the nearest scene surface, +inf on miss."""
    return ray_hit_classes(scene, o, dirs)[0]


def render_depth_maps(
    scene: SceneSpec, cams: list, noise_std: float = 0.0
) -> list:
    """Analytic depth per pixel with optional seeded Gaussian noise.

    Uncertainty is max(noise_std, 1e-3) everywhere. Noise seeding is
    per (scene seed, view), so results do not depend on execution order.
    """
    if noise_std < 0:
        raise ConfigError("noise_std must be >= 0")
    maps = []
    for view, cam in enumerate(cams):
        rr, cc = np.meshgrid(np.arange(cam.height), np.arange(cam.width), indexing="ij")
        dirs = cam.ray_directions(rr.ravel(), cc.ravel())
        depth = ray_depths(scene, cam.origin, dirs).reshape(cam.height, cam.width)
        if noise_std > 0:
            rng = np.random.default_rng(np.random.SeedSequence(scene.seed, spawn_key=(view,)))
            noise = noise_std * rng.standard_normal(depth.shape)
            hit = np.isfinite(depth)
            depth = np.where(hit, np.maximum(depth + noise, 0.0), depth)
        unc = np.full(depth.shape, max(noise_std, 1e-3))
        maps.append(DepthMap(depth=depth, uncertainty=unc))
    return maps


def nearest_surface_points(scene: SceneSpec, points: np.ndarray) -> np.ndarray:
    """Closest point on any scene surface (ground plane or box) per query."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    best = points.copy()
    best[:, 2] = scene.ground_z
    best_d = np.abs(points[:, 2] - scene.ground_z)
    for box in scene.boxes:
        cand = box.nearest_surface(points)
        d = np.linalg.norm(cand - points, axis=1)
        closer = d < best_d
        best[closer] = cand[closer]
        best_d = np.where(closer, d, best_d)
    return best


def look_rotation(forward: np.ndarray, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world rotation with +z along `forward` (x right, y down)."""
    f = np.asarray(forward, dtype=np.float64)
    f = f / np.linalg.norm(f)
    r = np.cross(f, np.asarray(up, dtype=np.float64))
    norm = np.linalg.norm(r)
    if norm < 1e-9:
        raise ConfigError("camera forward direction may not be parallel to up")
    r /= norm
    d = np.cross(f, r)
    return np.stack([r, d, f], axis=1)


def surround_rig(
    resolution=(48, 64),
    focal: float = 32.0,
    height: float = 0.5,
    pitch_deg: float = 12.0,
    radius: float = 0.0,
) -> list:
    """Six-camera surround rig, yaw-spaced at 60 degrees, pitched down."""
    h, w = resolution
    pitch = np.deg2rad(pitch_deg)
    cams = []
    for k in range(6):
        yaw = k * np.pi / 3.0
        f = np.array(
            [np.cos(yaw) * np.cos(pitch), np.sin(yaw) * np.cos(pitch), -np.sin(pitch)]
        )
        pos = np.array([radius * np.cos(yaw), radius * np.sin(yaw), height])
        cams.append(
            CameraModel(
                fx=focal,
                fy=focal,
                cx=w / 2.0,
                cy=h / 2.0,
                height=h,
                width=w,
                rotation=look_rotation(f),
                translation=pos,
            )
        )
    return cams


RIGS = {"surround6": surround_rig}
