"""Evaluation metrics: voxel IoU / mIoU, ray-level IoU, and the
initialization-quality pair (occupied percentage, mean distance to the
nearest occupied voxel center).

Ray-level IoU marches camera rays through predicted and ground-truth grids
with an exact amortized voxel traversal (incremental axis stepping) and
compares first non-empty hits per ray: a per-class true positive requires
matching classes and a hit-distance gap within the threshold. Voxels
labeled `unknown_id` are excluded from voxel metrics and are transparent to
the ray march.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import GaussianSet, OccupancyGrid
from .errors import ShapeError, UndefinedMetricError


def iou_miou(
    pred: np.ndarray,
    gt: np.ndarray,
    empty_id: int = 0,
    unknown_id: int | None = None,
):
    """Binary occupied-vs-empty IoU plus per-class IoU and their mean.

    Voxels where gt equals `unknown_id` are excluded. mIoU averages only
    classes present in gt; per-class values come back as {class: iou}.
    A union of zero (both grids empty) counts as perfect agreement.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"pred {pred.shape} vs gt {gt.shape}")
    pred = pred.reshape(-1)
    gt = gt.reshape(-1)
    keep = np.ones(gt.shape, dtype=bool) if unknown_id is None else gt != unknown_id
    pred_occ = pred != empty_id
    gt_occ = gt != empty_id
    if unknown_id is not None:
        pred_occ &= pred != unknown_id
    inter = int(np.count_nonzero(pred_occ & gt_occ & keep))
    union = int(np.count_nonzero((pred_occ | gt_occ) & keep))
    iou = inter / union if union else 1.0
    per_class = {}
    for c in np.unique(gt[keep]):
        c = int(c)
        if c == empty_id or (unknown_id is not None and c == unknown_id):
            continue
        pc = (pred == c) & keep
        gc = (gt == c) & keep
        u = int(np.count_nonzero(pc | gc))
        per_class[c] = int(np.count_nonzero(pc & gc)) / u if u else 1.0
    miou = float(np.mean(list(per_class.values()))) if per_class else float("nan")
    return iou, miou, per_class


def _ray_grid_range(o, v, lo, hi):
    """[t0, t1] parameter range where the ray is inside the box, or None."""
    t0, t1 = 0.0, np.inf
    for a in range(3):
        if v[a] == 0.0:
            if not (lo[a] <= o[a] < hi[a]):
                return None
        else:
            ta = (lo[a] - o[a]) / v[a]
            tb = (hi[a] - o[a]) / v[a]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
    return (t0, t1) if t0 <= t1 else None


def march_first_hits(label_grids, origin, voxel_size, dims, o, v, empty_ids):
    """Amortized grid traversal shared by several label volumes.

    Walks the ray o + t*v voxel by voxel and records, for each grid, the
    first voxel whose label is not in that grid's transparent set:
    (entry distance t, label). Returns None where a grid has no hit along
    the ray, or None overall when the ray misses the box entirely.
    """
    lo = np.asarray(origin, dtype=np.float64)
    hi = lo + np.asarray(dims) * voxel_size
    rng = _ray_grid_range(o, v, lo, hi)
    if rng is None:
        return None
    t0, t1 = rng
    p = o + t0 * v
    idx = np.clip(((p - lo) / voxel_size).astype(np.int64), 0, np.asarray(dims) - 1)
    step = np.sign(v).astype(np.int64)
    t_max = np.full(3, np.inf)
    t_delta = np.full(3, np.inf)
    for a in range(3):
        if v[a] != 0.0:
            boundary = lo[a] + (idx[a] + (1 if v[a] > 0 else 0)) * voxel_size
            t_max[a] = (boundary - o[a]) / v[a]
            t_delta[a] = voxel_size / abs(v[a])
    hits = [None] * len(label_grids)
    t_entry = t0
    while True:
        for gi, labels in enumerate(label_grids):
            if hits[gi] is None:
                lab = int(labels[idx[0], idx[1], idx[2]])
                if lab not in empty_ids[gi]:
                    hits[gi] = (t_entry, lab)
        if all(h is not None for h in hits):
            break
        axis = int(np.argmin(t_max))
        t_entry = t_max[axis]
        if t_entry > t1:
            break
        idx[axis] += step[axis]
        if not 0 <= idx[axis] < dims[axis]:
            break
        t_max[axis] += t_delta[axis]
    return hits


def ray_iou(
    pred: OccupancyGrid,
    gt: OccupancyGrid,
    cams: list,
    thresholds=(1.0, 2.0, 4.0),
    stride: int = 4,
    unknown_id: int | None = None,
):
    """Per-threshold ray-level IoU over rays from every camera through each
    stride-th pixel center. Returns {threshold: iou}."""
    if pred.dims != gt.dims or pred.voxel_size != gt.voxel_size or not np.array_equal(
        np.asarray(pred.origin), np.asarray(gt.origin)
    ):
        raise ShapeError("pred and gt grids must share geometry")
    transparent_pred = {pred.empty_id} | ({unknown_id} if unknown_id is not None else set())
    transparent_gt = {gt.empty_id} | ({unknown_id} if unknown_id is not None else set())
    ray_hits = []
    any_ray = False
    for cam in cams:
        rr, cc = np.meshgrid(
            np.arange(0, cam.height, stride), np.arange(0, cam.width, stride), indexing="ij"
        )
        dirs = cam.ray_directions(rr.ravel(), cc.ravel())
        o = cam.origin
        for v in dirs:
            hits = march_first_hits(
                [pred.labels, gt.labels],
                pred.origin,
                pred.voxel_size,
                pred.dims,
                o,
                v,
                [transparent_pred, transparent_gt],
            )
            if hits is None:
                continue
            any_ray = True
            ray_hits.append(hits)
    if not any_ray:
        raise UndefinedMetricError("no rays intersect the grid")
    out = {}
    for tau in thresholds:
        tp, fp, fn = {}, {}, {}
        for hp, hg in ray_hits:
            if hp is None and hg is None:
                continue
            if hp is not None and hg is not None and hp[1] == hg[1] and abs(hp[0] - hg[0]) <= tau:
                tp[hg[1]] = tp.get(hg[1], 0) + 1
                continue
            if hg is not None:
                fn[hg[1]] = fn.get(hg[1], 0) + 1
            if hp is not None:
                fp[hp[1]] = fp.get(hp[1], 0) + 1
        classes = set(tp) | set(fp) | set(fn)
        ious = [
            tp.get(c, 0) / (tp.get(c, 0) + fp.get(c, 0) + fn.get(c, 0)) for c in sorted(classes)
        ]
        out[float(tau)] = float(np.mean(ious)) if ious else 1.0
    return out


def occupied_voxel_centers(gt: OccupancyGrid, unknown_id: int | None = None) -> np.ndarray:
    occ = gt.labels != gt.empty_id
    if unknown_id is not None:
        occ &= gt.labels != unknown_id
    idx = np.argwhere(occ)
    return np.asarray(gt.origin) + (idx + 0.5) * gt.voxel_size


def init_quality(gs: GaussianSet, gt: OccupancyGrid, unknown_id: int | None = None):
    """(perc, dist) initialization quality against a ground-truth grid.

    perc: percentage of Gaussians whose containing gt voxel is non-empty
    (out-of-grid means count as unoccupied). dist: mean Euclidean distance
    from each mean to the nearest occupied voxel center (exact nearest-
    neighbor query over the occupied centers).
    """
    centers = occupied_voxel_centers(gt, unknown_id)
    if centers.shape[0] == 0:
        raise UndefinedMetricError("ground truth grid has no occupied voxel")
    if len(gs) == 0:
        raise UndefinedMetricError("no Gaussians to score")
    origin = np.asarray(gt.origin, dtype=np.float64)
    idx = np.floor((gs.means - origin) / gt.voxel_size).astype(np.int64)
    dims = np.asarray(gt.dims)
    inside = ((idx >= 0) & (idx < dims)).all(axis=1)
    occupied = np.zeros(len(gs), dtype=bool)
    ii = idx[inside]
    occ_mask = gt.labels != gt.empty_id
    if unknown_id is not None:
        occ_mask = occ_mask & (gt.labels != unknown_id)
    occupied[inside] = occ_mask[ii[:, 0], ii[:, 1], ii[:, 2]]
    perc = 100.0 * float(np.count_nonzero(occupied)) / len(gs)
    dist = float(cKDTree(centers).query(gs.means)[0].mean())
    return perc, dist


@dataclass(frozen=True)
class MetricReport:
    iou: float
    miou: float
    per_class_iou: dict
    rayiou: float | None = None
    rayiou_per_threshold: dict | None = None
    perc: float | None = None
    dist: float | None = None

    def to_json(self) -> str:
        doc = asdict(self)
        doc["per_class_iou"] = {str(k): v for k, v in self.per_class_iou.items()}
        if self.rayiou_per_threshold is not None:
            doc["rayiou_per_threshold"] = {
                str(k): v for k, v in self.rayiou_per_threshold.items()
            }
        return json.dumps(doc, sort_keys=True, indent=2)


def evaluate(
    pred: OccupancyGrid,
    gt: OccupancyGrid,
    cams: list | None = None,
    gaussians: GaussianSet | None = None,
    thresholds=(1.0, 2.0, 4.0),
    stride: int = 4,
    unknown_id: int | None = None,
) -> MetricReport:
    """Bundle every metric the grids/cameras/Gaussians allow into one report."""
    iou, miou, per_class = iou_miou(pred.labels, gt.labels, gt.empty_id, unknown_id)
    rayiou = ray_per = None
    if cams:
        ray_per = ray_iou(pred, gt, cams, thresholds=thresholds, stride=stride, unknown_id=unknown_id)
        rayiou = float(np.mean(list(ray_per.values())))
    perc = dist = None
    if gaussians is not None:
        perc, dist = init_quality(gaussians, gt, unknown_id)
    return MetricReport(
        iou=iou,
        miou=miou,
        per_class_iou=per_class,
        rayiou=rayiou,
        rayiou_per_threshold=ray_per,
        perc=perc,
        dist=dist,
    )
