"""Forward evaluation of the training objectives.

Occupancy side: per-voxel cross-entropy plus Lovasz-Softmax (the "classes
present in ground truth" variant). Depth side: uncertainty-weighted
residual and forward-difference gradient terms with a log-uncertainty
regularizer. Norms are RMS over the valid pixels of each view ("per-view
sum with a per-pixel mean inside each norm"), and the log-uncertainty term
is likewise a per-pixel mean; no-return pixels are excluded from every
term. These are forward metrics only; there is no backward pass.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import DepthMap
from .errors import ShapeError, UndefinedMetricError

PROB_CLAMP = 1e-7


def cross_entropy_loss(pred: np.ndarray, gt: np.ndarray, ignore: int | None = None) -> float:
    """Mean -log(pred[gt]) over non-ignored voxels, probabilities clamped
    to [1e-7, 1]."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, np.asarray(pred).shape[-1])
    gt = np.asarray(gt).reshape(-1)
    if pred.shape[0] != gt.shape[0]:
        raise ShapeError(f"{pred.shape[0]} predictions vs {gt.shape[0]} labels")
    sums = pred.sum(axis=1)
    if np.abs(sums - 1.0).max(initial=0.0) > 1e-4:
        raise ValueError("prediction rows must sum to 1 within 1e-4")
    keep = np.ones(gt.shape[0], dtype=bool) if ignore is None else gt != ignore
    if not keep.any():
        raise UndefinedMetricError("all voxels ignored; cross-entropy mean undefined")
    picked = pred[np.arange(gt.shape[0]), gt.astype(np.int64)][keep]
    return float(-np.log(np.clip(picked, PROB_CLAMP, 1.0)).mean())


def lovasz_gradient(gt_sorted: np.ndarray) -> np.ndarray:
    """Gradient of the Lovasz extension of the Jaccard loss w.r.t. sorted errors."""
    gts = gt_sorted.sum()
    intersection = gts - gt_sorted.cumsum()
    union = gts + (1.0 - gt_sorted).cumsum()
    jaccard = 1.0 - intersection / union
    jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def lovasz_softmax_loss(pred: np.ndarray, gt: np.ndarray) -> float:
    """Lovasz-Softmax over classes present in gt.

    Per class: errors |1{gt=c} - pred_c| sorted descending, dotted with the
    Jaccard-extension gradient; the per-class terms are averaged.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, np.asarray(pred).shape[-1])
    gt = np.asarray(gt).reshape(-1)
    if pred.shape[0] != gt.shape[0]:
        raise ShapeError(f"{pred.shape[0]} predictions vs {gt.shape[0]} labels")
    if gt.size == 0:
        raise UndefinedMetricError("empty grid; Lovasz mean undefined")
    losses = []
    for c in np.unique(gt):
        fg = (gt == c).astype(np.float64)
        errors = np.abs(fg - pred[:, int(c)])
        order = np.argsort(-errors, kind="stable")
        losses.append(float(errors[order] @ lovasz_gradient(fg[order])))
    return float(np.mean(losses))


@dataclass(frozen=True)
class DepthLossBreakdown:
    residual: float
    gradient: float
    uncertainty: float

    @property
    def total(self) -> float:
        return self.residual + self.gradient + self.uncertainty


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values**2))) if values.size else 0.0


def depth_uncertainty_loss(pred, gt, alpha_unc: float) -> DepthLossBreakdown:
    """Uncertainty-weighted depth loss summed over views.

    `pred` / `gt` are DepthMaps or equal-length sequences of them; the
    ground-truth uncertainty channel is ignored. Per view:
    RMS(sigma * (dhat - d)) + RMS(sigma * (grad dhat - grad d))
    - alpha * mean(log sigma), with forward-difference gradients and all
    statistics over pixels valid in both maps.
    """
    preds = [pred] if isinstance(pred, DepthMap) else list(pred)
    gts = [gt] if isinstance(gt, DepthMap) else list(gt)
    if len(preds) != len(gts):
        raise ShapeError(f"{len(preds)} predicted vs {len(gts)} ground-truth views")
    residual = gradient = uncertainty = 0.0
    for p, g in zip(preds, gts):
        if p.depth.shape != g.depth.shape:
            raise ShapeError(f"view shapes differ: {p.depth.shape} vs {g.depth.shape}")
        valid = p.valid & g.valid
        sig = p.uncertainty
        # Sentinel pixels produce inf-inf before masking; silence, then drop.
        with np.errstate(invalid="ignore"):
            residual += _rms((sig * (p.depth - g.depth))[valid])
            grads = []
            for axis in (0, 1):
                dp = np.diff(p.depth, axis=axis)
                dg = np.diff(g.depth, axis=axis)
                ok = valid.take(range(1, valid.shape[axis]), axis=axis) & valid.take(
                    range(valid.shape[axis] - 1), axis=axis
                )
                base_sig = sig.take(range(sig.shape[axis] - 1), axis=axis)
                grads.append((base_sig * (dp - dg))[ok])
            gradient += _rms(np.concatenate(grads))
        if valid.any():
            uncertainty += float(-alpha_unc * np.log(sig[valid]).mean())
    return DepthLossBreakdown(residual=residual, gradient=gradient, uncertainty=uncertainty)


@dataclass(frozen=True)
class LossReport:
    """Weighted objective breakdown; `total` satisfies the accounting
    identity total = l_occ*(ce+lov) + l_depth*(residual+gradient+unc)."""

    total: float
    occ_ce: float
    occ_lovasz: float
    depth_term: float
    gradient_term: float
    uncertainty_term: float
    lambda_occ: float
    lambda_depth: float
    alpha_unc: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def compute_loss_report(
    pred_probs: np.ndarray,
    gt_labels: np.ndarray,
    pred_depths=None,
    gt_depths=None,
    lambda_occ: float = 1.0,
    lambda_depth: float = 0.05,
    alpha_unc: float = 0.5,
    ignore: int | None = None,
) -> LossReport:
    ce = cross_entropy_loss(pred_probs, gt_labels, ignore=ignore)
    lov = lovasz_softmax_loss(pred_probs, gt_labels)
    if pred_depths is not None:
        depth = depth_uncertainty_loss(pred_depths, gt_depths, alpha_unc)
    else:
        depth = DepthLossBreakdown(0.0, 0.0, 0.0)
    total = lambda_occ * (ce + lov) + lambda_depth * (
        depth.residual + depth.gradient + depth.uncertainty
    )
    return LossReport(
        total=total,
        occ_ce=ce,
        occ_lovasz=lov,
        depth_term=depth.residual,
        gradient_term=depth.gradient,
        uncertainty_term=depth.uncertainty,
        lambda_occ=lambda_occ,
        lambda_depth=lambda_depth,
        alpha_unc=alpha_unc,
    )
