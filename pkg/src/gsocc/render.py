"""Probabilistic rendering of a Gaussian set into a semantic occupancy grid.

Occupancy at a point is the complement of the product of per-Gaussian
non-occupancy probabilities, alpha = 1 - prod(1 - a_i * phi_i), with phi an
unnormalized Gaussian kernel cut off at Mahalanobis distance 3. Semantics
are the posterior-weighted average of softmaxed per-Gaussian logits, where
the posterior weight uses the fully normalized density
p = phi / ((2 pi)^(3/2) sx sy sz) so that broad and narrow primitives are
weighted scale-awarely. The per-voxel output vector is
[1 - alpha; alpha * e] over (empty + C classes).

Occupancy is evaluated at voxel centers, one sample per voxel. The product
is accumulated in log space (sum of log1p(-a * phi)) for stability with many
overlapping primitives. The grid renderer rasterizes each Gaussian only
over the voxels its 3-sigma ellipsoid bound overlaps; because the axis
bound is exact, this visits every voxel with phi > 0 and the result matches
the all-pairs reference to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GaussianPrimitive, GaussianSet, OccupancyGrid, clamp_scales, quaternion_to_matrix

# Mahalanobis cutoff: contributions beyond 3 sigma are dropped exactly
# (both here and in the brute-force reference).
CUTOFF = 3.0
_CUTOFF_SQ = CUTOFF * CUTOFF
_DENSITY_NORM = (2.0 * np.pi) ** 1.5


def _rotations(gs: GaussianSet) -> np.ndarray:
    return np.stack([quaternion_to_matrix(q) for q in gs.rotations])


def softmax_logits(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def kernel_phi(x: np.ndarray, g: GaussianPrimitive) -> float:
    """Gaussian kernel exp(-m^2/2) with m the Mahalanobis distance of x,
    zero beyond the 3-sigma cutoff."""
    rot = quaternion_to_matrix(g.rotation)
    scale = clamp_scales(g.scale)
    y = (np.asarray(x, dtype=np.float64) - g.mean) @ rot
    m2 = float(((y / scale) ** 2).sum())
    if m2 > _CUTOFF_SQ:
        return 0.0
    return float(np.exp(-0.5 * m2))


def _phi_all(x: np.ndarray, gs: GaussianSet) -> np.ndarray:
    """(P,) kernel values of one point under every Gaussian, cutoff applied."""
    if len(gs) == 0:
        return np.zeros(0)
    rots = _rotations(gs)
    d = np.asarray(x, dtype=np.float64) - gs.means
    y = np.einsum("pk,pka->pa", d, rots)
    m2 = ((y / gs.scales) ** 2).sum(axis=1)
    phi = np.exp(-0.5 * m2)
    phi[m2 > _CUTOFF_SQ] = 0.0
    return phi


def occupancy_alpha(x: np.ndarray, gs: GaussianSet) -> float:
    """alpha(x) = 1 - prod_i (1 - a_i * phi_i(x)), accumulated in log space."""
    p = gs.opacities * _phi_all(x, gs)
    p = p[p > 0]
    if p.size == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        log_keep = np.log1p(-p).sum()
    return float(1.0 - np.exp(log_keep))


def expected_semantics(x: np.ndarray, gs: GaussianSet) -> np.ndarray:
    """Posterior-weighted average of softmaxed semantic features at x.

    Weights are p(x|G_i) * a_i with p the normalized Gaussian density.
    When no Gaussian is in range the result falls back to the uniform
    distribution; callers combine it with alpha = 0 so the fallback is
    inert.
    """
    c = gs.num_classes
    phi = _phi_all(x, gs)
    w = phi * gs.opacities / (_DENSITY_NORM * gs.scales.prod(axis=1))
    total = w.sum()
    if total <= 0.0:
        return np.full(c, 1.0 / c)
    return (w / total) @ softmax_logits(gs.semantics)


@dataclass(frozen=True)
class SemanticOccupancyField:
    """Per-voxel probability vectors [empty; C classes] plus argmax labels."""

    probs: np.ndarray   # (X, Y, Z, C+1) float64
    labels: np.ndarray  # (X, Y, Z) uint8, 0 = empty, 1..C = classes
    origin: np.ndarray
    voxel_size: float

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.probs[..., 0]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[-1] - 1

    def to_grid(self) -> OccupancyGrid:
        return OccupancyGrid(
            dims=self.labels.shape,
            origin=np.asarray(self.origin, dtype=np.float64),
            voxel_size=self.voxel_size,
            labels=self.labels,
            empty_id=0,
        )


def _axis_centers(origin, voxel_size, dims):
    return [origin[a] + (np.arange(dims[a]) + 0.5) * voxel_size for a in range(3)]


def _finalize(log_keep, sem_num, sem_den, origin, voxel_size):
    alpha = -np.expm1(log_keep)
    c = sem_num.shape[-1]
    e = np.full_like(sem_num, 1.0 / c)
    covered = sem_den > 0
    e[covered] = sem_num[covered] / sem_den[covered, None]
    probs = np.concatenate([(1.0 - alpha)[..., None], alpha[..., None] * e], axis=-1)
    labels = probs.argmax(axis=-1).astype(np.uint8)
    return SemanticOccupancyField(
        probs=probs,
        labels=labels,
        origin=np.asarray(origin, dtype=np.float64),
        voxel_size=float(voxel_size),
    )


def render_grid(
    gs: GaussianSet, dims, origin, voxel_size: float
) -> SemanticOccupancyField:
    """Render with per-Gaussian 3-sigma bounding-box culling."""
    dims = tuple(int(d) for d in dims)
    origin = np.asarray(origin, dtype=np.float64)
    c = gs.num_classes
    log_keep = np.zeros(dims)
    sem_num = np.zeros(dims + (c,))
    sem_den = np.zeros(dims)
    if len(gs):
        rots = _rotations(gs)
        sem_soft = softmax_logits(gs.semantics)
        axes = _axis_centers(origin, voxel_size, dims)
        # Per-axis half extent of the 3-sigma ellipsoid: 3 * sqrt(Sigma_kk).
        radii = CUTOFF * np.sqrt(np.einsum("pka,pa->pk", rots**2, gs.scales**2))
        los = np.floor((gs.means - radii - origin) / voxel_size).astype(np.int64) - 1
        his = np.ceil((gs.means + radii - origin) / voxel_size).astype(np.int64) + 1
        np.clip(los, 0, dims, out=los)
        np.clip(his, 0, dims, out=his)
        with np.errstate(divide="ignore"):
            for i in range(len(gs)):
                lo, hi = los[i], his[i]
                if (lo >= hi).any():
                    continue
                box = tuple(slice(lo[a], hi[a]) for a in range(3))
                d = np.stack(
                    np.meshgrid(
                        axes[0][box[0]] - gs.means[i, 0],
                        axes[1][box[1]] - gs.means[i, 1],
                        axes[2][box[2]] - gs.means[i, 2],
                        indexing="ij",
                    ),
                    axis=-1,
                )
                y = d @ rots[i]
                m2 = ((y / gs.scales[i]) ** 2).sum(axis=-1)
                mask = m2 <= _CUTOFF_SQ
                if not mask.any():
                    continue
                phi = np.exp(-0.5 * m2[mask])
                a_phi = gs.opacities[i] * phi
                w = a_phi * (1.0 / (_DENSITY_NORM * gs.scales[i].prod()))
                log_keep[box][mask] += np.log1p(-a_phi)
                sem_den[box][mask] += w
                sem_num[box][mask] += w[:, None] * sem_soft[i]
    return _finalize(log_keep, sem_num, sem_den, origin, voxel_size)


def render_grid_bruteforce(
    gs: GaussianSet, dims, origin, voxel_size: float
) -> SemanticOccupancyField:
    """All-pairs reference renderer: every Gaussian against every voxel
    center, with the same cutoff. Oracle for the culled path."""
    dims = tuple(int(d) for d in dims)
    origin = np.asarray(origin, dtype=np.float64)
    c = gs.num_classes
    n_vox = int(np.prod(dims))
    log_keep = np.zeros(n_vox)
    sem_num = np.zeros((n_vox, c))
    sem_den = np.zeros(n_vox)
    axes = _axis_centers(origin, voxel_size, dims)
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    with np.errstate(divide="ignore"):
        for i in range(len(gs)):
            rot = quaternion_to_matrix(gs.rotations[i])
            y = (centers - gs.means[i]) @ rot
            m2 = ((y / gs.scales[i]) ** 2).sum(axis=1)
            mask = m2 <= _CUTOFF_SQ
            if not mask.any():
                continue
            phi = np.exp(-0.5 * m2[mask])
            a_phi = gs.opacities[i] * phi
            w = a_phi / (_DENSITY_NORM * gs.scales[i].prod())
            log_keep[mask] += np.log1p(-a_phi)
            sem_den[mask] += w
            sem_num[mask] += w[:, None] * softmax_logits(gs.semantics[i])
    return _finalize(
        log_keep.reshape(dims),
        sem_num.reshape(dims + (c,)),
        sem_den.reshape(dims),
        origin,
        voxel_size,
    )
