"""Rate-distortion metrics: D1/D2 PSNR and Chamfer distance on grid clouds.

Conventions (pinned here because the cited definitions vary):

* mse(A->B) is the mean squared nearest-neighbor distance from A to B; the
  symmetric MSE is max(mse(A->B), mse(B->A)).
* PSNR = 10 * log10(3 * peak^2 / MSE) with peak defaulting to 2^N - 1;
  +inf exactly when the symmetric MSE is zero.
* D2 projects each nearest-neighbor displacement onto the reference point's
  normal, estimated from the best-fit plane of its 9 nearest same-cloud
  neighbors (smallest covariance eigenvector); rank-deficient neighborhoods
  fall back to the z axis and set a per-point flag.
* Chamfer distance = mean_A min d^2 + mean_B min d^2 (squared grid units).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError
from .pcio import PointCloud

NORMAL_NEIGHBORS = 9


@dataclass
class DistortionReport:
    d1_psnr: float
    d2_psnr: float
    chamfer: float
    peak: float
    d2_fallback: bool = False  # set when D2 degraded to D1 (tiny cloud)

    def as_kv(self) -> str:
        lines = [
            f"d1_psnr={self.d1_psnr!r}",
            f"d2_psnr={self.d2_psnr!r}",
            f"chamfer={self.chamfer!r}",
            f"peak={self.peak!r}",
            f"d2_fallback={int(self.d2_fallback)}",
        ]
        return "\n".join(lines) + "\n"


def _points(cloud) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, 3)
    if len(pts) == 0:
        raise ConfigError("metrics need non-empty clouds")
    return pts


def _nn_sq(a: np.ndarray, b: np.ndarray, exact_ties: bool = False):
    """Exact squared NN distance from each a to b, plus the NN indices.

    With ``exact_ties`` the returned index is the smallest among equidistant
    nearest neighbors; distances are unaffected, but D2 projections depend on
    which neighbor is chosen, so its tie-break must be deterministic.
    """
    bf = b.astype(np.float64)
    tree = cKDTree(bf)
    if not exact_ties or len(b) == 1:
        _, idx = tree.query(a.astype(np.float64), k=1)
        diff = a - b[idx]
        return (diff * diff).sum(axis=1).astype(np.float64), idx
    _, idx2 = tree.query(a.astype(np.float64), k=2)
    d0 = ((a - b[idx2[:, 0]]) ** 2).sum(axis=1)
    d1 = ((a - b[idx2[:, 1]]) ** 2).sum(axis=1)
    idx = idx2[:, 0].copy()
    for i in np.flatnonzero(d0 == d1):
        cand = np.asarray(
            tree.query_ball_point(a[i].astype(np.float64), r=np.sqrt(d0[i]) * (1 + 1e-9) + 1e-12),
            dtype=np.int64,
        )
        exact = ((b[cand] - a[i]) ** 2).sum(axis=1)
        idx[i] = cand[exact == exact.min()].min()
    return d0.astype(np.float64), idx


def _psnr(mse: float, peak: float) -> float:
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(3.0 * peak * peak / mse))


def _default_peak(a, b, peak):
    if peak is not None:
        return float(peak)
    n = a.precision if isinstance(a, PointCloud) else (b.precision if isinstance(b, PointCloud) else None)
    if n is None:
        raise ConfigError("peak must be given when neither input is a PointCloud")
    return float((1 << n) - 1)


def d1_psnr(a, b, peak: float | None = None) -> float:
    """Point-to-point PSNR with symmetric max MSE."""
    peak = _default_peak(a, b, peak)
    pa, pb = _points(a), _points(b)
    mse_ab = float(_nn_sq(pa, pb)[0].mean())
    mse_ba = float(_nn_sq(pb, pa)[0].mean())
    return _psnr(max(mse_ab, mse_ba), peak)


def estimate_normals(points: np.ndarray, k: int = NORMAL_NEIGHBORS):
    """Per-point unit normals from local plane fits; returns (normals, fallback mask)."""
    pts = points.astype(np.float64)
    n = len(pts)
    kq = min(k, n)
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=kq)
    idx = idx.reshape(n, kq)
    nbrs = pts[idx]                             # (n, kq, 3)
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / kq
    evals, evecs = np.linalg.eigh(cov)          # ascending eigenvalues
    normals = evecs[:, :, 0]
    fallback = evals[:, 1] <= 1e-9 * np.maximum(evals[:, 2], 1e-30)
    normals[fallback] = (0.0, 0.0, 1.0)
    return normals, fallback


def _d2_directed(ref: np.ndarray, other: np.ndarray):
    sq, idx = _nn_sq(ref, other, exact_ties=True)
    normals, fallback = estimate_normals(ref)
    disp = (other[idx] - ref).astype(np.float64)
    proj = (disp * normals).sum(axis=1)
    return float((proj * proj).mean()), bool(fallback.any())


def d2_psnr(a, b, peak: float | None = None):
    """Point-to-plane PSNR; returns (psnr_db, fell_back_to_d1)."""
    peak = _default_peak(a, b, peak)
    pa, pb = _points(a), _points(b)
    if len(pa) < 3 or len(pb) < 3:
        return d1_psnr(a, b, peak), True
    mse_ab, _ = _d2_directed(pa, pb)
    mse_ba, _ = _d2_directed(pb, pa)
    return _psnr(max(mse_ab, mse_ba), peak), False


def chamfer(a, b) -> float:
    """Symmetric sum of mean squared NN distances, in squared grid units."""
    pa, pb = _points(a), _points(b)
    return float(_nn_sq(pa, pb)[0].mean() + _nn_sq(pb, pa)[0].mean())


def evaluate(a, b, peak: float | None = None) -> DistortionReport:
    peak = _default_peak(a, b, peak)
    d2, fb = d2_psnr(a, b, peak)
    return DistortionReport(
        d1_psnr=d1_psnr(a, b, peak),
        d2_psnr=d2,
        chamfer=chamfer(a, b),
        peak=peak,
        d2_fallback=fb,
    )
