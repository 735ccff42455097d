"""PCA reduction of the residual scheduling signals.

The residual vector at a state x is

    e(x) = [ebar_11 .. ebar_1n, ebar_21 .. ebar_(n+q)n,  eg_11 .. eg_1m, .. eg_(n+q)m]

Stacking e over the sample set gives the data matrix Pi, one column per
sample. Each row is centred and scaled, the result is decomposed by SVD,
and the leading ``v`` left singular vectors define

    theta = U_s^T ((e - mu) / s),      e~ = s * (U_s theta) + mu.

Arrays of points follow the package convention: a leading axis of K
points. ``Pi`` itself keeps the (rows = signals, columns = samples) layout.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .factor import Factorization
from .sysmodel import SampleSet

__all__ = [
    "ResidualMatrix", "RowNormalizer", "SvdFactors", "PcaReduction",
    "residual_labels", "residual_vectors", "build_residual_matrix", "normalize_rows",
    "pca_fit", "numerical_rank", "vm_fraction", "vm_table", "select_scheduling",
    "theta_map", "reconstruct_e", "write_vm_csv",
]

log = logging.getLogger(__name__)

SCALE_FLOOR = 1e-8  # below this a row is fit noise: centred, not scaled
SCALE_RTOL = 1e-9


def residual_labels(n: int, m: int, q: int) -> list[str]:
    labels = [f"ef[{i}][{k}]" for i in range(1, n + q + 1) for k in range(1, n + 1)]
    labels += [f"eg[{i}][{j}]" for i in range(1, n + q + 1) for j in range(1, m + 1)]
    return labels


def residual_vectors(fac: Factorization, X) -> np.ndarray:
    """``(K, (n+q)(n+m))`` residual vectors e(x), one row per point."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = X.shape[0]
    return np.concatenate([fac.ef(X).reshape(K, -1), fac.eg(X).reshape(K, -1)], axis=1)


@dataclass(frozen=True, eq=False)
class ResidualMatrix:
    data: np.ndarray  # (rows, N+1)
    labels: tuple[str, ...]

    @property
    def shape(self):
        return self.data.shape


def build_residual_matrix(fac: Factorization, samples: SampleSet) -> ResidualMatrix:
    sys = fac.sys
    E = residual_vectors(fac, samples.points)
    labels = residual_labels(sys.n, sys.m, sys.q)
    assert E.shape[1] == len(labels) == (sys.n + sys.q) * (sys.n + sys.m)
    return ResidualMatrix(np.ascontiguousarray(E.T), tuple(labels))


@dataclass(frozen=True, eq=False)
class RowNormalizer:
    """Affine per-row law ``(z - mean) / scale``."""

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, E) -> np.ndarray:
        """Normalise points ``(K, rows)`` (or one point)."""
        return (np.asarray(E, dtype=float) - self.mean) / self.scale

    def invert(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.mean


def normalize_rows(Pi) -> tuple[np.ndarray, RowNormalizer]:
    """Centre each row and divide by its sample standard deviation.

    With N+1 samples the deviation divides by N. Rows whose deviation is
    below ``max(1e-8, 1e-9 * largest deviation)`` keep scale 1, so
    rows holding only round-off or solver noise are centred but not blown up.
    """
    Pi = Pi.data if isinstance(Pi, ResidualMatrix) else np.asarray(Pi, dtype=float)
    Pi = np.atleast_2d(Pi)
    mean = Pi.mean(axis=1)
    centred = Pi - mean[:, None]
    dof = max(Pi.shape[1] - 1, 1)
    std = np.sqrt(np.sum(centred ** 2, axis=1) / dof)
    floor = max(SCALE_FLOOR, SCALE_RTOL * float(std.max(initial=0.0)))
    scale = np.where(std > floor, std, 1.0)
    return centred / scale[:, None], RowNormalizer(mean, scale)


@dataclass(frozen=True, eq=False)
class SvdFactors:
    U: np.ndarray      # (rows, rows) orthonormal
    sigma: np.ndarray  # (rows,) descending, zero-padded
    Vt: np.ndarray     # (rows, cols)

    @property
    def rank(self) -> int:
        return numerical_rank(self.sigma, max(self.U.shape[0], self.Vt.shape[1]))


def numerical_rank(sigma, size: int) -> int:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    tol = sigma[0] * size * np.finfo(float).eps
    return int(np.count_nonzero(sigma > tol))


def pca_fit(Pn) -> SvdFactors:
    """Thin SVD of the normalised data, padded to a square U."""
    Pn = np.atleast_2d(np.asarray(Pn, dtype=float))
    if not np.all(np.isfinite(Pn)):
        raise ValueError("normalised residual matrix has non-finite entries")
    rows, cols = Pn.shape
    try:
        U, sigma, Vt = np.linalg.svd(Pn, full_matrices=rows > cols)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"SVD did not converge: {exc}") from exc
    if sigma.size < rows:
        sigma = np.concatenate([sigma, np.zeros(rows - sigma.size)])
        Vt = np.vstack([Vt, np.zeros((rows - Vt.shape[0], cols))])
    return SvdFactors(U[:, :rows], sigma, Vt[:rows])


def vm_fraction(sigma, v: int) -> float:
    """Share of total squared singular value kept by the first ``v``."""
    sigma = np.asarray(sigma, dtype=float)
    if not 1 <= v <= sigma.size:
        raise ValueError(f"v = {v} outside 1..{sigma.size}")
    total = float(np.sum(sigma ** 2))
    if total == 0.0:
        return 1.0
    return float(np.sum(sigma[:v] ** 2) / total)


def vm_table(sigma) -> np.ndarray:
    """v_m for v = 1..len(sigma)."""
    sigma = np.asarray(sigma, dtype=float)
    total = float(np.sum(sigma ** 2))
    if total == 0.0:
        return np.ones(sigma.size)
    return np.cumsum(sigma ** 2) / total


@dataclass(frozen=True, eq=False)
class PcaReduction:
    U_s: np.ndarray
    sigma: np.ndarray
    v: int
    rank: int
    normalizer: RowNormalizer

    @property
    def vm(self) -> float:
        return vm_fraction(self.sigma, self.v)


def select_scheduling(svd: SvdFactors, normalizer: RowNormalizer, v: int | None = None,
                      vm_target: float | None = None) -> PcaReduction:
    """Keep ``v`` components, or the fewest reaching ``vm_target``."""
    if (v is None) == (vm_target is None):
        raise ValueError("give exactly one of v and vm_target")
    rank = svd.rank
    cap = max(rank, 1)
    if vm_target is not None:
        if not 0.0 < vm_target <= 1.0:
            raise ValueError("vm_target must lie in (0, 1]")
        table = vm_table(svd.sigma)
        hits = np.flatnonzero(table[:cap] >= vm_target - 1e-12)
        if hits.size:
            v = int(hits[0]) + 1
        else:
            log.warning("v_m target %g unreachable; keeping all %d components", vm_target, cap)
            v = cap
    if not 1 <= v <= cap:
        raise ValueError(f"v = {v} outside 1..{cap} (rank of the residual data is {rank})")
    return PcaReduction(svd.U[:, :v].copy(), svd.sigma.copy(), int(v), rank, normalizer)


def theta_map(red: PcaReduction, e) -> np.ndarray:
    """theta = U_s^T N(e) for one residual vector or ``(K, rows)`` of them."""
    return red.normalizer.apply(e) @ red.U_s


def reconstruct_e(red: PcaReduction, theta) -> np.ndarray:
    """e~ = N^-1(U_s theta); affine in theta."""
    return red.normalizer.invert(np.asarray(theta, dtype=float) @ red.U_s.T)


def write_vm_csv(path, sigma) -> None:
    """CSV with columns v, sigma, vm."""
    sigma = np.asarray(sigma, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["v", "sigma", "vm"])
        for v, (s, vm) in enumerate(zip(sigma, vm_table(sigma)), 1):
            w.writerow([v, repr(float(s)), repr(float(vm))])
