"""Sparse multivariate polynomial regression.

Every scalar function of the system is fitted on a monomial basis of total
degree <= p by minimising

    sum_j (y_j - X_j eta)^2 + gamma * ||eta||_1

with cyclic coordinate descent. The penalty acts on the raw coefficients,
constant term included.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb
from typing import Callable, Iterable

import numpy as np

from .sysmodel import NlSystem, SampleSet, eval_system

__all__ = [
    "MonomialBasis", "PolyModel", "FitReport", "SystemFit",
    "make_basis", "design_matrix", "monomials", "fit_lasso", "fit_poly",
    "default_gamma", "approximate_system",
]

log = logging.getLogger(__name__)

Exponent = tuple[int, ...]


def _grlex_key(e: Exponent):
    # ascending total degree, then descending lexicographic order (x1 > x2 > ...)
    return (sum(e), tuple(-k for k in e))


@dataclass(frozen=True)
class MonomialBasis:
    n_vars: int
    degree: int
    exponents: tuple[Exponent, ...]

    def __len__(self) -> int:
        return len(self.exponents)

    def as_array(self) -> np.ndarray:
        return np.array(self.exponents, dtype=int).reshape(len(self), self.n_vars)


def make_basis(n: int, p: int) -> MonomialBasis:
    """All exponent vectors of total degree <= p, constant first, graded-lex."""
    if n < 1 or p < 0:
        raise ValueError("need n >= 1 and p >= 0")
    exps = []
    for d in range(p + 1):
        for combo in combinations_with_replacement(range(n), d):
            e = [0] * n
            for k in combo:
                e[k] += 1
            exps.append(tuple(e))
    exps.sort(key=_grlex_key)
    assert len(exps) == comb(n + p, p)
    return MonomialBasis(n, p, tuple(exps))


def monomials(exponents: np.ndarray, X) -> np.ndarray:
    """Evaluate each exponent row at each point: ``(K, B)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    exponents = np.asarray(exponents, dtype=int).reshape(-1, X.shape[1])
    out = np.ones((X.shape[0], exponents.shape[0]))
    for k in range(X.shape[1]):
        powers = exponents[:, k]
        top = int(powers.max(initial=0))
        if top == 0:
            continue
        table = np.ones((X.shape[0], top + 1))
        for d in range(1, top + 1):
            table[:, d] = table[:, d - 1] * X[:, k]
        out *= table[:, powers]
    return out


def design_matrix(basis: MonomialBasis, samples) -> np.ndarray:
    X = samples.points if isinstance(samples, SampleSet) else samples
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != basis.n_vars:
        raise ValueError(f"samples have dimension {X.shape[1]}, basis has {basis.n_vars}")
    return monomials(basis.as_array(), X)


@dataclass(frozen=True)
class PolyModel:
    """Sparse polynomial: nonzero coefficients keyed by exponent vector."""

    n_vars: int
    terms: tuple[tuple[Exponent, float], ...] = ()

    @classmethod
    def from_terms(cls, n_vars: int, terms: Iterable[tuple[Exponent, float]]) -> "PolyModel":
        acc: dict[Exponent, float] = {}
        for e, c in terms:
            e = tuple(int(k) for k in e)
            if len(e) != n_vars or min(e, default=0) < 0:
                raise ValueError(f"bad exponent {e} for {n_vars} variables")
            acc[e] = acc.get(e, 0.0) + float(c)
        kept = sorted(((e, c) for e, c in acc.items() if c != 0.0),
                      key=lambda t: _grlex_key(t[0]))
        return cls(n_vars, tuple(kept))

    @classmethod
    def from_coefficients(cls, basis: MonomialBasis, coef) -> "PolyModel":
        return cls.from_terms(basis.n_vars, zip(basis.exponents, np.asarray(coef, float)))

    def as_dict(self) -> dict[Exponent, float]:
        return dict(self.terms)

    @property
    def exponents(self) -> np.ndarray:
        return np.array([e for e, _ in self.terms], dtype=int).reshape(-1, self.n_vars)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for _, c in self.terms], dtype=float)

    @property
    def constant(self) -> float:
        return self.as_dict().get((0,) * self.n_vars, 0.0)

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e, _ in self.terms), default=-1)

    def variables(self) -> set[int]:
        """0-based indices of the variables with a positive exponent."""
        return {k for e, _ in self.terms for k, d in enumerate(e) if d > 0}

    def __call__(self, X) -> np.ndarray | float:
        x = np.asarray(X, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if not self.terms:
            out = np.zeros(X.shape[0])
        else:
            out = monomials(self.exponents, X) @ self.coefficients
        return float(out[0]) if single else out

    def __add__(self, other: "PolyModel") -> "PolyModel":
        return PolyModel.from_terms(self.n_vars, self.terms + other.terms)

    def times_var(self, k: int) -> "PolyModel":
        """Multiply by x_k (0-based)."""
        def bump(e):
            return tuple(d + (i == k) for i, d in enumerate(e))
        return PolyModel.from_terms(self.n_vars, ((bump(e), c) for e, c in self.terms))

    def without_constant(self) -> "PolyModel":
        zero = (0,) * self.n_vars
        return PolyModel(self.n_vars, tuple(t for t in self.terms if t[0] != zero))

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.terms:
            mono = "*".join(f"x{k + 1}" + (f"^{d}" if d > 1 else "")
                            for k, d in enumerate(e) if d > 0)
            parts.append(f"{c!r}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)


@dataclass(frozen=True)
class FitReport:
    cost: float
    sse: float
    l1: float
    gamma: float
    iterations: int
    converged: bool
    kkt_violation: float

    CSV_FIELDS = ("cost", "sse", "l1", "gamma", "iterations", "converged", "kkt_violation")

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def _kkt_violation(grad: np.ndarray, eta: np.ndarray, gamma: float) -> float:
    # grad = 2 X^T r
    zero = eta == 0.0
    viol = np.where(zero,
                    np.maximum(np.abs(grad) - gamma, 0.0),
                    np.abs(grad - gamma * np.sign(eta)))
    return float(viol.max(initial=0.0))


def fit_lasso(X, y, gamma: float, tol: float = 1e-10, max_iter: int = 100_000,
              init=None, callback: Callable[[int, np.ndarray], None] | None = None,
              ) -> tuple[np.ndarray, FitReport]:
    """Minimise ``||y - X eta||^2 + gamma * ||eta||_1`` by coordinate descent.

    Each sweep updates the coefficients in column order with the exact
    soft-threshold minimiser. Iteration stops when no coefficient moves by
    ``tol`` or more in a sweep; if ``max_iter`` sweeps pass first, the last
    iterate is returned with ``converged=False`` (the cost never increases,
    so it is also the best one).

    Parameters
    ----------
    X : (K, B) array
    y : (K,) array
    gamma : float
        l1 weight, >= 0.
    init : (B,) array, optional
        Warm start.
    callback : callable, optional
        Called as ``callback(sweep, eta)`` after every sweep.

    Returns
    -------
    eta : (B,) array
    report : FitReport
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if X.shape[0] < 1 or X.shape[0] != y.size:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.size} entries")
    gram = X.T @ X
    xty = X.T @ y
    diag = np.diag(gram).copy()
    active = np.flatnonzero(diag > 0.0)
    if active.size < diag.size:
        warnings.warn(f"design columns {np.flatnonzero(diag == 0.0).tolist()} are all zero",
                      RuntimeWarning, stacklevel=2)
    eta = np.zeros(X.shape[1]) if init is None else np.array(init, dtype=float)
    half = 0.5 * gamma
    converged = False
    sweep = 0
    while sweep < max_iter:
        sweep += 1
        biggest = 0.0
        for b in active:
            old = eta[b]
            rho = xty[b] - gram[b] @ eta + diag[b] * old
            if rho > half:
                new = (rho - half) / diag[b]
            elif rho < -half:
                new = (rho + half) / diag[b]
            else:
                new = 0.0
            if new != old:
                eta[b] = new
                biggest = max(biggest, abs(new - old))
        if callback is not None:
            callback(sweep, eta.copy())
        if biggest < tol:
            converged = True
            break
    if not converged:
        log.warning("lasso stopped after %d sweeps without converging", sweep)
    r = y - X @ eta
    sse = float(r @ r)
    l1 = float(np.abs(eta).sum())
    report = FitReport(cost=sse + gamma * l1, sse=sse, l1=l1, gamma=float(gamma),
                       iterations=sweep, converged=converged,
                       kkt_violation=_kkt_violation(2.0 * (X.T @ r), eta, gamma))
    return eta, report


def default_gamma(y, scale: float = 0.01) -> float:
    """``scale * (N+1) * var(y)``."""
    y = np.asarray(y, dtype=float)
    return float(scale * y.size * y.var())


def fit_poly(basis: MonomialBasis, samples, y, gamma: float | None = None,
             gamma_scale: float = 0.01, **kw) -> tuple[PolyModel, FitReport]:
    """Fit one function on ``basis``; ``gamma=None`` uses ``default_gamma``."""
    X = design_matrix(basis, samples)
    g = default_gamma(y, gamma_scale) if gamma is None else gamma
    eta, report = fit_lasso(X, y, g, **kw)
    return PolyModel.from_coefficients(basis, eta), report


@dataclass(frozen=True)
class SystemFit:
    """Polynomial approximants of every f_i and g_ij on one sample set."""

    f: tuple[PolyModel, ...]
    g: tuple[tuple[PolyModel, ...], ...]
    reports: tuple[tuple[str, FitReport], ...]
    p_f: int
    p_g: int


def approximate_system(sys: NlSystem, samples: SampleSet, p_f: int, p_g: int,
                       gamma: float | None = None, gamma_scale: float = 0.01,
                       tol: float = 1e-10, max_iter: int = 100_000) -> SystemFit:
    """One lasso fit per scalar function; F entries on degree ``p_f``, G on ``p_g``."""
    if p_f < 1:
        raise ValueError("p_f must be >= 1 so the fitted f_i can be factorised")
    if p_g < 0:
        raise ValueError("p_g must be >= 0")
    F, G = eval_system(sys, samples.points)
    Xf = design_matrix(make_basis(sys.n, p_f), samples)
    Xg = Xf if p_g == p_f else design_matrix(make_basis(sys.n, p_g), samples)
    bf, bg = make_basis(sys.n, p_f), make_basis(sys.n, p_g)

    def one(name, basis, X, y):
        g = default_gamma(y, gamma_scale) if gamma is None else gamma
        eta, rep = fit_lasso(X, y, g, tol=tol, max_iter=max_iter)
        if not rep.converged:
            log.warning("fit of %s did not converge (%d sweeps)", name, rep.iterations)
        reports.append((name, rep))
        return PolyModel.from_coefficients(basis, eta)

    reports: list[tuple[str, FitReport]] = []
    f = tuple(one(f"f[{i + 1}]", bf, Xf, F[:, i]) for i in range(sys.n + sys.q))
    g = tuple(tuple(one(f"g[{i + 1}][{j + 1}]", bg, Xg, G[:, i, j]) for j in range(sys.m))
              for i in range(sys.n + sys.q))
    return SystemFit(f, g, tuple(reports), p_f, p_g)
