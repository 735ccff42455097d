"""Factorisation of each f_i into a row multiplying the state.

Each f_i is split as

    f_i = (f~_i - f~_i(0)) + (f_i - f~_i + f~_i(0)) = fbar_i + ebar_i

The polynomial part fbar_i is factorised monomial by monomial into
``beta_i1..beta_in``. The shifted residual ebar_i is factorised by
sequential differences along partial states xcheck_k = (x1..xk, 0..0)
(taken in the chosen variable order):

    ebar_ik = (ebar_i(xcheck_k) - ebar_i(xcheck_{k-1})) / x_k        x_k != 0
    ebar_ik = d ebar_i(xcheck_k) / d x_k  at xcheck_{k-1}           x_k == 0

with xcheck_0 = 0, so that ``sum_k ebar_ik(x) x_k = ebar_i(x)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exprlang import Expr, central_difference
from .polyreg import PolyModel, SystemFit
from .sysmodel import ModelError, NlSystem, eval_checked

__all__ = [
    "ShiftedResidual", "PolyFactorRow", "ResidualRowEvaluator", "Factorization",
    "shift_residual", "factor_poly", "eval_residual_row", "factorize_system",
    "check_order",
]

ORIGIN_TOL = 1e-9
ZERO_TOL = 1e-12
GUARD_TOL = 1e-8
GUARD_RTOL = 1e-4


def check_order(order: Sequence[int] | None, n: int) -> tuple[int, ...]:
    """Validate a 0-based variable permutation; ``None`` is the natural order."""
    if order is None:
        return tuple(range(n))
    order = tuple(int(k) for k in order)
    if sorted(order) != list(range(n)):
        raise ValueError(f"order {order} is not a permutation of 0..{n - 1}")
    return order


@dataclass(frozen=True)
class ShiftedResidual:
    """``ebar(x) = f(x) - f~(x) + f~(0)``, vectorised over rows of ``x``."""

    expr: Expr
    fit: PolyModel
    name: str = "f"

    @property
    def offset(self) -> float:
        return self.fit.constant

    def __call__(self, X) -> np.ndarray | float:
        x = np.asarray(X, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        out = eval_checked(self.name, self.expr, X) - self.fit(X) + self.offset
        return float(out[0]) if single else out


def shift_residual(f_expr: Expr, f_fit: PolyModel, name: str = "f") -> ShiftedResidual:
    ebar = ShiftedResidual(f_expr, f_fit, name)
    at0 = ebar(np.zeros(f_fit.n_vars))
    if abs(at0) > ORIGIN_TOL:
        raise ModelError(f"shifted residual of {name} is {at0!r} at the origin; "
                         f"{name} must vanish at 0")
    return ebar


@dataclass(frozen=True)
class PolyFactorRow:
    entries: tuple[PolyModel, ...]

    def __call__(self, X) -> np.ndarray:
        """``(K, n)`` values of beta_i1..beta_in."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([b(X) for b in self.entries])

    def recombine(self) -> PolyModel:
        """``sum_k beta_k * x_k`` in exact coefficient arithmetic."""
        total = PolyModel(len(self.entries))
        for k, b in enumerate(self.entries):
            total = total + b.times_var(k)
        return total


def factor_poly(fit: PolyModel, order: Sequence[int] | None = None,
                ) -> tuple[float, PolyFactorRow]:
    """Split ``fit`` into its constant and a row ``beta`` with beta . x = fit - fit(0).

    Each non-constant monomial goes to the first variable in ``order``
    (0-based) that it contains, and is divided by that variable.
    """
    n = fit.n_vars
    order = check_order(order, n)
    buckets: list[list] = [[] for _ in range(n)]
    for e, c in fit.terms:
        for k in order:
            if e[k] > 0:
                reduced = tuple(d - (i == k) for i, d in enumerate(e))
                buckets[k].append((reduced, c))
                break
    row = PolyFactorRow(tuple(PolyModel.from_terms(n, b) for b in buckets))
    return fit.constant, row


@dataclass(frozen=True)
class ResidualRowEvaluator:
    """Evaluates ebar_i1..ebar_in for one shifted residual."""

    residual: Callable[[np.ndarray], np.ndarray]
    order: tuple[int, ...]
    h: float | None = None

    def __call__(self, X) -> np.ndarray:
        x = np.asarray(X, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        K, n = X.shape
        rows = np.empty((K, n))
        partial = np.zeros_like(X)
        prev = np.zeros(K)
        for k in self.order:
            before = partial.copy()
            partial[:, k] = X[:, k]
            cur = self.residual(partial)
            xk = X[:, k]
            mag = np.abs(xk)
            big = mag >= GUARD_TOL
            with np.errstate(divide="ignore", invalid="ignore"):
                quotient = (cur - prev) / xk
            rows[big, k] = quotient[big]
            near = ~big
            if near.any():
                deriv = central_difference(self.residual, before[near], k, self.h)
                q = quotient[near]
                usable = (mag[near] >= ZERO_TOL) & (
                    np.abs(q - deriv) <= GUARD_RTOL * (1.0 + np.abs(deriv)))
                rows[near, k] = np.where(usable, q, deriv)
            if not np.all(np.isfinite(rows[:, k])):
                bad = int(np.flatnonzero(~np.isfinite(rows[:, k]))[0])
                raise ModelError(f"residual factor {k + 1} not finite at x = {X[bad].tolist()}")
            prev = cur
        return rows[0] if single else rows


def eval_residual_row(ev: ResidualRowEvaluator, x) -> np.ndarray:
    return ev(x)


@dataclass(frozen=True)
class Factorization:
    """All factor rows of one fitted system."""

    sys: NlSystem
    fit: SystemFit
    order: tuple[int, ...]
    constants: tuple[float, ...]
    beta: tuple[PolyFactorRow, ...]
    rows: tuple[ResidualRowEvaluator, ...]

    def ef(self, X) -> np.ndarray:
        """``(K, n+q, n)`` residual factors ebar_ik."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([r(X) for r in self.rows], axis=1)

    def eg(self, X) -> np.ndarray:
        """``(K, n+q, m)`` input-gain residuals g_ij - g~_ij."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        sys = self.sys
        out = np.empty((X.shape[0], sys.n + sys.q, sys.m))
        for i in range(sys.n + sys.q):
            for j in range(sys.m):
                g = eval_checked(f"g[{i + 1}][{j + 1}]", sys.g[i][j], X)
                out[:, i, j] = g - self.fit.g[i][j](X)
        return out

    def beta_values(self, X) -> np.ndarray:
        """``(K, n+q, n)`` polynomial factors beta_ik."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([b(X) for b in self.beta], axis=1)


def factorize_system(sys: NlSystem, fit: SystemFit, order: Sequence[int] | None = None,
                     h: float | None = None) -> Factorization:
    order = check_order(order, sys.n)
    constants, beta, rows = [], [], []
    for i, (e, p) in enumerate(zip(sys.f, fit.f), 1):
        c, row = factor_poly(p, order)
        constants.append(c)
        beta.append(row)
        rows.append(ResidualRowEvaluator(shift_residual(e, p, f"f[{i}]"), order, h))
    return Factorization(sys, fit, order, tuple(constants), tuple(beta), tuple(rows))
