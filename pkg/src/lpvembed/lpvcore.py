"""Assembled LPV model

    xdot = A(alpha) x + B(alpha) u
    y    = C(alpha) x + D(alpha) u

Every entry of the stacked matrix [A B; C D] is a polynomial in the state
plus an affine function of the PCA scheduling variables theta:

    a_ik = beta_ik(x)  + e~_{(i-1)n+k}(theta)
    b_ij = g~_ij(x)    + e~_{n(n+q)+(i-1)m+j}(theta)

theta is computed from the true residuals at x, so the model needs the
original system, the fitted polynomials and the factor ordering; all of
these are carried along and written to the export file.
"""
from __future__ import annotations

import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .factor import Factorization, factorize_system
from .polyreg import PolyModel, SystemFit
from .schedpca import PcaReduction, RowNormalizer, residual_vectors, theta_map
from .sysmodel import NlSystem, SampleSet, eval_system, parse_system

__all__ = [
    "SCHEMA", "SchemaError", "SchedVar", "LpvModel", "LpvEval",
    "assemble_lpv", "lpv_matrices", "eval_lpv", "compute_bounds", "bound_violations",
    "export_model", "import_model", "dumps_model", "loads_model", "true_dynamics",
]

SCHEMA = "lpv-1"
DEFAULT_MARGIN = 0.05
BOUND_FLOOR = 1e-12


class SchemaError(ValueError):
    """An exported model file that cannot be read back."""


@dataclass(frozen=True)
class SchedVar:
    kind: str   # 'state' or 'theta'
    index: int  # 1-based
    lower: float = -math.inf
    upper: float = math.inf

    @property
    def name(self) -> str:
        return f"x{self.index}" if self.kind == "state" else f"theta{self.index}"


@dataclass(frozen=True, eq=False)
class LpvModel:
    n: int
    m: int
    q: int
    factorization: Factorization
    reduction: PcaReduction
    poly: tuple[tuple[PolyModel, ...], ...]  # (n+q) x (n+m)
    affine: np.ndarray                       # (n+q, n+m, v+1): constant, then theta coefficients
    scheduling: tuple[SchedVar, ...]
    provenance: dict = field(default_factory=dict)

    @property
    def v(self) -> int:
        return self.reduction.v

    @property
    def sys(self) -> NlSystem:
        return self.factorization.sys

    @property
    def fit(self) -> SystemFit:
        return self.factorization.fit

    @property
    def state_degree(self) -> int:
        return max((p.degree for row in self.poly for p in row), default=-1)

    def schedule(self, X) -> np.ndarray:
        """``(K, len(scheduling))`` scheduling-variable values."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        theta = self.theta(X)
        cols = [X[:, s.index - 1] if s.kind == "state" else theta[:, s.index - 1]
                for s in self.scheduling]
        return np.column_stack(cols) if cols else np.empty((X.shape[0], 0))

    def theta(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return theta_map(self.reduction, residual_vectors(self.factorization, X))

    def summary(self) -> str:
        lines = [f"LPV model: n={self.n} m={self.m} q={self.q} v={self.v} "
                 f"(v_m = {self.reduction.vm:.4f}, residual rank {self.reduction.rank})",
                 f"polynomial degree in states: {max(self.state_degree, 0)}",
                 "scheduling variables:"]
        for s in self.scheduling:
            lines.append(f"  {s.name:<8} [{s.lower:.6g}, {s.upper:.6g}]")
        return "\n".join(lines)


def _affine_coefficients(red: PcaReduction, n: int, m: int, q: int) -> np.ndarray:
    mu, s = red.normalizer.mean, red.normalizer.scale
    W = np.concatenate([mu[:, None], s[:, None] * red.U_s], axis=1)  # (rows, v+1)
    out = np.empty((n + q, n + m, red.v + 1))
    for i in range(n + q):
        for k in range(n):
            out[i, k] = W[i * n + k]
        for j in range(m):
            out[i, n + j] = W[n * (n + q) + i * m + j]
    return out


def assemble_lpv(fac: Factorization, red: PcaReduction, samples: SampleSet | None = None,
                 margin: float = DEFAULT_MARGIN, provenance: dict | None = None) -> LpvModel:
    """Build the LPV model; bounds come from ``samples`` when given."""
    sys = fac.sys
    n, m, q = sys.n, sys.m, sys.q
    if red.U_s.shape[0] != (n + q) * (n + m):
        raise ValueError(f"reduction has {red.U_s.shape[0]} rows, "
                         f"expected {(n + q) * (n + m)}")
    poly = tuple(tuple(fac.beta[i].entries) + tuple(fac.fit.g[i]) for i in range(n + q))
    used: set[int] = set()
    for row in poly:
        for p in row:
            used |= p.variables()
    sched = [SchedVar("state", k + 1) for k in sorted(used)]
    sched += [SchedVar("theta", t + 1) for t in range(red.v)]
    model = LpvModel(n, m, q, fac, red, poly, _affine_coefficients(red, n, m, q),
                     tuple(sched), dict(provenance or {}))
    if samples is not None:
        model = compute_bounds(model, samples, margin)
    return model


def lpv_matrices(model: LpvModel, X, theta=None) -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``[A B; C D]`` at each point: ``(K, n+q, n+m)``, plus theta ``(K, v)``.

    ``theta`` defaults to the value implied by the true residuals at X.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if theta is None:
        theta = model.theta(X)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    M = model.affine[None, :, :, 0] + np.einsum("ijv,kv->kij", model.affine[:, :, 1:], theta)
    for i, row in enumerate(model.poly):
        for j, p in enumerate(row):
            if p.terms:
                M[:, i, j] += p(X)
    return M, theta


@dataclass(frozen=True, eq=False)
class LpvEval:
    xdot: np.ndarray
    y: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    theta: np.ndarray
    e: np.ndarray


def eval_lpv(model: LpvModel, x, u) -> LpvEval:
    """Matrices and outputs of the LPV model at one state and input."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    n, m = model.n, model.m
    if x.size != n or u.size != m:
        raise ValueError(f"expected x of length {n} and u of length {m}")
    e = residual_vectors(model.factorization, x[None, :])
    M, theta = lpv_matrices(model, x[None, :], theta_map(model.reduction, e))
    M = M[0]
    A, B, C, D = M[:n, :n], M[:n, n:], M[n:, :n], M[n:, n:]
    return LpvEval(A @ x + B @ u, C @ x + D @ u, A, B, C, D, theta[0], e[0])


def compute_bounds(model: LpvModel, samples: SampleSet,
                   margin: float = DEFAULT_MARGIN) -> LpvModel:
    """Scheduling bounds from the samples, widened by ``margin`` of the half-range.

    State variables also cover their whole domain interval.
    """
    X = samples.points
    values = model.schedule(X)
    sched = []
    for c, s in enumerate(model.scheduling):
        lo, hi = float(values[:, c].min()), float(values[:, c].max())
        if s.kind == "state":
            lo = min(lo, model.sys.lower[s.index - 1])
            hi = max(hi, model.sys.upper[s.index - 1])
        pad = max(margin * (hi - lo) / 2.0, BOUND_FLOOR)
        sched.append(dataclasses.replace(s, lower=lo - pad, upper=hi + pad))
    return dataclasses.replace(model, scheduling=tuple(sched))


def bound_violations(model: LpvModel, X) -> float:
    """Fraction of points with any scheduling variable outside its bounds."""
    values = model.schedule(X)
    lo = np.array([s.lower for s in model.scheduling])
    hi = np.array([s.upper for s in model.scheduling])
    bad = np.any((values < lo) | (values > hi), axis=1)
    return float(bad.mean()) if bad.size else 0.0


# -- serialisation -----------------------------------------------------------

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x!r}")
    return format(x, ".17e")


def _dump(obj, out: io.StringIO, indent: int) -> None:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        items = list(obj.items())
        for n, (k, v) in enumerate(items):
            out.write(f"{pad}  {json.dumps(str(k))}: ")
            _dump(v, out, indent + 1)
            out.write(",\n" if n < len(items) - 1 else "\n")
        out.write(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if all(isinstance(v, (int, float, str, bool)) or v is None for v in obj):
            out.write("[" + ", ".join(_scalar(v) for v in obj) + "]")
            return
        out.write("[\n")
        for n, v in enumerate(obj):
            out.write(pad + "  ")
            _dump(v, out, indent + 1)
            out.write(",\n" if n < len(obj) - 1 else "\n")
        out.write(pad + "]")
    else:
        out.write(_scalar(obj))


def _scalar(v) -> str:
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _fmt_float(float(v))


def _poly_doc(p: PolyModel) -> dict:
    return {"exponents": [list(e) for e, _ in p.terms],
            "coefficients": [c for _, c in p.terms]}


def _poly_from_doc(doc: dict, n: int) -> PolyModel:
    exps, coefs = doc["exponents"], doc["coefficients"]
    if len(exps) != len(coefs):
        raise SchemaError("polynomial exponent and coefficient lists differ in length")
    return PolyModel.from_terms(n, zip((tuple(e) for e in exps), coefs))


def _model_doc(model: LpvModel) -> dict:
    n, m, q = model.n, model.m, model.q
    red = model.reduction

    def block(rows, cols):
        return [[{"poly": _poly_doc(model.poly[i][j]),
                  "theta": model.affine[i, j].tolist()} for j in cols] for i in rows]

    return {
        "schema": SCHEMA,
        "dims": {"n": n, "m": m, "q": q, "v": red.v},
        "scheduling": [{"kind": s.kind, "index": s.index, "lower": s.lower, "upper": s.upper}
                       for s in model.scheduling],
        "blocks": {
            "A": block(range(n), range(n)),
            "B": block(range(n), range(n, n + m)),
            "C": block(range(n, n + q), range(n)),
            "D": block(range(n, n + q), range(n, n + m)),
        },
        "pca": {
            "U_s": red.U_s.tolist(),
            "sigma": red.sigma.tolist(),
            "mu": red.normalizer.mean.tolist(),
            "s": red.normalizer.scale.tolist(),
            "rank": red.rank,
        },
        "fits": {
            "p_f": model.fit.p_f,
            "p_g": model.fit.p_g,
            "f": [_poly_doc(p) for p in model.fit.f],
            "g": [[_poly_doc(p) for p in row] for row in model.fit.g],
        },
        "factor": {"order": [k + 1 for k in model.factorization.order]},
        "provenance": model.provenance,
        "source": {"model": model.sys.source},
    }


def dumps_model(model: LpvModel) -> str:
    out = io.StringIO()
    _dump(_model_doc(model), out, 0)
    out.write("\n")
    return out.getvalue()


def export_model(model: LpvModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def _matrix(rows, shape: tuple[int, int], what: str) -> list:
    if not isinstance(rows, list) or len(rows) != shape[0] or any(
            not isinstance(r, list) or len(r) != shape[1] for r in rows):
        raise SchemaError(f"block {what} must be {shape[0]} x {shape[1]}")
    return rows


def loads_model(text: str) -> LpvModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not a JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("model file must hold a JSON object")
    if doc.get("schema") != SCHEMA:
        raise SchemaError(f"schema {doc.get('schema')!r} is not {SCHEMA!r}")
    try:
        return _from_doc(doc)
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SchemaError(f"corrupted model file: {exc!r}") from exc


def _from_doc(doc: dict) -> LpvModel:
    dims = doc["dims"]
    n, m, q, v = (int(dims[k]) for k in ("n", "m", "q", "v"))
    sys = parse_system(doc["source"]["model"])
    if (sys.n, sys.m, sys.q) != (n, m, q):
        raise SchemaError("dims disagree with the embedded model source")

    fits = doc["fits"]
    f = tuple(_poly_from_doc(p, n) for p in fits["f"])
    g = tuple(tuple(_poly_from_doc(p, n) for p in row) for row in _matrix(fits["g"], (n + q, m), "fits.g"))
    if len(f) != n + q:
        raise SchemaError(f"expected {n + q} fitted f polynomials")
    fit = SystemFit(f, g, (), int(fits["p_f"]), int(fits["p_g"]))
    order = [int(k) - 1 for k in doc["factor"]["order"]]
    fac = factorize_system(sys, fit, order)

    pca = doc["pca"]
    rows = (n + q) * (n + m)
    U_s = np.array(pca["U_s"], dtype=float).reshape(-1, v) if v else np.empty((rows, 0))
    if U_s.shape != (rows, v):
        raise SchemaError(f"pca.U_s must be {rows} x {v}")
    mu = np.array(pca["mu"], dtype=float)
    s = np.array(pca["s"], dtype=float)
    sigma = np.array(pca["sigma"], dtype=float)
    if mu.shape != (rows,) or s.shape != (rows,) or sigma.shape != (rows,):
        raise SchemaError(f"pca.mu, pca.s and pca.sigma must have {rows} entries")
    red = PcaReduction(U_s, sigma, v, int(pca["rank"]), RowNormalizer(mu, s))

    blocks = doc["blocks"]
    parts = {name: _matrix(blocks[name], shape, name) for name, shape in
             (("A", (n, n)), ("B", (n, m)), ("C", (q, n)), ("D", (q, m)))}
    poly, affine = [], np.empty((n + q, n + m, v + 1))
    for i in range(n + q):
        top = i < n
        left = parts["A" if top else "C"][i if top else i - n]
        right = parts["B" if top else "D"][i if top else i - n]
        row = []
        for j, entry in enumerate(left + right):
            row.append(_poly_from_doc(entry["poly"], n))
            theta = np.array(entry["theta"], dtype=float)
            if theta.shape != (v + 1,):
                raise SchemaError(f"block entry ({i + 1},{j + 1}) needs {v + 1} theta coefficients")
            affine[i, j] = theta
        poly.append(tuple(row))

    sched = []
    for s_doc in doc["scheduling"]:
        kind = s_doc["kind"]
        if kind not in ("state", "theta"):
            raise SchemaError(f"unknown scheduling kind {kind!r}")
        sched.append(SchedVar(kind, int(s_doc["index"]), float(s_doc["lower"]),
                              float(s_doc["upper"])))
    return LpvModel(n, m, q, fac, red, tuple(poly), affine, tuple(sched),
                    dict(doc.get("provenance", {})))


def import_model(path) -> LpvModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))


def true_dynamics(sys: NlSystem, X, U) -> tuple[np.ndarray, np.ndarray]:
    """``(xdot, y)`` of the nonlinear system at points ``X`` with inputs ``U``."""
    F, G = eval_system(sys, np.atleast_2d(X))
    FG = F + np.einsum("kij,kj->ki", G, np.atleast_2d(U))
    return FG[:, :sys.n], FG[:, sys.n:]
