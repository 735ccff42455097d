"""Control-affine nonlinear systems and their sample sets.

A system is

    xdot = F1(x) + G1(x) u
    y    = F2(x) + G2(x) u

with F = [F1; F2] stored as n+q expressions and G = [G1; G2] as an
(n+q) x m grid of expressions, all over x1..xn, on an axis-aligned box
that contains the origin.

Model files are UTF-8 text, one statement per line::

    # comment
    states 2
    inputs 1
    outputs 1
    domain x1 -1 1
    domain x2 -pi/2 pi/2
    const k = 0.5             # number or constant expression
    let V = 1 + k*cos(x1)     # expression alias, spliced where used
    f[1] = 5*x2 + k*x1*x2
    g[1][1] = 10*x1^3/V

Omitted ``g`` entries are zero. ``let`` is an extension used by the
bundled robot model to avoid repeating its shared denominator.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .exprlang import (Const, EvaluationError, Expr, ParseError, evaluate,
                       parse_expr, variables)

__all__ = [
    "ModelError", "ModelFileError", "SingularPointError",
    "NlSystem", "SampleSet", "STRATEGIES",
    "parse_system", "load_system", "sample_box", "sample_domain", "eval_system",
    "eval_checked",
]

STRATEGIES = ("grid", "latin-hypercube", "uniform-random")
ORIGIN_TOL = 1e-12


class ModelError(ValueError):
    """A system that violates a structural requirement."""


class ModelFileError(ModelError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 path: str | None = None):
        self.line = line
        self.column = column
        self.path = path
        where = path or "<model>"
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


class SingularPointError(ModelError):
    """A system function is not finite at some state."""

    def __init__(self, function: str, point, detail: str = ""):
        self.function = function
        self.point = np.asarray(point, dtype=float)
        msg = f"{function} is not finite at x = {self.point.tolist()}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


@dataclass(frozen=True, eq=False)
class NlSystem:
    n: int
    m: int
    q: int
    f: tuple[Expr, ...]
    g: tuple[tuple[Expr, ...], ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    source: str = ""

    def __post_init__(self):
        if len(self.f) != self.n + self.q:
            raise ModelError(f"expected {self.n + self.q} f entries, got {len(self.f)}")
        if len(self.g) != self.n + self.q or any(len(row) != self.m for row in self.g):
            raise ModelError(f"G must be {self.n + self.q} x {self.m}")
        if len(self.lower) != self.n or len(self.upper) != self.n:
            raise ModelError("domain must give one interval per state")
        for i, (lo, hi) in enumerate(zip(self.lower, self.upper), 1):
            if not lo < hi:
                raise ModelError(f"domain of x{i} is empty: [{lo}, {hi}]")
            if not lo <= 0.0 <= hi:
                raise ModelError(f"domain of x{i} [{lo}, {hi}] does not contain 0")
        for name, e in self.functions():
            bad = [k for k in variables(e) if k > self.n]
            if bad:
                raise ModelError(f"{name} references x{bad[0]} but n = {self.n}")
        origin = np.zeros(self.n)
        for i, e in enumerate(self.f, 1):
            try:
                v = evaluate(e, origin)
            except EvaluationError as exc:
                raise SingularPointError(f"f[{i}]", origin, str(exc)) from exc
            if abs(v) > ORIGIN_TOL:
                raise ModelError(f"f[{i}](0) = {v!r}; every f_i must vanish at the origin")

    @property
    def box(self) -> np.ndarray:
        """``(n, 2)`` array of [lo, hi] per state."""
        return np.column_stack([self.lower, self.upper])

    def functions(self):
        """Yield ``(name, expr)`` for every f and g entry, f rows first."""
        for i, e in enumerate(self.f, 1):
            yield f"f[{i}]", e
        for i, row in enumerate(self.g, 1):
            for j, e in enumerate(row, 1):
                yield f"g[{i}][{j}]", e


_HEADER_RE = re.compile(r"^(states|inputs|outputs)\s+(\d+)$")
_DOMAIN_RE = re.compile(r"^domain\s+x(\d+)\s+(.+)$")
_BIND_RE = re.compile(r"^(const|let)\s+([A-Za-z_]\w*)\s*=\s*(.+)$")
_F_RE = re.compile(r"^f\[(\d+)\]\s*=\s*(.+)$")
_G_RE = re.compile(r"^g\[(\d+)\]\[(\d+)\]\s*=\s*(.+)$")


def _split_bounds(text: str) -> tuple[str, str]:
    # two constant expressions separated by whitespace at paren depth 0
    depth = 0
    for pos, ch in enumerate(text):
        depth += ch == "("
        depth -= ch == ")"
        if ch.isspace() and depth == 0 and text[:pos].strip():
            lo, hi = text[:pos].strip(), text[pos:].strip()
            if hi:
                return lo, hi
    raise ValueError("expected 'domain x<i> <lo> <hi>'")


def parse_system(text: str, path: str | None = None) -> NlSystem:
    """Parse and validate a model file's text."""
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0]
        stripped = body.strip()
        if stripped:
            lines.append((lineno, stripped, len(body) - len(body.lstrip())))

    dims: dict[str, int] = {}
    for lineno, line, _ in lines:
        m = _HEADER_RE.match(line)
        if m:
            if m.group(1) in dims:
                raise ModelFileError(f"duplicate '{m.group(1)}' line", lineno, path=path)
            dims[m.group(1)] = int(m.group(2))
    for key in ("states", "inputs"):
        if key not in dims:
            raise ModelFileError(f"missing '{key}' line", path=path)
    n, m_in, q = dims["states"], dims["inputs"], dims.get("outputs", 0)
    if n < 1:
        raise ModelFileError("states must be >= 1", path=path)

    names: dict[str, float | Expr] = {}
    lower: dict[int, float] = {}
    upper: dict[int, float] = {}
    f: dict[int, Expr] = {}
    g: dict[tuple[int, int], Expr] = {}

    def expr(src: str, lineno: int, line: str, indent: int, n_vars: int) -> Expr:
        try:
            return parse_expr(src, n_vars, names)
        except ParseError as exc:
            col = indent + line.index(src) + exc.offset + 1
            raise ModelFileError(f"expected {exc.expected}, found {exc.found}",
                                 lineno, col, path) from exc

    def constant(src: str, lineno: int, line: str, indent: int) -> float:
        e = expr(src, lineno, line, indent, 0)
        try:
            value = evaluate(e, np.zeros(1))
        except EvaluationError as exc:
            raise ModelFileError(str(exc), lineno, path=path) from exc
        return float(value)

    for lineno, line, indent in lines:
        if _HEADER_RE.match(line):
            continue
        if mt := _DOMAIN_RE.match(line):
            i = int(mt.group(1))
            if not 1 <= i <= n:
                raise ModelFileError(f"domain for unknown state x{i}", lineno, path=path)
            try:
                lo_src, hi_src = _split_bounds(mt.group(2))
            except ValueError as exc:
                raise ModelFileError(str(exc), lineno, path=path) from exc
            lower[i] = constant(lo_src, lineno, line, indent)
            upper[i] = constant(hi_src, lineno, line, indent)
        elif mt := _BIND_RE.match(line):
            kind, name, src = mt.groups()
            if name in names or name == "pi" or re.fullmatch(r"x\d+", name):
                raise ModelFileError(f"name '{name}' is already defined", lineno, path=path)
            if kind == "const":
                names[name] = constant(src, lineno, line, indent)
            else:
                names[name] = expr(src, lineno, line, indent, n)
        elif mt := _F_RE.match(line):
            i = int(mt.group(1))
            if not 1 <= i <= n + q:
                raise ModelFileError(f"f[{i}] outside 1..{n + q}", lineno, path=path)
            if i in f:
                raise ModelFileError(f"f[{i}] defined twice", lineno, path=path)
            f[i] = expr(mt.group(2), lineno, line, indent, n)
        elif mt := _G_RE.match(line):
            i, j = int(mt.group(1)), int(mt.group(2))
            if not (1 <= i <= n + q and 1 <= j <= m_in):
                raise ModelFileError(f"g[{i}][{j}] outside the {n + q} x {m_in} grid",
                                     lineno, path=path)
            if (i, j) in g:
                raise ModelFileError(f"g[{i}][{j}] defined twice", lineno, path=path)
            g[i, j] = expr(mt.group(3), lineno, line, indent, n)
        else:
            raise ModelFileError(f"unrecognised statement '{line}'", lineno, path=path)

    missing = [i for i in range(1, n + 1) if i not in lower]
    if missing:
        raise ModelFileError(f"missing domain for x{missing[0]}", path=path)
    missing = [i for i in range(1, n + q + 1) if i not in f]
    if missing:
        raise ModelFileError(f"missing f[{missing[0]}]", path=path)

    zero = Const(0.0)
    try:
        return NlSystem(
            n=n, m=m_in, q=q,
            f=tuple(f[i] for i in range(1, n + q + 1)),
            g=tuple(tuple(g.get((i, j), zero) for j in range(1, m_in + 1))
                    for i in range(1, n + q + 1)),
            lower=tuple(lower[i] for i in range(1, n + 1)),
            upper=tuple(upper[i] for i in range(1, n + 1)),
            source=text,
        )
    except SingularPointError:
        raise
    except ModelError as exc:
        raise ModelFileError(str(exc), path=path) from exc


def load_system(path) -> NlSystem:
    path = Path(path)
    return parse_system(path.read_text(encoding="utf-8"), str(path))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """N+1 state samples, one per row."""

    points: np.ndarray
    strategy: str
    seed: int
    lower: tuple[float, ...] = field(default=())
    upper: tuple[float, ...] = field(default=())

    def __post_init__(self):
        self.points.setflags(write=False)

    @property
    def N(self) -> int:
        return self.points.shape[0] - 1

    def __len__(self) -> int:
        return self.points.shape[0]


def sample_box(lower, upper, strategy: str = "latin-hypercube", N: int = 4999,
               seed: int = 1) -> SampleSet:
    """Draw N+1 points from the box ``[lower, upper]``.

    ``grid`` needs N+1 to be a perfect n-th power and produces the full
    tensor lattice; the two random strategies are deterministic in
    ``seed``.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = lower.size
    count = N + 1
    if N < 1:
        raise ValueError("N must be >= 1")
    if strategy == "grid":
        k = int(round(count ** (1.0 / n)))
        if k ** n != count:
            raise ValueError(f"grid sampling needs N+1 = k^{n}; got N+1 = {count}")
        axes = [np.linspace(lo, hi, k) for lo, hi in zip(lower, upper)]
        pts = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    elif strategy == "latin-hypercube":
        unit = qmc.LatinHypercube(d=n, rng=np.random.default_rng(seed)).random(count)
        pts = lower + unit * (upper - lower)
    elif strategy == "uniform-random":
        pts = np.random.default_rng(seed).uniform(lower, upper, size=(count, n))
    else:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    pts = np.clip(pts, lower, upper)
    return SampleSet(np.ascontiguousarray(pts), strategy, seed,
                     tuple(lower.tolist()), tuple(upper.tolist()))


def sample_domain(sys: NlSystem, strategy: str = "latin-hypercube", N: int = 4999,
                  seed: int = 1) -> SampleSet:
    return sample_box(sys.lower, sys.upper, strategy, N, seed)


def eval_checked(name: str, e: Expr, X: np.ndarray) -> np.ndarray:
    try:
        return evaluate(e, X)
    except EvaluationError as exc:
        for row in X:
            try:
                evaluate(e, row)
            except EvaluationError:
                raise SingularPointError(name, row, str(exc)) from exc
        raise SingularPointError(name, X[0], str(exc)) from exc


def eval_system(sys: NlSystem, x) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate F and G at one state or at each row of ``(K, n)`` states.

    Returns ``(F, G)`` shaped ``(n+q,)`` and ``(n+q, m)`` for a single
    point, with a leading K axis otherwise.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != sys.n:
        raise ValueError(f"state has dimension {X.shape[1]}, system has n = {sys.n}")
    F = np.empty((X.shape[0], sys.n + sys.q))
    G = np.empty((X.shape[0], sys.n + sys.q, sys.m))
    for i, e in enumerate(sys.f):
        F[:, i] = eval_checked(f"f[{i + 1}]", e, X)
    for i, row in enumerate(sys.g):
        for j, e in enumerate(row):
            G[:, i, j] = eval_checked(f"g[{i + 1}][{j + 1}]", e, X)
    if single:
        return F[0], G[0]
    return F, G
