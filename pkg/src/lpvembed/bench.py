"""Bundled benchmark cases: sweeps over v, error tables and surface data.

Each case runs the embedding pipeline once up to the SVD and then builds
one model per value of v in its sweep. Outputs go to ``<out>/<case>/``:

    vm.csv             v, n_sched, sigma, vm  (+ baseline column for example2)
    mse.csv            v, n_sched, one column per function
    surface_<fn>.csv   x1, x2, true, lpv, error on a 51 x 51 grid
    model_v<k>.json    exported model for every v in the sweep
    run.log            configuration and fit reports, no timestamps

Errors are measured on a uniform grid over (x1, x2) with any remaining
states frozen at 0, independent of the fitting samples.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .lpvcore import LpvModel, export_model, lpv_matrices
from .pipeline import RunConfig, Stages, prepare
from .polyreg import FitReport
from .schedpca import vm_table
from .sysmodel import NlSystem, eval_system, parse_system

__all__ = [
    "BenchCase", "MetricsReport", "CASES", "BASELINE_VM", "GRID_POINTS",
    "get_case", "model_text", "function_names", "eval_grid", "mse_functions",
    "surface_values", "run_case",
]

GRID_POINTS = 51

# Reported v_m of the compared PCA mapping for v = 3..6; displayed, never computed.
BASELINE_VM = {3: 0.6960, 4: 0.8090, 5: 0.8684, 6: 0.9210}
BASELINE_COLUMN = "baseline_vm_reported_not_computed"


def model_text(filename: str) -> str:
    return resources.files("lpvembed").joinpath("data", filename).read_text(encoding="utf-8")


@dataclass(frozen=True)
class BenchCase:
    """One reproducible benchmark.

    ``figure_v`` selects the model whose surfaces are written.
    """

    case_id: str
    model_file: str
    pf: int
    pg: int
    sweep: tuple[int, ...]
    figure_v: int
    gamma_scale: float = 0.01
    samples: int = 5000
    strategy: str = "latin-hypercube"
    seed: int = 1
    baseline: dict = field(default_factory=dict)

    @property
    def text(self) -> str:
        return model_text(self.model_file)

    def system(self) -> NlSystem:
        return parse_system(self.text, self.model_file)

    def config(self, **overrides) -> RunConfig:
        base = dict(model=self.model_file, pf=self.pf, pg=self.pg,
                    gamma_scale=self.gamma_scale, samples=self.samples,
                    strategy=self.strategy, seed=self.seed)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig(**base)


CASES = {
    c.case_id: c for c in (
        BenchCase("example1-s1", "example1.nlsys", pf=1, pg=0, sweep=(1, 2, 3, 4, 5),
                  figure_v=3, gamma_scale=1e-3),
        BenchCase("example1-s2", "example1.nlsys", pf=3, pg=3, sweep=(1, 2, 3),
                  figure_v=1, gamma_scale=1e-3),
        BenchCase("example2", "robot2dof.nlsys", pf=1, pg=0, sweep=(3, 4, 5, 6),
                  figure_v=3, baseline=BASELINE_VM),
    )
}


def get_case(case_id: str) -> BenchCase:
    try:
        return CASES[case_id]
    except KeyError:
        raise KeyError(f"unknown case {case_id!r}; choose from {sorted(CASES)}") from None


@dataclass
class MetricsReport:
    case_id: str
    sigma: np.ndarray
    vm: dict[int, float]
    n_sched: dict[int, int]
    mse: dict[int, dict[str, float]]
    paths: dict[str, Path] = field(default_factory=dict)


def function_names(n: int, m: int, q: int) -> list[str]:
    """``f1.. , g11..``; indices are joined by ``_`` once any exceeds 9."""
    wide = max(n + q, m) > 9
    names = [f"f{i}" for i in range(1, n + q + 1)]
    names += [f"g{i}_{j}" if wide else f"g{i}{j}"
              for i in range(1, n + q + 1) for j in range(1, m + 1)]
    return names


def eval_grid(sys: NlSystem, points: int = GRID_POINTS) -> np.ndarray:
    """``(points**2, n)`` grid over the (x1, x2) box, other states at 0.

    x2 varies fastest.
    """
    if sys.n < 2:
        raise ValueError("the evaluation grid needs at least two states")
    a = np.linspace(sys.lower[0], sys.upper[0], points)
    b = np.linspace(sys.lower[1], sys.upper[1], points)
    A, B = np.meshgrid(a, b, indexing="ij")
    X = np.zeros((points * points, sys.n))
    X[:, 0], X[:, 1] = A.ravel(), B.ravel()
    return X


def surface_values(sys: NlSystem, model: LpvModel, X) -> tuple[np.ndarray, np.ndarray]:
    """True and LPV values of every function at the points ``X``.

    For f_i the LPV counterpart is the matrix row times the state; for g_ij
    it is the matrix entry itself. Both arrays are ``(K, len(function_names))``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, m, q = sys.n, sys.m, sys.q
    F, G = eval_system(sys, X)
    M, _ = lpv_matrices(model, X)
    f_lpv = np.einsum("kin,kn->ki", M[:, :, :n], X)
    g_lpv = M[:, :, n:]
    true = np.concatenate([F, G.reshape(len(X), (n + q) * m)], axis=1)
    lpv = np.concatenate([f_lpv, g_lpv.reshape(len(X), (n + q) * m)], axis=1)
    return true, lpv


def mse_functions(sys: NlSystem, model: LpvModel, grid) -> list[float]:
    """Mean squared c-value of each function over ``grid``, ordered as
    ``function_names``."""
    true, lpv = surface_values(sys, model, grid)
    return [float(v) for v in np.mean((true - lpv) ** 2, axis=0)]


def _num(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_log(path: Path, case: BenchCase, cfg: RunConfig, stages: Stages,
               sweep: Sequence[int]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"case {case.case_id}\n")
        cfg_doc = cfg.as_dict()
        cfg_doc.pop("out")  # runs into different directories must log identically
        fh.write("config " + json.dumps(cfg_doc, sort_keys=True) + "\n")
        fh.write("sweep " + ",".join(str(v) for v in sweep) + "\n")
        fh.write(f"residual_rank {stages.svd.rank}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("function",) + FitReport.CSV_FIELDS)
        for name, rep in stages.fit.reports:
            row = rep.as_row()
            w.writerow([name] + [_num(v) if isinstance(v, float) else v
                                 for v in row.values()])


def run_case(case: BenchCase | str, out_dir="out", sweep: Sequence[int] | None = None,
             write: bool = True, **overrides) -> MetricsReport:
    """Run one case and (optionally) write its output tree.

    Parameters
    ----------
    case : BenchCase or str
        Case object or id.
    out_dir : path
        Parent directory; files go to ``out_dir/<case_id>/``.
    sweep : sequence of int, optional
        Replaces the case's list of v values.
    write : bool
        Skip all file output when False.
    **overrides
        RunConfig fields (``gamma``, ``samples``, ``seed``, ...); None is ignored.
    """
    if isinstance(case, str):
        case = get_case(case)
    sweep = tuple(case.sweep if sweep is None else sweep)
    if not sweep:
        raise ValueError("empty sweep")
    overrides.pop("model", None)
    cfg = case.config(**overrides)
    sys = case.system()
    stages = prepare(cfg, sys)
    sigma = stages.svd.sigma
    table = vm_table(sigma)
    grid = eval_grid(sys)
    names = function_names(sys.n, sys.m, sys.q)

    report = MetricsReport(case.case_id, sigma.copy(), {}, {}, {})
    models: dict[int, LpvModel] = {}
    for v in sweep:
        model = stages.model(v=v)
        models[v] = model
        report.vm[v] = float(table[v - 1])
        report.n_sched[v] = len(model.scheduling)
        report.mse[v] = dict(zip(names, mse_functions(sys, model, grid)))

    if not write:
        return report

    root = Path(out_dir) / case.case_id
    root.mkdir(parents=True, exist_ok=True)
    header = ["v", "n_sched", "sigma", "vm"] + ([BASELINE_COLUMN] if case.baseline else [])
    rows = []
    for v in sweep:
        row = [v, report.n_sched[v], _num(sigma[v - 1]), _num(report.vm[v])]
        if case.baseline:
            base = case.baseline.get(v)
            row.append("" if base is None else _num(base))
        rows.append(row)
    report.paths["vm"] = root / "vm.csv"
    _write_csv(report.paths["vm"], header, rows)

    report.paths["mse"] = root / "mse.csv"
    _write_csv(report.paths["mse"], ["v", "n_sched"] + names,
               [[v, report.n_sched[v]] + [_num(report.mse[v][fn]) for fn in names]
                for v in sweep])

    fig_v = case.figure_v if case.figure_v in models else sweep[0]
    true, lpv = surface_values(sys, models[fig_v], grid)
    for c, fn in enumerate(names):
        path = root / f"surface_{fn}.csv"
        _write_csv(path, ["x1", "x2", "true", "lpv", "error"],
                   [[_num(x[0]), _num(x[1]), _num(t), _num(p), _num(t - p)]
                    for x, t, p in zip(grid, true[:, c], lpv[:, c])])
        report.paths[f"surface_{fn}"] = path

    for v, model in models.items():
        path = root / f"model_v{v}.json"
        export_model(model, path)
        report.paths[f"model_v{v}"] = path

    report.paths["log"] = root / "run.log"
    _write_log(report.paths["log"], case, cfg, stages, sweep)
    return report
