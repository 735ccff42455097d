"""End-to-end embedding: sample, fit, factorise, reduce, assemble."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .factor import Factorization, check_order, factorize_system
from .lpvcore import DEFAULT_MARGIN, LpvModel, assemble_lpv
from .polyreg import SystemFit, approximate_system
from .schedpca import (PcaReduction, ResidualMatrix, RowNormalizer, SvdFactors,
                       build_residual_matrix, normalize_rows, pca_fit, select_scheduling)
from .sysmodel import STRATEGIES, NlSystem, SampleSet, load_system, sample_domain

__all__ = ["RunConfig", "Stages", "prepare", "embed", "full_rank"]


@dataclass(frozen=True)
class RunConfig:
    """Every knob of one embedding run.

    ``samples`` is the number of points N+1. ``gamma=None`` selects the
    per-function default ``gamma_scale * (N+1) * var(y)``. ``order`` is a
    1-based variable permutation as written on the command line.
    """

    model: str | None = None
    pf: int = 1
    pg: int = 0
    gamma: float | None = None
    gamma_scale: float = 0.01
    samples: int = 5000
    strategy: str = "latin-hypercube"
    seed: int = 1
    sched: int | None = None
    vm_target: float | None = None
    order: tuple[int, ...] | None = None
    margin: float = DEFAULT_MARGIN
    out: str = "out"

    def __post_init__(self):
        if self.pf < 1:
            raise ValueError("pf must be >= 1")
        if self.pg < 0:
            raise ValueError("pg must be >= 0")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.gamma_scale < 0:
            raise ValueError("gamma_scale must be >= 0")
        if self.samples < 2:
            raise ValueError("samples must be >= 2")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.sched is not None and self.sched < 1:
            raise ValueError("sched must be >= 1")
        if self.vm_target is not None and not 0.0 < self.vm_target <= 1.0:
            raise ValueError("vm_target must lie in (0, 1]")
        if self.sched is not None and self.vm_target is not None:
            raise ValueError("give sched or vm_target, not both")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        """Read a JSON object with the field names above; non-None overrides win."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        if data.get("order") is not None:
            data["order"] = tuple(data["order"])
        return cls(**data)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["order"] = list(self.order) if self.order else None
        return d

    def provenance(self) -> dict:
        return {
            "degrees": {"p_f": self.pf, "p_g": self.pg},
            "gamma": self.gamma if self.gamma is not None else f"{self.gamma_scale!r}*(N+1)*var(y)",
            "sampling": {"strategy": self.strategy, "points": self.samples},
            "seed": self.seed,
            "margin": self.margin,
        }


@dataclass(frozen=True, eq=False)
class Stages:
    """Everything up to the choice of v, shared by a sweep over v."""

    config: RunConfig
    sys: NlSystem
    samples: SampleSet
    fit: SystemFit
    factorization: Factorization
    residuals: ResidualMatrix
    normalized: np.ndarray
    normalizer: RowNormalizer
    svd: SvdFactors

    def reduce(self, v: int | None = None, vm_target: float | None = None) -> PcaReduction:
        return select_scheduling(self.svd, self.normalizer, v=v, vm_target=vm_target)

    def model(self, v: int | None = None, vm_target: float | None = None) -> LpvModel:
        if v is None and vm_target is None:
            v, vm_target = self.config.sched, self.config.vm_target
            if v is None and vm_target is None:
                v = max(self.svd.rank, 1)
        red = self.reduce(v, vm_target)
        prov = self.config.provenance()
        return assemble_lpv(self.factorization, red, self.samples, self.config.margin, prov)


def prepare(cfg: RunConfig, sys: NlSystem | None = None) -> Stages:
    if sys is None:
        if cfg.model is None:
            raise ValueError("no model given")
        sys = load_system(cfg.model)
    order = None if cfg.order is None else check_order([k - 1 for k in cfg.order], sys.n)
    samples = sample_domain(sys, cfg.strategy, cfg.samples - 1, cfg.seed)
    fit = approximate_system(sys, samples, cfg.pf, cfg.pg, cfg.gamma, cfg.gamma_scale)
    fac = factorize_system(sys, fit, order)
    Pi = build_residual_matrix(fac, samples)
    Pn, normalizer = normalize_rows(Pi)
    return Stages(cfg, sys, samples, fit, fac, Pi, Pn, normalizer, pca_fit(Pn))


def embed(cfg: RunConfig, sys: NlSystem | None = None) -> tuple[LpvModel, Stages]:
    stages = prepare(cfg, sys)
    return stages.model(), stages


def full_rank(stages: Stages) -> int:
    return max(stages.svd.rank, 1)
