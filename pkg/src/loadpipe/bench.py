"""Model-versus-simulator comparisons: oracle grids and model-ranked top-k."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import astuple, dataclass, field, fields
from typing import Optional

import numpy as np

from .config import ConfigError
from .perf_model import pipeline_latency
from .pipe_sim import LevelConfig, SimConfig, simulate_pipeline, simulate_two_level
from .tuner.space import DesignSpace, GroundTruth, analytical_costs

IDLE_THRESHOLD = 0.02


@dataclass(frozen=True)
class OracleGrid:
    t_use: float = 100.0
    t_ratio: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    n_pipe: tuple[int, ...] = (1, 2, 3, 4)
    n_mplx: tuple[int, ...] = (1, 2, 3, 4)
    n_loop: tuple[int, ...] = (8, 16, 32, 64, 128)

    def __post_init__(self):
        if self.t_use <= 0:
            raise ConfigError("grid t_use must be positive")
        for f in ("t_ratio", "n_pipe", "n_mplx", "n_loop"):
            if not getattr(self, f):
                raise ConfigError(f"grid axis {f!r} is empty")

    @classmethod
    def from_dict(cls, d: dict) -> "OracleGrid":
        if not isinstance(d, dict) or not d:
            raise ConfigError("grid must be a non-empty JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown grid fields {sorted(extra)}")
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        return cls(**kw)

    def configs(self):
        for r, p, m, n in itertools.product(self.t_ratio, self.n_pipe, self.n_mplx, self.n_loop):
            yield SimConfig(r * self.t_use, self.t_use, n, p, m)


@dataclass(frozen=True)
class OracleRow:
    t_load: float
    t_use: float
    n_loop: int
    n_pipe: int
    n_mplx: int
    predicted: float
    simulated: float
    rel_error: float
    idle_fraction: float
    regime_predicted: str
    regime_simulated: str

    @property
    def regime_match(self) -> bool:
        return self.regime_predicted == self.regime_simulated


def oracle_row(cfg: SimConfig) -> OracleRow:
    pred = pipeline_latency(cfg.t_load, cfg.t_use, cfg.n_loop, cfg.n_pipe, cfg.n_mplx)
    sim, tr = simulate_pipeline(cfg)
    idle = tr.idle_fraction()
    compute_bound = cfg.t_load <= (cfg.n_pipe * cfg.n_mplx - 1) * cfg.t_use
    return OracleRow(
        cfg.t_load, cfg.t_use, cfg.n_loop, cfg.n_pipe, cfg.n_mplx, pred, sim,
        abs(pred - sim) / sim if sim else 0.0, idle,
        "compute" if compute_bound else "load",
        "compute" if idle < IDLE_THRESHOLD else "load",
    )


def oracle_grid(grid: Optional[OracleGrid] = None) -> list[OracleRow]:
    return [oracle_row(c) for c in (grid or OracleGrid()).configs()]


def oracle_csv(rows: list[OracleRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f.name for f in fields(OracleRow)] + ["regime_match"])
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)] + [int(r.regime_match)])
    return buf.getvalue()


# ------------------------------------------------------------- multi-level


@dataclass(frozen=True)
class TwoLevelRow:
    outer: LevelConfig
    inner: LevelConfig
    fused: float
    restart: float


def two_level_grid(t_use: float = 10.0) -> list[TwoLevelRow]:
    """Fused versus restart-per-chunk makespans over a small parameter grid."""
    rows = []
    for ratio_o, ratio_i, s, t, groups, warps, e, f in itertools.product(
        (0.5, 2.0, 8.0), (0.5, 2.0, 8.0), (2, 3, 4), (2, 3), (1, 2), (1, 2, 4), (4, 8), (2, 4)
    ):
        inner = LevelConfig(ratio_i * t_use, f, t, warps, t_use)
        outer = LevelConfig(ratio_o * t_use * f, e, s, groups)
        if t - 1 > (s - 1) * f:
            continue
        rows.append(TwoLevelRow(outer, inner, simulate_two_level(outer, inner, True),
                                simulate_two_level(outer, inner, False)))
    return rows


# ---------------------------------------------------------------- top-k


@dataclass(frozen=True)
class TopKRow:
    k: int
    best_cost: float
    normalized: float


def model_top_k(space: DesignSpace, truth: GroundTruth, ks=(1, 5, 10, 20, 50)) -> list[TopKRow]:
    """Best true cost among the analytical model's top-k points."""
    order = np.argsort(analytical_costs(space), kind="stable")
    costs = truth.costs
    out = []
    for k in ks:
        k = min(k, len(order))
        best = float(costs[order[:k]].min())
        out.append(TopKRow(k, best, truth.best / best))
    return out


def top_k_csv(rows: list[TopKRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "best_cost", "normalized"])
    for r in rows:
        w.writerow([r.k, repr(r.best_cost), repr(r.normalized)])
    return buf.getvalue()
