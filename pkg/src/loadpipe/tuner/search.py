"""Search strategies and best-in-k reporting."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..config import ScheduleParams
from ..pipe_sim import GroundTruthConfig, noise_factor
from .space import PARAM_FIELDS, DesignSpace, GroundTruth, analytical_costs
from .surrogate import Surrogate, pretrain_from_analytical

log = logging.getLogger(__name__)


class Method(enum.Enum):
    GRID = "grid"
    SURROGATE = "surrogate"
    ANALYTICAL = "analytical"
    ASSISTED = "assisted"


@dataclass
class SearchConfig:
    batch_size: int = 8
    sa_chains: int = 8
    sa_steps: int = 60
    sa_t0: float = 0.3
    pretrain_samples: int = 512
    base_rounds: int = 400
    base_learning_rate: float = 0.2
    residual_rounds: int = 200
    residual_learning_rate: float = 0.3
    local_anchors: int = 2  # best measured points whose neighborhoods are refined each batch


@dataclass
class Trial:
    params: ScheduleParams
    measured_cost: float
    trial_index: int
    point_index: int
    predicted_cost: Optional[float] = None


@dataclass
class TuningReport:
    method: str
    seed: int
    trials: list[Trial]
    best_in_k: list[tuple[int, float]]
    normalized: list[float]
    exhaustive_best: float

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "exhaustive_best": self.exhaustive_best,
            "trials": [
                {
                    "trial_index": t.trial_index,
                    "params": t.params.to_dict(),
                    "measured_cost": t.measured_cost,
                    "predicted_cost": t.predicted_cost,
                }
                for t in self.trials
            ],
            "best_in_k": [[k, c] for k, c in self.best_in_k],
            "normalized": self.normalized,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def csv_rows(self) -> list[list]:
        return [[self.method, self.seed, k, c, n] for (k, c), n in zip(self.best_in_k, self.normalized)]


def reports_csv(reports: list[TuningReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "seed", "k", "best_cost", "normalized"])
    for r in reports:
        w.writerows(r.csv_rows())
    return buf.getvalue()


# --------------------------------------------------------- annealing steps


class Neighbors:
    """Adjacent-candidate moves between valid points of a space."""

    def __init__(self, space: DesignSpace):
        self.space = space
        self.index = {tuple(getattr(p, f) for f in PARAM_FIELDS): i for i, p in enumerate(space.points)}
        self.keys = list(self.index)
        self.movable = [j for j, f in enumerate(PARAM_FIELDS) if len(space.candidates[f]) > 1]

    def random_neighbor(self, i: int, rng: np.random.Generator, attempts: int = 16) -> Optional[int]:
        key = self.keys[i]
        for _ in range(attempts):
            if not self.movable:
                return None
            j = self.movable[int(rng.integers(len(self.movable)))]
            cands = self.space.candidates[PARAM_FIELDS[j]]
            pos = cands.index(key[j]) + (1 if rng.random() < 0.5 else -1)
            if not 0 <= pos < len(cands):
                continue
            new = key[:j] + (cands[pos],) + key[j + 1:]
            if new in self.index:
                return self.index[new]
        return None

    def all_neighbors(self, i: int) -> list[int]:
        key = self.keys[i]
        out = []
        for j in self.movable:
            cands = self.space.candidates[PARAM_FIELDS[j]]
            pos = cands.index(key[j])
            for q in (pos - 1, pos + 1):
                if 0 <= q < len(cands):
                    new = key[:j] + (cands[q],) + key[j + 1:]
                    if new in self.index:
                        out.append(self.index[new])
        return out


def sa_propose(pred: np.ndarray, current: int, nb: Neighbors, temperature: float,
               rng: np.random.Generator) -> int:
    """One annealing move over predicted log costs ``pred``; returns the new current."""
    cand = nb.random_neighbor(current, rng)
    if cand is None:
        return current
    delta = pred[cand] - pred[current]
    if delta < 0:
        return cand
    if temperature <= 0:
        return current
    return cand if rng.random() < math.exp(-delta / temperature) else current


def sa_batch(pred: np.ndarray, nb: Neighbors, starts: list[int], exclude: set[int], n: int,
             cfg: SearchConfig, rng: np.random.Generator) -> list[int]:
    """Run annealing chains and return the ``n`` best unmeasured points visited."""
    seen: set[int] = set()
    for start in starts:
        cur = start
        for step in range(cfg.sa_steps):
            temp = cfg.sa_t0 * (1 - step / cfg.sa_steps)
            cur = sa_propose(pred, cur, nb, temp, rng)
            seen.add(cur)
    fresh = sorted((i for i in seen if i not in exclude), key=lambda i: (pred[i], i))[:n]
    if len(fresh) < n:
        rest = [i for i in range(len(pred)) if i not in exclude and i not in fresh]
        if rest:
            extra = rng.choice(len(rest), size=min(n - len(fresh), len(rest)), replace=False)
            fresh += [rest[int(k)] for k in extra]
    return fresh


def refine_batch(pred: np.ndarray, nb: Neighbors, anchors: list[int], exclude: set[int], n: int,
                 cfg: SearchConfig, rng: np.random.Generator) -> list[int]:
    """Half the batch from the best predicted neighbors of ``anchors``, the rest by annealing."""
    local: set[int] = set()
    for a in anchors[: cfg.local_anchors]:
        local.update(i for i in nb.all_neighbors(a) if i not in exclude)
    picked = sorted(local, key=lambda i: (pred[i], i))[: n // 2]
    rest = sa_batch(pred, nb, anchors, exclude | set(picked), n - len(picked), cfg, rng)
    return picked + rest


# ----------------------------------------------------------------- tuning


def _best_in_k(trials: list[Trial], truth: np.ndarray, best: float) -> tuple[list, list]:
    curve, norm = [], []
    cur, cur_idx = math.inf, None
    for k, t in enumerate(trials, 1):
        if t.measured_cost < cur:
            cur, cur_idx = t.measured_cost, t.point_index
        curve.append((k, cur))
        norm.append(best / truth[cur_idx] if cur_idx is not None and math.isfinite(truth[cur_idx]) else 0.0)
    return curve, norm


def tune(method: Method, budget: int, space: DesignSpace, gt: GroundTruthConfig, seed: int,
         truth: Optional[GroundTruth] = None, cfg: Optional[SearchConfig] = None,
         pretrain_samples: Optional[int] = None) -> TuningReport:
    cfg = cfg or SearchConfig()
    truth = truth or GroundTruth(space, gt.contention_factor)
    n = len(space.points)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if budget > n:
        log.warning("budget %d exceeds space size %d; clamped", budget, n)
        budget = n
    costs = truth.costs
    rng = np.random.default_rng(seed)

    def measure(i: int) -> float:
        return float(costs[i] * noise_factor(gt.noise_sigma, gt.seed * 1_000_003 + seed, i))

    trials: list[Trial] = []

    def record(i: int, predicted: Optional[float] = None) -> None:
        trials.append(Trial(space.points[i], measure(i), len(trials), i, predicted))

    if method is Method.GRID:
        for i in range(budget):
            record(i)
    elif method is Method.ANALYTICAL:
        pred = analytical_costs(space)
        for i in np.argsort(pred, kind="stable")[:budget]:
            record(int(i), float(pred[i]))
    else:
        model = Surrogate(space, cfg.residual_rounds, cfg.residual_learning_rate)
        samples = cfg.pretrain_samples if pretrain_samples is None else pretrain_samples
        if method is Method.ASSISTED and samples > 0:
            base = Surrogate(space, cfg.base_rounds, cfg.base_learning_rate)
            pretrain_from_analytical(base, samples, seed)
            model.base = base.base
        nb = Neighbors(space)
        measured: set[int] = set()
        if model.pretrained:
            pred = model.predict_all()
            starts = [int(x) for x in rng.choice(n, size=min(cfg.sa_chains, n), replace=False)]
            first = sa_batch(pred, nb, starts, measured, min(cfg.batch_size, budget), cfg, rng)
        else:
            pred = None
            first = [int(x) for x in rng.choice(n, size=min(cfg.batch_size, budget), replace=False)]
        for i in first:
            record(i, float(math.exp(pred[i])) if pred is not None else None)
            measured.add(i)
        while len(trials) < budget:
            model.update([t.point_index for t in trials], [t.measured_cost for t in trials])
            pred = model.predict_all()
            ranked = sorted(measured, key=lambda i: (pred[i], i))
            starts = ranked[: cfg.sa_chains // 2]
            starts += [int(x) for x in rng.choice(n, size=cfg.sa_chains - len(starts), replace=False)]
            batch = refine_batch(pred, nb, starts, measured, min(cfg.batch_size, budget - len(trials)), cfg, rng)
            if not batch:
                break
            for i in batch:
                record(i, float(math.exp(pred[i])))
                measured.add(i)
    curve, norm = _best_in_k(trials, costs, truth.best)
    return TuningReport(method.value, seed, trials, curve, norm, truth.best)
