"""Gradient-boosted regression stumps over design-point features.

Targets are log costs. A surrogate is a frozen ``base`` model (another
stump ensemble, e.g. pretrained on analytical predictions, or nothing) plus
an ensemble fit to the residual of measured costs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..config import HardwareSpec, ScheduleParams, WorkloadDesc
from ..perf_model import occupancy, predict, reg_bytes_per_warp, smem_bytes
from .space import PARAM_FIELDS, DesignSpace


def features(p: ScheduleParams, w: WorkloadDesc, hw: HardwareSpec) -> list[float]:
    """Log-scaled parameters plus derived footprints, occupancy and intensity."""
    occ = occupancy(p, w, hw)
    per_warp = p.reg_tiles // p.n_warp_per_threadblk
    raw = [math.log2(getattr(p, f)) for f in PARAM_FIELDS]
    derived = [
        math.log2(smem_bytes(p, w)),
        math.log2(reg_bytes_per_warp(p, w) * p.n_reg_pipe_stage * p.n_warp_per_threadblk),
        math.log2(occ.n_threadblk_total),
        math.log2(occ.n_threadblk_per_sm),
        math.log2(occ.n_threadblk_batch),
        math.log2(per_warp),
        math.log2(p.reg_tile_m * p.reg_tile_n * p.reg_tile_k * per_warp),
        math.log2(p.tile_m * p.tile_n / (p.tile_m + p.tile_n)),
        math.log2(occ.n_threadblk_per_sm * p.n_warp_per_threadblk),
    ]
    return raw + derived


def feature_matrix(d: DesignSpace) -> np.ndarray:
    return np.array([features(p, d.workload, d.hw) for p in d.points])


@dataclass
class Stump:
    feature: int
    threshold: float
    left: float
    right: float


def _best_stump(X: np.ndarray, r: np.ndarray) -> Optional[Stump]:
    """Split minimizing squared error of residual ``r``; None if no split helps."""
    n = len(r)
    best, best_gain = None, 1e-12
    total = r.sum()
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, rs = X[order, j], r[order]
        csum = np.cumsum(rs)[:-1]
        k = np.arange(1, n)
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        # SSE reduction of a split = sum_l^2/n_l + sum_r^2/n_r - total^2/n
        gain = csum**2 / k + (total - csum) ** 2 / (n - k) - total**2 / n
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain:
            best_gain = gain[i]
            thr = (xs[i] + xs[i + 1]) / 2
            best = Stump(j, float(thr), float(csum[i] / (i + 1)), float((total - csum[i]) / (n - i - 1)))
    return best


@dataclass
class BoostedStumps:
    rounds: int = 200
    learning_rate: float = 0.1
    init: float = 0.0
    stumps: list[Stump] = field(default_factory=list)
    history: list[float] = field(default_factory=list)  # training MSE after each round

    def fit(self, X: np.ndarray, y: np.ndarray) -> "BoostedStumps":
        y = np.asarray(y, dtype=float)
        self.stumps, self.history = [], []
        self.init = float(y.mean()) if len(y) else 0.0
        pred = np.full(len(y), self.init)
        for _ in range(self.rounds):
            s = _best_stump(X, y - pred)
            if s is None:
                break
            s.left *= self.learning_rate
            s.right *= self.learning_rate
            self.stumps.append(s)
            pred += np.where(X[:, s.feature] <= s.threshold, s.left, s.right)
            self.history.append(float(np.mean((y - pred) ** 2)))
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.full(len(X), self.init)
        for s in self.stumps:
            out += np.where(X[:, s.feature] <= s.threshold, s.left, s.right)
        return out


class Surrogate:
    """CostModel over a fixed design space: predicts log cost per point index."""

    def __init__(self, space: DesignSpace, rounds: int = 200, learning_rate: float = 0.1):
        self.space = space
        self.X = feature_matrix(space)
        self.base: Optional[BoostedStumps] = None
        self.residual: Optional[BoostedStumps] = None
        self.rounds, self.learning_rate = rounds, learning_rate
        self._cache: Optional[np.ndarray] = None

    @property
    def pretrained(self) -> bool:
        return self.base is not None

    def _base(self, X: np.ndarray) -> np.ndarray:
        return self.base.predict(X) if self.base is not None else np.zeros(len(X))

    def predict_all(self) -> np.ndarray:
        if self._cache is None:
            out = self._base(self.X)
            if self.residual is not None:
                out = out + self.residual.predict(self.X)
            self._cache = out
        return self._cache

    def predict(self, params: ScheduleParams) -> float:
        x = np.array([features(params, self.space.workload, self.space.hw)])
        out = self._base(x)
        if self.residual is not None:
            out = out + self.residual.predict(x)
        return float(math.exp(out[0]))

    def update(self, indices: Sequence[int], costs: Sequence[float]) -> "Surrogate":
        """Refit the residual ensemble on all measurements so far, in the given order."""
        idx = np.asarray(indices, dtype=int)
        y = np.log(np.asarray(costs, dtype=float))
        X = self.X[idx]
        self.residual = BoostedStumps(self.rounds, self.learning_rate).fit(X, y - self._base(X))
        self._cache = None
        return self


def train_surrogate(model: Surrogate, indices: Sequence[int], costs: Sequence[float]) -> Surrogate:
    return model.update(indices, costs)


def pretrain_from_analytical(model: Surrogate, n_samples: int, seed: int) -> Surrogate:
    """Fit the frozen base on analytical log-latencies of sampled points."""
    if n_samples <= 0:
        return model
    d = model.space
    rng = np.random.default_rng(seed)
    n = len(d.points)
    idx = rng.choice(n, size=min(n_samples, n), replace=False) if n_samples <= n else rng.choice(n, n_samples)
    idx = np.sort(idx)
    y = np.log([predict(d.workload, d.points[i], d.hw).t_kernel for i in idx])
    model.base = BoostedStumps(model.rounds, model.learning_rate).fit(model.X[idx], y)
    model._cache = None
    return model
