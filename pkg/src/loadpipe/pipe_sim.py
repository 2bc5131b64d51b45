"""Discrete-event simulation of load/use pipelines sharing one compute unit.

Loads have fixed latency and unlimited concurrency. A worker with ``n_pipe``
buffer slots issues the load for iteration ``j`` once slot ``j % n_pipe`` is
free: at time 0 for the first ``n_pipe`` iterations, otherwise when the
compute of iteration ``j - n_pipe`` ends. Ready computes are served by the
shared unit in FIFO order of readiness, ties broken by worker id.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import ConfigError, HardwareSpec, ScheduleParams, WorkloadDesc
from .perf_model import (
    DesignPointError,
    occupancy,
    predict,
)


@dataclass(frozen=True)
class SimConfig:
    t_load: float
    t_use: float
    n_loop: int
    n_pipe: int = 1
    n_mplx: int = 1

    def __post_init__(self):
        if self.t_load < 0 or self.t_use < 0:
            raise ConfigError("SimConfig times must be nonnegative")
        if min(self.n_loop, self.n_pipe, self.n_mplx) < 1:
            raise ConfigError("SimConfig counts must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        from .config import _from_dict

        return _from_dict(cls, d)


@dataclass(frozen=True)
class SimEvent:
    time: float
    worker: int
    kind: str  # loadIssue, loadDone, computeStart, computeEnd
    iteration: int


@dataclass
class SimTrace:
    events: list[SimEvent] = field(default_factory=list)

    def add(self, time, worker, kind, iteration):
        self.events.append(SimEvent(time, worker, kind, iteration))

    def sorted(self) -> list[SimEvent]:
        order = {"loadIssue": 0, "loadDone": 1, "computeStart": 2, "computeEnd": 3}
        return sorted(self.events, key=lambda e: (e.time, e.worker, e.iteration, order[e.kind]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "worker", "kind", "iter"])
        for e in self.sorted():
            w.writerow([repr(float(e.time)), e.worker, e.kind, e.iteration])
        return buf.getvalue()

    def compute_intervals(self) -> list[tuple[float, float]]:
        starts = {(e.worker, e.iteration): e.time for e in self.events if e.kind == "computeStart"}
        ends = {(e.worker, e.iteration): e.time for e in self.events if e.kind == "computeEnd"}
        return sorted((starts[k], ends[k]) for k in starts)

    def idle_fraction(self) -> float:
        """Idle share of the compute unit between the first start and last end."""
        iv = self.compute_intervals()
        if not iv:
            return 0.0
        span = iv[-1][1] - iv[0][0]
        if span <= 0:
            return 0.0
        busy = sum(e - s for s, e in iv)
        return max(0.0, 1.0 - busy / span)


def validate_trace(trace: SimTrace) -> list[str]:
    """Check unit exclusivity and per-worker precedence."""
    problems = []
    iv = trace.compute_intervals()
    for (s0, e0), (s1, e1) in zip(iv, iv[1:]):
        if s1 < e0 - 1e-9:
            problems.append(f"compute intervals overlap at t={s1}")
    done = {(e.worker, e.iteration): e.time for e in trace.events if e.kind == "loadDone"}
    for e in trace.events:
        if e.kind == "computeStart" and e.time < done.get((e.worker, e.iteration), math.inf) - 1e-9:
            problems.append(f"worker {e.worker} computes iteration {e.iteration} before its load is done")
    return problems


def simulate_pipeline(cfg: SimConfig, trace: bool = True) -> tuple[float, Optional[SimTrace]]:
    """Returns (makespan, trace)."""
    tr = SimTrace() if trace else None
    n, p = cfg.n_loop, cfg.n_pipe
    ends = [[0.0] * n for _ in range(cfg.n_mplx)]
    nxt = [0] * cfg.n_mplx
    heap: list[tuple[float, int]] = []

    def ready(w: int) -> float:
        j = nxt[w]
        issue = 0.0 if j < p else ends[w][j - p]
        done = issue + cfg.t_load
        if tr is not None:
            tr.add(issue, w, "loadIssue", j)
            tr.add(done, w, "loadDone", j)
        return max(done, ends[w][j - 1] if j else 0.0)

    for w in range(cfg.n_mplx):
        heapq.heappush(heap, (ready(w), w))
    unit = 0.0
    makespan = 0.0
    while heap:
        r, w = heapq.heappop(heap)
        j = nxt[w]
        start = max(unit, r)
        end = start + cfg.t_use
        unit = end
        ends[w][j] = end
        makespan = max(makespan, end)
        if tr is not None:
            tr.add(start, w, "computeStart", j)
            tr.add(end, w, "computeEnd", j)
        nxt[w] += 1
        if nxt[w] < n:
            heapq.heappush(heap, (ready(w), w))
    return makespan, tr


# --------------------------------------------------------------- two level


@dataclass(frozen=True)
class LevelConfig:
    """One level of a two-level pipeline: ``n_loop`` chunks per pass,
    ``n_pipe`` slots, ``n_mplx`` workers at this level."""

    t_load: float
    n_loop: int
    n_pipe: int
    n_mplx: int = 1
    t_use: float = 0.0  # used only by the inner level


def simulate_two_level(outer: LevelConfig, inner: LevelConfig, fused: bool = True) -> float:
    """Makespan of ``outer.n_mplx`` groups of ``inner.n_mplx`` workers.

    Each group streams ``outer.n_loop`` chunks through ``outer.n_pipe`` slots;
    each worker runs ``inner.n_loop`` steps per chunk through ``inner.n_pipe``
    register slots. A chunk slot is released when every worker of the group
    has finished computing its last step of that chunk. With ``fused`` the
    inner pipeline runs across chunk boundaries; otherwise it restarts, so no
    inner load for a chunk is issued before the worker's previous chunk ends.
    """
    E, F = outer.n_loop, inner.n_loop
    s, t = outer.n_pipe, inner.n_pipe
    G = E * F
    groups, per = outer.n_mplx, inner.n_mplx
    nw = groups * per
    ends = [[0.0] * G for _ in range(nw)]
    nxt = [0] * nw
    chunk_done = [[None] * E for _ in range(groups)]
    finished = [[0] * E for _ in range(groups)]
    release = [[0.0] * E for _ in range(groups)]
    waiting: dict[tuple[int, int], list[int]] = {}
    for g in range(groups):
        for c in range(min(s, E)):
            chunk_done[g][c] = outer.t_load

    def ready(w: int) -> Optional[float]:
        g, step = divmod(w, per)[0], nxt[w]
        c = step // F
        cd = chunk_done[g][c]
        if cd is None:
            waiting.setdefault((g, c), []).append(w)
            return None
        issue = cd
        if step >= t:
            issue = max(issue, ends[w][step - t])
        if not fused and c > 0:
            issue = max(issue, ends[w][c * F - 1])
        r = issue + inner.t_load
        if step:
            r = max(r, ends[w][step - 1])
        return r

    heap: list[tuple[float, int]] = []
    for w in range(nw):
        r = ready(w)
        if r is not None:
            heapq.heappush(heap, (r, w))
    unit = 0.0
    while heap:
        r, w = heapq.heappop(heap)
        step = nxt[w]
        end = max(unit, r) + inner.t_use
        unit = end
        ends[w][step] = end
        g = w // per
        c = step // F
        if step % F == F - 1:
            finished[g][c] += 1
            release[g][c] = max(release[g][c], end)
            if finished[g][c] == per and c + s < E:
                chunk_done[g][c + s] = release[g][c] + outer.t_load
                for v in waiting.pop((g, c + s), []):
                    rv = ready(v)
                    heapq.heappush(heap, (rv, v))
        nxt[w] += 1
        if nxt[w] < G:
            rv = ready(w)
            if rv is not None:
                heapq.heappush(heap, (rv, w))
    if waiting:
        raise RuntimeError("two-level simulation deadlocked")
    return max(max(e) for e in ends)


# ------------------------------------------------------------ ground truth


@dataclass(frozen=True)
class GroundTruthConfig:
    contention_factor: float = 0.1
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0 or self.contention_factor < 0:
            raise ConfigError("noise and contention must be nonnegative")


def level_configs(w: WorkloadDesc, p: ScheduleParams, hw: HardwareSpec,
                  contention: float = 0.0) -> tuple[LevelConfig, LevelConfig, float, int]:
    """Derive (outer, inner, epilogue, batches) the same way ``predict`` does."""
    b = predict(w, p, hw)
    tbs, warps = b.n_threadblk_per_sm, p.n_warp_per_threadblk
    outer = LevelConfig(b.t_smem_load * (1 + contention * (tbs - 1)), b.n_smem_loop, p.n_smem_pipe_stage, tbs)
    inner = LevelConfig(b.t_reg_load * (1 + contention * (warps - 1)), b.n_reg_loop, p.n_reg_pipe_stage, warps,
                        t_use=b.t_compute)
    return outer, inner, b.t_epilogue, b.n_threadblk_batch


def noiseless_cost(w: WorkloadDesc, p: ScheduleParams, hw: HardwareSpec, contention: float = 0.1) -> float:
    try:
        outer, inner, epi, batches = level_configs(w, p, hw, contention)
    except DesignPointError:
        return math.inf
    return (simulate_two_level(outer, inner) + epi) * batches


def noise_factor(sigma: float, seed: int, key: int) -> float:
    if sigma == 0:
        return 1.0
    rng = np.random.default_rng([seed, key])
    return float(np.exp(rng.normal(0.0, sigma)))


def measure_ground_truth(w: WorkloadDesc, p: ScheduleParams, hw: HardwareSpec, g: GroundTruthConfig,
                         key: int = 0, base: Optional[float] = None) -> float:
    """Simulated measurement: two-level makespan plus epilogue, times batches,
    with multiplicative log-normal noise seeded by ``(g.seed, key)``."""
    cost = noiseless_cost(w, p, hw, g.contention_factor) if base is None else base
    if not math.isfinite(cost):
        return math.inf
    return cost * noise_factor(g.noise_sigma, g.seed, key)


def occupancy_ok(w: WorkloadDesc, p: ScheduleParams, hw: HardwareSpec) -> bool:
    try:
        occupancy(p, w, hw)
    except DesignPointError:
        return False
    return True
