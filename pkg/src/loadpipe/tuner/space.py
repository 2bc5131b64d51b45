"""Design spaces of ScheduleParams and their cached ground truth."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from ..config import ConfigError, HardwareSpec, ScheduleParams, WorkloadDesc
from ..perf_model import DesignPointError, occupancy, predict
from ..pipe_sim import noiseless_cost

PARAM_FIELDS = tuple(f.name for f in fields(ScheduleParams))

DEFAULT_CANDIDATES = {
    "tile_m": [32, 64, 128],
    "tile_n": [32, 64, 128],
    "tile_k": [16, 32, 64],
    "reg_tile_m": [16, 32],
    "reg_tile_n": [16, 32],
    "reg_tile_k": [8, 16],
    "n_smem_pipe_stage": [2, 3, 4],
    "n_reg_pipe_stage": [2, 3],
    "n_warp_per_threadblk": [2, 4, 8],
}


class EmptySpaceError(ConfigError):
    pass


@dataclass
class DesignSpace:
    workload: WorkloadDesc
    candidates: dict[str, list[int]]
    hw: HardwareSpec = field(default_factory=HardwareSpec)

    def __post_init__(self):
        missing = set(PARAM_FIELDS) - set(self.candidates)
        extra = set(self.candidates) - set(PARAM_FIELDS)
        if missing or extra:
            raise ConfigError(f"candidates must name exactly {list(PARAM_FIELDS)}")
        if any(not v for v in self.candidates.values()):
            raise EmptySpaceError("every parameter needs at least one candidate")
        self.candidates = {k: sorted(set(self.candidates[k])) for k in PARAM_FIELDS}
        self._points: Optional[list[ScheduleParams]] = None

    @classmethod
    def from_dict(cls, d: dict, hw: Optional[HardwareSpec] = None) -> "DesignSpace":
        try:
            w = WorkloadDesc.from_dict(d["workload"])
            cands = dict(DEFAULT_CANDIDATES, **d.get("candidates", {}))
        except KeyError as exc:
            raise ConfigError(f"space is missing {exc}") from None
        return cls(w, cands, hw or HardwareSpec())

    def valid(self, p: ScheduleParams) -> bool:
        if not p.fits(self.workload):
            return False
        try:
            occupancy(p, self.workload, self.hw)
        except DesignPointError:
            return False
        return True

    @property
    def points(self) -> list[ScheduleParams]:
        if self._points is None:
            self._points = enumerate_space(self)
        return self._points

    def __len__(self) -> int:
        return len(self.points)


def enumerate_space(d: DesignSpace) -> list[ScheduleParams]:
    """Cartesian product of the candidates in field order, filtered by validity."""
    out = []
    for combo in itertools.product(*(d.candidates[k] for k in PARAM_FIELDS)):
        p = ScheduleParams(*combo)
        if d.valid(p):
            out.append(p)
    if not out:
        raise EmptySpaceError("no valid design point in the space")
    return out


def default_space(hw: Optional[HardwareSpec] = None) -> DesignSpace:
    return DesignSpace(WorkloadDesc(1024, 1024, 1024), dict(DEFAULT_CANDIDATES), hw or HardwareSpec())


def analytical_costs(d: DesignSpace) -> np.ndarray:
    return np.array([predict(d.workload, p, d.hw).t_kernel for p in d.points])


def analytical_rank(d: DesignSpace) -> list[ScheduleParams]:
    """Points sorted by predicted kernel latency; ties keep enumeration order."""
    costs = analytical_costs(d)
    order = np.argsort(costs, kind="stable")
    return [d.points[i] for i in order]


class GroundTruth:
    """Noiseless simulated cost of every point, computed once per space."""

    def __init__(self, d: DesignSpace, contention: float = 0.1):
        self.space = d
        self.contention = contention
        self._costs: Optional[np.ndarray] = None

    @property
    def costs(self) -> np.ndarray:
        if self._costs is None:
            self._costs = np.array([noiseless_cost(self.space.workload, p, self.space.hw, self.contention)
                                    for p in self.space.points])
        return self._costs

    @property
    def best(self) -> float:
        c = self.costs[np.isfinite(self.costs)]
        return float(c.min()) if len(c) else math.inf
