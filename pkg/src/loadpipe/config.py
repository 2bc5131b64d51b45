"""Value types shared by the performance model, the simulator and the tuner."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


def _from_dict(cls, data: dict[str, Any]):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown field(s) {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from None


@dataclass(frozen=True)
class HardwareSpec:
    """Per-SM resources and memory-system constants, in abstract cycles/bytes.

    ``bw_smem``/``lat_smem`` time shared-to-register loads; ``util_knee_warps``
    is the resident-warp count at which the SM compute unit saturates.
    """

    num_sm: int = 108
    throughput_sm: float = 2048.0
    bw_llc: float = 3500.0
    bw_dram: float = 1100.0
    bw_dram_write: float = 1100.0
    lat_llc_read: float = 200.0
    lat_dram_read: float = 500.0
    lat_dram_write: float = 500.0
    smem_per_sm: int = 164 * 1024
    regs_per_sm: int = 256 * 1024
    max_threadblk_per_sm: int = 32
    max_warps_per_sm: int = 64
    util_knee_warps: int = 8
    bw_smem: float = 128.0
    lat_smem: float = 30.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"HardwareSpec.{f.name} must be strictly positive")

    @classmethod
    def from_dict(cls, data: dict) -> "HardwareSpec":
        return _from_dict(cls, data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class WorkloadDesc:
    M: int
    N: int
    K: int
    batch: int = 1
    elem_bytes: int = 2

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigError(f"WorkloadDesc.{f.name} must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "WorkloadDesc":
        return _from_dict(cls, data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScheduleParams:
    tile_m: int
    tile_n: int
    tile_k: int
    reg_tile_m: int
    reg_tile_n: int
    reg_tile_k: int
    n_smem_pipe_stage: int = 2
    n_reg_pipe_stage: int = 2
    n_warp_per_threadblk: int = 4

    def problems(self) -> list[str]:
        out = []
        for f in fields(self):
            if getattr(self, f.name) < 1:
                out.append(f"{f.name} must be positive")
        if out:
            return out
        for outer, inner in (("tile_m", "reg_tile_m"), ("tile_n", "reg_tile_n"), ("tile_k", "reg_tile_k")):
            if getattr(self, outer) % getattr(self, inner):
                out.append(f"{inner} must divide {outer}")
        if self.n_smem_pipe_stage < 2 or self.n_reg_pipe_stage < 2:
            out.append("pipeline stages must be >= 2")
        if not out and self.reg_tiles % self.n_warp_per_threadblk:
            out.append("register tiles must split evenly among warps")
        return out

    @property
    def reg_tiles(self) -> int:
        return (self.tile_m // self.reg_tile_m) * (self.tile_n // self.reg_tile_n)

    def fits(self, w: WorkloadDesc) -> bool:
        return not self.problems() and w.M % self.tile_m == 0 and w.N % self.tile_n == 0 and w.K % self.tile_k == 0

    @classmethod
    def from_dict(cls, data: dict) -> "ScheduleParams":
        return _from_dict(cls, data)

    def to_dict(self) -> dict:
        return asdict(self)


def load_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
