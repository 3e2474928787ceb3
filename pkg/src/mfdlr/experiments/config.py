"""Experiment configuration, shared by every CLI subcommand and stored in manifests and model files."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional

from ..errors import PipelineConfigError
from ..reservoir import LoopConfig, SplitConfig
from ..transforms import padded_length

VARIANTS = {
    "mf_dlr": (True, True),
    "mf_rr": (True, False),
    "dlr": (False, True),
    "rr": (False, False),
}

DEFAULT_JSR_DB = [-math.inf, -10.0, -5.0, 0.0, 5.0, 10.0]


@dataclass(frozen=True)
class ExperimentConfig:
    devices: int = 20
    bursts_per_device: int = 600
    val_bursts_per_device: int = 50
    test_bursts_per_device: int = 100
    length: int = 1024
    separation: float = 1.0
    N: int = 1000
    k: int = 10
    transform: str = "fft_amp"
    lam: Optional[float] = 1e-3
    eta: float = 0.9
    nu: float = 0.1
    h0: float = 0.0
    h1: float = 1.0
    combine: str = "sum"
    mask_seed: int = 1
    train_impairment: int = 0
    filter_impairment: Optional[int] = None
    seed: int = 42
    mf_enabled: bool = True
    dlr_enabled: bool = True
    mf_mode: str = "average"
    mf_negatives: int = 1
    noise_negatives: float = 0.0
    entropy_temperature: float = 0.05
    target_fpr: float = 0.05
    jammer_devices: int = 8
    jsr_db: List[float] = field(default_factory=lambda: list(DEFAULT_JSR_DB))
    max_jam_delay: int = 512
    capture_snr_db: float = 60.0
    edge_threshold: float = 10.0
    dtype: str = "float32"

    def __post_init__(self):
        if self.devices < 2:
            raise PipelineConfigError("need at least two devices")
        if self.k < 1 or self.N % self.k:
            raise PipelineConfigError(f"N={self.N} must be a positive multiple of k={self.k}")
        if self.dtype not in ("float32", "float64"):
            raise PipelineConfigError("dtype must be float32 or float64")
        object.__setattr__(self, "jsr_db", [float(v) for v in self.jsr_db])

    @property
    def variant(self) -> str:
        for name, flags in VARIANTS.items():
            if flags == (self.mf_enabled, self.dlr_enabled):
                return name
        raise AssertionError("unreachable")

    @property
    def bank_impairment(self) -> int:
        return self.train_impairment if self.filter_impairment is None else self.filter_impairment

    @property
    def n_per_loop(self) -> int:
        return self.N // self.k

    @property
    def split(self) -> SplitConfig:
        return SplitConfig(k=self.k, n_per_loop=self.n_per_loop, combine=self.combine)

    def loop_configs(self) -> List[LoopConfig]:
        return self.split.loop_configs(self.eta, self.nu, (self.h0, self.h1), self.mask_seed)

    @property
    def feature_dim(self) -> int:
        return self.n_per_loop if self.dlr_enabled else self.length

    @property
    def loop_input_length(self) -> int:
        return padded_length(self.length, self.k) // self.k

    def with_variant(self, name: str) -> "ExperimentConfig":
        mf, dlr = VARIANTS[name]
        return replace(self, mf_enabled=mf, dlr_enabled=dlr)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise PipelineConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path) -> ExperimentConfig:
    """Read a config file; a dataset manifest (config under ``"config"``) also works."""
    data = json.loads(Path(path).read_text())
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return ExperimentConfig.from_dict(data)
