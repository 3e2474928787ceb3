"""Digital delay-loop reservoir.

One sin() nonlinearity is time-multiplexed over ``N`` chips per input
sample. At chip ``t`` the loop computes

    v(t) = sin(eta * x(t - N) + nu * m(t mod N) * s(n))
    x(t) = h0 * v(t) + h1 * v(t - 1) + sigma * noise

and pushes ``x(t)`` into a length-``N`` delay line. Because ``x(t)`` only
reads values at least ``N`` chips old (directly, or through ``v(t-1)``),
all ``N`` chips of one sample can be computed as a vector. The kernel does
that, batched over datapoints; :func:`reference_loop` in the tests keeps the
literal chip-by-chip form as the ground truth.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple

import numba
import numpy as np

from .errors import DegenerateCombineError, InvalidConfigError, NumericError
from .transforms import Datapoint, pad_to_multiple

ETA_LIMIT = 1.5
COMBINE_MODES = ("sum", "normalized_product")

StateVector = np.ndarray


def make_mask(N: int, seed: int) -> np.ndarray:
    """Equiprobable +/-1 spreading sequence of length ``N``."""
    if N < 1:
        raise InvalidConfigError("mask length must be positive")
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=N).astype(np.float64) * 2.0 - 1.0


@dataclass(frozen=True)
class LoopConfig:
    N: int = 1000
    eta: float = 0.5
    nu: float = 0.3
    h: Tuple[float, float] = (1.0, 0.25)
    mask_seed: int = 0
    nl: str = "sin"
    sigma: float = 0.0

    def __post_init__(self):
        if self.N < 1:
            raise InvalidConfigError("N must be at least 1")
        if not abs(self.eta) < ETA_LIMIT:
            raise InvalidConfigError(f"|eta| must stay below {ETA_LIMIT}, got {self.eta}")
        if self.nl != "sin":
            raise InvalidConfigError(f"unsupported nonlinearity {self.nl!r}")
        if len(self.h) != 2:
            raise InvalidConfigError("mixing filter h must have exactly two taps")
        if self.sigma < 0:
            raise InvalidConfigError("sigma must be non-negative")
        object.__setattr__(self, "h", (float(self.h[0]), float(self.h[1])))

    @cached_property
    def mask(self) -> np.ndarray:
        return make_mask(self.N, self.mask_seed)

    def to_dict(self) -> dict:
        return {"N": self.N, "eta": self.eta, "nu": self.nu, "h": list(self.h),
                "mask_seed": self.mask_seed, "nl": self.nl, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "LoopConfig":
        return cls(N=int(d["N"]), eta=float(d["eta"]), nu=float(d["nu"]), h=tuple(d["h"]),
                   mask_seed=int(d["mask_seed"]), nl=d.get("nl", "sin"),
                   sigma=float(d.get("sigma", 0.0)))


@dataclass(frozen=True)
class SplitConfig:
    k: int = 10
    n_per_loop: int = 100
    combine: str = "sum"

    def __post_init__(self):
        if self.k < 1:
            raise InvalidConfigError("split count k must be at least 1")
        if self.combine not in COMBINE_MODES:
            raise InvalidConfigError(f"combine must be one of {COMBINE_MODES}")

    def loop_configs(self, eta: float = 0.5, nu: float = 0.3, h=(1.0, 0.25),
                     mask_seed: int = 0) -> List[LoopConfig]:
        """One config per split loop, each with its own mask seed."""
        return [LoopConfig(self.n_per_loop, eta, nu, tuple(h), mask_seed + j) for j in range(self.k)]


@numba.njit(cache=True, fastmath=True, nogil=True)
def _loop_kernel(u, masks, eta, nu, h0, h1, noise):
    # u: (B, k, L) inputs; masks: (k, N); per-loop gains: (k,); noise: (B, k, L, N) or empty
    B, K, L = u.shape
    N = masks.shape[1]
    out = np.zeros((B, K, N), dtype=u.dtype)
    v = np.empty(N, dtype=u.dtype)
    noisy = noise.shape[0] > 0
    for b in range(B):
        for j in range(K):
            x = out[b, j]
            e, g, a, c = eta[j], nu[j], h0[j], h1[j]
            m = masks[j]
            v_tail = 0.0
            for n in range(L):
                s = g * u[b, j, n]
                for i in range(N):
                    v[i] = np.sin(e * x[i] + s * m[i])
                x[0] = a * v[0] + c * v_tail
                for i in range(1, N):
                    x[i] = a * v[i] + c * v[i - 1]
                if noisy:
                    for i in range(N):
                        x[i] += noise[b, j, n, i]
                v_tail = v[N - 1]
    return out


def run_loops(u: np.ndarray, cfgs: Sequence[LoopConfig], dtype=np.float64, rng=None) -> np.ndarray:
    """Run a batch through ``k`` loops at once.

    Args:
        u: inputs of shape ``(B, k, L)``; slice ``j`` feeds loop ``j``.
        cfgs: one :class:`LoopConfig` per loop, all with the same ``N``.
        dtype: float32 roughly doubles throughput for large batches.
        rng: generator for the per-chip loop noise, needed when any ``sigma > 0``.

    Returns:
        States of shape ``(B, k, N)``.
    """
    u = np.asarray(u)
    if u.ndim != 3 or u.shape[1] != len(cfgs):
        raise InvalidConfigError(f"input shape {u.shape} does not match {len(cfgs)} loop configs")
    if not np.all(np.isfinite(u)):
        raise NumericError("reservoir input contains non-finite values")
    sizes = {c.N for c in cfgs}
    if len(sizes) != 1:
        raise InvalidConfigError("all split loops must share the same N")
    N = sizes.pop()
    masks = np.stack([c.mask for c in cfgs]).astype(dtype)
    par = [np.array(v, dtype=dtype) for v in zip(*[(c.eta, c.nu, c.h[0], c.h[1]) for c in cfgs])]
    sigmas = np.array([c.sigma for c in cfgs])
    if np.any(sigmas > 0):
        if rng is None:
            raise InvalidConfigError("loop noise requires an rng")
        noise = rng.standard_normal((u.shape[0], len(cfgs), u.shape[2], N))
        noise = (noise * sigmas[None, :, None, None]).astype(dtype)
    else:
        noise = np.zeros((0, 0, 0, 0), dtype=dtype)
    return _loop_kernel(np.ascontiguousarray(u, dtype=dtype), masks, *par, noise)


def run_loop(dp, cfg: LoopConfig, rng=None) -> StateVector:
    """Clock a datapoint through one loop and return the final ``N`` delay-line values."""
    values = dp.values if isinstance(dp, Datapoint) else np.asarray(dp, dtype=np.float64)
    return run_loops(values[None, None, :], [cfg], rng=rng)[0, 0]


def combine_states(states: np.ndarray, mode: str = "sum") -> np.ndarray:
    """Merge per-loop states ``(..., k, N)`` into one ``(..., N)`` vector per datapoint."""
    if mode == "sum":
        return states.sum(axis=-2)
    if mode == "normalized_product":
        prod = np.prod(states, axis=-2)
        norm = np.linalg.norm(prod, axis=-1, keepdims=True)
        if np.any(norm == 0):
            raise DegenerateCombineError("elementwise product of split states has zero norm")
        return prod / norm
    raise InvalidConfigError(f"unknown combine mode {mode!r}")


def split_inputs(values: np.ndarray, k: int) -> np.ndarray:
    """``(B, L)`` -> ``(B, k, ceil(L/k))``, zero-padding the tail."""
    padded = pad_to_multiple(values, k)
    return padded.reshape(values.shape[0], k, -1)


def run_split(dp, sc: SplitConfig, cfgs: Sequence[LoopConfig], rng=None) -> StateVector:
    """Feed the ``k`` slices of ``dp`` to ``k`` loops and combine their states."""
    if len(cfgs) != sc.k:
        raise InvalidConfigError(f"expected {sc.k} loop configs, got {len(cfgs)}")
    values = dp.values if isinstance(dp, Datapoint) else np.asarray(dp, dtype=np.float64)
    states = run_loops(split_inputs(values[None, :], sc.k), cfgs, rng=rng)
    return combine_states(states, sc.combine)[0]


@dataclass
class CalibrationResult:
    best: dict
    table: List[dict] = field(default_factory=list)


def calibrate(score: Callable[[float, float, float], float], etas: Sequence[float],
              nus: Sequence[float], h1s: Sequence[float]) -> CalibrationResult:
    """Exhaustive grid search over loop gain, input gain and second mixing tap.

    ``score(eta, nu, h1)`` must return the validation accuracy of the
    downstream ridge model built with those loop settings. Ties go to the
    smaller ``|eta|``, then to grid order.
    """
    grid = list(itertools.product(etas, nus, h1s))
    if not grid:
        raise InvalidConfigError("calibration grid is empty")
    table = []
    for eta, nu, h1 in grid:
        table.append({"eta": float(eta), "nu": float(nu), "h1": float(h1),
                      "accuracy": float(score(eta, nu, h1))})
    best = min(enumerate(table), key=lambda r: (-r[1]["accuracy"], abs(r[1]["eta"]), r[0]))[1]
    return CalibrationResult(best=best, table=table)


def with_gains(cfg: LoopConfig, eta: float, nu: float, h1: float) -> LoopConfig:
    return replace(cfg, eta=eta, nu=nu, h=(cfg.h[0], h1))
