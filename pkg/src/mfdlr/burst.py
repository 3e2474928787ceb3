"""Burst container and small complex-baseband helpers shared by the simulator and channel code."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

DEFAULT_LENGTH = 1024
SAMPLE_RATE_HZ = 100e6


@dataclass(frozen=True, eq=False)
class Burst:
    """Fixed-length complex baseband datapoint.

    Attributes:
        samples: complex128 array of length ``len(burst)``.
        sample_rate_hz: sampling rate the samples were taken at.
        label: device id of the emitter, or ``None`` when unknown.
    """

    samples: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ
    label: Optional[int] = None

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.complex128)
        if arr.ndim != 1:
            raise ValueError("burst samples must be one-dimensional")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def with_samples(self, samples: np.ndarray) -> "Burst":
        return replace(self, samples=samples)

    @property
    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real)

    @property
    def power(self) -> float:
        return self.energy / len(self)


def iq_imbalance(x: np.ndarray, amp_pct: float, phase_deg: float) -> np.ndarray:
    """Apply an I/Q gain and quadrature-phase mismatch.

    The in-phase rail is scaled by ``1 + amp_pct/200`` and the quadrature rail
    by ``1 - amp_pct/200``; the quadrature LO is skewed by ``phase_deg``, so
    ``Q' = g_q * (Q cos(phi) - I sin(phi))``.
    """
    g_i = 1.0 + amp_pct / 200.0
    g_q = 1.0 - amp_pct / 200.0
    phi = np.deg2rad(phase_deg)
    i, q = x.real, x.imag
    return g_i * i + 1j * (g_q * (q * np.cos(phi) - i * np.sin(phi)))
