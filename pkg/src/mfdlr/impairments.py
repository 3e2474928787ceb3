"""Channel and receiver impairment classes T0..T4 and in-band jamming.

Every random quantity is drawn from the ``rng`` passed in, in a fixed order,
so a burst, a spec and a seeded generator always reproduce the same output.
Only ``uniform``, ``integers`` and ``standard_normal`` are used on the
generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .burst import Burst, iq_imbalance
from .errors import DegenerateJammerError, InvalidClassError, InvalidInputError

N_CLASSES = 5
POWER_DELAY_PROFILE = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class ImpairmentSpec:
    """Bounds of the random effects for impairment class ``index``.

    Units: ``t_max`` samples, ``p_max`` radians, ``f_max`` DFT bins of the
    burst, ``b_coh`` normalized coherence bandwidth, ``iq_amp_max`` percent
    gain mismatch, ``iq_phase_max_deg`` degrees, ``iq_dc_max`` fraction of
    signal RMS.
    """

    index: int
    t_max: int
    p_max: float
    f_max: float
    b_coh: float
    r_max: float
    snr_db: float
    iq_amp_max: float
    iq_phase_max_deg: float
    iq_dc_max: float


def spec_from_index(i: int) -> ImpairmentSpec:
    if not isinstance(i, (int, np.integer)) or not 0 <= i < N_CLASSES:
        raise InvalidClassError(f"impairment class must be an integer in 0..4, got {i!r}")
    i = int(i)
    # Decimal coefficients are written as ratios so T_i lands on the nearest float.
    return ImpairmentSpec(
        index=i,
        t_max=25 * i,
        p_max=0.25 * i,
        f_max=3 * i / 40,
        b_coh=(6 - i) / 10,
        r_max=1 + 0.625 * i,
        snr_db=50 - 12.5 * i,
        iq_amp_max=0.75 * i,
        iq_phase_max_deg=0.25 * i,
        iq_dc_max=i / 40,
    )


@dataclass(frozen=True)
class FadingRealization:
    """Quasi-static three-tap Rayleigh channel."""

    taps: np.ndarray
    tap_delays: Tuple[int, int, int]

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = np.zeros_like(x)
        n = x.shape[0]
        for g, d in zip(self.taps, self.tap_delays):
            if d < n:
                y[d:] += g * x[:n - d]
        return y


def rayleigh_channel(b_coh: float, rng) -> FadingRealization:
    """Draw a channel whose coherence bandwidth lies in ``(b_coh/2, b_coh]``.

    Tap spacing follows ``B_c = 1 / (5 * delay_spread)``; the gains are
    normalized so the expected output power equals the input power.
    """
    if not 0 < b_coh <= 1:
        raise InvalidInputError(f"coherence bandwidth must lie in (0, 1], got {b_coh}")
    bw = b_coh - rng.uniform(0.0, b_coh / 2)
    d = int(math.ceil(1.0 / (5.0 * bw)))
    g = rng.standard_normal((2, 3))
    profile = np.asarray(POWER_DELAY_PROFILE)
    taps = np.sqrt(profile / 2) * (g[0] + 1j * g[1]) / np.sqrt(profile.sum())
    return FadingRealization(taps=taps, tap_delays=(0, d, 2 * d))


def resample_linear(x: np.ndarray, rate: float) -> np.ndarray:
    """Read ``x`` at ``n / rate``: an ADC running ``rate`` times faster, same length out."""
    if rate == 1.0:
        return x.copy()
    n = x.shape[0]
    t = np.arange(n) / rate
    grid = np.arange(n)
    return np.interp(t, grid, x.real) + 1j * np.interp(t, grid, x.imag)


def add_awgn(burst: Burst, snr_db: float, rng) -> Burst:
    """Add circular white noise with variance ``P_signal / 10^(snr/10)``."""
    if math.isinf(snr_db) and snr_db > 0:
        return burst.with_samples(burst.samples.copy())
    return burst.with_samples(_awgn(burst.samples, snr_db, rng))


def _awgn(x: np.ndarray, snr_db: float, rng) -> np.ndarray:
    power = np.mean(np.abs(x) ** 2)
    var = power / 10.0 ** (snr_db / 10.0)
    w = rng.standard_normal((2, x.shape[0]))
    return x + np.sqrt(var / 2) * (w[0] + 1j * w[1])


def apply(burst: Burst, spec: ImpairmentSpec, rng) -> Burst:
    """Run ``burst`` through the class-``spec.index`` channel and receiver chain.

    Fixed order: fading (skipped for T0), resampling, frequency shift, phase
    rotation, circular time offset, receive I/Q imbalance with DC bias, AWGN.
    """
    x = burst.samples
    n = x.shape[0]
    if spec.index > 0:
        x = rayleigh_channel(spec.b_coh, rng).apply(x)

    rate = rng.uniform(1.0, spec.r_max)
    x = resample_linear(x, rate)

    df = rng.uniform(-spec.f_max, spec.f_max)
    phase = rng.uniform(-spec.p_max, spec.p_max)
    shift = int(rng.integers(-spec.t_max, spec.t_max, endpoint=True))
    if df != 0.0:
        x = x * np.exp(2j * np.pi * df * np.arange(n) / n)
    if phase != 0.0:
        x = x * np.exp(1j * phase)
    if shift:
        x = np.roll(x, shift)

    amp = rng.uniform(0.0, spec.iq_amp_max)
    iq_phase = rng.uniform(0.0, spec.iq_phase_max_deg)
    dc_mag = rng.uniform(0.0, spec.iq_dc_max)
    dc_arg = rng.uniform(0.0, 2 * np.pi)
    x = iq_imbalance(x, amp, iq_phase)
    if dc_mag:
        rms = np.sqrt(np.mean(np.abs(x) ** 2))
        x = x + dc_mag * rms * np.exp(1j * dc_arg)

    return burst.with_samples(_awgn(x, spec.snr_db, rng))


def superpose_jammers(signal: Burst, jammers: Sequence[Burst], jsr_db: float,
                      max_delay: int = 512, rng=None) -> Tuple[Burst, float]:
    """Add delayed jammer bursts scaled to an exact jamming-to-signal energy ratio.

    Each jammer starts an independent uniform ``0..max_delay`` samples after the
    signal and is truncated to the signal length. Returns the jammed burst and
    the achieved JSR in dB.
    """
    if len(jammers) == 0:
        raise InvalidInputError("at least one jammer burst is required")
    x = signal.samples
    n = x.shape[0]
    total = np.zeros(n, dtype=np.complex128)
    delays = rng.integers(0, max_delay, size=len(jammers), endpoint=True)
    for jam, d in zip(jammers, delays):
        d = int(d)
        if d < n:
            total[d:] += jam.samples[:n - d]
    if math.isinf(jsr_db) and jsr_db < 0:
        return signal.with_samples(x.copy()), -math.inf
    e_s = np.vdot(x, x).real
    e_j = np.vdot(total, total).real
    if e_j == 0.0:
        raise DegenerateJammerError("jammer sum has zero energy inside the signal window")
    scale = np.sqrt(e_s * 10.0 ** (jsr_db / 10.0) / e_j)
    jam = scale * total
    achieved = 10.0 * np.log10(np.vdot(jam, jam).real / e_s)
    return signal.with_samples(x + jam), float(achieved)
