"""Synthetic emitter population with hardware fingerprints.

Each emitter transmits bursts that start with a turn-on transient and a
preamble shared by every device (like the fixed training fields that open
any WiFi frame), followed by random QPSK data. Device identity lives only in
the hardware distortions applied on the way out: transient shape, transmit
I/Q mismatch, power-amplifier compression and carrier offset.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .burst import DEFAULT_LENGTH, SAMPLE_RATE_HZ, Burst, iq_imbalance
from .errors import BoundsError, InvalidInputError, InvalidPopulationError

CARRIER_HZ = 2.437e9
SAMPLES_PER_SYMBOL = 4
RRC_ROLLOFF = 0.35
RRC_SPAN_SYMBOLS = 8
PREAMBLE_SYMBOLS = 252
PREAMBLE_SEED = 0x5EED

EDGE_WINDOW = 16
NOISE_FLOOR_SAMPLES = 64
MIN_BURST_LENGTH = 64

# Full-scale ranges at separation=1; draws are centred on the midpoint.
FINGERPRINT_RANGES = {
    "cfo_ppm": (-20.0, 20.0),
    "tx_iq_gain": (0.0, 2.0),
    "tx_iq_phase_deg": (0.0, 2.0),
    "pa_a3": (-0.2, 0.2),
    "pa_a5": (-0.05, 0.05),
    "transient_tau": (10.0, 60.0),
    "transient_ring_freq": (0.01, 0.1),
    "transient_ring_amp": (0.0, 0.3),
    "clock_skew_ppm": (-10.0, 10.0),
}


@dataclass(frozen=True)
class DeviceFingerprint:
    device_id: int
    cfo_ppm: float = 0.0
    tx_iq_gain: float = 0.0
    tx_iq_phase_deg: float = 0.0
    pa_a3: float = 0.0
    pa_a5: float = 0.0
    transient_tau: float = 1e-9
    transient_ring_freq: float = 0.0
    transient_ring_amp: float = 0.0
    clock_skew_ppm: float = 0.0

    def __post_init__(self):
        if not self.transient_tau > 0:
            raise InvalidInputError("transient_tau must be positive")
        if not 0 <= self.transient_ring_amp < 1:
            raise InvalidInputError("transient_ring_amp must lie in [0, 1)")
        if abs(self.pa_a3) + abs(self.pa_a5) >= 1:
            raise InvalidInputError("|pa_a3| + |pa_a5| must stay below 1")

    @property
    def cfo_cycles(self) -> float:
        """Carrier offset in cycles per sample at the nominal carrier and rate."""
        return self.cfo_ppm * 1e-6 * CARRIER_HZ / SAMPLE_RATE_HZ

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class EmitterPopulation:
    fingerprints: tuple
    separation: float
    seed: int

    def __len__(self) -> int:
        return len(self.fingerprints)

    def __getitem__(self, device_id: int) -> DeviceFingerprint:
        return self.fingerprints[device_id]


def make_population(count: int, separation: float = 1.0, seed: int = 0) -> EmitterPopulation:
    """Draw ``count`` fingerprints, each field uniform in its range shrunk by ``separation``."""
    if count < 2:
        raise InvalidPopulationError(f"population needs at least 2 devices, got {count}")
    if not 0 < separation <= 1:
        raise InvalidPopulationError(f"separation must lie in (0, 1], got {separation}")
    rng = np.random.default_rng(seed)
    names = list(FINGERPRINT_RANGES)
    lo = np.array([FINGERPRINT_RANGES[n][0] for n in names])
    hi = np.array([FINGERPRINT_RANGES[n][1] for n in names])
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    draws = rng.uniform(mid - separation * half, mid + separation * half, size=(count, len(names)))
    fps = tuple(
        DeviceFingerprint(device_id=i, **{n: float(v) for n, v in zip(names, row)})
        for i, row in enumerate(draws)
    )
    return EmitterPopulation(fingerprints=fps, separation=float(separation), seed=int(seed))


def rrc_taps(rolloff: float = RRC_ROLLOFF, sps: int = SAMPLES_PER_SYMBOL,
             span: int = RRC_SPAN_SYMBOLS) -> np.ndarray:
    """Root-raised-cosine taps scaled so unit-energy symbols give unit mean power."""
    t = np.arange(-span * sps // 2, span * sps // 2 + 1) / sps
    h = np.empty_like(t)
    beta = rolloff
    for i, ti in enumerate(t):
        if ti == 0.0:
            h[i] = 1.0 + beta * (4 / np.pi - 1)
        elif beta > 0 and abs(abs(4 * beta * ti) - 1.0) < 1e-12:
            h[i] = (beta / np.sqrt(2)) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                                          + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta)))
        else:
            num = np.sin(np.pi * ti * (1 - beta)) + 4 * beta * ti * np.cos(np.pi * ti * (1 + beta))
            den = np.pi * ti * (1 - (4 * beta * ti) ** 2)
            h[i] = num / den
    return h * np.sqrt(sps / np.sum(h ** 2))


@lru_cache(maxsize=1)
def _shaping_filter() -> np.ndarray:
    return rrc_taps()


@lru_cache(maxsize=1)
def _preamble_symbols() -> np.ndarray:
    rng = np.random.default_rng(PREAMBLE_SEED)
    return _qpsk(rng, PREAMBLE_SYMBOLS)


def _qpsk(rng: np.random.Generator, n: int) -> np.ndarray:
    bits = rng.integers(0, 2, size=(n, 2))
    return ((2 * bits[:, 0] - 1) + 1j * (2 * bits[:, 1] - 1)) / np.sqrt(2)


def payload(payload_seed: int, length: int, clock_skew_ppm: float = 0.0) -> np.ndarray:
    """Shaped unit-power QPSK payload: shared preamble, then seeded random data.

    With a nonzero clock skew the waveform is read at ``n * (1 + skew)``.
    """
    h = _shaping_filter()
    delay = (h.shape[0] - 1) // 2
    need = length + 2 * SAMPLES_PER_SYMBOL
    n_sym = -(-need // SAMPLES_PER_SYMBOL)
    pre = _preamble_symbols()[:n_sym]
    data = _qpsk(np.random.default_rng(payload_seed), max(n_sym - pre.shape[0], 0))
    symbols = np.concatenate([pre, data])
    up = np.zeros(n_sym * SAMPLES_PER_SYMBOL, dtype=np.complex128)
    up[::SAMPLES_PER_SYMBOL] = symbols
    wave = np.convolve(up, h)[delay:delay + up.shape[0]]
    if clock_skew_ppm == 0.0:
        return wave[:length].copy()
    t = np.arange(length) * (1.0 + clock_skew_ppm * 1e-6)
    grid = np.arange(wave.shape[0])
    return np.interp(t, grid, wave.real) + 1j * np.interp(t, grid, wave.imag)


def turn_on_envelope(fp: DeviceFingerprint, length: int) -> np.ndarray:
    n = np.arange(1, length + 1, dtype=np.float64)
    decay = np.exp(-n / fp.transient_tau)
    ring = 1.0 + fp.transient_ring_amp * np.cos(2 * np.pi * fp.transient_ring_freq * n) * decay
    return (1.0 - decay) * ring


def emit_burst(fp: DeviceFingerprint, payload_seed: int, length: int = DEFAULT_LENGTH) -> Burst:
    """Transmit one burst through ``fp``'s hardware model.

    Order: turn-on envelope, transmit I/Q mismatch, odd-order PA polynomial
    (rescaled so the steady-state power is preserved), carrier offset.
    """
    if length < MIN_BURST_LENGTH:
        raise InvalidInputError(f"burst length must be >= {MIN_BURST_LENGTH}, got {length}")
    x = payload(payload_seed, length, fp.clock_skew_ppm) * turn_on_envelope(fp, length)
    x = iq_imbalance(x, fp.tx_iq_gain, fp.tx_iq_phase_deg)
    mag2 = np.abs(x) ** 2
    y = x * (1.0 + fp.pa_a3 * mag2 + fp.pa_a5 * mag2 ** 2)

    steady = slice(int(np.ceil(5 * fp.transient_tau)), None)
    if y[steady].size == 0:
        steady = slice(None)
    ey = np.sum(np.abs(y[steady]) ** 2)
    if ey > 0:
        y = y * np.sqrt(np.sum(mag2[steady]) / ey)
    if fp.cfo_ppm != 0.0:
        y = y * np.exp(2j * np.pi * fp.cfo_cycles * np.arange(length))
    return Burst(y, SAMPLE_RATE_HZ, fp.device_id)


def capture_stream(fp: DeviceFingerprint, payload_seed: int, length: int, lead: int,
                   snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Receiver-side view of one transmission: ``lead`` samples of noise, then the burst.

    The burst is emitted ``2 * EDGE_WINDOW`` samples longer than ``length`` so a
    late edge decision still leaves a full datapoint to extract.
    """
    tx = emit_burst(fp, payload_seed, length + 2 * EDGE_WINDOW).samples
    stream = np.concatenate([np.zeros(lead, dtype=np.complex128), tx])
    noise_var = 10.0 ** (-snr_db / 10.0)
    noise = rng.standard_normal((2, stream.shape[0]))
    return stream + np.sqrt(noise_var / 2) * (noise[0] + 1j * noise[1])


def detect_rising_edge(stream: Sequence[complex], threshold: float) -> Optional[int]:
    """Index where the trailing 16-sample mean power first exceeds ``threshold`` x noise floor.

    The noise floor is the mean power of the first 64 samples. Returns ``None``
    when the stream never crosses.
    """
    x = np.asarray(stream, dtype=np.complex128)
    if x.size == 0:
        raise InvalidInputError("cannot detect an edge in an empty stream")
    if not threshold > 0:
        raise InvalidInputError("threshold must be positive")
    power = np.abs(x) ** 2
    floor = power[:NOISE_FLOOR_SAMPLES].mean()
    csum = np.concatenate([[0.0], np.cumsum(power)])
    n = np.arange(x.size)
    lo = np.maximum(n + 1 - EDGE_WINDOW, 0)
    avg = (csum[n + 1] - csum[lo]) / (n + 1 - lo)
    hits = np.flatnonzero(avg > threshold * floor)
    return int(hits[0]) if hits.size else None


def extract_burst(stream: Sequence[complex], start: int, length: int = DEFAULT_LENGTH,
                  sample_rate_hz: float = SAMPLE_RATE_HZ, label: Optional[int] = None) -> Burst:
    x = np.asarray(stream)
    if start < 0 or start + length > x.shape[0]:
        raise BoundsError(f"slice [{start}, {start + length}) outside stream of length {x.shape[0]}")
    return Burst(x[start:start + length], sample_rate_hz, label)
