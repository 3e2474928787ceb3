"""Real-valued reservoir inputs computed from complex bursts.

Every transform has an array form operating along the last axis (used for
batches) and a :class:`Datapoint` form for single bursts.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .burst import Burst
from .errors import SizeError, InvalidInputError

DEFAULT_KAY_WINDOW = 64


@dataclass(frozen=True, eq=False)
class Datapoint:
    values: np.ndarray
    transform_tag: str
    label: Optional[int] = None

    def __len__(self) -> int:
        return self.values.shape[0]


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def amplitude_array(x: np.ndarray) -> np.ndarray:
    return np.abs(x)


def fft_amplitude_array(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if not _is_pow2(n):
        raise SizeError(f"FFT amplitude needs a power-of-two length, got {n}")
    return np.abs(np.fft.fft(x, axis=-1))


def differential_fft_array(x: np.ndarray) -> np.ndarray:
    if x.shape[-1] < 2:
        raise SizeError("differential FFT needs at least 2 samples")
    diff = np.roll(x, -1, axis=-1) - x
    return np.abs(np.fft.fft(diff, axis=-1))


def decimated_dft_array(x: np.ndarray, d: int) -> np.ndarray:
    """Polyphase DFT amplitudes: phase ``p`` block holds ``|DFT(x[p::d])|``, phases in order."""
    n = x.shape[-1]
    if d < 1 or n % d:
        raise SizeError(f"decimation {d} does not divide length {n}")
    phases = x.reshape(x.shape[:-1] + (n // d, d))
    spectra = np.abs(np.fft.fft(phases, axis=-2))
    return np.swapaxes(spectra, -1, -2).reshape(x.shape)


def kay_weights(window: int) -> np.ndarray:
    """Kay's parabolic smoothing weights for ``window`` samples (``window - 1`` phase differences)."""
    m = np.arange(window - 1)
    half = window / 2
    w = 1.5 * window / (window ** 2 - 1) * (1 - ((m - (half - 1)) / half) ** 2)
    return w / w.sum()


def kay_frequency_array(x: np.ndarray, window: int = DEFAULT_KAY_WINDOW) -> np.ndarray:
    """Sliding Kay frequency estimates in cycles/sample, stride 1, zero-padded to the input length."""
    if window < 2:
        raise InvalidInputError("Kay window must be at least 2 samples")
    n = x.shape[-1]
    out = np.zeros(x.shape, dtype=np.float64)
    if window > n:
        return out
    dphi = np.angle(x[..., 1:] * np.conj(x[..., :-1]))
    w = kay_weights(window)
    # correlate weights along the difference sequence: est[j] = sum_m w[m] * dphi[j + m]
    windows = np.lib.stride_tricks.sliding_window_view(dphi, window - 1, axis=-1)
    out[..., :n - window + 1] = windows @ w / (2 * np.pi)
    return out


def _parse_tag(tag: str):
    if tag.startswith("dec_dft"):
        try:
            d = int(tag.split(":", 1)[1])
        except (IndexError, ValueError):
            raise InvalidInputError(f"decimated DFT tag must look like 'dec_dft:8', got {tag!r}")
        return "dec_dft", d
    if tag.startswith("kay_freq"):
        window = int(tag.split(":", 1)[1]) if ":" in tag else DEFAULT_KAY_WINDOW
        return "kay_freq", window
    return tag, None


def transform_fn(tag: str) -> Callable[[np.ndarray], np.ndarray]:
    """Batch transform for a tag: ``amplitude``, ``fft_amp``, ``diff_fft``, ``dec_dft:<d>``, ``kay_freq[:<w>]``."""
    name, arg = _parse_tag(tag)
    if name == "amplitude":
        return amplitude_array
    if name == "fft_amp":
        return fft_amplitude_array
    if name == "diff_fft":
        return differential_fft_array
    if name == "dec_dft":
        return lambda x: decimated_dft_array(x, arg)
    if name == "kay_freq":
        return lambda x: kay_frequency_array(x, arg)
    raise InvalidInputError(f"unknown transform {tag!r}")


def amplitude(burst: Burst) -> Datapoint:
    return Datapoint(amplitude_array(burst.samples), "amplitude", burst.label)


def fft_amplitude(burst: Burst) -> Datapoint:
    return Datapoint(fft_amplitude_array(burst.samples), "fft_amp", burst.label)


def differential_fft(burst: Burst) -> Datapoint:
    return Datapoint(differential_fft_array(burst.samples), "diff_fft", burst.label)


def decimated_dft(burst: Burst, d: int) -> Datapoint:
    return Datapoint(decimated_dft_array(burst.samples, d), f"dec_dft:{d}", burst.label)


def kay_frequency(burst: Burst, window: int = DEFAULT_KAY_WINDOW) -> Datapoint:
    return Datapoint(kay_frequency_array(burst.samples, window), f"kay_freq:{window}", burst.label)


def padded_length(n: int, k: int) -> int:
    return -(-n // k) * k


def pad_to_multiple(values: np.ndarray, k: int) -> np.ndarray:
    """Zero-pad the last axis up to the next multiple of ``k`` (1024 -> 1030 for k=10)."""
    n = values.shape[-1]
    target = padded_length(n, k)
    if target == n:
        return values
    widths = [(0, 0)] * (values.ndim - 1) + [(0, target - n)]
    return np.pad(values, widths)


def split(dp: Datapoint, k: int, pad: bool = False) -> List[Datapoint]:
    """Cut a datapoint into ``k`` contiguous equal slices.

    Without ``pad`` the length must be divisible by ``k``; with it the values
    are zero-padded at the end first.
    """
    if k < 1:
        raise SizeError("split count must be positive")
    values = dp.values
    if values.shape[0] % k:
        if not pad:
            raise SizeError(f"{k} does not divide datapoint length {values.shape[0]}")
        values = pad_to_multiple(values, k)
    return [Datapoint(piece, dp.transform_tag, dp.label) for piece in np.split(values, k)]
