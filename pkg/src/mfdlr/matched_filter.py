"""Per-device matched filters built from turn-on signatures, and filter-bank inference.

A template is one device's average (or one randomly chosen) training burst,
normalized to unit energy. Filtering is circular cross-correlation with the
template, defined through the DFT. At inference every template is tried;
a hypothesis survives only if the classifier names the filter's own device
with an entropy under the calibrated threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .burst import Burst
from .errors import CalibrationInfeasibleError, MissingDeviceError, SizeError

REJECT = -1


@dataclass(eq=False)
class FilterBank:
    templates: Dict[int, np.ndarray]
    mode: str = "average"
    entropy_threshold: Optional[float] = None

    @property
    def devices(self) -> Tuple[int, ...]:
        return tuple(sorted(self.templates))

    def template_matrix(self) -> np.ndarray:
        return np.stack([self.templates[d] for d in self.devices])


def _unit_energy(x: np.ndarray) -> np.ndarray:
    e = np.sqrt(np.vdot(x, x).real)
    return x / e if e > 0 else x


def build_bank(groups: Mapping[int, Sequence], mode: str = "average", seed: int = 0) -> FilterBank:
    """One unit-energy template per device.

    Args:
        groups: device id -> that device's training bursts (``Burst`` objects
            or a 2-D complex array, one burst per row).
        mode: ``"average"`` takes the complex mean; ``"random"`` picks one burst
            per device with a generator seeded by ``seed`` (devices in sorted order).
    """
    if mode not in ("average", "random"):
        raise ValueError(f"unknown filter-bank mode {mode!r}")
    rng = np.random.default_rng(seed)
    templates = {}
    for dev in sorted(groups):
        bursts = groups[dev]
        rows = np.asarray([b.samples if isinstance(b, Burst) else b for b in bursts])
        if rows.size == 0:
            raise MissingDeviceError(f"device {dev} has no training bursts")
        if mode == "average":
            t = rows.mean(axis=0)
        else:
            t = rows[int(rng.integers(rows.shape[0]))]
        templates[int(dev)] = _unit_energy(np.asarray(t, dtype=np.complex128))
    if not templates:
        raise MissingDeviceError("no devices to build a filter bank from")
    return FilterBank(templates=templates, mode=mode)


def correlate_array(x: np.ndarray, templates: np.ndarray) -> np.ndarray:
    """Circular cross-correlation ``IDFT(DFT(x) * conj(DFT(t)))`` along the last axis (broadcasting)."""
    if x.shape[-1] != templates.shape[-1]:
        raise SizeError(f"burst length {x.shape[-1]} != template length {templates.shape[-1]}")
    return np.fft.ifft(np.fft.fft(x, axis=-1) * np.conj(np.fft.fft(templates, axis=-1)), axis=-1)


def filter_burst(burst: Burst, template: np.ndarray) -> Burst:
    return burst.with_samples(correlate_array(burst.samples, np.asarray(template)))


def hypothesis_decisions(pred: np.ndarray, ent: np.ndarray, devices: Sequence[int],
                         threshold: float) -> np.ndarray:
    """Pick, per burst, the self-consistent hypothesis with least entropy.

    Args:
        pred: ``(B, C)`` class predicted under each device's filter.
        ent: ``(B, C)`` matching entropies.
        devices: device id of each filter column.
        threshold: hypotheses with entropy above it are dropped.

    Returns:
        ``(B,)`` chosen device ids, :data:`REJECT` where nothing survived.
        Equal entropies resolve to the smaller device id.
    """
    dev = np.asarray(devices)
    ok = (pred == dev[None, :]) & (ent <= threshold)
    masked = np.where(ok, ent, np.inf)
    # columns follow sorted device order, so argmin's first-index rule breaks ties by device id
    order = np.argsort(dev, kind="stable")
    best = order[np.argmin(masked[:, order], axis=1)]
    out = dev[best].copy()
    out[~ok.any(axis=1)] = REJECT
    return out


def false_positive_rate(pred: np.ndarray, ent: np.ndarray, labels: np.ndarray,
                        devices: Sequence[int], threshold: float) -> float:
    """Fraction of wrong-filter hypotheses that would be accepted at ``threshold``."""
    dev = np.asarray(devices)
    wrong = dev[None, :] != np.asarray(labels)[:, None]
    accepted = (pred == dev[None, :]) & (ent <= threshold)
    n_wrong = wrong.sum()
    return float((accepted & wrong).sum() / n_wrong) if n_wrong else 0.0


def select_threshold(pred: np.ndarray, ent: np.ndarray, labels: np.ndarray,
                     devices: Sequence[int], target_fpr: float) -> float:
    """Largest observed entropy whose wrong-filter acceptance rate is <= ``target_fpr``.

    Raises :class:`CalibrationInfeasibleError` when even the smallest observed
    entropy admits too many wrong hypotheses.
    """
    if not 0 <= target_fpr <= 1:
        raise ValueError("target false-positive rate must lie in [0, 1]")
    dev = np.asarray(devices)
    labels = np.asarray(labels)
    wrong = dev[None, :] != labels[:, None]
    n_wrong = int(wrong.sum())
    candidates = np.unique(ent)
    if n_wrong == 0:
        return float(candidates[-1])
    # wrong hypotheses that would pass the class check, sorted by entropy
    bad = np.sort(ent[wrong & (pred == dev[None, :])])
    accepted = np.searchsorted(bad, candidates, side="right")
    rates = accepted / n_wrong
    feasible = np.flatnonzero(rates <= target_fpr)
    if feasible.size == 0:
        raise CalibrationInfeasibleError(
            f"target FPR {target_fpr} unattainable; best achievable {rates[0]:.4f}", float(rates[0]))
    return float(candidates[feasible[-1]])


HypothesisFn = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


def calibrate_threshold(bank: FilterBank, bursts: np.ndarray, labels: Sequence[int],
                        hypotheses: HypothesisFn, target_fpr: float) -> float:
    """Set ``bank.entropy_threshold`` from labelled validation bursts.

    ``hypotheses(bursts)`` runs the full filter -> transform -> loop -> predict
    chain under every template and returns ``(pred, entropy)``, each ``(B, C)``
    with columns in ``bank.devices`` order.
    """
    pred, ent = hypotheses(np.asarray(bursts))
    bank.entropy_threshold = select_threshold(pred, ent, np.asarray(labels), bank.devices, target_fpr)
    return bank.entropy_threshold


@dataclass
class BankDecision:
    device: Optional[int]
    entropies: Dict[int, float] = field(default_factory=dict)
    classes: Dict[int, int] = field(default_factory=dict)

    @property
    def rejected(self) -> bool:
        return self.device is None


def infer_with_bank(burst: Burst, bank: FilterBank, hypotheses: HypothesisFn) -> BankDecision:
    """Identify one burst by running every filter hypothesis; ``device`` is ``None`` on reject."""
    if bank.entropy_threshold is None:
        raise ValueError("filter bank threshold has not been calibrated")
    pred, ent = hypotheses(burst.samples[None, :])
    choice = int(hypothesis_decisions(pred, ent, bank.devices, bank.entropy_threshold)[0])
    return BankDecision(
        device=None if choice == REJECT else choice,
        entropies={d: float(e) for d, e in zip(bank.devices, ent[0])},
        classes={d: int(c) for d, c in zip(bank.devices, pred[0])},
    )
