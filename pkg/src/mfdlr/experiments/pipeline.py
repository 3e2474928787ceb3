"""Dataset generation and the MF -> transform -> delay loop -> ridge pipeline.

Seeds: every random stream is ``numpy.random.default_rng(key)`` with an
integer-tuple key starting with the master seed and a stream tag, so any
burst can be regenerated on its own and results do not depend on
evaluation order.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .. import classifier, impairments
from ..burst import Burst
from ..emitter_sim import capture_stream, detect_rising_edge, make_population
from ..errors import PipelineConfigError
from ..matched_filter import (REJECT, FilterBank, build_bank, correlate_array, false_positive_rate,
                              hypothesis_decisions, select_threshold)
from ..reservoir import combine_states, run_loops, split_inputs
from ..transforms import transform_fn
from .config import ExperimentConfig
from .formats import Dataset, model_bytes, parse_model

SPLITS = {"train": 0, "val": 1, "test": 2, "jam": 3}
STREAM_CAPTURE = 3
STREAM_IMPAIR = 11
STREAM_BANK = 13
STREAM_JAM = 23
STREAM_NEGATIVE = 29
STREAM_NOISE = 31
CAPTURE_LEAD = 128
CHUNK = 1024


def payload_seed(seed: int, split: str, device: int, index: int) -> int:
    """Unique payload seed per (master seed, split, device, burst index); splits never collide."""
    return ((seed * 4 + SPLITS[split]) * 65536 + device) * (1 << 20) + index


def generate_split(cfg: ExperimentConfig, split: str, per_device: int, devices=None) -> Dataset:
    """Capture ``per_device`` bursts per emitter: noisy stream, rising-edge detection, extraction.

    ``devices`` limits the capture to some emitters (all by default).
    """
    pop = make_population(cfg.devices, cfg.separation, cfg.seed)
    ids = np.arange(cfg.devices) if devices is None else np.asarray(sorted(devices))
    bursts = np.empty((ids.size * per_device, cfg.length), dtype=np.complex64)
    labels = np.repeat(ids, per_device)
    row = 0
    for fp in (pop[int(d)] for d in ids):
        for i in range(per_device):
            rng = np.random.default_rng([cfg.seed, STREAM_CAPTURE, SPLITS[split], fp.device_id, i])
            stream = capture_stream(fp, payload_seed(cfg.seed, split, fp.device_id, i), cfg.length,
                                    CAPTURE_LEAD, cfg.capture_snr_db, rng)
            start = detect_rising_edge(stream, cfg.edge_threshold)
            if start is None or start + cfg.length > stream.shape[0]:
                raise RuntimeError(f"no usable rising edge for device {fp.device_id} burst {i}")
            bursts[row] = stream[start:start + cfg.length]
            row += 1
    return Dataset(bursts, labels, cfg.devices, 100e6)


def impair_set(ds: Dataset, index: int, seed: int, split: str, stream: int = STREAM_IMPAIR) -> np.ndarray:
    """Apply impairment class ``index`` to every burst, one generator per burst."""
    spec = impairments.spec_from_index(index)
    out = np.empty(ds.bursts.shape, dtype=np.complex128)
    for b in range(len(ds)):
        rng = np.random.default_rng([seed, stream, SPLITS[split], index, b])
        out[b] = impairments.apply(Burst(ds.bursts[b].astype(np.complex128)), spec, rng).samples
    return out


def normalize_rows(values: np.ndarray) -> np.ndarray:
    """Scale each datapoint to unit RMS so the loop input range is independent of burst energy."""
    rms = np.sqrt(np.mean(values * values, axis=-1, keepdims=True))
    return values / np.where(rms > 0, rms, 1.0)


class Pipeline:
    """Feature extractor for one configuration: transform, input centring, optional split loops.

    ``center`` and ``scale`` are fitted on the training datapoints: the loop
    input is ``(row / rms(row) - center) / scale``.
    """

    def __init__(self, cfg: ExperimentConfig, center: Optional[np.ndarray] = None, scale: float = 1.0):
        self.cfg = cfg
        self.center = np.zeros(cfg.length) if center is None else np.asarray(center, dtype=np.float64)
        self.scale = float(scale)
        self._transform = transform_fn(cfg.transform)
        self._loops = cfg.loop_configs() if cfg.dlr_enabled else None
        self._dtype = np.float32 if cfg.dtype == "float32" else np.float64

    def datapoints(self, bursts: np.ndarray) -> np.ndarray:
        values = normalize_rows(self._transform(np.asarray(bursts)))
        if values.shape[-1] != self.cfg.length:
            raise PipelineConfigError(f"transform output length {values.shape[-1]} != {self.cfg.length}")
        return values

    def fit(self, datapoints: np.ndarray) -> None:
        self.center = datapoints.mean(axis=0)
        sd = float(np.std(datapoints - self.center))
        self.scale = sd if sd > 0 else 1.0

    def features(self, bursts: np.ndarray) -> np.ndarray:
        return self.features_from_datapoints(self.datapoints(bursts))

    def features_from_datapoints(self, values: np.ndarray) -> np.ndarray:
        values = (values - self.center) / self.scale
        if self._loops is None:
            return values
        out = np.empty((values.shape[0], self.cfg.n_per_loop))
        for lo in range(0, values.shape[0], CHUNK):
            states = run_loops(split_inputs(values[lo:lo + CHUNK], self.cfg.k), self._loops, self._dtype)
            out[lo:lo + CHUNK] = combine_states(states.astype(np.float64), self.cfg.combine)
        return out


@dataclass(eq=False)
class TrainedModel:
    cfg: ExperimentConfig
    ridge: classifier.RidgeModel
    bank: Optional[FilterBank] = None
    pipeline: Optional[Pipeline] = None
    train_seconds: float = 0.0

    def __post_init__(self):
        if self.pipeline is None:
            self.pipeline = Pipeline(self.cfg)
        if self.cfg.mf_enabled and self.bank is None:
            raise PipelineConfigError("matched-filter model without a filter bank")
        if self.ridge.n_features != self.cfg.feature_dim:
            raise PipelineConfigError(
                f"ridge input {self.ridge.n_features} does not match pipeline output {self.cfg.feature_dim}")

    @property
    def classes(self) -> Tuple[int, ...]:
        return self.ridge.classes

    def hypotheses(self, bursts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Classify ``bursts`` under every template; ``(pred, entropy)`` each ``(B, C)``."""
        templates = self.bank.template_matrix()
        n = bursts.shape[0]
        pred = np.empty((n, templates.shape[0]), dtype=np.int64)
        ent = np.empty((n, templates.shape[0]))
        for c, t in enumerate(templates):
            feats = self.pipeline.features(correlate_array(bursts, t[None, :]))
            pred[:, c], sc = classifier.predict_many(feats, self.ridge)
            ent[:, c] = classifier.entropy(sc, temperature=self.cfg.entropy_temperature)
        return pred, ent

    def decide_matched(self, bursts: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Prediction with each burst filtered by its own device's template (identity known)."""
        bursts = np.asarray(bursts, dtype=np.complex128)
        if not self.cfg.mf_enabled:
            return self.decide(bursts)
        idx = np.searchsorted(self.bank.devices, labels)
        if np.any(np.asarray(self.bank.devices)[np.minimum(idx, len(self.bank.devices) - 1)] != labels):
            raise PipelineConfigError("matched protocol needs a template for every label")
        out = np.empty(bursts.shape[0], dtype=np.int64)
        templates = self.bank.template_matrix()
        for lo in range(0, bursts.shape[0], CHUNK):
            sl = slice(lo, lo + CHUNK)
            feats = self.pipeline.features(correlate_array(bursts[sl], templates[idx[sl]]))
            out[sl] = classifier.predict_many(feats, self.ridge)[0]
        return out

    def decide(self, bursts: np.ndarray) -> np.ndarray:
        """Device decision per burst; :data:`REJECT` where the bank rejects every hypothesis."""
        bursts = np.asarray(bursts, dtype=np.complex128)
        if not self.cfg.mf_enabled:
            return classifier.predict_many(self.pipeline.features(bursts), self.ridge)[0]
        if self.bank.entropy_threshold is None:
            raise PipelineConfigError("filter bank threshold has not been calibrated")
        out = np.empty(bursts.shape[0], dtype=np.int64)
        for lo in range(0, bursts.shape[0], CHUNK):
            pred, ent = self.hypotheses(bursts[lo:lo + CHUNK])
            out[lo:lo + CHUNK] = hypothesis_decisions(pred, ent, self.bank.devices,
                                                      self.bank.entropy_threshold)
        return out

    def accuracy(self, bursts: np.ndarray, labels: np.ndarray, protocol: str = "matched") -> float:
        """Fraction correct. ``protocol`` is ``"matched"`` (filter of the true device) or
        ``"bank"`` (every filter tried, entropy selection; rejects count as errors).
        Models without matched filtering ignore it."""
        labels = np.asarray(labels)
        if protocol == "matched":
            return float(np.mean(self.decide_matched(bursts, labels) == labels))
        if protocol == "bank":
            return float(np.mean(self.decide(bursts) == labels))
        raise PipelineConfigError(f"unknown evaluation protocol {protocol!r}")

    # persistence

    def to_bytes(self) -> bytes:
        meta = {
            "config": self.cfg.to_dict(),
            "lambda": self.ridge.lam,
            "classes": list(self.ridge.classes),
            "train_seconds": self.train_seconds,
            "loops": [c.to_dict() for c in (self.pipeline._loops or [])],
        }
        meta["input_scale"] = self.pipeline.scale
        arrays = {"W": self.ridge.W, "input_center": self.pipeline.center}
        if self.bank is not None:
            meta["bank"] = {"mode": self.bank.mode, "devices": list(self.bank.devices),
                            "entropy_threshold": self.bank.entropy_threshold}
            arrays["templates"] = self.bank.template_matrix()
        return model_bytes(meta, arrays)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "TrainedModel":
        meta, arrays = parse_model(raw)
        cfg = ExperimentConfig.from_dict(meta["config"])
        ridge = classifier.RidgeModel(W=arrays["W"], lam=meta["lambda"], classes=tuple(meta["classes"]))
        bank = None
        if "bank" in meta:
            b = meta["bank"]
            bank = FilterBank(templates={d: t for d, t in zip(b["devices"], arrays["templates"])},
                              mode=b["mode"], entropy_threshold=b["entropy_threshold"])
        pipe = Pipeline(cfg, arrays["input_center"], meta["input_scale"])
        return cls(cfg=cfg, ridge=ridge, bank=bank, pipeline=pipe,
                   train_seconds=meta.get("train_seconds", 0.0))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _check_dataset(cfg: ExperimentConfig, ds: Dataset) -> None:
    if ds.length != cfg.length:
        raise PipelineConfigError(f"dataset burst length {ds.length} != config length {cfg.length}")


def train_model(cfg: ExperimentConfig, train: Dataset, val: Optional[Dataset] = None,
                devices=None) -> TrainedModel:
    """Impair, (optionally) matched-filter, featurize and fit the ridge readout.

    ``devices`` restricts training to a subset of emitters (the jamming
    protocol trains on 12 of 20). With matched filtering enabled the entropy
    threshold is calibrated on ``val`` impaired like the training set.
    """
    _check_dataset(cfg, train)
    if devices is not None:
        train = train.subset(np.isin(train.labels, devices))
        if val is not None:
            val = val.subset(np.isin(val.labels, devices))
    t0 = time.perf_counter()
    bursts = impair_set(train, cfg.train_impairment, cfg.seed, "train")
    labels = train.labels
    classes = tuple(int(c) for c in np.unique(labels))
    bank = None
    if cfg.mf_enabled:
        if cfg.bank_impairment == cfg.train_impairment:
            bank_src = bursts
        else:
            bank_src = impair_set(train, cfg.bank_impairment, cfg.seed, "train", STREAM_BANK)
        bank = build_bank({d: bank_src[labels == d] for d in classes}, cfg.mf_mode, cfg.seed)
        templates = bank.template_matrix()
        own = np.searchsorted(bank.devices, labels)
        filtered = [correlate_array(bursts, templates[own])]
        targets = [classifier.one_hot(labels, classes)]
        # wrong-filter hypotheses learn an all-zero target, so their softmax stays flat
        rng = np.random.default_rng([cfg.seed, STREAM_NEGATIVE])
        for _ in range(cfg.mf_negatives):
            wrong = (own + rng.integers(1, len(classes), size=own.size)) % len(classes)
            filtered.append(correlate_array(bursts, templates[wrong]))
            targets.append(np.zeros_like(targets[0]))
        # pure receiver noise through random filters teaches the readout a "no device" answer
        n_noise = int(round(cfg.noise_negatives * own.size))
        if n_noise:
            noise_rng = np.random.default_rng([cfg.seed, STREAM_NOISE])
            noise = noise_rng.standard_normal((n_noise, cfg.length)) + 1j * noise_rng.standard_normal((n_noise, cfg.length))
            which = noise_rng.integers(0, len(classes), size=n_noise)
            filtered.append(correlate_array(noise, templates[which]))
            targets.append(np.zeros((n_noise, len(classes))))
        bursts = np.concatenate(filtered)
        Y = np.concatenate(targets)
    else:
        Y = classifier.one_hot(labels, classes)
    pipe = Pipeline(cfg)
    values = pipe.datapoints(bursts)
    pipe.fit(values[:len(labels)])
    feats = pipe.features_from_datapoints(values)
    ridge = classifier.train_targets(feats, Y, cfg.lam, classes)
    model = TrainedModel(cfg=cfg, ridge=ridge, bank=bank, pipeline=pipe)
    if cfg.mf_enabled:
        if val is None:
            raise PipelineConfigError("matched-filter training needs a validation set for the threshold")
        vb = impair_set(val, cfg.train_impairment, cfg.seed, "val")
        pred, ent = model.hypotheses(vb)
        bank.entropy_threshold = select_threshold(pred, ent, val.labels, bank.devices, cfg.target_fpr)
    model.train_seconds = time.perf_counter() - t0
    return model


def evaluate(model: TrainedModel, test: Dataset, index: int,
             protocols=("matched",)) -> Tuple[Dict[str, float], int]:
    """Accuracy on ``test`` impaired by class ``index`` under each protocol."""
    keep = np.isin(test.labels, model.classes)
    test = test.subset(keep)
    bursts = impair_set(test, index, model.cfg.seed, "test")
    return {p: model.accuracy(bursts, test.labels, p) for p in protocols}, len(test)


def jam_set(cfg: ExperimentConfig, test: Dataset, pool: Dataset, jsr_db: float) -> np.ndarray:
    """Superpose a random nonempty subset of jammer devices on every test burst.

    The subset, the chosen jammer bursts and their delays depend only on the
    burst index, so every JSR point jams with the same geometry.
    """
    jam_devices = np.unique(pool.labels)
    by_dev = {d: np.flatnonzero(pool.labels == d) for d in jam_devices}
    out = np.empty(test.bursts.shape, dtype=np.complex128)
    for b in range(len(test)):
        rng = np.random.default_rng([cfg.seed, STREAM_JAM, b])
        n_jam = int(rng.integers(1, len(jam_devices), endpoint=True))
        chosen = rng.choice(jam_devices, size=n_jam, replace=False)
        jammers = [Burst(pool.bursts[by_dev[d][rng.integers(by_dev[d].size)]].astype(np.complex128))
                   for d in chosen]
        sig = Burst(test.bursts[b].astype(np.complex128))
        out[b] = impairments.superpose_jammers(sig, jammers, jsr_db, cfg.max_jam_delay, rng)[0].samples
    return out


def device_pools(cfg: ExperimentConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Legitimate devices first, the last ``jammer_devices`` ids jam."""
    n_legit = cfg.devices - cfg.jammer_devices
    if n_legit < 2 or cfg.jammer_devices < 1:
        raise PipelineConfigError("jamming protocol needs >= 2 legitimate and >= 1 jammer devices")
    return np.arange(n_legit), np.arange(n_legit, cfg.devices)


def wrong_filter_fpr(model: TrainedModel, bursts: np.ndarray, labels: np.ndarray) -> float:
    """Measured fraction of wrong-filter hypotheses accepted at the model's threshold."""
    pred, ent = model.hypotheses(np.asarray(bursts, dtype=np.complex128))
    return false_positive_rate(pred, ent, labels, model.bank.devices, model.bank.entropy_threshold)
