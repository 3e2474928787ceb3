"""The experiment drivers behind each CLI subcommand.

Each driver takes an :class:`ExperimentConfig` plus paths and returns plain
rows, so the CLI and the tests share one code path. CSV cells are formatted
with fixed precision, so reruns with one seed give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .. import classifier, reservoir
from ..errors import PipelineConfigError, ProtocolError
from . import pipeline as P
from .config import VARIANTS, ExperimentConfig
from .fom import FomReport, memory_params, train_macs
from .formats import Dataset, load_dataset, save_dataset

SPLIT_FILES = {"train": "train.dlrd", "val": "val.dlrd", "test": "test.dlrd", "jam": "jam.dlrd"}
MANIFEST = "manifest.json"
MATRIX_FIELDS = ["train_channel", "test_channel", "variant", "accuracy", "n_eval", "seed"]
JSR_FIELDS = ["jsr_db", "variant", "accuracy", "n_eval", "seed"]
PROTOCOLS = ("matched", "bank")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def generate(cfg: ExperimentConfig, out_dir) -> dict:
    """Write train/val/test (all devices) and jam (legitimate devices only) splits plus a manifest.

    The jam split holds ``bursts_per_device`` bursts for each legitimate
    device, the population the jamming sweep evaluates.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    legit, _ = P.device_pools(cfg)
    sizes = {"train": cfg.bursts_per_device, "val": cfg.val_bursts_per_device,
             "test": cfg.test_bursts_per_device}
    files = {}
    for split, per_device in sizes.items():
        ds = P.generate_split(cfg, split, per_device)
        save_dataset(ds, out / SPLIT_FILES[split])
        files[split] = {"file": SPLIT_FILES[split], "count": len(ds)}
    jam = P.generate_split(cfg, "jam", cfg.bursts_per_device, devices=legit)
    save_dataset(jam, out / SPLIT_FILES["jam"])
    files["jam"] = {"file": SPLIT_FILES["jam"], "count": len(jam)}
    for info in files.values():
        info["sha256"] = _sha256(out / info["file"])
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "devices": cfg.devices,
        "legitimate_devices": [int(d) for d in legit],
        "jammer_devices": [int(d) for d in range(len(legit), cfg.devices)],
        "files": files,
        "interpretation": {
            "payload": "shared preamble followed by seeded random QPSK",
            "template": "complex mean of raw I/Q bursts, unit energy",
            "correlation": "circular, frequency domain",
            "combine": cfg.combine,
            "entropy": f"softmax entropy at temperature {cfg.entropy_temperature}",
        },
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_split(data_dir, split: str, cfg: Optional[ExperimentConfig] = None) -> Dataset:
    ds = load_dataset(Path(data_dir) / SPLIT_FILES[split])
    if cfg is not None and ds.length != cfg.length:
        raise PipelineConfigError(f"{split} bursts have length {ds.length}, config says {cfg.length}")
    return ds


def _format(x: float) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return f"{x:.6f}" if isinstance(x, float) else str(x)


def rows_to_csv(rows: Sequence[dict], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _format(r[k]) for k in fields})
    return buf.getvalue()


def write_csv(rows: Sequence[dict], fields: Sequence[str], path) -> None:
    Path(path).write_text(rows_to_csv(rows, fields))


def _variant_name(variant: str, protocol: str) -> str:
    return variant if protocol == "matched" else f"{variant}_{protocol}"


def _check_protocols(protocols: Iterable[str]) -> tuple:
    protocols = tuple(protocols)
    bad = set(protocols) - set(PROTOCOLS)
    if bad or not protocols:
        raise PipelineConfigError(f"protocols must be drawn from {PROTOCOLS}, got {protocols}")
    return protocols


def _protocols_for(cfg: ExperimentConfig, protocols) -> tuple:
    return protocols if cfg.mf_enabled else ("matched",)


def eval_matrix(cfg: ExperimentConfig, data_dir, train_channels: Sequence[int] = range(5),
                test_channels: Sequence[int] = range(5), variants: Sequence[str] = ("mf_dlr", "mf_rr"),
                protocols: Sequence[str] = ("matched",)) -> List[dict]:
    """Train each variant at every ``T_i`` and test it at every ``T_j``.

    Under ``"matched"`` the filter of the burst's own device is applied;
    ``"bank"`` runs every filter and picks by entropy (variant suffixed ``_bank``).
    """
    protocols = _check_protocols(protocols)
    train, val, test = (load_split(data_dir, s, cfg) for s in ("train", "val", "test"))
    rows = []
    for i in train_channels:
        for variant in variants:
            vcfg = replace(cfg.with_variant(variant), train_impairment=int(i))
            model = P.train_model(vcfg, train, val)
            for j in test_channels:
                acc, n = P.evaluate(model, test, int(j), _protocols_for(vcfg, protocols))
                for prot, a in acc.items():
                    rows.append({"train_channel": int(i), "test_channel": int(j),
                                 "variant": _variant_name(variant, prot), "accuracy": a,
                                 "n_eval": n, "seed": cfg.seed})
    return rows


def sweep_jsr(cfg: ExperimentConfig, data_dir, variants: Sequence[str] = ("mf_dlr", "mf_rr"),
              jsr_db: Optional[Sequence[float]] = None,
              protocols: Sequence[str] = ("matched",)) -> List[dict]:
    """Train on the legitimate devices, then evaluate the jam split under rising jamming power.

    Jammer bursts come from the jammer devices' training captures, which no
    model ever sees.
    """
    protocols = _check_protocols(protocols)
    jsr_db = list(cfg.jsr_db if jsr_db is None else jsr_db)
    legit, jammers = P.device_pools(cfg)
    train, val = load_split(data_dir, "train", cfg), load_split(data_dir, "val", cfg)
    jam = load_split(data_dir, "jam", cfg)
    if np.isin(jam.labels, jammers).any():
        raise ProtocolError("jam split contains jammer devices")
    pool = train.subset(np.isin(train.labels, jammers))
    if np.isin(pool.labels, legit).any() or len(pool) == 0:
        raise ProtocolError("jammer pool must be nonempty and disjoint from the legitimate devices")
    models = {v: P.train_model(cfg.with_variant(v), train, val, devices=legit) for v in variants}
    rows = []
    for jsr in jsr_db:
        bursts = P.jam_set(cfg, jam, pool, jsr)
        for variant, model in models.items():
            for prot in _protocols_for(model.cfg, protocols):
                rows.append({"jsr_db": float(jsr), "variant": _variant_name(variant, prot),
                             "accuracy": model.accuracy(bursts, jam.labels, prot),
                             "n_eval": len(jam), "seed": cfg.seed})
    return rows


def infer_latency(model: P.TrainedModel, bursts: np.ndarray, repeats: int = 20) -> float:
    """Median wall-clock seconds to identify one burst (every filter hypothesis when MF is on)."""
    times = []
    for r in range(repeats):
        b = bursts[r % len(bursts)][None, :]
        t0 = time.perf_counter()
        model.decide(b)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def fom(cfg: ExperimentConfig, data_dir, variants: Sequence[str] = tuple(VARIANTS)) -> List[FomReport]:
    train, val, test = (load_split(data_dir, s, cfg) for s in ("train", "val", "test"))
    reports = []
    for variant in variants:
        vcfg = cfg.with_variant(variant)
        model = P.train_model(vcfg, train, val)
        acc, _ = P.evaluate(model, test, vcfg.train_impairment)
        n_inputs = vcfg.N if vcfg.dlr_enabled else vcfg.length
        k = vcfg.k if vcfg.dlr_enabled else 1
        model.decide(test.bursts[:1])  # warm the compiled loop kernel
        reports.append(FomReport(
            variant=variant,
            memory_params=memory_params(n_inputs, len(model.classes)),
            train_macs=train_macs(len(train), n_inputs, k),
            train_macs_unsplit=train_macs(len(train), n_inputs, 1),
            train_latency_s=model.train_seconds,
            infer_latency_s=infer_latency(model, test.bursts),
            accuracy=acc["matched"],
        ))
    return reports


def calibrate(cfg: ExperimentConfig, data_dir, etas: Sequence[float], nus: Sequence[float],
              h1s: Sequence[float]) -> reservoir.CalibrationResult:
    """Grid-search the loop gains by validation accuracy of the configured variant."""
    if not cfg.dlr_enabled:
        raise PipelineConfigError("calibration needs the delay loop enabled")
    train, val = load_split(data_dir, "train", cfg), load_split(data_dir, "val", cfg)

    def score(eta, nu, h1):
        c = replace(cfg, eta=float(eta), nu=float(nu), h1=float(h1), target_fpr=1.0)
        model = P.train_model(c, train, val)
        bursts = P.impair_set(val, c.train_impairment, c.seed, "val")
        return model.accuracy(bursts, val.labels)

    return reservoir.calibrate(score, etas, nus, h1s)


def train(cfg: ExperimentConfig, data_dir, out) -> P.TrainedModel:
    model = P.train_model(cfg, load_split(data_dir, "train", cfg), load_split(data_dir, "val", cfg))
    model.save(out)
    return model


def fom_rows(reports: Sequence[FomReport]) -> List[Dict]:
    return [r.to_dict() for r in reports]
