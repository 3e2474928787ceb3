"""Binary dataset and model files.

Dataset (``.dlrd``), little-endian::

    magic "DLRD" | version u16 | length u32 | count u32 | devices u16 | sample_rate f64
    count x ( device_id u16 | length x (I f32, Q f32) )

Model (``.dlrm``)::

    magic "DLRM" | version u16 | meta_len u32 | meta (UTF-8 JSON) | blob_len u64 | blob (.npz)
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError

DATASET_MAGIC = b"DLRD"
DATASET_VERSION = 1
_DATASET_HEADER = struct.Struct("<4sHIIHd")

MODEL_MAGIC = b"DLRM"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sHI")
_BLOB_LEN = struct.Struct("<Q")


@dataclass(eq=False)
class Dataset:
    bursts: np.ndarray  # (count, length) complex64
    labels: np.ndarray  # (count,) int
    devices: int
    sample_rate_hz: float

    def __len__(self) -> int:
        return self.bursts.shape[0]

    @property
    def length(self) -> int:
        return self.bursts.shape[1]

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(self.bursts[mask], self.labels[mask], self.devices, self.sample_rate_hz)


def _record_dtype(length: int) -> np.dtype:
    return np.dtype([("device", "<u2"), ("iq", "<f4", (2 * length,))])


def dataset_bytes(ds: Dataset) -> bytes:
    n, length = ds.bursts.shape
    header = _DATASET_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, length, n, ds.devices,
                                  float(ds.sample_rate_hz))
    rec = np.empty(n, dtype=_record_dtype(length))
    rec["device"] = ds.labels
    iq = np.empty((n, 2 * length), dtype="<f4")
    iq[:, 0::2] = ds.bursts.real
    iq[:, 1::2] = ds.bursts.imag
    rec["iq"] = iq
    return header + rec.tobytes()


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_bytes(dataset_bytes(ds))


def parse_dataset(raw: bytes) -> Dataset:
    if len(raw) < _DATASET_HEADER.size:
        raise FormatError("dataset file shorter than its header")
    magic, version, length, n, devices, rate = _DATASET_HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad dataset magic {magic!r}")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    dt = _record_dtype(length)
    body = raw[_DATASET_HEADER.size:]
    if len(body) != n * dt.itemsize:
        raise FormatError(f"dataset payload is {len(body)} bytes, header promises {n * dt.itemsize}")
    rec = np.frombuffer(body, dtype=dt, count=n)
    iq = rec["iq"]
    bursts = (iq[:, 0::2] + 1j * iq[:, 1::2]).astype(np.complex64)
    return Dataset(bursts, rec["device"].astype(np.int64), devices, rate)


def load_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_bytes())


def model_bytes(meta: dict, arrays: dict) -> bytes:
    meta_raw = json.dumps(meta, sort_keys=True).encode()
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    blob = buf.getvalue()
    return (_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(meta_raw)) + meta_raw
            + _BLOB_LEN.pack(len(blob)) + blob)


def parse_model(raw: bytes):
    """Return ``(meta, arrays)``; any structural damage raises :class:`FormatError`."""
    if len(raw) < _MODEL_HEADER.size:
        raise FormatError("model file shorter than its header")
    magic, version, meta_len = _MODEL_HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad model magic {magic!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    pos = _MODEL_HEADER.size
    if len(raw) < pos + meta_len + _BLOB_LEN.size:
        raise FormatError("model file truncated inside metadata")
    try:
        meta = json.loads(raw[pos:pos + meta_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt model metadata: {exc}") from exc
    pos += meta_len
    (blob_len,) = _BLOB_LEN.unpack_from(raw, pos)
    pos += _BLOB_LEN.size
    if len(raw) != pos + blob_len:
        raise FormatError(f"model blob is {len(raw) - pos} bytes, header promises {blob_len}")
    try:
        with np.load(io.BytesIO(raw[pos:]), allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
    except Exception as exc:  # zipfile/numpy raise a zoo of types on corrupt input
        raise FormatError(f"corrupt model arrays: {exc}") from exc
    return meta, arrays
