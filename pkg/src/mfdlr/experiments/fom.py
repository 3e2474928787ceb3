"""Figures of merit: trainable parameters, readout-training MACs and latency."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction


def memory_params(N: int, C: int) -> int:
    """Trainable readout weights, one per (state, class) pair."""
    if N < 1 or C < 1:
        raise ValueError("N and C must be positive")
    return N * C


def train_macs(B: int, N: int, k: int = 1) -> int:
    """MACs to form the Gram matrix of ``B`` states of dimension ``N / k``.

    Splitting one N-node loop into ``k`` loops of ``N / k`` nodes whose
    states are combined shrinks the readout from N to N / k inputs.
    """
    if B < 1 or N < 1 or k < 1:
        raise ValueError("B, N and k must be positive")
    if N % k:
        raise ValueError(f"N={N} is not a multiple of k={k}")
    return B * (N // k) ** 2


def split_mac_ratio(B: int, N: int, k: int) -> Fraction:
    """Exact ratio of split to unsplit training MACs (``1 / k**2``)."""
    return Fraction(train_macs(B, N, k), train_macs(B, N, 1))


@dataclass
class FomReport:
    variant: str
    memory_params: int
    train_macs: int
    train_macs_unsplit: int
    train_latency_s: float
    infer_latency_s: float
    accuracy: float

    def to_dict(self) -> dict:
        return asdict(self)
