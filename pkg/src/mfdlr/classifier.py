"""Closed-form ridge-regression readout, argmax decisions and the entropy statistic."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.special import log_softmax

from .errors import LabelError, ShapeError, SingularSystemError


@dataclass(frozen=True, eq=False)
class RidgeModel:
    W: np.ndarray
    lam: float
    classes: Tuple[int, ...]

    @property
    def n_features(self) -> int:
        return self.W.shape[0]


def default_lambda(states: np.ndarray) -> float:
    """Scale-aware default: ``1e-3 * trace(X^T X) / N``."""
    return 1e-3 * float(np.sum(states * states)) / states.shape[1]


def one_hot(labels: Sequence[int], classes: Sequence[int]) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    Y = np.zeros((len(labels), len(classes)))
    for row, lab in enumerate(labels):
        try:
            Y[row, index[int(lab)]] = 1.0
        except KeyError:
            raise LabelError(f"label {lab} is not one of the model classes") from None
    return Y


def train(states: np.ndarray, labels: Sequence[int], lam: Optional[float] = None,
          classes: Optional[Sequence[int]] = None) -> RidgeModel:
    """Solve ``(X^T X + lam I) W = X^T Y`` for one-hot targets ``Y``.

    Uses a Cholesky factorization of the regularized Gram matrix. With
    ``lam == 0`` a rank-deficient ``X`` raises :class:`SingularSystemError`.
    """
    X = np.asarray(states, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise ShapeError(f"states {X.shape} do not match {len(labels)} labels")
    if classes is None:
        classes = sorted({int(c) for c in labels})
    classes = tuple(int(c) for c in classes)
    return train_targets(X, one_hot(labels, classes), lam, classes)


def train_targets(states: np.ndarray, targets: np.ndarray, lam: Optional[float],
                  classes: Sequence[int]) -> RidgeModel:
    """Ridge solve against arbitrary real targets ``(B, C)``; rows of zeros mark "no class"."""
    X = np.asarray(states, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or Y.shape != (X.shape[0], len(classes)):
        raise ShapeError(f"states {X.shape} and targets {Y.shape} disagree")
    if lam is None:
        lam = default_lambda(X)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    n = X.shape[1]
    A = X.T @ X
    A[np.diag_indices(n)] += lam
    if lam == 0 and np.linalg.matrix_rank(X) < n:
        raise SingularSystemError("X^T X is singular and lambda is zero")
    try:
        factor = scipy.linalg.cho_factor(A, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    W = scipy.linalg.cho_solve(factor, X.T @ Y)
    return RidgeModel(W=W, lam=float(lam), classes=tuple(int(c) for c in classes))


def normal_equation_residual(model: RidgeModel, states: np.ndarray, labels: Sequence[int]) -> float:
    """``||(X^T X + lam I) W - X^T Y|| / ||X^T Y||`` (Frobenius)."""
    X = np.asarray(states, dtype=np.float64)
    Y = one_hot(labels, model.classes)
    rhs = X.T @ Y
    lhs = X.T @ (X @ model.W) + model.lam * model.W
    denom = np.linalg.norm(rhs)
    return float(np.linalg.norm(lhs - rhs) / denom) if denom else float(np.linalg.norm(lhs))


def scores(states: np.ndarray, model: RidgeModel) -> np.ndarray:
    X = np.asarray(states)
    if X.shape[-1] != model.n_features:
        raise ShapeError(f"state dimension {X.shape[-1]} != model dimension {model.n_features}")
    return X @ model.W


def predict(state: np.ndarray, model: RidgeModel) -> Tuple[int, np.ndarray]:
    """Return ``(device_id, scores)``; ties resolve to the first class."""
    s = scores(np.asarray(state, dtype=np.float64), model)
    if s.ndim != 1:
        raise ShapeError("predict takes a single state vector; use predict_many for batches")
    return model.classes[int(np.argmax(s))], s


def predict_many(states: np.ndarray, model: RidgeModel) -> Tuple[np.ndarray, np.ndarray]:
    s = scores(states, model)
    return np.asarray(model.classes)[np.argmax(s, axis=-1)], s


def entropy(score_vector: np.ndarray, axis: int = -1, temperature: float = 1.0) -> np.ndarray:
    """Shannon entropy (nats) of ``softmax(scores / temperature)``; reduces over ``axis``.

    Ridge scores sit near the 0/1 one-hot targets, so at unit temperature
    every softmax is close to uniform; a small temperature spreads them out.
    """
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    s = np.asarray(score_vector, dtype=np.float64) / temperature
    logp = log_softmax(s, axis=axis)
    h = -np.sum(np.exp(logp) * logp, axis=axis)
    return float(h) if np.ndim(h) == 0 else h
