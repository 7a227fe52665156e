"""Linear softmax concept-to-class predictor and rule extraction.

Inputs are concept vectors adjusted by labeller confidence (``v * u``). The
absolute weight matrix, normalised per class, serves as the F x C feature
relevance matrix from which sample-level conjunctions are read off.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .rules import DEFAULT_SATISFACTION_THRESHOLD, Conjunction, conjunction_uncertainty


def apply_uncertainty(v, u) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    if v.shape != u.shape:
        raise InvalidArgumentError(f"length mismatch: v{v.shape} vs u{u.shape}")
    return v * u


@dataclass(frozen=True, eq=False)
class ConceptDataPoint:
    """One labelled observation: concept presence ``v`` and confidence ``u``."""

    v: np.ndarray
    u: np.ndarray
    label: int

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        u = np.array(self.u, dtype=float)
        if v.ndim != 1 or v.shape != u.shape:
            raise InvalidArgumentError(f"v and u must be equal-length vectors, got {v.shape}, {u.shape}")
        for name, arr in (("v", v), ("u", u)):
            if not np.all((arr >= 0.0) & (arr <= 1.0)):
                raise InvalidArgumentError(f"{name} components must lie in [0, 1]")
        v.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "label", int(self.label))

    @cached_property
    def adjusted(self) -> np.ndarray:
        out = apply_uncertainty(self.v, self.u)
        out.setflags(write=False)
        return out

    @property
    def n_features(self) -> int:
        return self.v.shape[0]

    def with_certainty(self) -> "ConceptDataPoint":
        """Copy with ``u`` forced to all ones (uncertainty information removed)."""
        return ConceptDataPoint(self.v, np.ones_like(self.u), self.label)

    def same_as(self, other: "ConceptDataPoint") -> bool:
        return self.label == other.label and np.array_equal(self.v, other.v) and np.array_equal(self.u, other.u)


def stack(points: Sequence[ConceptDataPoint]) -> tuple[np.ndarray, np.ndarray]:
    """Adjusted design matrix and label vector for a list of points."""
    if not points:
        raise InvalidArgumentError("no data points")
    X = np.vstack([p.adjusted for p in points])
    y = np.fromiter((p.label for p in points), dtype=int, count=len(points))
    return X, y


@dataclass(frozen=True, eq=False)
class ConceptPredictor:
    weights: np.ndarray  # (C, F)
    bias: np.ndarray  # (C,)
    learning_rate: float = 0.1
    epochs: int = 50
    relevance_threshold: float = 0.5
    satisfaction_threshold: float = DEFAULT_SATISFACTION_THRESHOLD
    batch_size: int | None = None
    seed: int = 0
    loss_history: tuple[float, ...] = ()

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        b = np.array(self.bias, dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise InvalidArgumentError(f"bad parameter shapes {W.shape}, {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise NumericError("predictor parameters must be finite")
        if not 0.0 < self.relevance_threshold < 1.0:
            raise InvalidArgumentError("relevance threshold must lie in (0, 1)")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)

    @classmethod
    def initial(cls, n_features: int, n_classes: int, seed: int = 0, scale: float = 0.01, **hyper):
        rng = np.random.default_rng(seed)
        W = rng.normal(0.0, scale, size=(n_classes, n_features))
        return cls(W, np.zeros(n_classes), seed=seed, **hyper)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    # ---- checkpoint: header (F, C) then W row-major, then b
    def params_vector(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.bias])

    def with_params(self, params: np.ndarray) -> "ConceptPredictor":
        params = np.asarray(params, dtype=float)
        C, F = self.weights.shape
        if params.shape != (C * F + C,):
            raise InvalidArgumentError(f"expected {C * F + C} parameters, got {params.shape}")
        return dataclasses.replace(self, weights=params[: C * F].reshape(C, F), bias=params[C * F :].copy())

    def to_checkpoint(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "params": [float(x) for x in self.params_vector()],
        }

    @classmethod
    def from_checkpoint(cls, ckpt: dict, **hyper) -> "ConceptPredictor":
        F, C = int(ckpt["n_features"]), int(ckpt["n_classes"])
        p = np.asarray(ckpt["params"], dtype=float)
        if p.shape != (C * F + C,):
            raise InvalidArgumentError("checkpoint parameter count does not match header")
        return cls(p[: C * F].reshape(C, F), p[C * F :], **hyper)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(predictor: ConceptPredictor, X: np.ndarray, y: np.ndarray) -> float:
    return _loss(predictor.weights, predictor.bias, X, y)


def train(
    predictor: ConceptPredictor,
    data: Sequence[ConceptDataPoint],
    epochs: int | None = None,
) -> ConceptPredictor:
    """Gradient descent on softmax cross-entropy over adjusted inputs.

    Full batch unless ``predictor.batch_size`` is set, in which case batches
    are drawn from a generator seeded by ``predictor.seed``. Returns a new
    predictor; the loss per epoch (measured before each update, plus the
    final loss) is kept in ``loss_history``.
    """
    if not data:
        raise InvalidArgumentError("cannot train on empty data")
    X, y = stack(data)
    if X.shape[1] != predictor.n_features:
        raise InvalidArgumentError(f"data has {X.shape[1]} features, predictor expects {predictor.n_features}")
    if y.min() < 0 or y.max() >= predictor.n_classes:
        raise InvalidArgumentError("label outside the predictor's class range")
    epochs = predictor.epochs if epochs is None else int(epochs)
    if epochs < 0:
        raise InvalidArgumentError("epochs must be non-negative")
    if epochs == 0:
        return predictor

    W = predictor.weights.copy()
    b = predictor.bias.copy()
    n, C = len(y), predictor.n_classes
    Y = np.zeros((n, C))
    Y[np.arange(n), y] = 1.0
    lr = predictor.learning_rate
    batch = predictor.batch_size or n
    rng = np.random.default_rng(predictor.seed)
    history = []

    # non-finite values are caught explicitly below
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(epochs):
            history.append(_loss(W, b, X, y))
            if not np.isfinite(history[-1]):
                raise NumericError("training loss became non-finite")
            order = rng.permutation(n) if batch < n else np.arange(n)
            for start in range(0, n, batch):
                idx = order[start : start + batch]
                P = _softmax(X[idx] @ W.T + b)
                G = P - Y[idx]
                W -= lr * (G.T @ X[idx]) / len(idx)
                b -= lr * G.mean(axis=0)
        history.append(_loss(W, b, X, y))
    if not (np.isfinite(history[-1]) and np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
        raise NumericError("training diverged")
    return dataclasses.replace(predictor, weights=W, bias=b, loss_history=tuple(history))


def _loss(W, b, X, y) -> float:
    logits = X @ W.T + b
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def predict(predictor: ConceptPredictor, point) -> int:
    x = np.asarray(getattr(point, "adjusted", point), dtype=float)
    scores = predictor.weights @ x + predictor.bias
    return int(np.argmax(scores))  # first maximum wins ties


def predict_many(predictor: ConceptPredictor, X_hat: np.ndarray) -> np.ndarray:
    return np.argmax(X_hat @ predictor.weights.T + predictor.bias, axis=1)


def relevance_matrix(predictor: ConceptPredictor) -> np.ndarray:
    """F x C matrix of |weight| scaled so each class column peaks at 1."""
    A = np.abs(predictor.weights).T
    top = A.max(axis=0)
    out = np.zeros_like(A)
    nz = top > 0
    out[:, nz] = A[:, nz] / top[nz]
    return out


def extract_sample_rule(
    predictor: ConceptPredictor,
    point,
    threshold: float | None = None,
    satisfaction_threshold: float | None = None,
    relevance: np.ndarray | None = None,
) -> Conjunction | None:
    """Conjunction of features relevant to the predicted class and present in ``point``.

    Features that matter but are absent are dropped, never negated.
    """
    t = predictor.relevance_threshold if threshold is None else threshold
    s = predictor.satisfaction_threshold if satisfaction_threshold is None else satisfaction_threshold
    if not 0.0 < t < 1.0:
        raise InvalidArgumentError("relevance threshold must lie in (0, 1)")
    x = np.asarray(getattr(point, "adjusted", point), dtype=float)
    if x.shape != (predictor.n_features,):
        raise InvalidArgumentError("point does not match the predictor's feature count")
    R = relevance_matrix(predictor) if relevance is None else relevance
    c = predict(predictor, x)
    active = np.flatnonzero((R[:, c] > t) & (x > s))
    if active.size == 0:
        return None
    return Conjunction(tuple(int(f) for f in active), conjunction_uncertainty(x[active]))
