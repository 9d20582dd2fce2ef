"""Discriminator side: sigmoid edge scoring and ascent on labeled batches.

The score of a signed edge is sigma(sign * d_u . d_v); the objective to
ascend is the mean of log(score) over true edges and log(1 - score) over
generated ones.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .generator import DivergenceError, EmbeddingMatrix
from .sgraph import Sign, SignedGraph


class Origin(enum.Enum):
    TRUE = "true"
    FAKE = "fake"


@dataclass(frozen=True)
class LabeledEdge:
    u: int
    v: int
    sign: Sign
    origin: Origin

    def __post_init__(self):
        if self.u == self.v:
            raise ValueError("labeled edge endpoints must differ")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def score(emb: EmbeddingMatrix, u: int, v: int, sign: Sign) -> float:
    """sigma(sign * d_u . d_v); always strictly inside (0, 1)."""
    if u == v:
        raise ValueError("endpoints must differ")
    z = np.asarray([sign.value * emb.dot(u, v)])
    return float(_sigmoid(z)[0])


def score_many(
    emb: EmbeddingMatrix,
    us: np.ndarray,
    vs: np.ndarray,
    sign_values: np.ndarray,
) -> np.ndarray:
    """Vectorized edge scores for parallel arrays of endpoints and signs."""
    z = sign_values * np.einsum("ij,ij->i", emb.values[us], emb.values[vs])
    return _sigmoid(z)


def sample_true_batch(
    g: SignedGraph, center: int, count: int, rng: np.random.Generator
) -> list[LabeledEdge]:
    """Sample ``count`` true edges at ``center`` with balanced signs.

    Each draw flips a fair sign coin, then picks uniformly (with
    replacement) among the center's neighbors of that sign, falling back
    to the other sign when none exist. This gives negative edges the same
    per-draw probability mass as positive ones despite their scarcity.
    """
    pos = g.neighbors(center, Sign.POSITIVE)
    neg = g.neighbors(center, Sign.NEGATIVE)
    if not pos and not neg:
        raise ValueError(f"center {center} is isolated")
    batch = []
    for _ in range(count):
        want_positive = rng.random() < 0.5
        pool, sign = (pos, Sign.POSITIVE) if want_positive else (neg, Sign.NEGATIVE)
        if not pool:
            pool, sign = (neg, Sign.NEGATIVE) if want_positive else (pos, Sign.POSITIVE)
        nbr = pool[int(rng.integers(len(pool)))]
        batch.append(LabeledEdge(center, nbr, sign, Origin.TRUE))
    return batch


def _batch_arrays(batch: list[LabeledEdge]):
    us = np.asarray([e.u for e in batch], dtype=np.int64)
    vs = np.asarray([e.v for e in batch], dtype=np.int64)
    signs = np.asarray([e.sign.value for e in batch], dtype=float)
    is_true = np.asarray([e.origin is Origin.TRUE for e in batch], dtype=bool)
    return us, vs, signs, is_true


def objective(emb: EmbeddingMatrix, batch: list[LabeledEdge]) -> float:
    """Mean batch objective: log sigma(z) on true edges, log(1 - sigma(z))
    on fake ones, with z = sign * d_u . d_v."""
    us, vs, signs, is_true = _batch_arrays(batch)
    z = signs * np.einsum("ij,ij->i", emb.values[us], emb.values[vs])
    terms = np.where(is_true, -np.logaddexp(0.0, -z), -np.logaddexp(0.0, z))
    return float(terms.mean())


def batch_gradient(emb: EmbeddingMatrix, batch: list[LabeledEdge]) -> np.ndarray:
    """Closed-form gradient of ``objective`` with respect to the table."""
    us, vs, signs, is_true = _batch_arrays(batch)
    z = signs * np.einsum("ij,ij->i", emb.values[us], emb.values[vs])
    s = _sigmoid(z)
    coef = np.where(is_true, 1.0 - s, -s) * signs / len(batch)
    grad = np.zeros_like(emb.values)
    np.add.at(grad, us, coef[:, None] * emb.values[vs])
    np.add.at(grad, vs, coef[:, None] * emb.values[us])
    return grad


@dataclass
class DiscriminatorUpdateReport:
    objective: float
    gradient_norm: float
    batch_size: int


def update(
    emb: EmbeddingMatrix, batch: list[LabeledEdge], learning_rate: float
) -> DiscriminatorUpdateReport:
    """One gradient-ascent step on the mean batch objective."""
    if not batch:
        raise ValueError("batch must be nonempty")
    value = objective(emb, batch)
    grad = batch_gradient(emb, batch)
    if not np.isfinite(grad).all():
        raise DivergenceError("non-finite discriminator gradient")
    emb.values += learning_rate * grad
    if not np.isfinite(emb.values).all():
        raise DivergenceError("discriminator update left non-finite embeddings")
    return DiscriminatorUpdateReport(
        objective=value,
        gradient_norm=float(np.linalg.norm(grad)),
        batch_size=len(batch),
    )
