"""Generator side of the adversarial trainer.

Owns one embedding table, produces fake signed edges by walking BFS trees,
and descends the expected-reward objective with a REINFORCE estimator: each
sampled walk contributes the gradient of its full log-probability (every
drawn step, including the terminating back-step) scaled by the sample's
reward.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sgraph import Sign, SignedGraph
from .treewalk import (
    BfsTree,
    build_bfs_tree,
    relevance_table,
    sample_walk,
    touched_nodes,
)

logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Raised when an update would leave non-finite embeddings."""


@dataclass
class EmbeddingMatrix:
    """Dense |V| x k real embedding table; row i embeds node i."""

    values: np.ndarray
    seed: int | None = None

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def dot(self, u: int, v: int) -> float:
        return float(self.values[u] @ self.values[v])

    def copy(self) -> "EmbeddingMatrix":
        return EmbeddingMatrix(values=self.values.copy(), seed=self.seed)

    def checksum(self) -> str:
        h = hashlib.blake2b(digest_size=8)
        h.update(np.ascontiguousarray(self.values).tobytes())
        h.update(repr(self.values.shape).encode())
        return h.hexdigest()

    def save(self, path: str | Path, comments=()) -> None:
        """Text export: optional '#' comments, "rows dim" header, then one
        line per node with the id and 17-significant-digit coordinates."""
        with open(path, "wt", encoding="utf-8") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            fh.write(f"{self.rows} {self.dim}\n")
            for i in range(self.rows):
                coords = " ".join(f"{x:.17g}" for x in self.values[i])
                fh.write(f"{i} {coords}\n")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingMatrix":
        with open(path, "rt", encoding="utf-8") as fh:
            lines = [
                ln.strip() for ln in fh
                if ln.strip() and not ln.startswith("#")
            ]
        if not lines:
            raise ValueError(f"{path}: empty embedding file")
        rows, dim = (int(x) for x in lines[0].split())
        if len(lines) - 1 != rows:
            raise ValueError(
                f"{path}: header declares {rows} rows, found {len(lines) - 1}"
            )
        values = np.zeros((rows, dim))
        seen = np.zeros(rows, dtype=bool)
        for ln in lines[1:]:
            parts = ln.split()
            i = int(parts[0])
            if not 0 <= i < rows or len(parts) != dim + 1:
                raise ValueError(f"{path}: bad embedding line {ln!r}")
            values[i] = [float(x) for x in parts[1:]]
            seen[i] = True
        if not seen.all():
            raise ValueError(f"{path}: missing node rows")
        return cls(values=values)


def init_embeddings(node_count: int, dim: int, seed) -> EmbeddingMatrix:
    """Gaussian(0, 0.1) initialization, deterministic per seed."""
    if node_count <= 0 or dim <= 0:
        raise ValueError("node_count and dim must be positive")
    rng = np.random.default_rng(seed)
    values = rng.normal(0.0, 0.1, size=(node_count, dim))
    entropy = seed.entropy if isinstance(seed, np.random.SeedSequence) else seed
    return EmbeddingMatrix(values=values, seed=entropy)


@dataclass
class FakeSample:
    """One generated signed edge with its walk, for gradient attribution."""

    center: int
    neighbor: int
    sign: Sign
    walk_nodes: list[int]
    step_signs: list[int]
    tree: BfsTree = field(repr=False)
    reward: float = 0.0

    def steps(self):
        for i in range(len(self.walk_nodes) - 1):
            yield self.walk_nodes[i], self.walk_nodes[i + 1], self.step_signs[i]
        yield self.walk_nodes[-1], self.walk_nodes[-2], self.step_signs[-1]


def generate_fakes(
    g: SignedGraph,
    emb: EmbeddingMatrix,
    center: int,
    count: int,
    rng: np.random.Generator,
    max_depth: int | None = None,
    tree: BfsTree | None = None,
) -> list[FakeSample]:
    """Draw ``count`` fake signed neighbors of ``center``.

    Builds the BFS tree and relevance table once and samples walks from
    them. An isolated center yields an empty list with a logged warning.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    if tree is None:
        tree = build_bfs_tree(g, center, max_depth)
    if tree.covered_count < 2:
        logger.warning("center %d is isolated; no fakes generated", center)
        return []
    table = relevance_table(emb, tree)
    samples = []
    for _ in range(count):
        walk = sample_walk(table, tree, rng)
        samples.append(
            FakeSample(
                center=center,
                neighbor=walk.emitted_node,
                sign=walk.composed_sign,
                walk_nodes=walk.nodes,
                step_signs=walk.step_signs,
                tree=tree,
            )
        )
    return samples


@dataclass
class GeneratorUpdateReport:
    gradient_norm: float
    samples_used: int
    nodes_touched: int


def _node_distribution(values: np.ndarray, tree: BfsTree, node: int, cache: dict):
    """Tree-neighborhood arrays (nbrs, p_pos, p_neg) for one node."""
    key = (id(tree), node)
    entry = cache.get(key)
    if entry is not None:
        return entry
    nbrs = np.asarray(tree.tree_neighbors(node), dtype=np.int64)
    dots = values[nbrs] @ values[node]
    shift = float(np.abs(dots).max(initial=0.0))
    ep = np.exp(dots - shift)
    en = np.exp(-dots - shift)
    denom = ep.sum() + en.sum()
    entry = (nbrs, ep / denom, en / denom)
    cache[key] = entry
    return entry


def walk_logprob_gradient(
    emb: EmbeddingMatrix,
    sample: FakeSample,
    out: np.ndarray,
    scale: float,
    cache: dict | None = None,
) -> None:
    """Accumulate scale * d log P(walk) / d theta into ``out``.

    The walk's log-probability is the sum of per-step softmax
    log-probabilities; each step at node a toward (b, t) contributes
        d/d g_a = t*g_b - sum_j q_j g_j,   q_j = p_pos_j - p_neg_j
        d/d g_b += t*g_a
        d/d g_j -= q_j * g_a   for every tree neighbor j of a.

    ``cache`` may be shared across samples drawn from the same frozen
    embeddings to avoid recomputing per-node distributions.
    """
    values = emb.values
    if cache is None:
        cache = {}
    for a, b, t in sample.steps():
        nbrs, p_pos, p_neg = _node_distribution(values, sample.tree, a, cache)
        q = p_pos - p_neg
        g_a = values[a]
        out[a] += scale * (t * values[b] - q @ values[nbrs])
        np.add.at(out, nbrs, (-scale) * q[:, None] * g_a)
        out[b] += scale * t * g_a


def policy_gradient_update(
    emb: EmbeddingMatrix, samples: list[FakeSample], learning_rate: float
) -> GeneratorUpdateReport:
    """One REINFORCE descent step over a batch of rewarded samples.

    Descends the mean of reward * grad log P(walk); rewards must be finite
    (the trainer fills them with clamped log(1 - D)).
    """
    if not samples:
        return GeneratorUpdateReport(0.0, 0, 0)
    grad = np.zeros_like(emb.values)
    touched: set[int] = set()
    cache: dict = {}
    for s in samples:
        if not np.isfinite(s.reward):
            raise ValueError(f"non-finite reward on sample for node {s.neighbor}")
        walk_logprob_gradient(emb, s, grad, s.reward, cache)
        touched |= touched_nodes(s.tree, s.walk_nodes)
    grad /= len(samples)
    emb.values -= learning_rate * grad
    if not np.isfinite(emb.values).all():
        raise DivergenceError("generator update left non-finite embeddings")
    return GeneratorUpdateReport(
        gradient_norm=float(np.linalg.norm(grad)),
        samples_used=len(samples),
        nodes_touched=len(touched),
    )
