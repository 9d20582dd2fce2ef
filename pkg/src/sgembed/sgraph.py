"""Signed-graph data model: ingestion, subsampling, sparsity injection, synthesis.

Graphs are undirected, unweighted apart from the edge sign, with dense
integer node ids. All values are immutable after construction and safe to
share across threads for reading.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Directive comment understood by the loader so that graphs with isolated
# or trailing nodes survive a save/load round trip.
_NODE_COUNT_DIRECTIVE = "#%nodes"


class EdgeListError(ValueError):
    """Raised for unreadable, malformed, or empty edge-list inputs."""


class Sign(enum.Enum):
    """Edge polarity. The enum value is the numeric projection (+1 / -1)."""

    POSITIVE = 1
    NEGATIVE = -1

    def flip(self) -> "Sign":
        return Sign(-self.value)

    @classmethod
    def from_number(cls, x: float) -> "Sign":
        if x > 0:
            return cls.POSITIVE
        if x < 0:
            return cls.NEGATIVE
        raise ValueError("sign value must be nonzero")


@dataclass(frozen=True)
class SignedGraph:
    """Undirected signed graph over dense node ids [0, node_count).

    ``edges`` holds one entry per unordered pair, canonicalized as
    (u, v, sign) with u < v. ``adjacency[u]`` lists (neighbor, sign) pairs
    sorted by neighbor id, and is symmetric by construction.
    """

    node_count: int
    edges: tuple[tuple[int, int, Sign], ...]
    adjacency: tuple[tuple[tuple[int, Sign], ...], ...]

    @classmethod
    def from_edges(
        cls, node_count: int, edges: Iterable[tuple[int, int, Sign]]
    ) -> "SignedGraph":
        if node_count < 0:
            raise ValueError("node_count must be non-negative")
        canonical: list[tuple[int, int, Sign]] = []
        seen: set[tuple[int, int]] = set()
        adj: list[list[tuple[int, Sign]]] = [[] for _ in range(node_count)]
        for u, v, sign in edges:
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise ValueError(f"edge ({u},{v}) outside [0,{node_count})")
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            pair = (u, v) if u < v else (v, u)
            if pair in seen:
                raise ValueError(f"duplicate edge for pair {pair}")
            seen.add(pair)
            canonical.append((pair[0], pair[1], sign))
            adj[u].append((v, sign))
            adj[v].append((u, sign))
        for lst in adj:
            lst.sort(key=lambda item: item[0])
        return cls(
            node_count=node_count,
            edges=tuple(canonical),
            adjacency=tuple(tuple(lst) for lst in adj),
        )

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def positive_edge_count(self) -> int:
        return sum(1 for _, _, s in self.edges if s is Sign.POSITIVE)

    @property
    def negative_edge_count(self) -> int:
        return sum(1 for _, _, s in self.edges if s is Sign.NEGATIVE)

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    def neighbors(self, node: int, sign: Sign | None = None) -> list[int]:
        if sign is None:
            return [w for w, _ in self.adjacency[node]]
        return [w for w, s in self.adjacency[node] if s is sign]


@dataclass(frozen=True)
class EdgeListSpec:
    """How to read a signed edge-list file.

    ``rating_threshold`` switches the third column's interpretation: when
    None the column is an explicit sign (positive number -> Positive sign,
    negative -> Negative, zero dropped); otherwise the column is a rating
    and rating >= threshold maps to Positive, below to Negative.
    ``delimiter`` None splits on any whitespace.
    """

    path: str | Path
    delimiter: str | None = None
    comment_prefix: str = "#"
    rating_threshold: float | None = None


@dataclass
class LoadReport:
    """Cleaning counters from one edge-list ingestion."""

    path: str
    lines_parsed: int = 0
    nodes: int = 0
    edges_kept: int = 0
    positive_edges: int = 0
    negative_edges: int = 0
    self_loops_dropped: int = 0
    duplicate_lines: int = 0
    conflicting_pairs: int = 0
    tie_dropped_pairs: int = 0
    zero_sign_dropped: int = 0

    def log(self) -> None:
        logger.info(
            "loaded %s: nodes=%d edges=%d (+%d/-%d)",
            self.path, self.nodes, self.edges_kept,
            self.positive_edges, self.negative_edges,
        )
        logger.info(
            "cleaning %s: self_loops=%d duplicate_lines=%d "
            "conflicting_pairs=%d tie_dropped=%d zero_sign=%d",
            self.path, self.self_loops_dropped, self.duplicate_lines,
            self.conflicting_pairs, self.tie_dropped_pairs,
            self.zero_sign_dropped,
        )


def load_edge_list(spec: EdgeListSpec) -> tuple[SignedGraph, LoadReport]:
    """Read a signed edge list, returning the cleaned graph and its report.

    Node ids are remapped to dense integers in first-appearance order.
    Duplicate unordered pairs are resolved by sign majority; exact ties are
    dropped. Self-loops are dropped. Raises EdgeListError on unreadable
    files, malformed lines (with line number), or when no node survives.
    """
    path = Path(spec.path)
    remap: dict[int, int] = {}
    # unordered pair -> [positive occurrences, negative occurrences]
    counts: dict[tuple[int, int], list[int]] = {}
    report = LoadReport(path=str(path))
    declared_nodes: int | None = None
    try:
        fh = open(path, "rt", encoding="utf-8")
    except OSError as exc:
        raise EdgeListError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith(spec.comment_prefix):
                if line.startswith(_NODE_COUNT_DIRECTIVE):
                    try:
                        declared_nodes = int(line.split()[1])
                    except (IndexError, ValueError):
                        raise EdgeListError(
                            f"{path}:{lineno}: bad node-count directive"
                        ) from None
                    # identity pre-registration keeps ids stable on reload
                    for i in range(declared_nodes):
                        remap.setdefault(i, len(remap))
                continue
            parts = line.split(spec.delimiter)
            if len(parts) < 3:
                raise EdgeListError(
                    f"{path}:{lineno}: expected 3 columns, got {len(parts)}"
                )
            try:
                u_raw, v_raw, value = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise EdgeListError(
                    f"{path}:{lineno}: cannot parse (int, int, number) "
                    f"from {line!r}"
                ) from None
            report.lines_parsed += 1
            u = remap.setdefault(u_raw, len(remap))
            v = remap.setdefault(v_raw, len(remap))
            if u == v:
                report.self_loops_dropped += 1
                continue
            if spec.rating_threshold is not None:
                sign = (
                    Sign.POSITIVE
                    if value >= spec.rating_threshold
                    else Sign.NEGATIVE
                )
            elif value == 0:
                report.zero_sign_dropped += 1
                continue
            else:
                sign = Sign.from_number(value)
            pair = (u, v) if u < v else (v, u)
            if pair in counts:
                report.duplicate_lines += 1
            else:
                counts[pair] = [0, 0]
            counts[pair][0 if sign is Sign.POSITIVE else 1] += 1

    node_count = len(remap)
    if declared_nodes is not None:
        if declared_nodes < node_count:
            raise EdgeListError(
                f"{path}: directive declares {declared_nodes} nodes but "
                f"{node_count} ids appear"
            )
        node_count = declared_nodes
    if node_count == 0:
        raise EdgeListError(f"{path}: empty graph after cleaning")

    edges: list[tuple[int, int, Sign]] = []
    for (u, v), (n_pos, n_neg) in counts.items():
        if n_pos and n_neg:
            report.conflicting_pairs += 1
        if n_pos > n_neg:
            edges.append((u, v, Sign.POSITIVE))
        elif n_neg > n_pos:
            edges.append((u, v, Sign.NEGATIVE))
        else:
            report.tie_dropped_pairs += 1

    graph = SignedGraph.from_edges(node_count, edges)
    report.nodes = graph.node_count
    report.edges_kept = graph.edge_count
    report.positive_edges = graph.positive_edge_count
    report.negative_edges = graph.negative_edge_count
    report.log()
    return graph, report


def save_edge_list(
    g: SignedGraph, path: str | Path, comments: Sequence[str] = ()
) -> None:
    """Write the canonical whitespace-delimited "u v sign" format.

    A ``#%nodes`` directive records the node count so reloading restores
    graphs with isolated nodes exactly.
    """
    with open(path, "wt", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(f"{_NODE_COUNT_DIRECTIVE} {g.node_count}\n")
        for u, v, sign in g.edges:
            fh.write(f"{u} {v} {sign.value}\n")


def top_degree_subgraph(g: SignedGraph, n: int) -> SignedGraph:
    """Induced subgraph on the n nodes of highest total degree.

    Degree ties break toward the lower original id; the selected nodes are
    remapped to 0..n-1 preserving their original relative order.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if n > g.node_count:
        raise ValueError(f"n={n} exceeds node count {g.node_count}")
    by_degree = sorted(range(g.node_count), key=lambda v: (-g.degree(v), v))
    selected = sorted(by_degree[:n])
    remap = {old: new for new, old in enumerate(selected)}
    edges = [
        (remap[u], remap[v], s)
        for u, v, s in g.edges
        if u in remap and v in remap
    ]
    return SignedGraph.from_edges(n, edges)


def inject_sparsity(g: SignedGraph, fraction: float, seed: int) -> SignedGraph:
    """Remove exactly round(fraction * |E|) edges uniformly at random.

    The node set is unchanged; output is deterministic for a fixed seed.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    k = round(fraction * g.edge_count)
    if k == 0:
        return SignedGraph.from_edges(g.node_count, g.edges)
    rng = np.random.default_rng(seed)
    drop = set(rng.choice(g.edge_count, size=k, replace=False).tolist())
    kept = [e for i, e in enumerate(g.edges) if i not in drop]
    return SignedGraph.from_edges(g.node_count, kept)


def random_connected_graph(n: int, extra_edges: int, seed: int) -> SignedGraph:
    """Random connected signed graph: a random spanning tree plus up to
    ``extra_edges`` additional random pairs, all with random signs."""
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    pairs: set[tuple[int, int]] = set()
    for i in range(1, n):
        u = int(perm[i])
        v = int(perm[rng.integers(i)])
        pairs.add((u, v) if u < v else (v, u))
    for _ in range(extra_edges):
        u = int(rng.integers(n))
        v = int(rng.integers(n))
        if u == v:
            continue
        pairs.add((u, v) if u < v else (v, u))
    edges = [
        (u, v, Sign.POSITIVE if rng.random() < 0.5 else Sign.NEGATIVE)
        for u, v in sorted(pairs)
    ]
    return SignedGraph.from_edges(n, edges)


def synth_balanced(
    communities: int,
    size: int,
    p_intra: float,
    p_inter: float,
    noise: float,
    seed: int,
) -> SignedGraph:
    """Planted-partition signed graph.

    Intra-community pairs connect with probability p_intra and sign
    Positive, inter-community pairs with probability p_inter and sign
    Negative; each edge's sign then flips independently with probability
    ``noise``. With noise=0 and at most two communities every cycle has an
    even number of negative edges (a perfectly balanced graph); with more
    communities the construction is only weakly balanced, since triangles
    spanning three communities carry three negative edges.
    """
    if communities <= 0 or size <= 0:
        raise ValueError("communities and size must be positive")
    for name, p in (("p_intra", p_intra), ("p_inter", p_inter), ("noise", noise)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be in [0, 1]")
    n = communities * size
    rng = np.random.default_rng(seed)
    edges: list[tuple[int, int, Sign]] = []
    for i in range(n):
        for j in range(i + 1, n):
            same = (i // size) == (j // size)
            p_edge = p_intra if same else p_inter
            if rng.random() >= p_edge:
                continue
            sign = Sign.POSITIVE if same else Sign.NEGATIVE
            if noise > 0 and rng.random() < noise:
                sign = sign.flip()
            edges.append((i, j, sign))
    return SignedGraph.from_edges(n, edges)
