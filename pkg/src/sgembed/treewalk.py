"""BFS trees and the balance-aware tree softmax.

For a root node r, every covered node n has a unique tree path
r -> ... -> n. Three layers of probabilities are built on that path:

* single-hop sign-specific relevance: at node a, a softmax over a's tree
  neighbors and both signs, p(b, s | a) proportional to exp(s * g_a.g_b);
* cumulative root-to-node values, composed hop by hop with the structural
  balance rule (like signs compose to Positive, unlike to Negative);
* the tree softmax over (node, sign) outcomes, which multiplies the
  cumulative value by a final "step back to the parent" relevance term and
  sums to exactly 1 over the covered nodes and both signs.

A signed random walk samples from the same distribution: it descends the
tree one relevance-weighted hop at a time and stops the first time it
steps back to the node it just came from, emitting the node it stepped
back from together with the balance-composed product of every drawn step
sign, including the final back-step.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .sgraph import Sign, SignedGraph

# exp argument magnitudes above this are shifted before exponentiation
_SHIFT_GUARD = 700.0


@dataclass
class BfsTree:
    """Shortest-path tree rooted at ``root``.

    Tree edges are indexed 0..T-1 in discovery order; edge e joins
    child_nodes[e] to parent_nodes[e]. ``order`` lists covered nodes in BFS
    discovery order (order[0] == root). The CSR triple (inc_ptr, inc_edges,
    inc_down) gives, for each node, its incident tree edges and whether the
    node is the parent end of each.
    """

    root: int
    parent: np.ndarray
    level: np.ndarray
    order: np.ndarray
    child_nodes: np.ndarray
    parent_nodes: np.ndarray
    edge_of_child: np.ndarray
    inc_ptr: np.ndarray
    inc_edges: np.ndarray
    inc_down: np.ndarray

    @cached_property
    def covered(self) -> frozenset[int]:
        return frozenset(self.order.tolist())

    @property
    def covered_count(self) -> int:
        return len(self.order)

    @property
    def depth(self) -> int:
        return int(self.level[self.order].max())

    def is_covered(self, node: int) -> bool:
        return self.level[node] >= 0

    def parent_of(self, node: int) -> int | None:
        p = int(self.parent[node])
        return None if p < 0 else p

    def children_of(self, node: int) -> list[int]:
        lo, hi = self.inc_ptr[node], self.inc_ptr[node + 1]
        edges = self.inc_edges[lo:hi]
        down = self.inc_down[lo:hi]
        return self.child_nodes[edges[down]].tolist()

    def tree_neighbors(self, node: int) -> list[int]:
        lo, hi = self.inc_ptr[node], self.inc_ptr[node + 1]
        edges = self.inc_edges[lo:hi]
        down = self.inc_down[lo:hi]
        return np.where(
            down, self.child_nodes[edges], self.parent_nodes[edges]
        ).tolist()


def build_bfs_tree(
    g: SignedGraph, root: int, max_depth: int | None = None
) -> BfsTree:
    """BFS tree with deterministic ascending-id neighbor exploration.

    Covers the root's connected component, or its truncation when
    ``max_depth`` is given.
    """
    if not 0 <= root < g.node_count:
        raise ValueError(f"root {root} outside [0,{g.node_count})")
    n = g.node_count
    parent = np.full(n, -1, dtype=np.int64)
    level = np.full(n, -1, dtype=np.int64)
    level[root] = 0
    order = [root]
    queue = deque([root])
    while queue:
        u = queue.popleft()
        if max_depth is not None and level[u] >= max_depth:
            continue
        for w, _ in g.adjacency[u]:
            if level[w] < 0:
                level[w] = level[u] + 1
                parent[w] = u
                order.append(w)
                queue.append(w)

    order_arr = np.asarray(order, dtype=np.int64)
    child_nodes = order_arr[1:].copy()
    parent_nodes = parent[child_nodes]
    t = len(child_nodes)
    edge_of_child = np.full(n, -1, dtype=np.int64)
    edge_of_child[child_nodes] = np.arange(t)

    # incidence CSR over covered nodes; each edge appears at both ends
    nodes_cat = np.concatenate([parent_nodes, child_nodes])
    edges_cat = np.concatenate([np.arange(t), np.arange(t)])
    down_cat = np.concatenate(
        [np.ones(t, dtype=bool), np.zeros(t, dtype=bool)]
    )
    perm = np.argsort(nodes_cat, kind="stable")
    inc_edges = edges_cat[perm]
    inc_down = down_cat[perm]
    inc_ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(inc_ptr, nodes_cat + 1, 1)
    inc_ptr = np.cumsum(inc_ptr)

    return BfsTree(
        root=root,
        parent=parent,
        level=level,
        order=order_arr,
        child_nodes=child_nodes,
        parent_nodes=parent_nodes,
        edge_of_child=edge_of_child,
        inc_ptr=inc_ptr,
        inc_edges=inc_edges,
        inc_down=inc_down,
    )


@dataclass
class RelevanceTable:
    """Per-tree-edge step probabilities plus cumulative root-to-node mass.

    down_* arrays hold the parent->child step probabilities per tree edge,
    up_* the child->parent direction. cum_pos/cum_neg hold the
    balance-composed probability of reaching each node from the root with
    Positive / Negative composed sign (root itself carries the identity
    (1, 0)).
    """

    down_pos: np.ndarray
    down_neg: np.ndarray
    up_pos: np.ndarray
    up_neg: np.ndarray
    cum_pos: np.ndarray
    cum_neg: np.ndarray
    _node_cache: dict = field(default_factory=dict, repr=False)

    def step(self, tree: BfsTree, a: int, b: int, sign: Sign) -> float:
        """Single-hop relevance of neighbor b from node a for ``sign``."""
        e = int(tree.edge_of_child[b])
        if e >= 0 and tree.parent_nodes[e] == a:
            pos, neg = self.down_pos[e], self.down_neg[e]
        else:
            e = int(tree.edge_of_child[a])
            if e < 0 or tree.parent_nodes[e] != b:
                raise ValueError(f"{b} is not a tree neighbor of {a}")
            pos, neg = self.up_pos[e], self.up_neg[e]
        return float(pos if sign is Sign.POSITIVE else neg)

    def cumulative(self, node: int) -> tuple[float, float]:
        return float(self.cum_pos[node]), float(self.cum_neg[node])


def _step_arrays(emb_values: np.ndarray, tree: BfsTree):
    """Vectorized single-hop relevance for every directed tree edge."""
    t = len(tree.child_nodes)
    n = emb_values.shape[0]
    if t == 0:
        z = np.zeros(0)
        return z, z, z.copy(), z.copy()
    dots = np.einsum(
        "ij,ij->i",
        emb_values[tree.parent_nodes],
        emb_values[tree.child_nodes],
    )
    # per-node shift keeps exp arguments <= 0 even for |dot| > 700
    shift = np.zeros(n)
    np.maximum.at(shift, tree.parent_nodes, np.abs(dots))
    np.maximum.at(shift, tree.child_nodes, np.abs(dots))
    ep_parent = np.exp(dots - shift[tree.parent_nodes])
    en_parent = np.exp(-dots - shift[tree.parent_nodes])
    ep_child = np.exp(dots - shift[tree.child_nodes])
    en_child = np.exp(-dots - shift[tree.child_nodes])
    denom = np.zeros(n)
    np.add.at(denom, tree.parent_nodes, ep_parent + en_parent)
    np.add.at(denom, tree.child_nodes, ep_child + en_child)
    down_pos = ep_parent / denom[tree.parent_nodes]
    down_neg = en_parent / denom[tree.parent_nodes]
    up_pos = ep_child / denom[tree.child_nodes]
    up_neg = en_child / denom[tree.child_nodes]
    return down_pos, down_neg, up_pos, up_neg


def relevance_table(emb, tree: BfsTree) -> RelevanceTable:
    """Build and propagate the full relevance table for one tree."""
    down_pos, down_neg, up_pos, up_neg = _step_arrays(emb.values, tree)
    n = emb.values.shape[0]
    table = RelevanceTable(
        down_pos=down_pos,
        down_neg=down_neg,
        up_pos=up_pos,
        up_neg=up_neg,
        cum_pos=np.zeros(n),
        cum_neg=np.zeros(n),
    )
    return propagate(table, tree)


def propagate(table: RelevanceTable, tree: BfsTree) -> RelevanceTable:
    """Fill cumulative root-to-node mass top-down (in place).

    Children of the root inherit their single hop; deeper nodes compose
    with the balance rule: the Positive cumulative value sums the
    same-sign products, the Negative one the cross-sign products.
    """
    table.cum_pos[tree.root] = 1.0
    table.cum_neg[tree.root] = 0.0
    if len(tree.child_nodes) == 0:
        return table
    child_levels = tree.level[tree.child_nodes]
    for lev in range(1, int(child_levels.max()) + 1):
        sel = child_levels == lev
        c = tree.child_nodes[sel]
        p = tree.parent_nodes[sel]
        dp, dn = table.down_pos[sel], table.down_neg[sel]
        table.cum_pos[c] = table.cum_pos[p] * dp + table.cum_neg[p] * dn
        table.cum_neg[c] = table.cum_pos[p] * dn + table.cum_neg[p] * dp
    table._node_cache.clear()
    return table


def relevance(emb, tree: BfsTree, a: int, b: int, sign: Sign) -> float:
    """Sign-specific relevance of tree-neighbor b from node a.

    Softmax over a's tree neighborhood and both signs, with exponent
    sign * (g_a . g_b); the values over all (neighbor, sign) pairs of a
    sum to 1. Raises ValueError when b is not tree-adjacent to a.
    """
    nbrs = tree.tree_neighbors(a)
    if b not in nbrs:
        raise ValueError(f"{b} is not a tree neighbor of {a}")
    nbrs_arr = np.asarray(nbrs, dtype=np.int64)
    dots = emb.values[nbrs_arr] @ emb.values[a]
    shift = max(float(np.abs(dots).max()), 0.0)
    if shift < _SHIFT_GUARD:
        shift = 0.0
    denom = float(np.exp(dots - shift).sum() + np.exp(-dots - shift).sum())
    d_ab = float(emb.values[a] @ emb.values[b])
    return float(np.exp(sign.value * d_ab - shift) / denom)


def modified_softmax(
    table: RelevanceTable, tree: BfsTree, target: int, sign: Sign
) -> float:
    """Tree softmax value for (target, sign) with respect to the root.

    Combines the cumulative root-to-target mass with the target's
    step-back relevance toward its parent: the Positive outcome pairs like
    signs, the Negative outcome pairs unlike signs.
    """
    if target == tree.root:
        raise ValueError("target must differ from the root")
    e = int(tree.edge_of_child[target])
    if e < 0:
        raise ValueError(f"node {target} is not covered by the tree")
    cp, cn = table.cum_pos[target], table.cum_neg[target]
    up, un = table.up_pos[e], table.up_neg[e]
    if sign is Sign.POSITIVE:
        return float(cp * up + cn * un)
    return float(cp * un + cn * up)


def tree_distribution(table: RelevanceTable, tree: BfsTree):
    """All (node, sign) tree-softmax values at once.

    Returns (nodes, p_positive, p_negative) arrays aligned with the tree's
    non-root covered nodes. The two probability arrays sum to 1 together.
    """
    c = tree.child_nodes
    cp, cn = table.cum_pos[c], table.cum_neg[c]
    up, un = table.up_pos, table.up_neg
    return c, cp * up + cn * un, cp * un + cn * up


def _node_step(table: RelevanceTable, tree: BfsTree, node: int):
    """Cached per-node sampling arrays: neighbors and cumulative probs.

    Layout: entries 0..t-1 are (neighbor_j, Positive), t..2t-1 are
    (neighbor_j, Negative).
    """
    cached = table._node_cache.get(node)
    if cached is not None:
        return cached
    lo, hi = tree.inc_ptr[node], tree.inc_ptr[node + 1]
    edges = tree.inc_edges[lo:hi]
    down = tree.inc_down[lo:hi]
    nbrs = np.where(down, tree.child_nodes[edges], tree.parent_nodes[edges])
    p_pos = np.where(down, table.down_pos[edges], table.up_pos[edges])
    p_neg = np.where(down, table.down_neg[edges], table.up_neg[edges])
    cum = np.cumsum(np.concatenate([p_pos, p_neg]))
    entry = (nbrs, cum)
    table._node_cache[node] = entry
    return entry


@dataclass
class Walk:
    """One signed tree walk: the visited nodes and every drawn step sign.

    ``nodes`` is the descent path from the root; ``step_signs`` has one
    entry per drawn step, the last being the terminating back-step from
    nodes[-1] toward nodes[-2]. The emitted sample is nodes[-1] with the
    balance-composed product of all step signs.
    """

    nodes: list[int]
    step_signs: list[int]

    @property
    def emitted_node(self) -> int:
        return self.nodes[-1]

    @property
    def composed_sign(self) -> Sign:
        return Sign(int(np.prod(self.step_signs)))

    def steps(self):
        """Yield (source, destination, sign_int) per drawn step."""
        for i in range(len(self.nodes) - 1):
            yield self.nodes[i], self.nodes[i + 1], self.step_signs[i]
        yield self.nodes[-1], self.nodes[-2], self.step_signs[-1]


def sample_walk(
    table: RelevanceTable, tree: BfsTree, rng: np.random.Generator
) -> Walk:
    """Draw one signed walk; requires a tree covering at least two nodes."""
    if tree.covered_count < 2:
        raise ValueError("tree must cover at least two nodes")
    cur = tree.root
    prev = -1
    nodes = [cur]
    signs: list[int] = []
    while True:
        nbrs, cum = _node_step(table, tree, cur)
        t = len(nbrs)
        if not np.isfinite(cum[-1]):
            raise FloatingPointError(
                f"non-finite step probabilities at node {cur}"
            )
        r = rng.random() * cum[-1]
        idx = int(np.searchsorted(cum, r, side="right"))
        if idx >= 2 * t:
            idx = 2 * t - 1
        nxt = int(nbrs[idx % t])
        signs.append(1 if idx < t else -1)
        if nxt == prev:
            return Walk(nodes=nodes, step_signs=signs)
        nodes.append(nxt)
        prev, cur = cur, nxt


def sample_signed_neighbor(
    table: RelevanceTable, tree: BfsTree, rng: np.random.Generator
) -> tuple[int, Sign]:
    """Sample one (node, sign) outcome from the tree softmax."""
    walk = sample_walk(table, tree, rng)
    return walk.emitted_node, walk.composed_sign


def touched_nodes(tree: BfsTree, walk_nodes: list[int]) -> set[int]:
    """Nodes whose embeddings one walk's gradient touches.

    The walk's own nodes plus every tree neighbor of a visited node.
    """
    touched = set(walk_nodes)
    for v in walk_nodes:
        touched.update(tree.tree_neighbors(v))
    return touched
