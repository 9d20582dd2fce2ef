"""Independent oracle implementations used by the test suite.

Everything here is deliberately written with plain Python loops and
math.exp rather than the package's vectorized code paths, so agreement is
a real cross-check and not a tautology.
"""

from __future__ import annotations

import itertools
import math

from sgembed import Sign


def step_distribution(values, tree, node):
    """Single-hop relevance at ``node`` over (tree neighbor, sign) pairs."""
    nbrs = tree.tree_neighbors(node)
    weights = {}
    denom = 0.0
    for b in nbrs:
        dot = sum(values[node][d] * values[b][d] for d in range(len(values[node])))
        for s in (1, -1):
            w = math.exp(s * dot)
            weights[(b, s)] = w
            denom += w
    return {k: w / denom for k, w in weights.items()}


def root_path(tree, target):
    """Unique tree path from the root to ``target``."""
    path = [target]
    while path[-1] != tree.root:
        parent = tree.parent_of(path[-1])
        if parent is None:
            raise ValueError(f"{target} unreachable from root")
        path.append(parent)
    return list(reversed(path))


def naive_modified_softmax(values, tree, target, sign):
    """Brute-force tree softmax: enumerate every sign assignment of the
    path hops plus the back-step and sum the products whose total parity
    matches ``sign``."""
    path = root_path(tree, target)
    hops = [(path[i], path[i + 1]) for i in range(len(path) - 1)]
    hops.append((path[-1], path[-2]))  # terminating back-step
    dists = [step_distribution(values, tree, a) for a, _ in hops]
    want = sign.value if isinstance(sign, Sign) else sign
    total = 0.0
    for signs in itertools.product((1, -1), repeat=len(hops)):
        parity = 1
        for s in signs:
            parity *= s
        if parity != want:
            continue
        prob = 1.0
        for (a, b), dist, s in zip(hops, dists, signs):
            prob *= dist[(b, s)]
        total += prob
    return total


def naive_walk_logprob(values, tree, walk_nodes, step_signs):
    """Log-probability of a recorded walk, recomputed from scratch."""
    steps = [
        (walk_nodes[i], walk_nodes[i + 1]) for i in range(len(walk_nodes) - 1)
    ]
    steps.append((walk_nodes[-1], walk_nodes[-2]))
    logp = 0.0
    for (a, b), s in zip(steps, step_signs):
        logp += math.log(step_distribution(values, tree, a)[(b, s)])
    return logp


def enumerate_walks(tree):
    """All possible walks as (nodes, sign tuple) pairs.

    A walk descends along a root-to-node tree path and ends with one
    back-step, so walks are exactly (non-root covered node, sign sequence
    over len(path) hops plus the back-step).
    """
    walks = []
    for target in tree.order.tolist():
        if target == tree.root:
            continue
        path = root_path(tree, target)
        n_steps = len(path)  # len(path)-1 descents + 1 back-step
        for signs in itertools.product((1, -1), repeat=n_steps):
            walks.append((path, signs))
    return walks


def walk_probability(values, tree, path, signs):
    """Probability of one enumerated walk."""
    hops = [(path[i], path[i + 1]) for i in range(len(path) - 1)]
    hops.append((path[-1], path[-2]))
    prob = 1.0
    for (a, b), s in zip(hops, signs):
        prob *= step_distribution(values, tree, a)[(b, s)]
    return prob


def expected_reward(values, tree, reward_fn):
    """E[reward] over the (node, sign) outcome distribution, via the naive
    softmax; reward_fn maps (node, sign_int) to a float."""
    total = 0.0
    for target in tree.order.tolist():
        if target == tree.root:
            continue
        for s in (1, -1):
            total += (
                naive_modified_softmax(values, tree, target, Sign(s))
                * reward_fn(target, s)
            )
    return total


def hand_confusion(y_true, y_pred):
    """Plain-loop confusion counts: (n_pp, n_pn, n_np, n_nn)."""
    n_pp = n_pn = n_np = n_nn = 0
    for t, p in zip(y_true, y_pred):
        if t and p:
            n_pp += 1
        elif t and not p:
            n_pn += 1
        elif not t and p:
            n_np += 1
        else:
            n_nn += 1
    return n_pp, n_pn, n_np, n_nn


def hand_paper_micro_f1(y_true, y_pred):
    n_pp, n_pn, n_np, n_nn = hand_confusion(y_true, y_pred)
    prec_pos = n_pp / (n_pp + n_np) if (n_pp + n_np) else 0.0
    prec_neg = n_nn / (n_nn + n_pn) if (n_nn + n_pn) else 0.0
    rec_pos = n_pp / (n_pp + n_pn) if (n_pp + n_pn) else 0.0
    rec_neg = n_nn / (n_nn + n_np) if (n_nn + n_np) else 0.0
    p = (prec_pos + prec_neg) / 2.0
    r = (rec_pos + rec_neg) / 2.0
    return 2.0 * p * r / (p + r) if (p + r) else 0.0


def hand_standard_micro_f1(y_true, y_pred):
    n_pp, n_pn, n_np, n_nn = hand_confusion(y_true, y_pred)
    total = n_pp + n_pn + n_np + n_nn
    return (n_pp + n_nn) / total if total else 0.0


def unbalanced_triangles(g):
    """Count triangles with an odd number of negative edges, brute force."""
    sign = {}
    for u, v, s in g.edges:
        sign[(u, v)] = s.value
        sign[(v, u)] = s.value
    count = 0
    n = g.node_count
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in sign:
                continue
            for c in range(b + 1, n):
                if (a, c) in sign and (b, c) in sign:
                    if sign[(a, b)] * sign[(a, c)] * sign[(b, c)] < 0:
                        count += 1
    return count
