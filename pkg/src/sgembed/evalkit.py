"""Downstream evaluation: link-sign prediction and embedding-space audits.

Edges become feature vectors, a from-scratch logistic regression predicts
the sign, and results are reported as stratified k-fold micro-F1. Two
micro-F1 variants are always computed: ``paper_micro_f1`` is the harmonic
mean of the sign-averaged precision and sign-averaged recall (the variant
used for headline comparisons); ``standard_micro_f1`` micro-averages the
per-class counts. The balance audit compares mean embedding distances
across positively and negatively connected pairs (APED vs ANED).
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .generator import EmbeddingMatrix
from .sgraph import Sign, SignedGraph, inject_sparsity
from .trainer import TrainConfig, train

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class EdgeFeatureMode(enum.Enum):
    L1 = "l1"
    L2 = "l2"
    HADAMARD = "hadamard"
    AVERAGE = "avg"
    CONCAT = "concat"

    @classmethod
    def from_string(cls, text: str) -> "EdgeFeatureMode":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValueError(
                f"unknown feature mode {text!r}; expected one of "
                f"{[m.value for m in cls]}"
            ) from None


def edge_features(
    emb: EmbeddingMatrix, u: int, v: int, mode: EdgeFeatureMode
) -> np.ndarray:
    """Edge vector for (u, v); Concat puts the lower node id first."""
    if u == v:
        raise ValueError("endpoints must differ")
    x, y = emb.values[u], emb.values[v]
    if mode is EdgeFeatureMode.L1:
        return np.abs(x - y)
    if mode is EdgeFeatureMode.L2:
        return (x - y) ** 2
    if mode is EdgeFeatureMode.HADAMARD:
        return x * y
    if mode is EdgeFeatureMode.AVERAGE:
        return (x + y) / 2.0
    lo, hi = (u, v) if u < v else (v, u)
    return np.concatenate([emb.values[lo], emb.values[hi]])


def edge_feature_matrix(
    emb: EmbeddingMatrix,
    pairs: list[tuple[int, int]],
    mode: EdgeFeatureMode,
) -> np.ndarray:
    us = np.asarray([min(u, v) for u, v in pairs], dtype=np.int64)
    vs = np.asarray([max(u, v) for u, v in pairs], dtype=np.int64)
    x, y = emb.values[us], emb.values[vs]
    if mode is EdgeFeatureMode.L1:
        return np.abs(x - y)
    if mode is EdgeFeatureMode.L2:
        return (x - y) ** 2
    if mode is EdgeFeatureMode.HADAMARD:
        return x * y
    if mode is EdgeFeatureMode.AVERAGE:
        return (x + y) / 2.0
    return np.concatenate([x, y], axis=1)


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    initial_loss: float
    final_loss: float


def _log_loss(features, labels, weights, bias) -> float:
    z = features @ weights + bias
    # mean of log(1+exp(-z)) on positives and log(1+exp(z)) on negatives
    return float(np.mean(np.logaddexp(0.0, np.where(labels == 1, -z, z))))


def logreg_train(
    features: np.ndarray,
    labels: np.ndarray,
    iterations: int = 500,
    learning_rate: float = 0.1,
    seed: int = 0,
) -> LogisticModel:
    """Batch gradient descent on mean log-loss from zero init.

    ``labels`` are 0/1 with 1 the positive sign. Deterministic; ``seed``
    is accepted for interface stability but unused (nothing is sampled).
    Raises ValueError when only one class is present.
    """
    del seed
    labels = np.asarray(labels, dtype=float)
    if labels.min() == labels.max():
        raise ValueError("training data must contain both classes")
    weights = np.zeros(features.shape[1])
    bias = 0.0
    initial_loss = _log_loss(features, labels, weights, bias)
    m = len(labels)
    for _ in range(iterations):
        z = features @ weights + bias
        prob = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
        err = prob - labels
        weights -= learning_rate * (features.T @ err) / m
        bias -= learning_rate * float(err.mean())
    return LogisticModel(
        weights=weights,
        bias=bias,
        initial_loss=initial_loss,
        final_loss=_log_loss(features, labels, weights, bias),
    )


def logreg_predict_proba(model: LogisticModel, features: np.ndarray) -> np.ndarray:
    z = features @ model.weights + model.bias
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


@dataclass
class FoldMetrics:
    """Per-fold confusion counts and derived rates.

    Counts are n_<true><pred> with p for the Positive sign and n for the
    Negative sign; precision/recall of an empty denominator is 0.
    """

    n_pp: int
    n_pn: int
    n_np: int
    n_nn: int

    @staticmethod
    def _ratio(num: int, den: int) -> float:
        return num / den if den else 0.0

    @property
    def precision_pos(self) -> float:
        return self._ratio(self.n_pp, self.n_pp + self.n_np)

    @property
    def precision_neg(self) -> float:
        return self._ratio(self.n_nn, self.n_nn + self.n_pn)

    @property
    def recall_pos(self) -> float:
        return self._ratio(self.n_pp, self.n_pp + self.n_pn)

    @property
    def recall_neg(self) -> float:
        return self._ratio(self.n_nn, self.n_nn + self.n_np)

    @property
    def paper_micro_f1(self) -> float:
        p = (self.precision_pos + self.precision_neg) / 2.0
        r = (self.recall_pos + self.recall_neg) / 2.0
        return 2.0 * p * r / (p + r) if p + r else 0.0

    @property
    def standard_micro_f1(self) -> float:
        correct = self.n_pp + self.n_nn
        total = self.n_pp + self.n_pn + self.n_np + self.n_nn
        return self._ratio(correct, total)

    def to_dict(self) -> dict:
        return {
            "n_pp": self.n_pp,
            "n_pn": self.n_pn,
            "n_np": self.n_np,
            "n_nn": self.n_nn,
            "precision_pos": self.precision_pos,
            "precision_neg": self.precision_neg,
            "recall_pos": self.recall_pos,
            "recall_neg": self.recall_neg,
            "paper_micro_f1": self.paper_micro_f1,
            "standard_micro_f1": self.standard_micro_f1,
        }


def fold_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> FoldMetrics:
    """Confusion counts from 0/1 label arrays (1 = Positive sign)."""
    y_true = np.asarray(y_true, dtype=bool)
    y_pred = np.asarray(y_pred, dtype=bool)
    if y_true.shape != y_pred.shape:
        raise ValueError("label arrays must have equal length")
    return FoldMetrics(
        n_pp=int(np.sum(y_true & y_pred)),
        n_pn=int(np.sum(y_true & ~y_pred)),
        n_np=int(np.sum(~y_true & y_pred)),
        n_nn=int(np.sum(~y_true & ~y_pred)),
    )


@dataclass
class MetricsReport:
    feature_mode: EdgeFeatureMode
    leakage_mode: str
    folds: list[FoldMetrics]

    @property
    def mean_paper_micro_f1(self) -> float:
        return float(np.mean([f.paper_micro_f1 for f in self.folds]))

    @property
    def std_paper_micro_f1(self) -> float:
        return float(np.std([f.paper_micro_f1 for f in self.folds]))

    @property
    def mean_standard_micro_f1(self) -> float:
        return float(np.mean([f.standard_micro_f1 for f in self.folds]))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "feature_mode": self.feature_mode.value,
            "leakage_mode": self.leakage_mode,
            "folds": [f.to_dict() for f in self.folds],
            "mean_paper_micro_f1": self.mean_paper_micro_f1,
            "std_paper_micro_f1": self.std_paper_micro_f1,
            "mean_standard_micro_f1": self.mean_standard_micro_f1,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self) -> list[str]:
        header = (
            "fold,n_pp,n_pn,n_np,n_nn,precision_pos,precision_neg,"
            "recall_pos,recall_neg,paper_micro_f1,standard_micro_f1"
        )
        rows = [header]
        for i, f in enumerate(self.folds):
            rows.append(
                f"{i},{f.n_pp},{f.n_pn},{f.n_np},{f.n_nn},"
                f"{f.precision_pos:.6f},{f.precision_neg:.6f},"
                f"{f.recall_pos:.6f},{f.recall_neg:.6f},"
                f"{f.paper_micro_f1:.6f},{f.standard_micro_f1:.6f}"
            )
        return rows


def stratified_edge_folds(
    g: SignedGraph, k_folds: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Partition edge indices into k folds, stratified by sign.

    Each sign's indices are shuffled and dealt round-robin, keeping
    per-fold sign ratios within one edge of the global ratio.
    """
    if k_folds < 2:
        raise ValueError("k_folds must be at least 2")
    pos = np.asarray(
        [i for i, (_, _, s) in enumerate(g.edges) if s is Sign.POSITIVE]
    )
    neg = np.asarray(
        [i for i, (_, _, s) in enumerate(g.edges) if s is Sign.NEGATIVE]
    )
    folds: list[list[int]] = [[] for _ in range(k_folds)]
    for idx in (pos, neg):
        if len(idx) == 0:
            continue
        shuffled = rng.permutation(idx)
        for f in range(k_folds):
            folds[f].extend(shuffled[f::k_folds].tolist())
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def _select_table(theta_j, theta_d, use_embeddings: str) -> EmbeddingMatrix:
    if use_embeddings == "generator":
        return theta_j
    if use_embeddings == "discriminator":
        return theta_d
    raise ValueError("use_embeddings must be 'generator' or 'discriminator'")


def _evaluate_fold(table, pairs_all, labels_all, train_idx, test_idx, feature_mode):
    """Train the classifier on one fold's train split and score its test
    split against the given embedding table."""
    feats_train = edge_feature_matrix(
        table, [pairs_all[i] for i in train_idx], feature_mode
    )
    feats_test = edge_feature_matrix(
        table, [pairs_all[i] for i in test_idx], feature_mode
    )
    model = logreg_train(feats_train, labels_all[train_idx])
    y_pred = (logreg_predict_proba(model, feats_test) >= 0.5).astype(int)
    return fold_metrics(labels_all[test_idx], y_pred)


def _strict_fold_job(args) -> FoldMetrics:
    """Retrain embeddings without the held-out edges, then evaluate."""
    (g, pairs_all, labels_all, train_idx, test_idx, cfg, feature_mode,
     use_embeddings) = args
    train_edges = [g.edges[i] for i in train_idx]
    sub = SignedGraph.from_edges(g.node_count, train_edges)
    theta_j, theta_d, _ = train(sub, cfg)
    table = _select_table(theta_j, theta_d, use_embeddings)
    return _evaluate_fold(
        table, pairs_all, labels_all, train_idx, test_idx, feature_mode
    )


def kfold_link_prediction(
    g: SignedGraph,
    k_folds: int = 5,
    feature_mode: EdgeFeatureMode = EdgeFeatureMode.HADAMARD,
    train_cfg: TrainConfig | None = None,
    leakage_mode: str = "strict",
    embeddings: EmbeddingMatrix | None = None,
    use_embeddings: str = "discriminator",
    threads: int = 1,
) -> MetricsReport:
    """Stratified k-fold link-sign prediction.

    leakage_mode "strict" retrains embeddings per fold on the graph minus
    the held-out edges; "fast" trains once on the full graph. A
    pre-trained ``embeddings`` table skips training entirely (leakage is
    then whatever produced the table). Fold shuffling and per-fold
    training seeds all derive from train_cfg.seed. Strict-mode folds are
    independent pipelines, so ``threads`` > 1 runs them in parallel with
    results identical to the sequential order.
    """
    if leakage_mode not in ("strict", "fast"):
        raise ValueError("leakage_mode must be 'strict' or 'fast'")
    if train_cfg is None:
        train_cfg = TrainConfig()
    seed_root = np.random.SeedSequence(train_cfg.seed)
    fold_ss, fast_ss, *fold_train_ss = seed_root.spawn(2 + k_folds)
    folds = stratified_edge_folds(
        g, k_folds, np.random.default_rng(fold_ss)
    )

    table = embeddings
    if table is None and leakage_mode == "fast":
        cfg = replace(train_cfg, seed=int(fast_ss.generate_state(1)[0]))
        theta_j, theta_d, _ = train(g, cfg)
        table = _select_table(theta_j, theta_d, use_embeddings)

    labels_all = np.asarray(
        [1 if s is Sign.POSITIVE else 0 for _, _, s in g.edges], dtype=int
    )
    pairs_all = [(u, v) for u, v, _ in g.edges]
    splits = []
    for f, test_idx in enumerate(folds):
        if len(test_idx) == 0:
            raise ValueError(f"fold {f} is empty; reduce k_folds")
        test_mask = np.zeros(g.edge_count, dtype=bool)
        test_mask[test_idx] = True
        train_idx = np.flatnonzero(~test_mask)
        y_train = labels_all[train_idx]
        if y_train.min() == y_train.max():
            raise ValueError(f"fold {f}: training split has a single class")
        splits.append((train_idx, test_idx))

    if table is not None:
        results = [
            _evaluate_fold(
                table, pairs_all, labels_all, train_idx, test_idx, feature_mode
            )
            for train_idx, test_idx in splits
        ]
    else:
        jobs = [
            (
                g, pairs_all, labels_all, train_idx, test_idx,
                replace(
                    train_cfg,
                    seed=int(fold_train_ss[f].generate_state(1)[0]),
                ),
                feature_mode, use_embeddings,
            )
            for f, (train_idx, test_idx) in enumerate(splits)
        ]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_strict_fold_job, jobs))
        else:
            results = [_strict_fold_job(job) for job in jobs]
    return MetricsReport(
        feature_mode=feature_mode, leakage_mode=leakage_mode, folds=results
    )


@dataclass
class BalanceAudit:
    aped: float
    aned: float
    positive_sampled: int
    negative_sampled: int

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "aped": self.aped,
            "aned": self.aned,
            "positive_sampled": self.positive_sampled,
            "negative_sampled": self.negative_sampled,
            "balanced": self.aped < self.aned,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def balance_audit(
    emb: EmbeddingMatrix,
    g: SignedGraph,
    sample_fraction: float = 0.4,
    seed: int = 0,
) -> BalanceAudit:
    """Mean endpoint embedding distance per sign class.

    Samples floor(fraction * |negative edges|) negative edges and an equal
    number of positive edges without replacement; APED (positive) below
    ANED (negative) indicates extended structural balance.
    """
    pos = [(u, v) for u, v, s in g.edges if s is Sign.POSITIVE]
    neg = [(u, v) for u, v, s in g.edges if s is Sign.NEGATIVE]
    if not neg:
        raise ValueError("graph has no negative edges")
    if not pos:
        raise ValueError("graph has no positive edges")
    k = int(sample_fraction * len(neg))
    if k == 0:
        raise ValueError("sample_fraction selects zero edges")
    if k > len(pos):
        raise ValueError(
            f"cannot sample {k} positive edges; only {len(pos)} exist"
        )
    rng = np.random.default_rng(seed)
    neg_pick = rng.choice(len(neg), size=k, replace=False)
    pos_pick = rng.choice(len(pos), size=k, replace=False)

    def mean_distance(pairs, pick):
        us = np.asarray([pairs[i][0] for i in pick], dtype=np.int64)
        vs = np.asarray([pairs[i][1] for i in pick], dtype=np.int64)
        return float(
            np.linalg.norm(emb.values[us] - emb.values[vs], axis=1).mean()
        )

    return BalanceAudit(
        aped=mean_distance(pos, pos_pick),
        aned=mean_distance(neg, neg_pick),
        positive_sampled=k,
        negative_sampled=k,
    )


@dataclass
class SparsityCell:
    fraction: float
    repeats: int
    mean_paper_micro_f1: float
    std_paper_micro_f1: float
    mean_standard_micro_f1: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SweepReport:
    cells: list[SparsityCell]
    reports: list[list[MetricsReport]]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "cells": [c.to_dict() for c in self.cells],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self) -> list[str]:
        rows = [
            "fraction,repeat,paper_micro_f1,standard_micro_f1",
        ]
        for cell, reps in zip(self.cells, self.reports):
            for r, rep in enumerate(reps):
                rows.append(
                    f"{cell.fraction},{r},{rep.mean_paper_micro_f1:.6f},"
                    f"{rep.mean_standard_micro_f1:.6f}"
                )
        return rows


def _sweep_job(args) -> MetricsReport:
    g, fraction, graph_seed, cfg, k_folds, feature_mode, leakage_mode = args
    sparse = inject_sparsity(g, fraction, graph_seed)
    return kfold_link_prediction(
        sparse,
        k_folds=k_folds,
        feature_mode=feature_mode,
        train_cfg=cfg,
        leakage_mode=leakage_mode,
    )


def sparsity_sweep(
    g: SignedGraph,
    fractions=(0.2, 0.4, 0.6, 0.8),
    repeats: int = 5,
    k_folds: int = 5,
    feature_mode: EdgeFeatureMode = EdgeFeatureMode.HADAMARD,
    train_cfg: TrainConfig | None = None,
    leakage_mode: str = "strict",
    seed: int = 0,
    threads: int = 1,
) -> SweepReport:
    """Robustness sweep: repeated sparse graphs per removal fraction.

    Each (fraction, repeat) cell draws an independently seeded sparse
    graph and runs the full train + predict pipeline; results aggregate to
    mean and standard deviation per fraction. Cells are independent, so
    ``threads`` > 1 parallelizes them without changing the results.
    """
    if train_cfg is None:
        train_cfg = TrainConfig()
    fractions = list(fractions)
    if not fractions:
        return SweepReport(cells=[], reports=[])
    children = np.random.SeedSequence(seed).spawn(len(fractions) * repeats)
    jobs = []
    for i, fraction in enumerate(fractions):
        for r in range(repeats):
            child = children[i * repeats + r]
            graph_seed, train_seed = (
                int(x) for x in child.generate_state(2)
            )
            cfg = replace(train_cfg, seed=train_seed)
            jobs.append(
                (g, fraction, graph_seed, cfg, k_folds, feature_mode, leakage_mode)
            )
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            flat = list(pool.map(_sweep_job, jobs))
    else:
        flat = [_sweep_job(job) for job in jobs]

    cells, reports = [], []
    for i, fraction in enumerate(fractions):
        reps = flat[i * repeats : (i + 1) * repeats]
        scores = [r.mean_paper_micro_f1 for r in reps]
        cells.append(
            SparsityCell(
                fraction=fraction,
                repeats=repeats,
                mean_paper_micro_f1=float(np.mean(scores)),
                std_paper_micro_f1=float(np.std(scores)),
                mean_standard_micro_f1=float(
                    np.mean([r.mean_standard_micro_f1 for r in reps])
                ),
            )
        )
        reports.append(reps)
    return SweepReport(cells=cells, reports=reports)
