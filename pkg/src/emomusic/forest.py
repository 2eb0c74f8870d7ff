"""Random-forest emotion classifier with impurity-based attribute selection.

Written for exact, reproducible semantics: each tree trains on a seeded
bootstrap sample (with replacement, same size), each split draws
floor(sqrt(D)) candidate features without replacement and maximizes the Gini
decrease, and every tie anywhere (feature, threshold, class vote) breaks
toward the lowest index. Feature importance is the classic mean decrease in
impurity, weighted by node sample counts, averaged over trees and normalized
to sum 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmoMusicError
from .features import CatalogMismatch, FeatureCatalog, GROUPS, manual_indices
from .mapping import EmotionQuadrant, LabeledCorpus

N_CLASSES = 4


class DegenerateCorpus(EmoMusicError):
    pass


class KTooLarge(EmoMusicError):
    pass


@dataclass(frozen=True, slots=True)
class ForestConfig:
    n_trees: int = 500
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # None -> floor(sqrt(D))
    seed: int = 0
    canonical_order: bool = False  # sort rows lexicographically before seeding


@dataclass(slots=True)
class DecisionTree:
    """Axis-aligned binary tree in flat-array form.

    ``feature[i] == -1`` marks node i as a leaf; internal nodes send
    x[feature] <= threshold to ``left`` and the rest to ``right``.
    ``counts[i]`` is the training class-count vector at node i.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    def leaf_counts(self, x: np.ndarray) -> np.ndarray:
        node = 0
        while self.feature[node] != -1:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return self.counts[node]

    def predict_class(self, x: np.ndarray) -> int:
        return int(np.argmax(self.leaf_counts(x)))


@dataclass(slots=True)
class RandomForest:
    trees: list[DecisionTree]
    config: ForestConfig
    n_features: int
    catalog_version: str
    oob_indices: list[np.ndarray] | None = field(default=None, repr=False, compare=False)


@dataclass(slots=True)
class ImportanceRanking:
    importance: np.ndarray  # length D, non-negative, sums to 1 (all-zero if no splits)
    order: np.ndarray       # feature indices sorted by descending importance


@dataclass(frozen=True, slots=True)
class SelectionConfig:
    """Attribute selection: top-k by importance, group-balanced random, or the
    fixed 17 manually designed attributes."""

    method: str = "topk"  # topk | random_grouped | manual17
    k: int = 100
    seed: int = 0


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p * p).sum())


def _best_split(x: np.ndarray, y_onehot: np.ndarray, candidates: np.ndarray,
                min_leaf: int) -> tuple[int, float, float] | None:
    """Best (feature, threshold, gini decrease) over candidate features.

    Candidates must be in ascending order so that ties keep the lowest index;
    within a feature the lowest threshold wins ties.
    """
    n_node = x.shape[0]
    parent_counts = y_onehot.sum(axis=0)
    parent_gini = _gini(parent_counts)
    best: tuple[int, float, float] | None = None
    for f in candidates:
        col = x[:, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        cum = np.cumsum(y_onehot[order], axis=0)  # class counts left of each cut
        cut = np.flatnonzero(xs[:-1] < xs[1:]) + 1  # left sizes at value changes
        if cut.size == 0:
            continue
        n_left = cut.astype(float)
        n_right = n_node - n_left
        valid = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not valid.any():
            continue
        cut = cut[valid]
        n_left, n_right = n_left[valid], n_right[valid]
        left_counts = cum[cut - 1]
        right_counts = parent_counts - left_counts
        gini_left = 1.0 - ((left_counts / n_left[:, None]) ** 2).sum(axis=1)
        gini_right = 1.0 - ((right_counts / n_right[:, None]) ** 2).sum(axis=1)
        decrease = parent_gini - (n_left * gini_left + n_right * gini_right) / n_node
        i = int(np.argmax(decrease))  # thresholds ascend, so first max = lowest
        if decrease[i] <= 1e-12:
            continue
        threshold = (xs[cut[i] - 1] + xs[cut[i]]) / 2.0
        if best is None or decrease[i] > best[2] + 1e-15:
            best = (int(f), float(threshold), float(decrease[i]))
    return best


def _grow_tree(x: np.ndarray, y: np.ndarray, config: ForestConfig,
               rng: np.random.Generator, mtry: int) -> DecisionTree:
    n_features = x.shape[1]
    y_onehot = np.eye(N_CLASSES)[y]
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    counts: list[np.ndarray] = []

    # stack of (sample index array, depth, parent node, is_left_child)
    stack: list[tuple[np.ndarray, int, int, bool]] = [(np.arange(len(y)), 0, -1, False)]
    while stack:
        samples, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        node_counts = y_onehot[samples].sum(axis=0)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(node_counts)

        if (node_counts > 0).sum() <= 1:
            continue
        if config.max_depth is not None and depth >= config.max_depth:
            continue
        if len(samples) < 2 * config.min_samples_leaf:
            continue
        candidates = np.sort(rng.choice(n_features, size=mtry, replace=False))
        best = _best_split(x[samples], y_onehot[samples], candidates,
                           config.min_samples_leaf)
        if best is None:
            continue
        f, thr, _ = best
        feature[node] = f
        threshold[node] = thr
        goes_left = x[samples, f] <= thr
        # push right first so the left child is materialized first
        stack.append((samples[~goes_left], depth + 1, node, False))
        stack.append((samples[goes_left], depth + 1, node, True))

    return DecisionTree(np.array(feature), np.array(threshold),
                        np.array(left), np.array(right), np.stack(counts))


def train_forest(corpus: LabeledCorpus, config: ForestConfig | None = None) -> RandomForest:
    """Train a seeded, deterministic random forest on the labeled corpus."""
    config = config or ForestConfig()
    x = corpus.matrix.values
    y = corpus.label_indices()
    n, d = x.shape
    if np.unique(y).size < 2:
        raise DegenerateCorpus("training needs at least two distinct classes")
    if config.canonical_order:
        order = sorted(range(n), key=lambda i: (tuple(x[i]), y[i]))
        x, y = x[order], y[order]
    mtry = config.features_per_split or max(1, math.floor(math.sqrt(d)))
    mtry = min(mtry, d)

    trees: list[DecisionTree] = []
    oob: list[np.ndarray] = []
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    for t in range(config.n_trees):
        rng = np.random.default_rng(seeds[t])
        bootstrap = rng.integers(0, n, size=n)
        oob.append(np.setdiff1d(np.arange(n), bootstrap))
        trees.append(_grow_tree(x[bootstrap], y[bootstrap], config, rng, mtry))
    return RandomForest(trees, config, d, corpus.matrix.catalog_version, oob)


def predict_class_index(forest: RandomForest, x: np.ndarray) -> int:
    votes = np.zeros(N_CLASSES, dtype=int)
    for tree in forest.trees:
        votes[tree.predict_class(x)] += 1
    return int(np.argmax(votes))  # tie -> lowest class index, Q1 < Q2 < Q3 < Q4


def predict(forest: RandomForest, vector) -> EmotionQuadrant:
    """Majority vote over trees; accepts an AttributeVector or a raw array."""
    values = getattr(vector, "values", vector)
    version = getattr(vector, "catalog_version", None)
    if version is not None and version != forest.catalog_version:
        raise CatalogMismatch(f"vector {version!r} vs forest {forest.catalog_version!r}")
    values = np.asarray(values, dtype=float)
    if values.shape != (forest.n_features,):
        raise CatalogMismatch(f"expected {forest.n_features} dims, got {values.shape}")
    return EmotionQuadrant(predict_class_index(forest, values) + 1)


def predict_matrix(forest: RandomForest, x: np.ndarray) -> np.ndarray:
    return np.array([predict_class_index(forest, row) for row in x])


def oob_predictions(forest: RandomForest, x: np.ndarray) -> np.ndarray:
    """Out-of-bag class index per training row (-1 when no tree left it out)."""
    if forest.oob_indices is None:
        raise EmoMusicError("forest was not trained in this session; no OOB info")
    votes = np.zeros((x.shape[0], N_CLASSES), dtype=int)
    for tree, oob in zip(forest.trees, forest.oob_indices):
        for i in oob:
            votes[i, tree.predict_class(x[i])] += 1
    preds = votes.argmax(axis=1)
    preds[votes.sum(axis=1) == 0] = -1
    return preds


def oob_accuracy(forest: RandomForest, corpus: LabeledCorpus) -> float:
    preds = oob_predictions(forest, corpus.matrix.values)
    y = corpus.label_indices()
    scored = preds >= 0
    if not scored.any():
        return 0.0
    return float((preds[scored] == y[scored]).mean())


def feature_importance(forest: RandomForest) -> ImportanceRanking:
    """Mean decrease in Gini impurity, node-count weighted, normalized to sum 1."""
    total = np.zeros(forest.n_features)
    for tree in forest.trees:
        acc = np.zeros(forest.n_features)
        root_n = tree.counts[0].sum()
        for node in range(len(tree.feature)):
            f = tree.feature[node]
            if f == -1:
                continue
            parent = tree.counts[node]
            lc = tree.counts[tree.left[node]]
            rc = tree.counts[tree.right[node]]
            n_node, nl, nr = parent.sum(), lc.sum(), rc.sum()
            decrease = _gini(parent) - (nl * _gini(lc) + nr * _gini(rc)) / n_node
            acc[f] += (n_node / root_n) * decrease
        total += acc
    total /= len(forest.trees)
    s = total.sum()
    importance = total / s if s > 0 else total
    order = np.lexsort((np.arange(forest.n_features), -importance))
    return ImportanceRanking(importance, order)


def select_attributes(ranking: ImportanceRanking, catalog: FeatureCatalog,
                      config: SelectionConfig) -> list[int]:
    """Resolve a selection config into flattened catalog dimension indices."""
    d = catalog.total_dim
    if ranking.importance.shape[0] != d:
        raise CatalogMismatch("ranking and catalog dimensions differ")
    if config.method == "topk":
        if config.k > d:
            raise KTooLarge(f"k={config.k} exceeds catalog dimension {d}")
        return [int(i) for i in ranking.order[:config.k]]
    if config.method == "manual17":
        idx = manual_indices(catalog)
        if len(idx) != 17:
            raise EmoMusicError("manual selection did not resolve to 17 dims")
        return idx
    if config.method == "random_grouped":
        if config.k > d:
            raise KTooLarge(f"n={config.k} exceeds catalog dimension {d}")
        rng = np.random.default_rng(config.seed)
        quota = math.ceil(config.k / len(GROUPS))
        pools: dict[str, list[int]] = {g: [] for g in GROUPS}
        for entry in catalog.entries:
            pools[entry.group].extend(catalog.indices(entry.id))
        shuffled = {g: list(rng.permutation(idx)) for g, idx in pools.items() if idx}
        chosen: list[int] = []
        for g in GROUPS:
            if g in shuffled:
                take = min(quota, len(shuffled[g]))
                chosen.extend(int(i) for i in shuffled[g][:take])
                shuffled[g] = shuffled[g][take:]
        # short groups leave a deficit: round-robin the remaining pools
        while len(chosen) < config.k:
            progressed = False
            for g in GROUPS:
                if len(chosen) >= config.k:
                    break
                if shuffled.get(g):
                    chosen.append(int(shuffled[g].pop(0)))
                    progressed = True
            if not progressed:
                break
        return chosen[:config.k]
    raise EmoMusicError(f"unknown selection method {config.method!r}")


def forest_to_json(forest: RandomForest, path: str | Path) -> None:
    doc = {
        "config": {
            "n_trees": forest.config.n_trees,
            "max_depth": forest.config.max_depth,
            "min_samples_leaf": forest.config.min_samples_leaf,
            "features_per_split": forest.config.features_per_split,
            "seed": forest.config.seed,
            "canonical_order": forest.config.canonical_order,
        },
        "n_features": forest.n_features,
        "catalog_version": forest.catalog_version,
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "counts": tree.counts.tolist(),
            }
            for tree in forest.trees
        ],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def forest_from_json(path: str | Path) -> RandomForest:
    doc = json.loads(Path(path).read_text())
    trees = [
        DecisionTree(np.array(t["feature"]), np.array(t["threshold"]),
                     np.array(t["left"]), np.array(t["right"]), np.array(t["counts"]))
        for t in doc["trees"]
    ]
    return RandomForest(trees, ForestConfig(**doc["config"]),
                        doc["n_features"], doc["catalog_version"])


def save_selection(path: str | Path, catalog_version: str, config: SelectionConfig,
                   indices: list[int]) -> None:
    doc = {"catalog_version": catalog_version,
           "method": config.method, "k": config.k, "seed": config.seed,
           "indices": indices}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_selection(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
