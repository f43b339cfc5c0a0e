"""Random Forest end classifier plus the two importance measures.

The ensemble is scikit-learn's bagged CART implementation pinned to the
study configuration: Gini splits, sqrt(d) features per split, bootstrap
resampling, fixed seed. Trained trees serialize to a JSON structure dump
(split feature, threshold, children, leaf class counts) that predicts
identically to the fitted estimator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.ensemble import RandomForestClassifier

from .errors import SingleClassError


@dataclass(frozen=True)
class RandomForestHyper:
    trees: int = 1000
    max_depth: int = 5
    seed: int = 0


@dataclass
class TrainedForest:
    model: RandomForestClassifier
    feature_names: list[str]
    hyper: RandomForestHyper

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """P(artifact) per row: mean of per-tree leaf class frequencies."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1] != len(self.feature_names):
            raise ValueError(
                f"expected {len(self.feature_names)} features, got {x.shape[1]}"
            )
        proba = self.model.predict_proba(x)
        col = int(np.flatnonzero(self.model.classes_ == 1)[0])
        return proba[:, col]

    def predict(self, x: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(x) > threshold).astype(int)

    def tree_depths(self) -> list[int]:
        return [est.get_depth() for est in self.model.estimators_]

    def to_json(self, path: str | Path) -> None:
        trees = []
        for est in self.model.estimators_:
            t = est.tree_
            trees.append(
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "children_left": t.children_left.tolist(),
                    "children_right": t.children_right.tolist(),
                    "class_counts": t.value[:, 0, :].tolist(),
                }
            )
        Path(path).write_text(
            json.dumps(
                {
                    "feature_names": self.feature_names,
                    "classes": self.model.classes_.tolist(),
                    "hyper": {
                        "trees": self.hyper.trees,
                        "max_depth": self.hyper.max_depth,
                        "seed": self.hyper.seed,
                    },
                    "trees": trees,
                }
            )
        )


@dataclass(frozen=True)
class ForestDump:
    """Standalone predictor reconstructed from a JSON tree dump."""

    feature_names: list[str]
    classes: list[int]
    trees: list[dict]

    @classmethod
    def from_json(cls, path: str | Path) -> "ForestDump":
        obj = json.loads(Path(path).read_text())
        return cls(obj["feature_names"], obj["classes"], obj["trees"])

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape[0])
        pos = self.classes.index(1)
        for tree in self.trees:
            feature = tree["feature"]
            threshold = tree["threshold"]
            left, right = tree["children_left"], tree["children_right"]
            counts = tree["class_counts"]
            for i, row in enumerate(x):
                node = 0
                while left[node] != -1:
                    node = (
                        left[node]
                        if row[feature[node]] <= threshold[node]
                        else right[node]
                    )
                leaf = counts[node]
                out[i] += leaf[pos] / sum(leaf)
        return out / len(self.trees)


def train_random_forest(
    x: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str],
    hyper: RandomForestHyper | None = None,
) -> TrainedForest:
    hyper = hyper or RandomForestHyper()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if x.shape[0] < 2:
        raise ValueError("need at least two training rows")
    if np.unique(y).size < 2:
        raise SingleClassError("training labels contain a single class")
    model = RandomForestClassifier(
        n_estimators=hyper.trees,
        max_depth=hyper.max_depth,
        criterion="gini",
        max_features="sqrt",
        bootstrap=True,
        random_state=hyper.seed,
        n_jobs=1,
    )
    model.fit(x, y)
    return TrainedForest(model, list(feature_names), hyper)


def feature_importance(
    forest: TrainedForest,
    x: np.ndarray,
    y: np.ndarray,
    mode: str = "GI",
    repeats: int = 5,
    seed: int = 0,
) -> list[tuple[str, float]]:
    """Ranked (feature, score) pairs, descending, ties broken by name.

    GI is mean impurity decrease across trees normalized to sum to one;
    PFI is the mean accuracy drop over ``repeats`` seeded shuffles of each
    column.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    names = forest.feature_names
    if x.shape[1] != len(names):
        raise ValueError(f"expected {len(names)} features, got {x.shape[1]}")
    if mode == "GI":
        raw = forest.model.feature_importances_
        total = raw.sum()
        scores = raw / total if total > 0 else raw
    elif mode == "PFI":
        baseline = float((forest.predict(x) == y).mean())
        scores = np.zeros(len(names))
        for j in range(len(names)):
            drops = []
            for r in range(repeats):
                rng = np.random.default_rng([seed, j, r])
                shuffled = x.copy()
                shuffled[:, j] = rng.permutation(shuffled[:, j])
                drops.append(baseline - float((forest.predict(shuffled) == y).mean()))
            scores[j] = np.mean(drops)
    else:
        raise ValueError(f"unknown importance mode {mode!r}")
    ranked = sorted(zip(names, scores), key=lambda kv: (-kv[1], kv[0]))
    return [(name, float(score)) for name, score in ranked]
