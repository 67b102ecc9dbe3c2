"""Random-forest surrogate: mean prediction plus cross-tree variance.

Backed by scikit-learn's RandomForestRegressor; the uncertainty estimate is
the population variance of the individual tree predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import RandomForestRegressor


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")


class SurrogateModel:
    """Immutable fitted forest; see :func:`fit`."""

    def __init__(self, forest: RandomForestRegressor, training_size: int, n_features: int):
        self._forest = forest
        self.training_size = training_size
        self.n_features = n_features

    def predict_mean(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._forest.predict(x)

    def per_tree_predictions(self, x: np.ndarray) -> np.ndarray:
        """Shape (n_trees, n_points) matrix of individual tree predictions."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([tree.predict(x) for tree in self._forest.estimators_])


def fit(x, y, params: ForestParams = ForestParams()) -> SurrogateModel:
    """Fit the forest on encoded configurations ``x`` and latencies ``y``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("training set must be non-empty")
    if len(x) != len(y):
        raise ValueError("x and y lengths differ")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    forest = RandomForestRegressor(
        n_estimators=params.n_trees,
        max_depth=params.max_depth,
        min_samples_leaf=params.min_samples_leaf,
        min_samples_split=params.min_samples_split,
        max_features=1.0,
        bootstrap=params.bootstrap,
        random_state=params.seed,
    )
    forest.fit(x, y)
    return SurrogateModel(forest, training_size=len(y), n_features=x.shape[1])


def predict_with_uncertainty(m: SurrogateModel, theta_encoded) -> tuple[float, float]:
    """Mean and population variance of the per-tree predictions at one point."""
    preds = m.per_tree_predictions(theta_encoded)[:, 0]
    return float(np.mean(preds)), float(np.var(preds))


def predict_batch(m: SurrogateModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized means and variances for a batch of encoded points."""
    preds = m.per_tree_predictions(x)
    return preds.mean(axis=0), preds.var(axis=0)
