"""Pseudo-label generators behind a single ``predict`` interface.

Three families are provided: a noisy oracle for simulation studies, and two
small trainable learners (k-NN and boosted stumps) for real tabular data.
Pre-computed predictions can also be injected as plain vectors, so outputs
of heavier external learners can be used without this package knowing about
them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledData, UnlabeledData
from .rng import row_hash_normals


class Predictor:
    """Base class: immutable after construction, ``predict`` is pure."""

    id: str

    def predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_dim(self, X: np.ndarray, expected: int) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != expected:
            raise ValueError(
                f"predictor {self.id!r} expects {expected} columns, got {X.shape[1]}"
            )
        return X


@dataclass(frozen=True)
class NoisyOracle(Predictor):
    """Simulated learner: the true linear mean plus row-keyed Gaussian noise.

    Noise for a row is a pure function of (seed, row values), so labeled and
    unlabeled rows receive i.i.d. draws with mean ``mu_eps`` and standard
    deviation ``sigma_eps`` while the predictor itself stays stateless.
    """

    id: str
    theta: tuple[float, ...]
    mu_eps: float = 0.0
    sigma_eps: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(t) for t in np.ravel(self.theta)))
        if self.sigma_eps < 0:
            raise ValueError("sigma_eps must be nonnegative")

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = self._check_dim(X, len(self.theta))
        mean = X @ np.asarray(self.theta)
        if self.sigma_eps == 0.0:
            return mean if self.mu_eps == 0.0 else mean + self.mu_eps
        return mean + self.mu_eps + self.sigma_eps * row_hash_normals(self.seed, X)


@dataclass(frozen=True)
class KNNPredictor(Predictor):
    """Mean outcome of the k nearest training rows (Euclidean distance).

    Distance ties are broken toward the lower training-row index.
    """

    id: str
    X_train: np.ndarray
    Y_train: np.ndarray
    k: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = self._check_dim(X, self.X_train.shape[1])
        out = np.empty(X.shape[0])
        for i, x in enumerate(X):
            d2 = np.sum((self.X_train - x) ** 2, axis=1)
            nearest = np.argsort(d2, kind="stable")[: self.k]
            out[i] = self.Y_train[nearest].mean()
        return out


@dataclass(frozen=True)
class BoostedStumpsPredictor(Predictor):
    """Additive depth-1 regression trees fit to residuals.

    ``stumps`` holds (feature, threshold, left_value, right_value) tuples;
    prediction starts at ``base`` and adds ``learn_rate`` times each stump.
    ``degenerate`` flags training data whose covariates were all constant.
    """

    id: str
    base: float
    stumps: tuple[tuple[int, float, float, float], ...]
    learn_rate: float
    degenerate: bool = False

    n_features: int = 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = self._check_dim(X, self.n_features)
        out = np.full(X.shape[0], self.base)
        for feature, threshold, left, right in self.stumps:
            out += self.learn_rate * np.where(X[:, feature] <= threshold, left, right)
        return out


def predict_batch(predictor: Predictor, X: np.ndarray) -> np.ndarray:
    """Pseudo-labels for every row of ``X``; pure in (predictor, X)."""
    return predictor.predict(X)


def train_knn(train: LabeledData, k: int, id: str = "knn") -> KNNPredictor:
    if not 1 <= k <= train.n:
        raise ValueError(f"k must be in [1, {train.n}], got {k}")
    return KNNPredictor(id=id, X_train=train.X, Y_train=train.Y, k=int(k))


def _best_stump(X: np.ndarray, residual: np.ndarray):
    """Greedy squared-error stump over midpoints of sorted unique values.

    Returns (sse_reduction, feature, threshold, left_mean, right_mean) or
    None when every covariate is constant.
    """
    n, q = X.shape
    best = None
    for j in range(q):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        rs = residual[order]
        csum = np.cumsum(rs)
        total = csum[-1]
        # split after position i (1-based count on the left)
        boundaries = np.nonzero(xs[:-1] < xs[1:])[0]
        for i in boundaries:
            n_left = i + 1
            n_right = n - n_left
            sum_left = csum[i]
            sum_right = total - sum_left
            gain = sum_left**2 / n_left + sum_right**2 / n_right
            if best is None or gain > best[0]:
                threshold = 0.5 * (xs[i] + xs[i + 1])
                best = (gain, j, threshold, sum_left / n_left, sum_right / n_right)
    return best


def train_boosted_stumps(
    train: LabeledData, rounds: int, learn_rate: float, id: str = "stumps"
) -> BoostedStumpsPredictor:
    """Gradient boosting with depth-1 trees on the squared error.

    Initialized at mean(Y); each round fits the best single split to the
    current residuals.  If no covariate admits a split the result is the
    mean-only predictor with ``degenerate=True`` rather than an error.
    """
    if train.n < 2:
        raise ValueError("boosted stumps need at least 2 training rows")
    if not 0.0 < learn_rate <= 1.0:
        raise ValueError(f"learn_rate must be in (0, 1], got {learn_rate}")
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    base = float(train.Y.mean())
    residual = train.Y - base
    stumps = []
    degenerate = False
    for _ in range(rounds):
        found = _best_stump(train.X, residual)
        if found is None:
            degenerate = True
            break
        _, feature, threshold, left, right = found
        stumps.append((int(feature), float(threshold), float(left), float(right)))
        fitted = np.where(train.X[:, feature] <= threshold, left, right)
        residual = residual - learn_rate * fitted
    return BoostedStumpsPredictor(
        id=id,
        base=base,
        stumps=tuple(stumps),
        learn_rate=float(learn_rate),
        degenerate=degenerate,
        n_features=train.q,
    )


def compute_pseudo_labels(
    predictors: list[Predictor], labeled: LabeledData, unlabeled: UnlabeledData
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Evaluate each predictor on both designs: id -> (f_labeled, f_unlabeled)."""
    out = {}
    for p in predictors:
        if p.id in out:
            raise ValueError(f"duplicate predictor id {p.id!r}")
        out[p.id] = (p.predict(labeled.X), p.predict(unlabeled.Xtilde))
    return out
