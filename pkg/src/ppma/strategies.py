"""Candidate-strategy grid: nested models ranked by p-value, a power-tuning
grid, and a predictor set, enumerated into M = S1 * S2 * S3 strategies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import LabeledData


@dataclass(frozen=True)
class CandidateModel:
    """An ordered subset of observed covariate columns."""

    columns: tuple[int, ...]

    def __post_init__(self):
        cols = tuple(int(c) for c in self.columns)
        object.__setattr__(self, "columns", cols)
        if len(cols) < 1:
            raise ValueError("a candidate model needs at least one column")
        if len(set(cols)) != len(cols):
            raise ValueError(f"duplicate columns in candidate model: {cols}")
        if min(cols) < 0:
            raise ValueError(f"negative column index: {cols}")

    @property
    def k(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class Strategy:
    """One (candidate model, power tuning, predictor) combination."""

    model: CandidateModel
    lam: float
    predictor_id: str
    m: int

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")


@dataclass(frozen=True)
class StrategyGrid:
    """All strategies in model-major, then lambda, then predictor order."""

    strategies: tuple[Strategy, ...]
    models: tuple[CandidateModel, ...]
    lambdas: tuple[float, ...]
    predictor_ids: tuple[str, ...]

    @property
    def S1(self) -> int:
        return len(self.models)

    @property
    def S2(self) -> int:
        return len(self.lambdas)

    @property
    def S3(self) -> int:
        return len(self.predictor_ids)

    @property
    def M(self) -> int:
        return len(self.strategies)

    def __post_init__(self):
        if self.M != self.S1 * self.S2 * self.S3:
            raise ValueError(
                f"grid is not a full product: {self.M} strategies vs "
                f"{self.S1}*{self.S2}*{self.S3}"
            )
        for i, s in enumerate(self.strategies):
            if s.m != i:
                raise ValueError("strategy indices must be 0..M-1 in order")

    def largest_model(self) -> CandidateModel:
        return max(self.models, key=lambda mod: mod.k)

    def to_json_dict(self) -> dict:
        return {
            "models": [list(mod.columns) for mod in self.models],
            "lambdas": list(self.lambdas),
            "predictor_ids": list(self.predictor_ids),
            "S1": self.S1,
            "S2": self.S2,
            "S3": self.S3,
            "M": self.M,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "StrategyGrid":
        models = [CandidateModel(tuple(cols)) for cols in d["models"]]
        return enumerate_strategies(models, d["lambdas"], d["predictor_ids"])


def coefficient_pvalues(
    train: LabeledData, intercept: bool = False, mode: str = "joint"
) -> np.ndarray:
    """Two-sided t-test p-values for each covariate coefficient.

    ``mode="joint"`` (default) tests the coefficients of the single OLS fit
    on all q covariates; ``mode="univariate"`` regresses the outcome on one
    covariate at a time instead.  With ``intercept`` a constant column is
    included in the fit (and exempt from the returned p-values).
    """
    if mode not in ("joint", "univariate"):
        raise ValueError(f"unknown p-value mode {mode!r}")
    X, Y, q, n = train.X, train.Y, train.q, train.n

    def fit_pvalues(design, keep):
        k = design.shape[1]
        if n <= k:
            raise ValueError(f"need n > {k} for p-values, got n={n}")
        gram = design.T @ design
        eig = np.linalg.eigvalsh(gram)
        if eig[0] <= 0 or eig[0] / eig[-1] < 1e-12:
            raise ValueError("singular design: cannot compute p-values")
        ginv = np.linalg.inv(gram)
        beta = ginv @ (design.T @ Y)
        resid = Y - design @ beta
        df = n - k
        s2 = resid @ resid / df
        se = np.sqrt(s2 * np.diag(ginv))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(se > 0, beta / se, np.inf)
        p = 2.0 * stats.t.sf(np.abs(t), df)
        return p[keep]

    if mode == "joint":
        design = np.column_stack([np.ones(n), X]) if intercept else X
        keep = slice(1, None) if intercept else slice(None)
        return fit_pvalues(design, keep)
    out = np.empty(q)
    for j in range(q):
        xj = X[:, j : j + 1]
        design = np.column_stack([np.ones(n), xj]) if intercept else xj
        keep = slice(1, None) if intercept else slice(None)
        out[j] = fit_pvalues(design, keep)[0]
    return out


def build_nested_models(pvalues, sizes, offset: int = 0, fixed: tuple[int, ...] = ()):
    """Nested candidate models sized by ``sizes`` over p-value-ranked columns.

    Model j holds the sizes[j] covariates with the smallest p-values (ties
    broken toward the lower column index), so the models form a chain.
    ``fixed`` columns (e.g. an intercept) are prepended to every model and
    do not count toward ``sizes``; ``offset`` shifts the ranked indices,
    which is how a leading intercept column is accommodated.
    """
    pvalues = np.asarray(pvalues, dtype=float)
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("sizes must be nonempty")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"sizes must be strictly increasing: {sizes}")
    if sizes[0] < 1 or sizes[-1] > pvalues.size:
        raise ValueError(f"sizes must lie in [1, {pvalues.size}]: {sizes}")
    ranked = np.argsort(pvalues, kind="stable")
    return [
        CandidateModel(tuple(fixed) + tuple(int(j) + offset for j in ranked[:size]))
        for size in sizes
    ]


def enumerate_strategies(models, lambdas, predictor_ids) -> StrategyGrid:
    """Cartesian product of models x lambdas x predictors, in that order."""
    models = tuple(models)
    lambdas = tuple(float(l) for l in lambdas)
    predictor_ids = tuple(predictor_ids)
    if not models or not lambdas or not predictor_ids:
        raise ValueError("models, lambdas and predictor_ids must be nonempty")
    if len(set(lambdas)) != len(lambdas):
        raise ValueError(f"duplicate lambda values: {lambdas}")
    for lam in lambdas:
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {lam}")
    if len(set(predictor_ids)) != len(predictor_ids):
        raise ValueError(f"duplicate predictor ids: {predictor_ids}")
    strategies = []
    m = 0
    for model in models:
        for lam in lambdas:
            for pid in predictor_ids:
                strategies.append(Strategy(model=model, lam=lam, predictor_id=pid, m=m))
                m += 1
    return StrategyGrid(
        strategies=tuple(strategies),
        models=models,
        lambdas=lambdas,
        predictor_ids=predictor_ids,
    )


def default_sizes(pvalues, threshold: float = 0.05) -> list[int]:
    """Nested-model sizes for real data: start at the count of clearly
    significant covariates (at least 1), then grow one covariate at a time
    up to the full set.
    """
    pvalues = np.asarray(pvalues, dtype=float)
    first = max(1, int(np.sum(pvalues < threshold)))
    return list(range(first, pvalues.size + 1))
