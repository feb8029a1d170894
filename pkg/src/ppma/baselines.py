"""The comparison-method panel evaluated next to the averaged estimator.

Restricted variants (largest model only, one predictor only, fixed power
tuning) reuse the weight-selection pipeline on a filtered strategy grid;
selection variants pick a single strategy by information criterion; the
remaining two are single-fit references (grid-tuned single PPI strategy and
plain OLS on the labeled data).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledData, UnlabeledData
from .fitting import SingularStrategyError, StrategyFit, fit_grid, fit_strategy
from .mallows import (
    AveragedModel,
    WeightVector,
    build_criterion_data,
    criterion_value,
    estimate_sigma2,
    fit_model_average,
    average,
)
from .strategies import CandidateModel, Strategy, StrategyGrid, enumerate_strategies

PUMA = "PUMA"
PEMA = "PEMA"
PAIC = "PAIC"
PBIC = "PBIC"
PLARM = "PLARM"
PLAM1 = "PLAM1"
PLAM0 = "PLAM0"
LARM = "LARM"

SIGMA2_FLOOR = 1e-12  # floor under log() so perfect fits select deterministically


def pml_id(k: int) -> str:
    """Model averaging restricted to the k-th predictor (1-based)."""
    return f"PML{k}"


def ppipp_id(k: int) -> str:
    """Single-strategy full-model method with grid-tuned power (1-based)."""
    return f"PPI++ML{k}"


def default_method_ids(n_predictors: int) -> list[str]:
    """The full method panel for a grid with ``n_predictors`` predictors."""
    ids = [PUMA, PEMA, PAIC, PBIC, PLARM]
    ids += [pml_id(k + 1) for k in range(n_predictors)]
    ids += [PLAM1, PLAM0]
    ids += [ppipp_id(k + 1) for k in range(n_predictors)]
    ids += [LARM]
    return ids


METHOD_NOTES = {
    # power tuning chosen by criterion grid search, not the external plug-in
    "PPI++": "surrogate tuning",
}


def method_note(method_id: str) -> str | None:
    return METHOD_NOTES["PPI++"] if method_id.startswith("PPI++") else None


@dataclass(frozen=True)
class MethodResult:
    """Uniform record for one method: its model plus selection metadata."""

    method: str
    model: AveragedModel
    selected_index: int | None = None
    note: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "weights": self.model.weights.to_json_dict(),
            "theta": self.model.theta_avg.tolist(),
            "selected_index": self.selected_index,
            "note": self.note,
        }


def equal_weights(M: int) -> WeightVector:
    if M < 1:
        raise ValueError("need at least one strategy")
    return WeightVector(np.full(M, 1.0 / M), iterations=0, converged=True)


def information_criterion_select(fits, kind: str, n: int) -> int:
    """Index of the strategy minimizing AIC or BIC; ties go to the smaller
    index.  Scores use n*log(max(sigma2_m, floor)) plus 2*trace (AIC) or
    trace*log(n) (BIC).
    """
    fits = list(fits)
    if not fits:
        raise ValueError("empty fit sequence")
    if kind not in ("AIC", "BIC"):
        raise ValueError(f"unknown criterion {kind!r}")
    scores = np.empty(len(fits))
    for i, f in enumerate(fits):
        if f.sigma2_m < 0:
            raise ValueError(f"negative sigma2_m for strategy {f.strategy_index}")
        penalty = 2.0 * f.hat_trace if kind == "AIC" else f.hat_trace * math.log(n)
        scores[i] = n * math.log(max(f.sigma2_m, SIGMA2_FLOOR)) + penalty
    return int(np.argmin(scores))


def filter_strategies(grid: StrategyGrid, predicate) -> StrategyGrid:
    """Re-indexed subgrid of the strategies satisfying
    ``predicate(model, lam, predictor_id)``.

    The kept set must still form a full product of its distinct models,
    lambdas and predictors; all restricted baselines slice one axis, which
    preserves that shape.
    """
    kept = [s for s in grid.strategies if predicate(s.model, s.lam, s.predictor_id)]
    if not kept:
        raise ValueError("predicate filtered out every strategy")
    models = tuple(dict.fromkeys(s.model for s in kept))
    lambdas = tuple(dict.fromkeys(s.lam for s in kept))
    predictor_ids = tuple(dict.fromkeys(s.predictor_id for s in kept))
    if len(kept) != len(models) * len(lambdas) * len(predictor_ids):
        raise ValueError("filtered strategies do not form a full product grid")
    strategies = tuple(
        Strategy(model=s.model, lam=s.lam, predictor_id=s.predictor_id, m=i)
        for i, s in enumerate(kept)
    )
    return StrategyGrid(
        strategies=strategies, models=models, lambdas=lambdas, predictor_ids=predictor_ids
    )


def _filtered_indices(grid: StrategyGrid, predicate) -> list[int]:
    return [s.m for s in grid.strategies if predicate(s.model, s.lam, s.predictor_id)]


def _single_strategy_model(fit: StrategyFit, strategy: Strategy, sigma2: float) -> AveragedModel:
    grid = enumerate_strategies([strategy.model], [strategy.lam], [strategy.predictor_id])
    refit = StrategyFit(
        strategy_index=0,
        theta_full=fit.theta_full,
        mu_hat=fit.mu_hat,
        hat_trace=fit.hat_trace,
        sigma2_m=fit.sigma2_m,
    )
    return average([refit], WeightVector(np.ones(1)), grid=grid, sigma2=sigma2)


def larm_fit(labeled: LabeledData, full_model: CandidateModel) -> AveragedModel:
    """OLS on the full observed model, labeled data only."""
    cols = list(full_model.columns)
    n, k = labeled.n, len(cols)
    Xm = labeled.X[:, cols]
    gram = Xm.T @ Xm
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0 or eig[0] / eig[-1] < 1e-12:
        raise ValueError("singular Gram matrix in OLS fit")
    theta_k = np.linalg.solve(gram, Xm.T @ labeled.Y)
    theta_full = np.zeros(labeled.q)
    theta_full[cols] = theta_k
    mu_hat = Xm @ theta_k
    resid = labeled.Y - mu_hat
    fit = StrategyFit(
        strategy_index=0,
        theta_full=theta_full,
        mu_hat=mu_hat,
        hat_trace=float(k),
        sigma2_m=float(resid @ resid / n),
    )
    strategy = Strategy(model=full_model, lam=0.0, predictor_id="none", m=0)
    sigma2 = resid @ resid / (n - k) if n > k else float("nan")
    return _single_strategy_model(fit, strategy, float(sigma2))


def ppi_plus_plus_baseline(
    labeled: LabeledData,
    unlabeled: UnlabeledData,
    f_lab: np.ndarray,
    f_unlab: np.ndarray,
    full_model: CandidateModel,
    sigma2: float | None = None,
    lambda_grid=None,
    predictor_id: str = "ML",
) -> AveragedModel:
    """Single full-model strategy with power tuning chosen on a dense grid.

    The tuning value minimizes the feasible criterion of the one-strategy
    family, ||Y - mu_hat||^2 + 2 sigma^2 * hat_trace, over lambda in
    {0, 0.01, ..., 1}.  Grid points with a singular Psi are skipped; it is
    an error only if every point fails.
    """
    if lambda_grid is None:
        lambda_grid = np.linspace(0.0, 1.0, 101)
    if sigma2 is None:
        sigma2 = estimate_sigma2(labeled, full_model)
    best = None
    for lam in lambda_grid:
        strategy = Strategy(model=full_model, lam=float(lam), predictor_id=predictor_id, m=0)
        try:
            fit = fit_strategy(strategy, labeled, unlabeled, f_lab, f_unlab)
        except SingularStrategyError:
            continue
        resid = labeled.Y - fit.mu_hat
        score = float(resid @ resid + 2.0 * sigma2 * fit.hat_trace)
        if best is None or score < best[0]:
            best = (score, strategy, fit)
    if best is None:
        raise SingularStrategyError(
            Strategy(model=full_model, lam=0.0, predictor_id=predictor_id, m=0),
            "Psi singular at every lambda grid point",
        )
    _, strategy, fit = best
    return _single_strategy_model(fit, strategy, float(sigma2))


def _subgrid_model(grid, fits, labeled, predicate, sigma2, tol, max_iter) -> AveragedModel:
    subgrid = filter_strategies(grid, predicate)
    subfits = [fits[i] for i in _filtered_indices(grid, predicate)]
    subfits = [
        StrategyFit(
            strategy_index=i,
            theta_full=f.theta_full,
            mu_hat=f.mu_hat,
            hat_trace=f.hat_trace,
            sigma2_m=f.sigma2_m,
        )
        for i, f in enumerate(subfits)
    ]
    return fit_model_average(subgrid, subfits, labeled, sigma2=sigma2, tol=tol, max_iter=max_iter)


def run_all_methods(
    grid: StrategyGrid,
    fits,
    labeled: LabeledData,
    unlabeled: UnlabeledData,
    pseudo_labels: dict,
    methods=None,
    sigma2: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> dict[str, MethodResult]:
    """Evaluate the requested methods on shared fits; returns id -> result.

    All methods reuse one sigma^2 estimate (largest-model OLS residuals)
    except the per-strategy sigma2_m inside AIC/BIC scores.
    """
    fits = list(fits)
    if methods is None:
        methods = default_method_ids(grid.S3)
    if sigma2 is None:
        sigma2 = estimate_sigma2(labeled, grid.largest_model())
    largest = grid.largest_model()
    results: dict[str, MethodResult] = {}

    for method in methods:
        if method == PUMA:
            model = fit_model_average(grid, fits, labeled, sigma2=sigma2, tol=tol, max_iter=max_iter)
            results[method] = MethodResult(method, model)
        elif method == PEMA:
            w = equal_weights(grid.M)
            c = build_criterion_data(fits, labeled, sigma2)
            w = WeightVector(w.w, objective=criterion_value(c, w.w), iterations=0)
            results[method] = MethodResult(method, average(fits, w, grid=grid, sigma2=sigma2))
        elif method in (PAIC, PBIC):
            idx = information_criterion_select(fits, method[1:], labeled.n)
            w = np.zeros(grid.M)
            w[idx] = 1.0
            c = build_criterion_data(fits, labeled, sigma2)
            wv = WeightVector(w, objective=criterion_value(c, w), iterations=0)
            model = average(fits, wv, grid=grid, sigma2=sigma2)
            results[method] = MethodResult(method, model, selected_index=idx)
        elif method == PLARM:
            model = _subgrid_model(
                grid, fits, labeled,
                lambda mod, lam, pid: mod == largest, sigma2, tol, max_iter,
            )
            results[method] = MethodResult(method, model)
        elif method == PLAM1:
            model = _subgrid_model(
                grid, fits, labeled,
                lambda mod, lam, pid: lam == 1.0, sigma2, tol, max_iter,
            )
            results[method] = MethodResult(method, model)
        elif method == PLAM0:
            model = _subgrid_model(
                grid, fits, labeled,
                lambda mod, lam, pid: lam == 0.0, sigma2, tol, max_iter,
            )
            results[method] = MethodResult(method, model)
        elif method.startswith("PML"):
            k = int(method[3:])
            pid = grid.predictor_ids[k - 1]
            model = _subgrid_model(
                grid, fits, labeled,
                lambda mod, lam, p: p == pid, sigma2, tol, max_iter,
            )
            results[method] = MethodResult(method, model)
        elif method.startswith("PPI++"):
            k = int(method[7:])
            pid = grid.predictor_ids[k - 1]
            f_lab, f_unlab = pseudo_labels[pid]
            model = ppi_plus_plus_baseline(
                labeled, unlabeled, f_lab, f_unlab, largest,
                sigma2=sigma2, predictor_id=pid,
            )
            results[method] = MethodResult(method, model, note=method_note(method))
        elif method == LARM:
            results[method] = MethodResult(method, larm_fit(labeled, largest))
        else:
            raise ValueError(f"unknown method id {method!r}")
    return results
