"""Per-strategy computational core: the rectified loss, its closed-form
minimizer, the fitted-value/hat-trace decomposition, and prediction.

For strategy m with power tuning lam and pseudo-labels f, the coefficient
solves

    Psi theta = X_m' Y + r*lam * Xt_m' f_unlab - lam * X_m' f_lab,
    Psi = (1 - lam) X_m' X_m + r*lam * Xt_m' Xt_m,      r = n / N,

which is the normal equation of the rectified loss below.  Solves go
through Cholesky; a Psi that is not safely positive definite is an error
naming the strategy, never a silent regularization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import LabeledData, UnlabeledData, check_compatible
from .strategies import Strategy, StrategyGrid

# Psi must be positive definite with reciprocal condition number >= this.
RCOND_MIN = 1e-12


@dataclass(frozen=True)
class StrategyFit:
    """Closed-form fit of one strategy.

    theta_full embeds the k_m coefficients into the full q-dimensional
    space (zeros off the model's columns); mu_hat is the in-sample fitted
    vector; hat_trace is trace of the strategy's linear smoother, the
    effective degrees of freedom in the averaging penalty; sigma2_m is the
    mean squared in-sample residual, used by information criteria.
    """

    strategy_index: int
    theta_full: np.ndarray
    mu_hat: np.ndarray
    hat_trace: float
    sigma2_m: float

    def to_json_dict(self) -> dict:
        return {
            "strategy_index": self.strategy_index,
            "theta_full": self.theta_full.tolist(),
            "hat_trace": self.hat_trace,
            "sigma2_m": self.sigma2_m,
        }


class SingularStrategyError(ValueError):
    """Psi for a strategy is singular or too ill-conditioned to trust."""

    def __init__(self, strategy: Strategy, detail: str):
        self.strategy = strategy
        super().__init__(
            f"strategy m={strategy.m} (columns={strategy.model.columns}, "
            f"lambda={strategy.lam}, predictor={strategy.predictor_id}): {detail}"
        )


def _psi_cholesky(strategy: Strategy, gram_lab: np.ndarray, gram_unlab: np.ndarray, r: float):
    lam = strategy.lam
    psi = (1.0 - lam) * gram_lab + r * lam * gram_unlab
    psi = 0.5 * (psi + psi.T)
    eig = np.linalg.eigvalsh(psi)
    if eig[0] <= 0.0:
        raise SingularStrategyError(strategy, f"Psi is not positive definite (min eig {eig[0]:g})")
    if eig[0] / eig[-1] < RCOND_MIN:
        raise SingularStrategyError(
            strategy, f"Psi reciprocal condition number {eig[0] / eig[-1]:.2e} below {RCOND_MIN:g}"
        )
    return psi, linalg.cho_factor(psi, lower=True)


def _check_vectors(labeled, unlabeled, f_lab, f_unlab):
    f_lab = np.ravel(np.asarray(f_lab, dtype=np.float64))
    f_unlab = np.ravel(np.asarray(f_unlab, dtype=np.float64))
    if f_lab.shape[0] != labeled.n:
        raise ValueError(f"f_lab has length {f_lab.shape[0]}, expected n={labeled.n}")
    if f_unlab.shape[0] != unlabeled.N:
        raise ValueError(f"f_unlab has length {f_unlab.shape[0]}, expected N={unlabeled.N}")
    return f_lab, f_unlab


def rectified_loss(
    strategy: Strategy,
    labeled: LabeledData,
    unlabeled: UnlabeledData,
    f_lab: np.ndarray,
    f_unlab: np.ndarray,
    theta: np.ndarray,
) -> float:
    """Labeled squared loss plus lam times the pseudo-label loss gap.

    loss = sum_i (x_i'theta - Y_i)^2 / (2n)
         + lam * [ sum_i (xt_i'theta - f_unlab_i)^2 / (2N)
                   - sum_i (x_i'theta - f_lab_i)^2 / (2n) ]
    """
    f_lab, f_unlab = _check_vectors(labeled, unlabeled, f_lab, f_unlab)
    theta = np.ravel(np.asarray(theta, dtype=np.float64))
    cols = list(strategy.model.columns)
    if theta.shape[0] != len(cols):
        raise ValueError(f"theta has length {theta.shape[0]}, expected k={len(cols)}")
    Xm = labeled.X[:, cols]
    Xtm = unlabeled.Xtilde[:, cols]
    n, N = labeled.n, unlabeled.N
    fit_lab = Xm @ theta
    fit_unlab = Xtm @ theta
    loss_labeled = np.sum((fit_lab - labeled.Y) ** 2) / (2.0 * n)
    loss_f_unlab = np.sum((fit_unlab - f_unlab) ** 2) / (2.0 * N)
    loss_f_lab = np.sum((fit_lab - f_lab) ** 2) / (2.0 * n)
    return float(loss_labeled + strategy.lam * (loss_f_unlab - loss_f_lab))


def fit_strategy(
    strategy: Strategy,
    labeled: LabeledData,
    unlabeled: UnlabeledData,
    f_lab: np.ndarray,
    f_unlab: np.ndarray,
) -> StrategyFit:
    """Closed-form minimizer of the rectified loss for one strategy.

    The hat trace is trace(Psi^{-1} X_m' X_m), computed with k_m triangular
    solves; the n x n smoother matrix is never formed.
    """
    check_compatible(labeled, unlabeled)
    f_lab, f_unlab = _check_vectors(labeled, unlabeled, f_lab, f_unlab)
    cols = list(strategy.model.columns)
    if max(cols) >= labeled.q:
        raise ValueError(
            f"strategy m={strategy.m} uses column {max(cols)} but data has q={labeled.q}"
        )
    Xm = labeled.X[:, cols]
    Xtm = unlabeled.Xtilde[:, cols]
    n, N = labeled.n, unlabeled.N
    r = n / N
    lam = strategy.lam

    gram_lab = Xm.T @ Xm
    gram_unlab = Xtm.T @ Xtm
    _, cho = _psi_cholesky(strategy, gram_lab, gram_unlab, r)

    rhs = Xm.T @ labeled.Y + r * lam * (Xtm.T @ f_unlab) - lam * (Xm.T @ f_lab)
    theta_k = linalg.cho_solve(cho, rhs)
    hat_trace = float(np.trace(linalg.cho_solve(cho, gram_lab)))

    theta_full = np.zeros(labeled.q)
    theta_full[cols] = theta_k
    mu_hat = Xm @ theta_k
    resid = labeled.Y - mu_hat
    return StrategyFit(
        strategy_index=strategy.m,
        theta_full=theta_full,
        mu_hat=mu_hat,
        hat_trace=hat_trace,
        sigma2_m=float(resid @ resid / n),
    )


def predict(theta_full: np.ndarray, X_new: np.ndarray) -> np.ndarray:
    """Linear prediction X_new @ theta_full over the q observed covariates."""
    theta_full = np.ravel(np.asarray(theta_full, dtype=np.float64))
    X_new = np.atleast_2d(np.asarray(X_new, dtype=np.float64))
    if X_new.shape[1] != theta_full.shape[0]:
        raise ValueError(
            f"X_new has {X_new.shape[1]} columns but theta has length {theta_full.shape[0]}"
        )
    return X_new @ theta_full


def fit_grid(
    grid: StrategyGrid,
    labeled: LabeledData,
    unlabeled: UnlabeledData,
    pseudo_labels: dict,
) -> list[StrategyFit]:
    """Fit every strategy of the grid; pseudo_labels maps predictor id to
    the (f_labeled, f_unlabeled) vector pair."""
    missing = set(grid.predictor_ids) - set(pseudo_labels)
    if missing:
        raise ValueError(f"pseudo labels missing for predictors: {sorted(missing)}")
    fits = []
    for s in grid.strategies:
        f_lab, f_unlab = pseudo_labels[s.predictor_id]
        fits.append(fit_strategy(s, labeled, unlabeled, f_lab, f_unlab))
    return fits
