"""Mallows-type weight selection over the strategy grid.

The criterion is ||Y - D w||^2 + 2 sigma^2 t'w, where column m of D is the
m-th strategy's in-sample fit and t_m its hat trace.  It is minimized over
the unit simplex with accelerated projected gradient descent; the problem
is a convex quadratic, so the solver's best iterate certifies the weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .data import LabeledData
from .fitting import StrategyFit
from .strategies import CandidateModel, StrategyGrid

SIMPLEX_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class CriterionData:
    """Everything the weight QP needs: fits matrix, traces, outcomes, sigma^2."""

    D: np.ndarray
    t: np.ndarray
    Y: np.ndarray
    sigma2: float

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=np.float64))
        t = np.ravel(np.asarray(self.t, dtype=np.float64))
        Y = np.ravel(np.asarray(self.Y, dtype=np.float64))
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "Y", Y)
        if not np.isfinite(D).all():
            raise ValueError("fitted-value matrix D has non-finite entries")
        if D.shape != (Y.shape[0], t.shape[0]):
            raise ValueError(
                f"shape mismatch: D is {D.shape}, Y has {Y.shape[0]} rows, t has {t.shape[0]}"
            )
        if np.any(t < 0):
            raise ValueError("hat traces must be nonnegative")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def M(self) -> int:
        return self.t.shape[0]


@dataclass(frozen=True)
class WeightVector:
    """A point on the M-simplex plus solver diagnostics."""

    w: np.ndarray
    objective: float = float("nan")
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        w = np.ravel(np.asarray(self.w, dtype=np.float64))
        object.__setattr__(self, "w", w)
        if np.any(w < 0):
            raise ValueError(f"negative weight: min {w.min():g}")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")

    @property
    def M(self) -> int:
        return self.w.shape[0]

    def to_json_dict(self) -> dict:
        return {
            "w": self.w.tolist(),
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class AveragedModel:
    """Weighted combination of strategy fits; the pipeline's final output."""

    weights: WeightVector
    theta_avg: np.ndarray
    grid: StrategyGrid | None = None
    sigma2: float = float("nan")
    fits: tuple[StrategyFit, ...] = field(repr=False, default=())

    def predict(self, X_new: np.ndarray) -> np.ndarray:
        X_new = np.atleast_2d(np.asarray(X_new, dtype=np.float64))
        return X_new @ self.theta_avg

    @property
    def in_sample_fit(self) -> np.ndarray:
        return np.column_stack([f.mu_hat for f in self.fits]) @ self.weights.w


def estimate_sigma2(labeled: LabeledData, largest_model: CandidateModel) -> float:
    """Residual variance of the OLS fit of the largest candidate model,
    normalized by n - k; the labeled data alone are used (power tuning 0).
    """
    cols = list(largest_model.columns)
    n, k = labeled.n, len(cols)
    if n <= k:
        raise ValueError(f"need n > k for sigma^2, got n={n}, k={k}")
    Xm = labeled.X[:, cols]
    gram = Xm.T @ Xm
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0 or eig[0] / eig[-1] < 1e-12:
        raise ValueError("singular Gram matrix in sigma^2 estimation")
    theta = linalg.cho_solve(linalg.cho_factor(gram, lower=True), Xm.T @ labeled.Y)
    resid = labeled.Y - Xm @ theta
    return float(resid @ resid / (n - k))


def _check_simplex(w: np.ndarray, tol: float = SIMPLEX_FEAS_TOL) -> np.ndarray:
    w = np.ravel(np.asarray(w, dtype=np.float64))
    if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
        raise ValueError(f"w is off the simplex beyond tolerance {tol:g}")
    return w


def criterion_value(c: CriterionData, w: np.ndarray) -> float:
    """||Y - D w||^2 + 2 sigma^2 * (t'w) at a feasible weight vector."""
    w = _check_simplex(w)
    if w.shape[0] != c.M:
        raise ValueError(f"w has length {w.shape[0]}, expected M={c.M}")
    resid = c.Y - c.D @ w
    return float(resid @ resid + 2.0 * c.sigma2 * (c.t @ w))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort-and-threshold)."""
    v = np.ravel(np.asarray(v, dtype=np.float64))
    if not np.isfinite(v).all():
        raise ValueError("cannot project a non-finite vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    j = np.arange(1, v.size + 1)
    rho = np.nonzero(u * j > css)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def solve_weights(c: CriterionData, tol: float = 1e-10, max_iter: int = 100_000) -> WeightVector:
    """Minimize the criterion over the simplex.

    Accelerated projected gradient descent (monotone variant: momentum
    restarts whenever the objective would increase) with step 1/L,
    L = 2 * lambda_max(D'D).  Deterministic: starts at uniform weights and
    stops when the relative objective decrease falls below ``tol`` or after
    ``max_iter`` iterations, returning the best iterate either way.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = c.M
    if M == 1:
        return WeightVector(np.ones(1), objective=criterion_value(c, np.ones(1)), iterations=0)

    H = c.D.T @ c.D
    H = 0.5 * (H + H.T)
    b = c.D.T @ c.Y - c.sigma2 * c.t  # gradient = 2 (H w - b)
    const = float(c.Y @ c.Y)

    def objective(w):
        return float(w @ (H @ w) - 2.0 * (b @ w) + const)

    lip = 2.0 * max(float(np.linalg.eigvalsh(H)[-1]), 0.0)
    if lip <= 0.0:
        # D is identically zero: the criterion is linear in w, minimized at
        # the vertex with the smallest hat trace.
        w = np.zeros(M)
        w[int(np.argmin(c.t))] = 1.0
        return WeightVector(w, objective=criterion_value(c, w), iterations=0)

    step = 1.0 / lip
    x = np.full(M, 1.0 / M)
    y = x
    f_x = objective(x)
    momentum = 1.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        z = project_simplex(y - step * 2.0 * (H @ y - b))
        f_z = objective(z)
        if f_z > f_x:
            # momentum overshoot: restart with a plain step from the best
            # point, which cannot increase the objective except by rounding
            momentum = 1.0
            z = project_simplex(x - step * 2.0 * (H @ x - b))
            f_z = objective(z)
            if f_z > f_x:
                converged = True
                break
        decrease = f_x - f_z
        momentum_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum**2))
        y = z + ((momentum - 1.0) / momentum_next) * (z - x)
        x, f_x = z, f_z
        momentum = momentum_next
        if decrease < tol * max(1.0, abs(f_x)):
            converged = True
            break
    return WeightVector(
        x, objective=float(criterion_value(c, x)), iterations=iterations, converged=converged
    )


def average(fits, w: WeightVector, grid: StrategyGrid | None = None, sigma2: float = float("nan")) -> AveragedModel:
    """Combine strategy fits into the averaged model sum_m w_m theta^(m)."""
    fits = tuple(fits)
    if len(fits) != w.M:
        raise ValueError(f"{len(fits)} fits but {w.M} weights")
    thetas = np.column_stack([f.theta_full for f in fits])
    return AveragedModel(weights=w, theta_avg=thetas @ w.w, grid=grid, sigma2=sigma2, fits=fits)


def build_criterion_data(fits, labeled: LabeledData, sigma2: float) -> CriterionData:
    fits = list(fits)
    D = np.column_stack([f.mu_hat for f in fits])
    t = np.array([f.hat_trace for f in fits])
    return CriterionData(D=D, t=t, Y=labeled.Y, sigma2=sigma2)


def fit_model_average(
    grid: StrategyGrid,
    fits,
    labeled: LabeledData,
    sigma2: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> AveragedModel:
    """Solve for the weights and assemble the averaged model.

    When ``sigma2`` is None it is estimated from the OLS residuals of the
    grid's largest candidate model.
    """
    fits = list(fits)
    if len(fits) != grid.M:
        raise ValueError(f"grid has M={grid.M} strategies but {len(fits)} fits were given")
    if sigma2 is None:
        sigma2 = estimate_sigma2(labeled, grid.largest_model())
    c = build_criterion_data(fits, labeled, sigma2)
    weights = solve_weights(c, tol=tol, max_iter=max_iter)
    return average(fits, weights, grid=grid, sigma2=sigma2)
