"""Simulation study: data-generating process, replication loop and
relative out-of-sample error aggregation.

The DGP draws covariate vectors from N(0, Sigma) with Sigma_ij = rho^|i-j|
and outcomes Y = X* theta + eps.  Only the first q covariates are exposed
to the estimators; pseudo-labels come from noisy oracles that see the full
true mean.  Every replication is keyed by splitmix64(seed XOR rep), so
replications are independent and order-insensitive.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import toeplitz

from . import baselines
from .data import LabeledData, UnlabeledData
from .fitting import fit_grid, predict
from .predictors import NoisyOracle, compute_pseudo_labels
from .rng import generator, substream_seed
from .strategies import build_nested_models, coefficient_pvalues, enumerate_strategies

# substream ids within one replication
STREAM_LABELED = 0
STREAM_UNLABELED = 1
STREAM_TEST = 2
STREAM_NOISE = 3
STREAM_PREDICTORS = 4

DEFAULT_LAMBDAS = (0.0, 0.25, 0.5, 0.75, 1.0)

# (mu, sigma) of the per-row pseudo-label noise for each oracle, by scenario
CASE_ORACLES = {
    "I": (("ML1", 1.0, 0.75), ("ML2", -0.5, 0.5)),
    "II": (("ML1", 0.5, 0.25), ("ML2", -0.5, 0.5)),
}


@dataclass(frozen=True)
class DgpConfig:
    """Design of one simulation scenario.

    ``theta_base`` is the full p-vector of true coefficients; ``alpha``,
    when given, overrides its last entry (0 makes the largest candidate
    model correctly specified).  ``r2`` rescales the signal so that
    Var(X'theta) / Var(Y) hits the target; None skips the rescaling.
    ``q`` covariates are observed (default p - 1).
    """

    n: int = 50
    N: int = 500
    n_test: int | None = None
    p: int = 6
    q: int | None = None
    rho: float = 0.5
    theta_base: tuple[float, ...] = (1.0, -1.1, 0.2, -0.025, 0.0, 0.1)
    alpha: float | None = None
    sigma_eps: float = 1.0
    r2: float | None = 0.5
    r2_mode: str = "scale_theta"
    case: str = "I"
    seed: int = 0
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta_base", tuple(float(t) for t in self.theta_base))
        if len(self.theta_base) != self.p:
            raise ValueError(f"theta_base has {len(self.theta_base)} entries, expected p={self.p}")
        if self.observed_q > self.p:
            raise ValueError(f"q={self.observed_q} exceeds p={self.p}")
        if self.observed_q < 1 or self.n < 1 or self.N < 1:
            raise ValueError("n, N and q must be positive")
        if self.r2 is not None and not 0.0 < self.r2 < 1.0:
            raise ValueError(f"r2 must be in (0, 1), got {self.r2}")
        if self.r2_mode not in ("scale_theta", "scale_noise"):
            raise ValueError(f"unknown r2_mode {self.r2_mode!r}")
        if self.case not in CASE_ORACLES:
            raise ValueError(f"unknown case {self.case!r}; choose from {sorted(CASE_ORACLES)}")
        if self.sigma_eps < 0:
            raise ValueError("sigma_eps must be nonnegative")

    @property
    def observed_q(self) -> int:
        return self.q if self.q is not None else self.p - 1

    @property
    def test_rows(self) -> int:
        return self.n_test if self.n_test is not None else self.n

    def theta(self) -> np.ndarray:
        theta = np.array(self.theta_base)
        if self.alpha is not None:
            theta[-1] = self.alpha
        return theta

    def covariance(self) -> np.ndarray:
        return toeplitz(self.rho ** np.arange(self.p))

    def model_sizes(self) -> tuple[int, ...]:
        return self.sizes if self.sizes is not None else tuple(range(1, self.observed_q + 1))


@dataclass(frozen=True)
class ReplicationResult:
    """Per-replication method errors plus provenance."""

    rep_index: int
    omse_by_method: dict[str, float]
    weights_puma: np.ndarray
    seed_used: int
    # distance between the averaged coefficients and the first q true ones
    puma_theta_error: float = float("nan")

    def __post_init__(self):
        for method, value in self.omse_by_method.items():
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"bad OMSE for {method}: {value}")


def gen_design(cfg: DgpConfig, rows: int, stream) -> np.ndarray:
    """rows x p draws from N(0, Sigma); deterministic per (cfg.seed, stream)."""
    if rows < 1:
        raise ValueError("rows must be positive")
    sigma = cfg.covariance()
    chol = np.linalg.cholesky(sigma)  # |rho| < 1 keeps Sigma positive definite
    stream = (stream,) if np.isscalar(stream) else tuple(stream)
    Z = generator(cfg.seed, *stream).standard_normal((rows, cfg.p))
    return Z @ chol.T


def scale_theta_for_r2(theta, Sigma, r2: float, sigma2: float) -> np.ndarray:
    """Rescale theta so that Var(X'theta) / (Var(X'theta) + sigma2) = r2."""
    theta = np.asarray(theta, dtype=np.float64)
    signal = float(theta @ (Sigma @ theta))
    if signal <= 0:
        raise ValueError("theta carries no signal: theta' Sigma theta = 0")
    if not 0.0 < r2 < 1.0:
        raise ValueError(f"r2 must be in (0, 1), got {r2}")
    c = np.sqrt(r2 * sigma2 / ((1.0 - r2) * signal))
    return c * theta


def _resolve_dgp(cfg: DgpConfig) -> tuple[np.ndarray, float]:
    """Effective (theta, noise std) after the requested R^2 adjustment."""
    theta = cfg.theta()
    sigma_eps = cfg.sigma_eps
    if cfg.r2 is None:
        return theta, sigma_eps
    Sigma = cfg.covariance()
    if cfg.r2_mode == "scale_theta":
        return scale_theta_for_r2(theta, Sigma, cfg.r2, sigma_eps**2), sigma_eps
    signal = float(theta @ (Sigma @ theta))
    if signal <= 0:
        raise ValueError("theta carries no signal: theta' Sigma theta = 0")
    return theta, float(np.sqrt(signal * (1.0 - cfg.r2) / cfg.r2))


def make_oracles(cfg: DgpConfig, theta, rep_seed: int) -> list[NoisyOracle]:
    """Case-specific noisy oracles; per-replication seeds keep their draws
    independent across replications."""
    oracles = []
    for k, (pid, mu, sd) in enumerate(CASE_ORACLES[cfg.case]):
        oracles.append(
            NoisyOracle(
                id=pid,
                theta=tuple(theta),
                mu_eps=mu,
                sigma_eps=sd,
                seed=substream_seed(rep_seed, STREAM_PREDICTORS + k),
            )
        )
    return oracles


def run_replication(cfg: DgpConfig, rep: int, methods=None) -> ReplicationResult:
    """One full replication: draw data, build the grid, run every method,
    and score out-of-sample error against the true mean function."""
    rep_seed = substream_seed(cfg.seed, rep)
    cfg_r = replace(cfg, seed=rep_seed)
    theta, sigma_eps = _resolve_dgp(cfg_r)
    q = cfg_r.observed_q

    X_star = gen_design(cfg_r, cfg_r.n, STREAM_LABELED)
    Xt_star = gen_design(cfg_r, cfg_r.N, STREAM_UNLABELED)
    Xtest_star = gen_design(cfg_r, cfg_r.test_rows, STREAM_TEST)
    eps = generator(rep_seed, STREAM_NOISE).normal(0.0, sigma_eps, cfg_r.n)
    Y = X_star @ theta + eps

    labeled = LabeledData(X_star[:, :q], Y)
    unlabeled = UnlabeledData(Xt_star[:, :q], labeled.column_names)
    X_test = Xtest_star[:, :q]
    mu_test = Xtest_star @ theta

    oracles = make_oracles(cfg_r, theta, rep_seed)
    # oracles consume the full true design, estimators only the observed part
    pseudo = {o.id: (o.predict(X_star), o.predict(Xt_star)) for o in oracles}

    pvalues = coefficient_pvalues(labeled)
    models = build_nested_models(pvalues, cfg_r.model_sizes())
    grid = enumerate_strategies(models, cfg_r.lambdas, [o.id for o in oracles])
    fits = fit_grid(grid, labeled, unlabeled, pseudo)

    try:
        results = baselines.run_all_methods(grid, fits, labeled, unlabeled, pseudo, methods=methods)
    except Exception as exc:
        raise RuntimeError(f"replication {rep} failed: {exc}") from exc

    omse = {}
    for method, res in results.items():
        mu_hat_test = predict(res.model.theta_avg, X_test)
        omse[method] = float(np.mean((mu_hat_test - mu_test) ** 2))
    puma_weights = results[baselines.PUMA].model.weights.w if baselines.PUMA in results else np.array([])
    theta_err = (
        float(np.linalg.norm(results[baselines.PUMA].model.theta_avg - theta[:q]))
        if baselines.PUMA in results
        else float("nan")
    )
    return ReplicationResult(
        rep_index=rep,
        omse_by_method=omse,
        weights_puma=puma_weights,
        seed_used=rep_seed,
        puma_theta_error=theta_err,
    )


def run_experiment(cfg: DgpConfig, replications: int, methods=None, threads: int = 1):
    """Run ``replications`` independent replications (optionally in a
    process pool); results come back ordered by replication index either way.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_replication, cfg, rep, methods) for rep in range(replications)]
            return [f.result() for f in futures]
    return [run_replication(cfg, rep, methods) for rep in range(replications)]


def aggregate(results, reference: str = baselines.PUMA) -> list[dict]:
    """Summarize replications into one row per method.

    ``relative_omse`` is mean OMSE divided by the reference method's mean
    OMSE (ratio of means); ``mean_ratio`` is the mean of per-replication
    ratios, reported for sensitivity.
    """
    results = list(results)
    if not results:
        raise ValueError("no replication results to aggregate")
    methods = list(results[0].omse_by_method)
    for r in results:
        if reference not in r.omse_by_method:
            raise ValueError(f"reference {reference!r} missing from replication {r.rep_index}")
    per_method = {m: np.array([r.omse_by_method[m] for r in results]) for m in methods}
    ref_mean = per_method[reference].mean()
    if ref_mean == 0:
        raise ValueError("reference method has zero mean OMSE; ratios undefined")
    rows = []
    n_rep = len(results)
    for m in methods:
        vals = per_method[m]
        se = float(vals.std(ddof=1) / np.sqrt(n_rep)) if n_rep > 1 else 0.0
        rows.append(
            {
                "method": m,
                "mean_omse": float(vals.mean()),
                "se_omse": se,
                "relative_omse": float(vals.mean() / ref_mean),
                "mean_ratio": float(np.mean(vals / per_method[reference])),
                "note": baselines.method_note(m) or "",
            }
        )
    return rows
