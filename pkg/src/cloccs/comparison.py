"""Marginal likelihoods, Bayes factors, and fit RMSE over nested submodels.

Marginal likelihoods are estimated by importance sampling with a
100-degrees-of-freedom multivariate t density moment-matched to an MCMC
sample of the posterior.  The t density is built on the unconstrained
sampling scale (where the posterior is closest to Gaussian and the support
is the whole space); draws that map outside the ordering constraint get
weight zero.  Log Bayes factors are differences of log marginal
likelihoods, larger model in the numerator.

Because every model in the nested lattice shares the constrained
``(gamma1, beta, gamma2)`` prior block, its unnormalized constant cancels
from all Bayes factors; absolute log marginal values are shifted by the
same parameter-free amount.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, logsumexp

from .budding import BuddingDataset, fitted_budding_curve
from .mcmc import Chain, SamplerConfig, run_chain
from .model import FULL_MODEL, CloccsModel, SubmodelSpec
from .population import ModelConfig
from .priors import PriorSpec

SUBMODEL_LATTICE = [
    SubmodelSpec(),
    SubmodelSpec(fix_mu0=True),
    SubmodelSpec(fix_delta=True),
    SubmodelSpec(fix_sigma0=True),
    SubmodelSpec(fix_mu0=True, fix_delta=True),
    SubmodelSpec(fix_mu0=True, fix_sigma0=True),
    SubmodelSpec(fix_delta=True, fix_sigma0=True),
    SubmodelSpec(fix_mu0=True, fix_delta=True, fix_sigma0=True),
]


@dataclass(frozen=True)
class MarginalEstimate:
    """Importance-sampling estimate of a log marginal likelihood.

    ``weight_variance`` is the sample variance of the normalized weights
    (weights divided by their mean) and ``ess = (sum w)^2 / sum w^2``.
    ``mc_se`` is the delta-method Monte Carlo standard error of ``log_ml``.
    """

    log_ml: float
    weight_variance: float
    ess: float
    n_draws: int
    mc_se: float

    def __post_init__(self):
        if self.ess > self.n_draws + 1e-9:
            raise ValueError("ESS cannot exceed the number of draws")


class MultivariateT:
    """Multivariate Student t with sampling and log-density evaluation."""

    def __init__(self, mean: np.ndarray, cov: np.ndarray, df: float = 100.0):
        self.mean = np.asarray(mean, dtype=float)
        self.df = float(df)
        d = self.mean.size
        cov = np.asarray(cov, dtype=float).reshape(d, d)
        jitter = 0.0
        for _ in range(3):
            try:
                self._chol = np.linalg.cholesky(cov + jitter * np.eye(d))
                break
            except np.linalg.LinAlgError:
                jitter = max(jitter * 10.0, 1e-10)
        else:
            raise np.linalg.LinAlgError("covariance not positive definite within jitter tolerance")
        self.cov = cov + jitter * np.eye(d)
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(self._chol))))
        self.dim = d

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        u = rng.chisquare(self.df, size=n) / self.df
        return self.mean + (z @ self._chol.T) / np.sqrt(u)[:, None]

    def log_density(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d, nu = self.dim, self.df
        y = solve_triangular(self._chol, (x - self.mean).T, lower=True)
        maha = np.sum(y * y, axis=0)
        out = (
            gammaln((nu + d) / 2.0)
            - gammaln(nu / 2.0)
            - 0.5 * d * math.log(nu * math.pi)
            - 0.5 * self._logdet
            - 0.5 * (nu + d) * np.log1p(maha / nu)
        )
        return out


def build_importance_density(draws: np.ndarray, df: float = 100.0) -> MultivariateT:
    """t density moment-matched to a sample (rows = draws)."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    mean = draws.mean(axis=0)
    cov = np.cov(draws, rowvar=False).reshape(mean.size, mean.size)
    return MultivariateT(mean, cov, df=df)


def estimate_log_marginal_from_logw(log_w: np.ndarray) -> MarginalEstimate:
    """Turn importance log weights (``-inf`` allowed) into an estimate."""
    log_w = np.asarray(log_w, dtype=float)
    n = log_w.size
    finite = np.isfinite(log_w)
    if not finite.any():
        raise RuntimeError("importance sampling failed: all weights are zero")
    lse = float(logsumexp(log_w[finite]))
    log_ml = lse - math.log(n)
    # Normalized weights w_i / mean(w); zero-weight draws included.
    wn = np.zeros(n)
    wn[finite] = np.exp(log_w[finite] - lse) * n
    weight_variance = float(wn.var(ddof=1))
    ess = float((wn.sum() ** 2) / np.sum(wn**2))
    mc_se = math.sqrt(weight_variance / n)
    return MarginalEstimate(log_ml=log_ml, weight_variance=weight_variance, ess=ess, n_draws=n, mc_se=mc_se)


def estimate_log_marginal(
    model: CloccsModel,
    chain: Chain,
    n_draws: int = 10_000,
    rng: np.random.Generator | None = None,
    df: float = 100.0,
) -> MarginalEstimate:
    """Importance-sampled log marginal likelihood of ``model``'s data.

    The importance density is a ``df``-degrees-of-freedom t fitted to the
    chain on the sampling scale.  Weights are likelihood times prior over
    importance density, all expressed on the sampling scale, so the quoted
    value is the marginal of the data (up to the shared ordering-block
    constant; see module docstring).
    """
    if rng is None:
        rng = np.random.default_rng(chain.seed + 1)
    x_rows = np.array([model.sampling_vector_from_natural(row) for row in chain.draws])
    q = build_importance_density(x_rows, df=df)
    xs = q.sample(n_draws, rng)
    log_q = q.log_density(xs)
    log_w = np.empty(n_draws)
    for i in range(n_draws):
        st = model.make_state(xs[i])
        log_w[i] = st.logpost - log_q[i] if math.isfinite(st.logpost) else -math.inf
    return estimate_log_marginal_from_logw(log_w)


def log_bayes_factor(est_larger: MarginalEstimate, est_smaller: MarginalEstimate) -> float:
    """Natural-log Bayes factor, larger model in the numerator."""
    return est_larger.log_ml - est_smaller.log_ml


def budding_rmse(
    draws: np.ndarray,
    names: list[str],
    data: BuddingDataset,
    config: ModelConfig,
    n_draws: int = 1000,
) -> tuple[float, float]:
    """Mean and SD over posterior draws of the fitted-curve RMSE (percent).

    For each draw the budded-probability curve is evaluated on the data's
    time grid and compared against the observed percent budded.
    """
    if draws.shape[0] == 0:
        raise ValueError("empty draw sample")
    from .model import _make_theta

    take = min(n_draws, draws.shape[0])
    idx = np.linspace(0, draws.shape[0] - 1, take).astype(int)
    obs_pct = 100.0 * data.observed_fraction()
    col = {n: j for j, n in enumerate(names)}
    rmses = np.empty(take)
    for k, i in enumerate(idx):
        row = draws[i]
        theta = _make_theta(
            mu0=row[col["mu0"]] if "mu0" in col else 0.0,
            sigma0_sq=(row[col["sigma0"]] ** 2) if "sigma0" in col else 0.0,
            sigmav_sq=row[col["sigmav"]] ** 2,
            lam=row[col["lambda"]],
            delta=row[col["delta"]] if "delta" in col else 0.0,
        )
        curve = 100.0 * fitted_budding_curve(theta, row[col["beta"]], data.times, config)
        rmses[k] = math.sqrt(float(np.mean((curve - obs_pct) ** 2)))
    return float(rmses.mean()), float(rmses.std(ddof=1))


@dataclass(frozen=True)
class LatticeResult:
    """Marginal estimates, chains, and RMSE rows for the submodel lattice."""

    submodels: list[SubmodelSpec]
    estimates: list[MarginalEstimate]
    rmse_mean: list[float]
    rmse_sd: list[float]

    def log_bf(self, larger: int, smaller: int) -> float:
        return log_bayes_factor(self.estimates[larger], self.estimates[smaller])

    def bf_matrix(self) -> np.ndarray:
        """lBF(column model over row model) where the row nests in the column."""
        n = len(self.submodels)
        out = np.full((n, n), np.nan)
        for i, row in enumerate(self.submodels):
            fixed_row = self._fixed_set(row)
            for j, colm in enumerate(self.submodels):
                fixed_col = self._fixed_set(colm)
                if fixed_col <= fixed_row:
                    out[i, j] = self.log_bf(j, i)
        return out

    @staticmethod
    def _fixed_set(sm: SubmodelSpec) -> frozenset:
        out = set()
        if sm.fix_mu0:
            out.add("mu0")
        if sm.fix_sigma0:
            out.add("sigma0")
        if sm.fix_delta:
            out.add("delta")
        return frozenset(out)


def compare_submodels(
    budding_data: BuddingDataset | None,
    flow_data=None,
    prior_spec: PriorSpec = PriorSpec(),
    config: ModelConfig = ModelConfig(),
    sampler_config: SamplerConfig | None = None,
    submodels: list[SubmodelSpec] | None = None,
    n_importance: int = 10_000,
    seed: int = 0,
    rmse_draws: int = 1000,
) -> tuple[LatticeResult, list[Chain]]:
    """Fit every submodel, estimate marginals, and collect RMSE rows.

    Each submodel gets its own MCMC run (seeded deterministically from
    ``seed``) to tune its importance density, then ``n_importance``
    importance draws for the marginal.
    """
    if submodels is None:
        submodels = list(SUBMODEL_LATTICE)
    if sampler_config is None:
        sampler_config = SamplerConfig.reduced(seed=seed)
    estimates = []
    chains = []
    rmse_mean = []
    rmse_sd = []
    for k, sm in enumerate(submodels):
        model = CloccsModel(
            budding_data=budding_data,
            flow_data=flow_data,
            prior_spec=prior_spec,
            config=config,
            submodel=sm,
        )
        cfg_k = SamplerConfig(
            iterations=sampler_config.iterations,
            thin=sampler_config.thin,
            burn_in=sampler_config.burn_in,
            seed=sampler_config.seed + 1000 * k,
            target_acceptance=sampler_config.target_acceptance,
            adapt_window=sampler_config.adapt_window,
            adapt_factor=sampler_config.adapt_factor,
        )
        chain = run_chain(model, cfg_k)
        est = estimate_log_marginal(model, chain, n_draws=n_importance, rng=np.random.default_rng(seed + 7000 + k))
        estimates.append(est)
        chains.append(chain)
        if budding_data is not None:
            m, sd = budding_rmse(chain.draws, chain.names, budding_data, config, n_draws=rmse_draws)
        else:
            m, sd = math.nan, math.nan
        rmse_mean.append(m)
        rmse_sd.append(sd)
    return LatticeResult(submodels=submodels, estimates=estimates, rmse_mean=rmse_mean, rmse_sd=rmse_sd), chains
