"""Joint prior over population, budding, and fluorescence parameters.

The marginal building blocks:

* cell-cycle length ``lam``: normal, mean 78.2 min, SD 18.2 min;
* S-phase start / bud emergence / S-phase end fractions ``(gamma1, beta,
  gamma2)``: Beta(2,18), Beta(2.4,17.6), Beta(7,13), jointly constrained to
  ``gamma1 < beta < gamma2``;
* velocity SD ``sigma_v``: inverse-gamma(12, 1);
* starting-position SD ``sigma_0``: inverse-gamma with shape 2 and mean
  78.2/3 (scale equals the mean since shape - 1 = 1);
* recovery length ``mu0``: exponential, mean 78.2;
* daughter offset ``delta``: exponential, mean 55;
* per-sample fluorescence parameters: ``alpha1_i`` and ``alpha2_i`` i.i.d.
  normal and ``log tau_i`` i.i.d. normal given population-level means and
  variances, which in turn carry conjugate normal / scaled-inverse-chi-square
  hyperpriors with location constants (-1.91, 7.58, 0.82), prior sample sizes
  kappa = 2, degrees of freedom nu = 2, and scales (0.13, 0.065, 0.0089).

The ordering constraint on ``(gamma1, beta, gamma2)`` is applied as an
indicator without renormalizing; the omitted constant is parameter-free, so
it cancels in MCMC and in Bayes factors between models sharing the block.
``log_ordering_constant`` estimates it for the rare cases where it does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.integrate import quad
from scipy.special import betaln, gammaln

from ._normal import norm_logpdf
from .budding import BuddingParams
from .flow import FlowHyper, FlowPerTime, FlowShared
from .population import CloccsParams

REJECTION_CAP = 10**6


@dataclass(frozen=True)
class PriorSpec:
    """Constants of the joint prior; defaults reproduce the reference analysis."""

    lambda_mean: float = 78.2
    lambda_sd: float = 18.2
    gamma1_ab: tuple[float, float] = (2.0, 18.0)
    beta_ab: tuple[float, float] = (2.4, 17.6)
    gamma2_ab: tuple[float, float] = (7.0, 13.0)
    sigma_v_shape: float = 12.0
    sigma_v_scale: float = 1.0
    sigma_0_shape: float = 2.0
    sigma_0_mean: float = 78.2 / 3.0
    mu0_mean: float = 78.2
    delta_mean: float = 55.0
    eta_tau: float = -1.91
    eta_a1: float = 7.58
    eta_a2: float = 0.82
    kappa_tau: float = 2.0
    kappa_a1: float = 2.0
    kappa_a2: float = 2.0
    nu_tau: float = 2.0
    nu_a1: float = 2.0
    nu_a2: float = 2.0
    gamma2_tau: float = 0.13
    gamma2_a1: float = 0.065
    gamma2_a2: float = 0.0089

    @property
    def sigma_0_scale(self) -> float:
        """Inverse-gamma scale implied by shape and mean (mean = scale/(shape-1))."""
        return self.sigma_0_mean * (self.sigma_0_shape - 1.0)


def _invgamma_logpdf(x: float, shape: float, scale: float) -> float:
    if x <= 0:
        return -math.inf
    return shape * math.log(scale) - gammaln(shape) - (shape + 1.0) * math.log(x) - scale / x


def _beta_logpdf(x: float, a: float, b: float) -> float:
    if not 0.0 < x < 1.0:
        return -math.inf
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - betaln(a, b)


def _exp_logpdf(x: float, mean: float) -> float:
    if x < 0:
        return -math.inf
    return -math.log(mean) - x / mean


def _scaled_inv_chi2_logpdf(x: float, nu: float, scale_sq: float) -> float:
    """Scaled inverse chi-square: equivalent inverse-gamma(nu/2, nu*scale_sq/2)."""
    return _invgamma_logpdf(x, nu / 2.0, nu * scale_sq / 2.0)


def check_support(
    theta: CloccsParams | None = None,
    beta: float | None = None,
    shared: FlowShared | None = None,
    per_time_list: list[FlowPerTime] | None = None,
    hyper: FlowHyper | None = None,
) -> tuple[bool, list[str]]:
    """Whether all invariants and ordering constraints hold; names violations."""
    bad: list[str] = []
    if theta is not None:
        if theta.mu0 < 0:
            bad.append("mu0")
        if theta.sigma0_sq < 0:
            bad.append("sigma0_sq")
        if theta.sigmav_sq < 0:
            bad.append("sigmav_sq")
        if theta.lam <= 0:
            bad.append("lambda")
        if theta.delta < 0:
            bad.append("delta")
    if beta is not None and not 0.0 < beta < 1.0:
        bad.append("beta")
    if shared is not None:
        if not 0.0 < shared.gamma1 < shared.gamma2 < 1.0:
            bad.append("gamma1/gamma2 ordering")
        if beta is not None and not shared.gamma1 < beta < shared.gamma2:
            bad.append("gamma1 < beta < gamma2")
    if per_time_list:
        for i, pt in enumerate(per_time_list):
            if pt.tau <= 0:
                bad.append(f"tau[{i}]")
            if pt.alpha2 <= 0:
                bad.append(f"alpha2[{i}]")
    if hyper is not None:
        for name in ("s2_tau", "s2_a1", "s2_a2"):
            if getattr(hyper, name) <= 0:
                bad.append(name)
    return (len(bad) == 0, bad)


def log_prior(
    theta: CloccsParams,
    beta: float,
    shared: FlowShared,
    per_time_list: list[FlowPerTime],
    hyper: FlowHyper | None,
    spec: PriorSpec = PriorSpec(),
) -> float:
    """Joint log prior density; -inf outside the support.

    ``hyper`` may be None only when ``per_time_list`` is empty (budding-only
    models carry no fluorescence hierarchy).  Densities are over the natural
    parameters; in particular the tau factors include the log-normal
    Jacobian.
    """
    ok, _ = check_support(theta, beta, shared, per_time_list, hyper)
    if not ok:
        return -math.inf

    lp = 0.0
    lp += float(norm_logpdf(theta.lam, spec.lambda_mean, spec.lambda_sd))
    lp += _exp_logpdf(theta.mu0, spec.mu0_mean)
    lp += _exp_logpdf(theta.delta, spec.delta_mean)
    lp += _invgamma_logpdf(math.sqrt(theta.sigma0_sq), spec.sigma_0_shape, spec.sigma_0_scale)
    lp += _invgamma_logpdf(math.sqrt(theta.sigmav_sq), spec.sigma_v_shape, spec.sigma_v_scale)
    lp += _beta_logpdf(shared.gamma1, *spec.gamma1_ab)
    lp += _beta_logpdf(beta, *spec.beta_ab)
    lp += _beta_logpdf(shared.gamma2, *spec.gamma2_ab)

    if per_time_list:
        if hyper is None:
            raise ValueError("hyperparameters are required when per-time parameters are present")
        sd_a1 = math.sqrt(hyper.s2_a1)
        sd_a2 = math.sqrt(hyper.s2_a2)
        sd_tau = math.sqrt(hyper.s2_tau)
        for pt in per_time_list:
            lp += float(norm_logpdf(pt.alpha1, hyper.mu_a1, sd_a1))
            lp += float(norm_logpdf(pt.alpha2, hyper.mu_a2, sd_a2))
            lp += float(norm_logpdf(math.log(pt.tau), hyper.mu_tau, sd_tau)) - math.log(pt.tau)
    if hyper is not None:
        lp += _scaled_inv_chi2_logpdf(hyper.s2_tau, spec.nu_tau, spec.gamma2_tau)
        lp += float(norm_logpdf(hyper.mu_tau, spec.eta_tau, math.sqrt(hyper.s2_tau / spec.kappa_tau)))
        lp += _scaled_inv_chi2_logpdf(hyper.s2_a1, spec.nu_a1, spec.gamma2_a1)
        lp += float(norm_logpdf(hyper.mu_a1, spec.eta_a1, math.sqrt(hyper.s2_a1 / spec.kappa_a1)))
        lp += _scaled_inv_chi2_logpdf(hyper.s2_a2, spec.nu_a2, spec.gamma2_a2)
        lp += float(norm_logpdf(hyper.mu_a2, spec.eta_a2, math.sqrt(hyper.s2_a2 / spec.kappa_a2)))
    return lp


def sample_constrained_fractions(
    spec: PriorSpec,
    rng: np.random.Generator,
    size: int = 1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw (gamma1, beta, gamma2) triples by rejection until ordered."""
    out1 = np.empty(size)
    outb = np.empty(size)
    out2 = np.empty(size)
    filled = 0
    tries = 0
    while filled < size:
        n = max(size - filled, 1024)
        tries += n
        if tries > REJECTION_CAP * max(size, 1):
            raise RuntimeError(
                f"ordering-constraint rejection sampler exceeded {REJECTION_CAP} tries per draw; "
                "check the Beta parameters"
            )
        g1 = rng.beta(*spec.gamma1_ab, size=n)
        b = rng.beta(*spec.beta_ab, size=n)
        g2 = rng.beta(*spec.gamma2_ab, size=n)
        keep = (g1 < b) & (b < g2)
        k = int(keep.sum())
        take = min(k, size - filled)
        out1[filled : filled + take] = g1[keep][:take]
        outb[filled : filled + take] = b[keep][:take]
        out2[filled : filled + take] = g2[keep][:take]
        filled += take
    return out1, outb, out2


def sample_prior(
    spec: PriorSpec,
    rng: np.random.Generator,
    n_times: int = 0,
) -> tuple[CloccsParams, BuddingParams, FlowShared, list[FlowPerTime], FlowHyper | None]:
    """One joint draw; the hierarchy is sampled top-down.

    ``n_times`` per-sample fluorescence parameter triples are drawn; with
    ``n_times == 0`` no hyperparameters are returned.
    """
    lam = 0.0
    while lam <= 0:
        lam = rng.normal(spec.lambda_mean, spec.lambda_sd)
    mu0 = rng.exponential(spec.mu0_mean)
    delta = rng.exponential(spec.delta_mean)
    sigma_0 = spec.sigma_0_scale / rng.gamma(spec.sigma_0_shape)
    sigma_v = spec.sigma_v_scale / rng.gamma(spec.sigma_v_shape)
    g1, b, g2 = sample_constrained_fractions(spec, rng, size=1)
    theta = CloccsParams(mu0=mu0, sigma0_sq=sigma_0**2, sigmav_sq=sigma_v**2, lam=lam, delta=delta)
    budding = BuddingParams(beta=float(b[0]))
    shared = FlowShared(gamma1=float(g1[0]), gamma2=float(g2[0]))

    if n_times == 0:
        return theta, budding, shared, [], None

    s2_tau = spec.nu_tau * spec.gamma2_tau / rng.chisquare(spec.nu_tau)
    mu_tau = rng.normal(spec.eta_tau, math.sqrt(s2_tau / spec.kappa_tau))
    s2_a1 = spec.nu_a1 * spec.gamma2_a1 / rng.chisquare(spec.nu_a1)
    mu_a1 = rng.normal(spec.eta_a1, math.sqrt(s2_a1 / spec.kappa_a1))
    s2_a2 = spec.nu_a2 * spec.gamma2_a2 / rng.chisquare(spec.nu_a2)
    mu_a2 = rng.normal(spec.eta_a2, math.sqrt(s2_a2 / spec.kappa_a2))
    hyper = FlowHyper(mu_tau=mu_tau, s2_tau=s2_tau, mu_a1=mu_a1, s2_a1=s2_a1, mu_a2=mu_a2, s2_a2=s2_a2)

    per_time = []
    for _ in range(n_times):
        a1 = rng.normal(mu_a1, math.sqrt(s2_a1))
        a2 = 0.0
        for _ in range(REJECTION_CAP):
            a2 = rng.normal(mu_a2, math.sqrt(s2_a2))
            if a2 > 0:
                break
        else:
            raise RuntimeError("could not draw a positive alpha2")
        tau = math.exp(rng.normal(mu_tau, math.sqrt(s2_tau)))
        per_time.append(FlowPerTime(alpha1=a1, alpha2=a2, tau=tau))
    return theta, budding, shared, per_time, hyper


_ordering_constant_cache: dict[tuple, float] = {}


def log_ordering_constant(spec: PriorSpec = PriorSpec()) -> float:
    """log P(gamma1 < beta < gamma2) under the independent Beta marginals.

    Computed once per parameter set by quadrature over beta and cached.
    Needed only when comparing models that do not share the constrained
    block; within the nested-model lattice it cancels.
    """
    key = (spec.gamma1_ab, spec.beta_ab, spec.gamma2_ab)
    if key not in _ordering_constant_cache:
        d1 = stats.beta(*spec.gamma1_ab)
        db = stats.beta(*spec.beta_ab)
        d2 = stats.beta(*spec.gamma2_ab)
        val, err = quad(lambda b: db.pdf(b) * d1.cdf(b) * d2.sf(b), 0.0, 1.0, epsabs=1e-12, limit=200)
        if err > 1e-8:
            raise RuntimeError(f"ordering-constant quadrature error too large: {err:.2e}")
        _ordering_constant_cache[key] = math.log(val)
    return _ordering_constant_cache[key]
