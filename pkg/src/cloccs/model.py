"""Joint posterior target: parameter space, transforms, and cached state.

Free parameters are sampled on unconstrained coordinates (log for positive
quantities, logit for cell-cycle fractions) with the prior density carrying
the change-of-variables terms.  Blocks:

* ``structural`` -- the population parameters plus the bud-emergence and
  S-phase fractions, proposed jointly with an adapted covariance (a full
  likelihood recompute per proposal);
* ``flow_nuisance`` -- per-sample ``(alpha1, log alpha2, log tau)`` triples,
  conditionally independent given everything else, proposed and accepted
  per sample in one vectorized batch;
* ``hyper_*`` -- the three (mean, log variance) hyperparameter pairs, which
  touch only the prior.

Chains record natural-scale values; ``sigma0``/``sigmav`` columns are the
standard deviations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import _kernels as K
from ._normal import norm_logpdf
from .budding import BuddingDataset, BuddingParams, budding_log_likelihood
from .flow import FlowDataset, FlowHyper, FlowPerTime, FlowShared, flow_log_likelihood
from .mcmc import BlockSpec
from .population import CloccsParams, ModelConfig
from .priors import (
    PriorSpec,
    _beta_logpdf,
    _exp_logpdf,
    _invgamma_logpdf,
    _scaled_inv_chi2_logpdf,
    check_support,
    sample_prior,
)

_CLIP = 600.0  # exp() guard for wild proposals


@dataclass(frozen=True)
class SubmodelSpec:
    """Nested-model flags: each fixes one asynchrony source to zero."""

    fix_mu0: bool = False
    fix_sigma0: bool = False
    fix_delta: bool = False

    @property
    def label(self) -> str:
        parts = []
        if self.fix_mu0:
            parts.append("mu0=0")
        if self.fix_delta:
            parts.append("delta=0")
        if self.fix_sigma0:
            parts.append("sigma0^2=0")
        return ",".join(parts) if parts else "full"


FULL_MODEL = SubmodelSpec()


def _make_theta(mu0: float, sigma0_sq: float, sigmav_sq: float, lam: float, delta: float) -> CloccsParams:
    if sigma0_sq > 0.0:
        return CloccsParams(mu0=mu0, sigma0_sq=sigma0_sq, sigmav_sq=sigmav_sq, lam=lam, delta=delta)
    # Point-mass starting position of reduced submodels bypasses the
    # positive-variance constructor check.
    theta = CloccsParams.__new__(CloccsParams)
    object.__setattr__(theta, "mu0", mu0)
    object.__setattr__(theta, "sigma0_sq", sigma0_sq)
    object.__setattr__(theta, "sigmav_sq", sigmav_sq)
    object.__setattr__(theta, "lam", lam)
    object.__setattr__(theta, "delta", delta)
    return theta


def log_posterior(
    theta: CloccsParams,
    beta: float,
    shared: FlowShared,
    per_time_list: list[FlowPerTime],
    hyper: FlowHyper | None,
    budding_data: BuddingDataset | None = None,
    flow_data: FlowDataset | None = None,
    prior_spec: PriorSpec = PriorSpec(),
    config: ModelConfig = ModelConfig(),
) -> float:
    """Log prior plus whichever data log likelihoods are present.

    Reference implementation built on the unaccelerated likelihoods; the
    sampler uses :class:`CloccsModel`, which is tested against this.
    """
    from .priors import log_prior

    lp = log_prior(theta, beta, shared, per_time_list, hyper, prior_spec)
    if not math.isfinite(lp):
        return -math.inf
    if budding_data is not None:
        lp += budding_log_likelihood(theta, beta, budding_data, config)
    if flow_data is not None:
        lp += flow_log_likelihood(theta, shared, per_time_list, flow_data, config)
    return lp


@dataclass
class _State:
    x: np.ndarray
    lp: float
    bud_ll: float
    flow_lls: np.ndarray
    logpost: float


class CloccsModel:
    """Sampler target for a (sub)model fit to budding and/or flow data."""

    def __init__(
        self,
        budding_data: BuddingDataset | None = None,
        flow_data: FlowDataset | None = None,
        prior_spec: PriorSpec = PriorSpec(),
        config: ModelConfig = ModelConfig(),
        submodel: SubmodelSpec = FULL_MODEL,
    ):
        if budding_data is None and flow_data is None:
            raise ValueError("need at least one dataset")
        self.budding_data = budding_data
        self.flow_data = flow_data
        self.prior_spec = prior_spec
        self.config = config
        self.submodel = submodel

        self._structural: list[tuple[str, str]] = []  # (natural name, transform)
        if not submodel.fix_mu0:
            self._structural.append(("mu0", "log"))
        if not submodel.fix_delta:
            self._structural.append(("delta", "log"))
        if not submodel.fix_sigma0:
            self._structural.append(("sigma0", "log"))
        self._structural.append(("sigmav", "log"))
        self._structural.append(("lambda", "log"))
        self._structural.append(("beta", "logit"))
        self._structural.append(("gamma1", "logit"))
        self._structural.append(("gamma2", "logit"))

        self.n_times = len(flow_data) if flow_data is not None else 0
        names = [n for n, _ in self._structural]
        for t in (flow_data.times if flow_data is not None else []):
            label = f"{t:g}"
            names += [f"alpha1_t{label}", f"alpha2_t{label}", f"tau_t{label}"]
        if self.n_times:
            names += ["mu_alpha1", "s2_alpha1", "mu_alpha2", "s2_alpha2", "mu_tau", "s2_tau"]
        self.names = names
        self.n_structural = len(self._structural)
        self.dim = len(names)

        if budding_data is not None:
            self._bud_t = budding_data.times.astype(float)
            self._bud_b = budding_data.budded.astype(float)
            self._bud_n = budding_data.total.astype(float)
        if flow_data is not None:
            fs, cs, offs = [], [], [0]
            for i in range(self.n_times):
                f, cnt = flow_data.channel_values(i)
                fs.append(f)
                cs.append(cnt)
                offs.append(offs[-1] + f.size)
            self._flow_t = flow_data.times.astype(float)
            self._f_flat = np.concatenate(fs) if fs else np.empty(0)
            self._c_flat = np.concatenate(cs) if cs else np.empty(0)
            self._offsets = np.asarray(offs, dtype=np.int64)

    # -- coordinate mapping ------------------------------------------------

    def _structural_values(self, x: np.ndarray) -> dict[str, float]:
        vals: dict[str, float] = {
            "mu0": 0.0 if self.submodel.fix_mu0 else math.nan,
            "delta": 0.0 if self.submodel.fix_delta else math.nan,
            "sigma0": 0.0 if self.submodel.fix_sigma0 else math.nan,
        }
        for j, (name, tr) in enumerate(self._structural):
            xi = float(x[j])
            vals[name] = math.exp(min(xi, _CLIP)) if tr == "log" else float(expit(xi))
        return vals

    def _nuisance_values(self, x: np.ndarray):
        base = self.n_structural
        block = x[base : base + 3 * self.n_times].reshape(self.n_times, 3)
        a1 = block[:, 0].copy()
        a2 = np.exp(np.minimum(block[:, 1], _CLIP))
        tau = np.exp(np.minimum(block[:, 2], _CLIP))
        return a1, a2, tau

    def _hyper_values(self, x: np.ndarray):
        h = x[self.n_structural + 3 * self.n_times :]
        return {
            "mu_a1": float(h[0]),
            "s2_a1": math.exp(min(float(h[1]), _CLIP)),
            "mu_a2": float(h[2]),
            "s2_a2": math.exp(min(float(h[3]), _CLIP)),
            "mu_tau": float(h[4]),
            "s2_tau": math.exp(min(float(h[5]), _CLIP)),
        }

    def natural_row(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim)
        s = self._structural_values(x)
        for j, (name, _) in enumerate(self._structural):
            out[j] = s[name]
        if self.n_times:
            a1, a2, tau = self._nuisance_values(x)
            base = self.n_structural
            out[base : base + 3 * self.n_times : 3] = a1
            out[base + 1 : base + 3 * self.n_times : 3] = a2
            out[base + 2 : base + 3 * self.n_times : 3] = tau
            h = self._hyper_values(x)
            out[-6:] = [h["mu_a1"], h["s2_a1"], h["mu_a2"], h["s2_a2"], h["mu_tau"], h["s2_tau"]]
        return out

    def sampling_vector(
        self,
        theta: CloccsParams,
        beta: float,
        shared: FlowShared,
        per_time_list: list[FlowPerTime] | None = None,
        hyper: FlowHyper | None = None,
    ) -> np.ndarray:
        """Natural-scale parameters packed onto the sampling scale."""
        natural = {
            "mu0": theta.mu0,
            "delta": theta.delta,
            "sigma0": math.sqrt(theta.sigma0_sq),
            "sigmav": math.sqrt(theta.sigmav_sq),
            "lambda": theta.lam,
            "beta": beta,
            "gamma1": shared.gamma1,
            "gamma2": shared.gamma2,
        }
        x = np.empty(self.dim)
        for j, (name, tr) in enumerate(self._structural):
            v = natural[name]
            x[j] = math.log(v) if tr == "log" else math.log(v / (1.0 - v))
        if self.n_times:
            if per_time_list is None or hyper is None:
                raise ValueError("flow fits need per-time parameters and hyperparameters")
            base = self.n_structural
            for i, pt in enumerate(per_time_list):
                x[base + 3 * i] = pt.alpha1
                x[base + 3 * i + 1] = math.log(pt.alpha2)
                x[base + 3 * i + 2] = math.log(pt.tau)
            x[-6:] = [
                hyper.mu_a1,
                math.log(hyper.s2_a1),
                hyper.mu_a2,
                math.log(hyper.s2_a2),
                hyper.mu_tau,
                math.log(hyper.s2_tau),
            ]
        return x

    def sampling_vector_from_natural(self, row: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`natural_row` (chain rows back to sampling coords)."""
        row = np.asarray(row, dtype=float)
        x = np.empty(self.dim)
        for j, (_, tr) in enumerate(self._structural):
            v = row[j]
            x[j] = math.log(v) if tr == "log" else math.log(v / (1.0 - v))
        if self.n_times:
            base = self.n_structural
            for i in range(self.n_times):
                x[base + 3 * i] = row[base + 3 * i]
                x[base + 3 * i + 1] = math.log(row[base + 3 * i + 1])
                x[base + 3 * i + 2] = math.log(row[base + 3 * i + 2])
            h = row[-6:]
            x[-6:] = [h[0], math.log(h[1]), h[2], math.log(h[3]), h[4], math.log(h[5])]
        return x

    # -- prior on the sampling scale ----------------------------------------

    def _per_time_prior_terms(self, x: np.ndarray) -> np.ndarray:
        """Per-sample prior contribution (with Jacobians) of each nuisance triple."""
        a1, a2, _ = self._nuisance_values(x)
        base = self.n_structural
        la2 = x[base + 1 : base + 3 * self.n_times : 3]
        ltau = x[base + 2 : base + 3 * self.n_times : 3]
        h = self._hyper_values(x)
        terms = norm_logpdf(a1, h["mu_a1"], math.sqrt(h["s2_a1"]))
        terms = terms + norm_logpdf(a2, h["mu_a2"], math.sqrt(h["s2_a2"])) + la2
        terms = terms + norm_logpdf(ltau, h["mu_tau"], math.sqrt(h["s2_tau"]))
        return terms

    def log_prior_sampling(self, x: np.ndarray) -> float:
        """Joint log prior in sampling coordinates (Jacobians included)."""
        spec = self.prior_spec
        s = self._structural_values(x)
        if not s["gamma1"] < s["beta"] < s["gamma2"]:
            return -math.inf
        lp = 0.0
        for j, (name, tr) in enumerate(self._structural):
            xi = float(x[j])
            v = s[name]
            if name == "mu0":
                lp += _exp_logpdf(v, spec.mu0_mean) + xi
            elif name == "delta":
                lp += _exp_logpdf(v, spec.delta_mean) + xi
            elif name == "sigma0":
                lp += _invgamma_logpdf(v, spec.sigma_0_shape, spec.sigma_0_scale) + xi
            elif name == "sigmav":
                lp += _invgamma_logpdf(v, spec.sigma_v_shape, spec.sigma_v_scale) + xi
            elif name == "lambda":
                lp += float(norm_logpdf(v, spec.lambda_mean, spec.lambda_sd)) + xi
            else:
                ab = {"beta": spec.beta_ab, "gamma1": spec.gamma1_ab, "gamma2": spec.gamma2_ab}[name]
                lp += _beta_logpdf(v, *ab) + math.log(v * (1.0 - v))
        if self.n_times:
            lp += float(np.sum(self._per_time_prior_terms(x)))
            h = self._hyper_values(x)
            hx = x[self.n_structural + 3 * self.n_times :]
            lp += _scaled_inv_chi2_logpdf(h["s2_a1"], spec.nu_a1, spec.gamma2_a1) + float(hx[1])
            lp += float(norm_logpdf(h["mu_a1"], spec.eta_a1, math.sqrt(h["s2_a1"] / spec.kappa_a1)))
            lp += _scaled_inv_chi2_logpdf(h["s2_a2"], spec.nu_a2, spec.gamma2_a2) + float(hx[3])
            lp += float(norm_logpdf(h["mu_a2"], spec.eta_a2, math.sqrt(h["s2_a2"] / spec.kappa_a2)))
            lp += _scaled_inv_chi2_logpdf(h["s2_tau"], spec.nu_tau, spec.gamma2_tau) + float(hx[5])
            lp += float(norm_logpdf(h["mu_tau"], spec.eta_tau, math.sqrt(h["s2_tau"] / spec.kappa_tau)))
        return lp

    # -- likelihood evaluation ----------------------------------------------

    def _theta_tuple(self, s: dict[str, float]):
        return (s["mu0"], s["sigma0"] ** 2, s["sigmav"] ** 2, s["lambda"], s["delta"])

    def _budding_ll(self, s: dict[str, float]) -> float:
        if self.budding_data is None:
            return 0.0
        mu0, s0sq, svsq, lam, delta = self._theta_tuple(s)
        return float(
            K.budding_loglik_kernel(
                mu0, s0sq, svsq, lam, delta, s["beta"], self.config.R, self.config.C,
                self._bud_t, self._bud_b, self._bud_n,
            )
        )

    def _flow_lls(self, s: dict[str, float], a1, a2, tau) -> np.ndarray:
        mu0, s0sq, svsq, lam, delta = self._theta_tuple(s)
        return K.flow_loglik_all_kernel(
            mu0, s0sq, svsq, lam, delta, s["gamma1"], s["gamma2"],
            a1, a2, tau, self.config.R, self.config.C,
            self._flow_t, self._f_flat, self._c_flat, self._offsets,
        )

    def make_state(self, x: np.ndarray) -> _State:
        x = np.asarray(x, dtype=float)
        lp = self.log_prior_sampling(x)
        if not math.isfinite(lp):
            return _State(x=x, lp=lp, bud_ll=0.0, flow_lls=np.zeros(self.n_times), logpost=-math.inf)
        s = self._structural_values(x)
        bud = self._budding_ll(s)
        if self.n_times:
            a1, a2, tau = self._nuisance_values(x)
            flow = self._flow_lls(s, a1, a2, tau)
        else:
            flow = np.zeros(0)
        logpost = lp + bud + float(flow.sum())
        if not math.isfinite(logpost):
            logpost = -math.inf
        return _State(x=x, lp=lp, bud_ll=bud, flow_lls=flow, logpost=logpost)

    # -- sampler interface ----------------------------------------------------

    def block_specs(self) -> list[BlockSpec]:
        blocks = [
            BlockSpec(
                label="structural",
                idx=np.arange(self.n_structural),
                scales=np.full(self.n_structural, 0.05),
                kind="joint",
                adapt_cov=True,
                # Screen structural proposals on prior + budding before the
                # (much costlier) flow evaluation.
                two_stage=self.n_times > 0,
            )
        ]
        if self.n_times:
            base = self.n_structural
            idx = np.arange(base, base + 3 * self.n_times)
            subs = [np.arange(base + 3 * i, base + 3 * i + 3) for i in range(self.n_times)]
            blocks.append(
                BlockSpec(
                    label="flow_nuisance",
                    idx=idx,
                    scales=np.full(idx.size, 0.05),
                    kind="sweep",
                    sub_blocks=subs,
                    # The tight per-sample posteriors mix quickly; updating
                    # them every other sweep halves the flow-kernel load.
                    stride=2,
                )
            )
            hbase = base + 3 * self.n_times
            for k, label in enumerate(("hyper_a1", "hyper_a2", "hyper_tau")):
                blocks.append(
                    BlockSpec(
                        label=label,
                        idx=np.arange(hbase + 2 * k, hbase + 2 * k + 2),
                        scales=np.full(2, 0.2),
                        kind="joint",
                        adapt_cov=True,
                    )
                )
        return blocks

    def surrogate_delta(self, state: _State, spec: BlockSpec, x_new: np.ndarray):
        """Prior + budding log-ratio for the delayed-acceptance first stage."""
        lp = self.log_prior_sampling(x_new)
        if not math.isfinite(lp):
            return -math.inf, None
        s = self._structural_values(x_new)
        bud = self._budding_ll(s)
        delta = (lp + bud) - (state.lp + state.bud_ll)
        return delta, (lp, bud, s)

    def update_block(self, state: _State, spec: BlockSpec, x_new: np.ndarray, payload=None) -> _State:
        if spec.label == "structural":
            if payload is not None:
                lp, bud, s = payload
            else:
                lp = self.log_prior_sampling(x_new)
                if not math.isfinite(lp):
                    return _State(x=x_new, lp=lp, bud_ll=0.0, flow_lls=state.flow_lls, logpost=-math.inf)
                s = self._structural_values(x_new)
                bud = self._budding_ll(s)
            if self.n_times:
                a1, a2, tau = self._nuisance_values(x_new)
                flow = self._flow_lls(s, a1, a2, tau)
            else:
                flow = state.flow_lls
            logpost = lp + bud + float(flow.sum())
            if not math.isfinite(logpost):
                logpost = -math.inf
            return _State(x=x_new, lp=lp, bud_ll=bud, flow_lls=flow, logpost=logpost)
        # Hyperparameter blocks touch the prior only.
        lp = self.log_prior_sampling(x_new)
        logpost = lp + state.bud_ll + float(state.flow_lls.sum())
        if not math.isfinite(logpost):
            logpost = -math.inf
        return _State(x=x_new, lp=lp, bud_ll=state.bud_ll, flow_lls=state.flow_lls, logpost=logpost)

    def sweep_deltas(self, state: _State, spec: BlockSpec, x_new: np.ndarray) -> np.ndarray:
        s = self._structural_values(state.x)
        a1, a2, tau = self._nuisance_values(x_new)
        new_lls = self._flow_lls(s, a1, a2, tau)
        self._sweep_lls = new_lls  # consumed by apply_sweep for accepted entries
        new_prior = self._per_time_prior_terms(x_new)
        old_prior = self._per_time_prior_terms(state.x)
        return (new_lls + new_prior) - (state.flow_lls + old_prior)

    def apply_sweep(self, state: _State, spec: BlockSpec, x_new: np.ndarray, accept: np.ndarray):
        # Each entry's likelihood depends only on its own triple (structural
        # parameters are untouched in a sweep), so the values computed in
        # sweep_deltas carry over exactly for the accepted entries.
        x = state.x.copy()
        for i in np.nonzero(accept)[0]:
            sub = spec.sub_blocks[i]
            x[sub] = x_new[sub]
        flow = np.where(accept, self._sweep_lls, state.flow_lls)
        lp = self.log_prior_sampling(x)
        logpost = lp + state.bud_ll + float(flow.sum())
        new_state = _State(x=x, lp=lp, bud_ll=state.bud_ll, flow_lls=flow, logpost=logpost)
        return x, new_state

    # -- initialization -------------------------------------------------------

    def _nuisance_init(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Data-quantile starting values for the per-sample parameters."""
        a1 = np.empty(self.n_times)
        a2 = np.empty(self.n_times)
        for i in range(self.n_times):
            f, cnt = self.flow_data.channel_values(i)
            order = np.argsort(f)
            f, cnt = f[order], cnt[order]
            cum = np.cumsum(cnt) / cnt.sum()
            a1[i] = f[np.searchsorted(cum, 0.20)]
            q95 = f[min(np.searchsorted(cum, 0.95), f.size - 1)]
            a2[i] = max(q95 - a1[i], 0.2)
        tau = np.full(self.n_times, 0.15)
        return a1, a2, tau

    def initial_vector(self, rng: np.random.Generator, n_candidates: int = 32) -> np.ndarray:
        """Best-of-candidates start: prior draws plus a fixed sensible center."""
        candidates = []
        center = {
            "mu0": self.prior_spec.mu0_mean,
            "delta": self.prior_spec.delta_mean,
            "sigma0": self.prior_spec.sigma_0_mean,
            "sigmav": 0.09,
            "lambda": self.prior_spec.lambda_mean,
            "beta": 0.13,
            "gamma1": 0.07,
            "gamma2": 0.36,
        }
        candidates.append(center)
        for sv in (0.02, 0.05):
            candidates.append(dict(center, sigmav=sv, sigma0=18.0))
        for _ in range(n_candidates - 1):
            theta, bud, shared, _, _ = sample_prior(self.prior_spec, rng, n_times=0)
            candidates.append(
                {
                    "mu0": theta.mu0,
                    "delta": theta.delta,
                    "sigma0": math.sqrt(theta.sigma0_sq),
                    "sigmav": math.sqrt(theta.sigmav_sq),
                    "lambda": theta.lam,
                    "beta": bud.beta,
                    "gamma1": shared.gamma1,
                    "gamma2": shared.gamma2,
                }
            )
        if self.n_times:
            a1, a2, tau = self._nuisance_init()
            hyper_tail = [
                float(a1.mean()),
                math.log(max(float(a1.var()), 1e-3)),
                float(a2.mean()),
                math.log(max(float(a2.var()), 1e-3)),
                float(np.log(tau).mean()),
                math.log(max(float(np.log(tau).var()), 1e-2)),
            ]

        best_x, best_lp = None, -math.inf
        for cand in candidates:
            x = np.empty(self.dim)
            ok = True
            for j, (name, tr) in enumerate(self._structural):
                v = cand[name]
                if tr == "log":
                    if v <= 0:
                        ok = False
                        break
                    x[j] = math.log(v)
                else:
                    x[j] = math.log(v / (1.0 - v))
            if not ok:
                continue
            if self.n_times:
                base = self.n_structural
                x[base : base + 3 * self.n_times : 3] = a1
                x[base + 1 : base + 3 * self.n_times : 3] = np.log(a2)
                x[base + 2 : base + 3 * self.n_times : 3] = np.log(tau)
                x[-6:] = hyper_tail
            lp = self.make_state(x).logpost
            if lp > best_lp:
                best_x, best_lp = x, lp
        if best_x is None:
            raise RuntimeError("no valid starting candidate")
        return best_x

    # -- convenience -----------------------------------------------------------

    def unpack(self, row: np.ndarray):
        """Natural-scale row -> parameter objects (theta, beta, shared, per_time, hyper)."""
        vals = dict(zip(self.names, row))
        theta = _make_theta(
            mu0=vals.get("mu0", 0.0),
            sigma0_sq=vals.get("sigma0", 0.0) ** 2,
            sigmav_sq=vals["sigmav"] ** 2,
            lam=vals["lambda"],
            delta=vals.get("delta", 0.0),
        )
        beta = vals["beta"]
        shared = FlowShared(gamma1=vals["gamma1"], gamma2=vals["gamma2"])
        per_time = []
        hyper = None
        if self.n_times:
            for t in self.flow_data.times:
                label = f"{t:g}"
                per_time.append(
                    FlowPerTime(
                        alpha1=vals[f"alpha1_t{label}"],
                        alpha2=vals[f"alpha2_t{label}"],
                        tau=vals[f"tau_t{label}"],
                    )
                )
            hyper = FlowHyper(
                mu_tau=vals["mu_tau"],
                s2_tau=vals["s2_tau"],
                mu_a1=vals["mu_alpha1"],
                s2_a1=vals["s2_alpha1"],
                mu_a2=vals["mu_alpha2"],
                s2_a2=vals["s2_alpha2"],
            )
        return theta, beta, shared, per_time, hyper
