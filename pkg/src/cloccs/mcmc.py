"""Random-walk Metropolis machinery: blocks, adaptation, chains, summaries.

The sampler walks a vector of transformed coordinates organized into blocks:
``joint`` blocks propose a correlated Gaussian step and accept or reject the
block as a whole, while ``sweep`` blocks contain conditionally independent
sub-blocks (one per flow sample) that are proposed in a single batch and
accepted independently.  Per-block proposal scales adapt multiplicatively
during burn-in toward a target acceptance band and are frozen afterwards, so
the retained sample comes from a fixed kernel.  Joint blocks of dimension
two or more additionally refresh their proposal covariance from the burn-in
history, which handles the strong posterior correlations among the
population parameters.

Everything is deterministic given the seed: one chain is strictly
sequential, and proposals consume random numbers in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class SamplerConfig:
    """Metropolis run configuration.

    ``iterations`` counts total sweeps including the adaptive burn-in; every
    ``thin``-th post-burn-in sweep is saved.  The defaults are the full
    analysis profile; :meth:`reduced` gives the desk/test profile.
    """

    iterations: int = 400_000
    thin: int = 4
    burn_in: int = 100_000
    seed: int = 0
    target_acceptance: tuple[float, float] = (0.2, 0.5)
    adapt_window: int = 200
    adapt_factor: float = 1.5
    init_attempts: int = 10_000

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        lo, hi = self.target_acceptance
        if not 0.0 < lo < hi < 1.0:
            raise ValueError("target acceptance band must satisfy 0 < lo < hi < 1")

    @classmethod
    def reduced(cls, seed: int = 0, **kwargs) -> "SamplerConfig":
        """Reduced-scale profile for tests and desk runs."""
        kwargs.setdefault("iterations", 50_000)
        kwargs.setdefault("burn_in", 10_000)
        kwargs.setdefault("thin", 4)
        return cls(seed=seed, **kwargs)

    @property
    def n_saved(self) -> int:
        return (self.iterations - self.burn_in + self.thin - 1) // self.thin


@dataclass
class BlockSpec:
    """One proposal block over coordinates ``idx`` of the sampling vector.

    ``sub_blocks`` partitions ``idx`` into independently accepted pieces for
    sweep blocks; ``adapt_cov`` enables burn-in covariance refreshes for
    joint blocks.  ``two_stage`` screens proposals against the target's
    cheap surrogate before the full evaluation (delayed acceptance, which
    leaves the stationary distribution unchanged).  ``stride`` runs the
    block only every that-many iterations.
    """

    label: str
    idx: np.ndarray
    scales: np.ndarray
    kind: str = "joint"  # "joint" | "sweep"
    sub_blocks: list[np.ndarray] | None = None
    adapt_cov: bool = False
    cov_chol: np.ndarray | None = None
    multiplier: float = 1.0
    two_stage: bool = False
    stride: int = 1

    def __post_init__(self):
        if self.kind not in ("joint", "sweep"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.kind == "sweep" and not self.sub_blocks:
            raise ValueError("sweep blocks need sub_blocks")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass(frozen=True)
class Chain:
    """Saved draws on the natural parameter scale, with run provenance."""

    names: list[str]
    draws: np.ndarray
    log_posteriors: np.ndarray
    acceptance: dict[str, float]
    seed: int
    config: SamplerConfig

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def __len__(self) -> int:
        return int(self.draws.shape[0])


@dataclass(frozen=True)
class PosteriorSummary:
    """Per-parameter posterior mean and equal-tailed 95% interval."""

    names: list[str]
    mean: np.ndarray
    q025: np.ndarray
    q975: np.ndarray

    def row(self, name: str) -> tuple[float, float, float]:
        i = self.names.index(name)
        return float(self.mean[i]), float(self.q025[i]), float(self.q975[i])

    def covers(self, name: str, value: float) -> bool:
        _, lo, hi = self.row(name)
        return lo <= value <= hi


def adapt_scales(
    scales: np.ndarray | float,
    acceptance_rate: float,
    band: tuple[float, float] = (0.2, 0.5),
    factor: float = 1.5,
):
    """Scale update steering acceptance into ``band``.

    Below the band the proposal shrinks, above it grows, inside it is left
    alone.  Meant for use during burn-in only.
    """
    lo, hi = band
    if acceptance_rate < lo:
        return scales / factor
    if acceptance_rate > hi:
        return scales * factor
    return scales


def summarize(chain: Chain, derived: bool = True) -> PosteriorSummary:
    """Empirical means and 2.5%/97.5% quantiles per column.

    With ``derived=True`` a ``start_position_mean`` row (the negated recovery
    length, i.e. where founder positions are centered) is appended whenever a
    ``mu0`` column is present, for direct comparison with summaries reported
    on the starting-position scale.
    """
    names = list(chain.names)
    draws = chain.draws
    if derived and "mu0" in names:
        names = names + ["start_position_mean"]
        draws = np.column_stack([draws, -chain.column("mu0")])
    mean = draws.mean(axis=0)
    q025 = np.quantile(draws, 0.025, axis=0)
    q975 = np.quantile(draws, 0.975, axis=0)
    return PosteriorSummary(names=names, mean=mean, q025=q025, q975=q975)


def effective_sample_size(x: np.ndarray) -> float:
    """ESS via Geyer's initial positive sequence on the autocorrelation.

    A constant sequence has no information and is reported as 0.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return 0.0
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return 0.0
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    # Sum adjacent pairs while positive (guaranteed positive for the true
    # autocorrelation of a reversible chain).
    tau = -1.0
    k = 0
    while 2 * k + 1 < n:
        gamma = rho[2 * k] + rho[2 * k + 1]
        if gamma <= 0.0:
            break
        tau += 2.0 * gamma
        k += 1
    tau = max(tau, 1.0)
    return float(n / tau)


def _propose_joint(x: np.ndarray, spec: BlockSpec, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(spec.idx.size)
    if spec.cov_chol is not None:
        step = spec.multiplier * (spec.cov_chol @ z)
    else:
        step = spec.multiplier * spec.scales * z
    x_new = x.copy()
    x_new[spec.idx] = x_new[spec.idx] + step
    return x_new


def _refresh_covariance(spec: BlockSpec, history: np.ndarray) -> None:
    d = spec.idx.size
    if d < 2 or history.shape[0] < max(10 * d, 100):
        return
    cov = np.cov(history[:, spec.idx], rowvar=False)
    cov = cov * (2.38**2 / d) + 1e-12 * np.eye(d)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return
    spec.cov_chol = chol
    spec.multiplier = 1.0


def run_chain(target, config: SamplerConfig) -> Chain:
    """Run one Metropolis chain against ``target``.

    ``target`` supplies the blocks, the initial vector on the sampling
    scale, state evaluation/update, and the mapping to natural-scale rows;
    see :class:`CallableTarget` for the minimal interface.
    """
    rng = np.random.default_rng(config.seed)

    state = None
    x = None
    for _ in range(config.init_attempts):
        x = target.initial_vector(rng)
        state = target.make_state(x)
        if math.isfinite(state.logpost):
            break
    else:
        raise RuntimeError(f"no finite starting point found in {config.init_attempts} attempts")

    blocks = target.block_specs()
    n_saved = config.n_saved
    d_nat = len(target.names)
    draws = np.empty((n_saved, d_nat))
    logposts = np.empty(n_saved)

    window_acc = {b.label: 0 for b in blocks}
    window_n = {b.label: 0 for b in blocks}
    post_acc = {b.label: 0 for b in blocks}
    post_n = {b.label: 0 for b in blocks}

    # Ring buffer of burn-in vectors for covariance refreshes.
    hist_cap = min(config.burn_in, 25_000)
    history = np.empty((hist_cap, x.size)) if hist_cap else None
    hist_len = 0
    hist_pos = 0
    refresh_at = set()
    if config.burn_in >= 4 * config.adapt_window:
        refresh_at = {(k * config.burn_in) // 10 for k in (3, 5, 7, 9)}

    save_i = 0
    for it in range(config.iterations):
        burning = it < config.burn_in
        for spec in blocks:
            if spec.stride > 1 and it % spec.stride:
                continue
            if spec.kind == "joint":
                x_new = _propose_joint(x, spec, rng)
                accepted = False
                if spec.two_stage:
                    # Delayed acceptance: gate on the cheap surrogate ratio,
                    # then correct with the remainder of the posterior ratio.
                    d1, payload = target.surrogate_delta(state, spec, x_new)
                    if d1 >= 0.0 or math.log(rng.random()) < d1:
                        cand = target.update_block(state, spec, x_new, payload)
                        d2 = (cand.logpost - state.logpost) - d1
                        if d2 >= 0.0 or math.log(rng.random()) < d2:
                            x, state = x_new, cand
                            accepted = True
                else:
                    cand = target.update_block(state, spec, x_new)
                    logr = cand.logpost - state.logpost
                    if logr >= 0.0 or math.log(rng.random()) < logr:
                        x, state = x_new, cand
                        accepted = True
                if accepted:
                    window_acc[spec.label] += 1
                    if not burning:
                        post_acc[spec.label] += 1
                window_n[spec.label] += 1
                if not burning:
                    post_n[spec.label] += 1
            else:
                x_new = x.copy()
                x_new[spec.idx] = x_new[spec.idx] + spec.multiplier * spec.scales * rng.standard_normal(spec.idx.size)
                deltas = target.sweep_deltas(state, spec, x_new)
                u = rng.random(len(spec.sub_blocks))
                accept = np.log(u) < deltas
                if accept.any():
                    x, state = target.apply_sweep(state, spec, x_new, accept)
                n_acc = int(accept.sum())
                window_acc[spec.label] += n_acc
                window_n[spec.label] += len(spec.sub_blocks)
                if not burning:
                    post_acc[spec.label] += n_acc
                    post_n[spec.label] += len(spec.sub_blocks)

        if burning and history is not None:
            history[hist_pos] = x
            hist_pos = (hist_pos + 1) % hist_cap
            hist_len = min(hist_len + 1, hist_cap)

        if burning and (it + 1) % config.adapt_window == 0:
            for spec in blocks:
                n = window_n[spec.label]
                if n:
                    rate = window_acc[spec.label] / n
                    spec.multiplier = float(
                        adapt_scales(spec.multiplier, rate, config.target_acceptance, config.adapt_factor)
                    )
                window_acc[spec.label] = 0
                window_n[spec.label] = 0

        if (it + 1) in refresh_at and history is not None and hist_len:
            ordered = np.concatenate([history[hist_pos:hist_len], history[:hist_pos]])[-hist_len:]
            for spec in blocks:
                if spec.adapt_cov and spec.kind == "joint":
                    _refresh_covariance(spec, ordered)

        if not burning and (it - config.burn_in) % config.thin == 0:
            draws[save_i] = target.natural_row(x)
            logposts[save_i] = state.logpost
            save_i += 1

    acceptance = {label: (post_acc[label] / post_n[label] if post_n[label] else math.nan) for label in post_acc}
    return Chain(
        names=list(target.names),
        draws=draws[:save_i],
        log_posteriors=logposts[:save_i],
        acceptance=acceptance,
        seed=config.seed,
        config=config,
    )


@dataclass
class _SimpleState:
    logpost: float


class CallableTarget:
    """Adapter turning a plain log-density into a sampler target.

    Used by tests to point the Metropolis machinery at analytically known
    targets (the likelihood is effectively stubbed out).
    """

    def __init__(self, log_density, names, x0, scales=None):
        self.log_density = log_density
        self.names = list(names)
        self.x0 = np.asarray(x0, dtype=float)
        self.scales = np.ones(self.x0.size) if scales is None else np.asarray(scales, dtype=float)

    def initial_vector(self, rng) -> np.ndarray:
        return self.x0.copy()

    def make_state(self, x) -> _SimpleState:
        return _SimpleState(logpost=float(self.log_density(x)))

    def block_specs(self) -> list[BlockSpec]:
        return [
            BlockSpec(
                label="all",
                idx=np.arange(self.x0.size),
                scales=self.scales.copy(),
                kind="joint",
                adapt_cov=self.x0.size >= 2,
            )
        ]

    def update_block(self, state, spec, x_new, payload=None) -> _SimpleState:
        return self.make_state(x_new)

    def natural_row(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float).copy()
