"""Dataset parsing, config files, and result serialization.

All tabular artifacts are plain comma-separated UTF-8 with dot decimals and
Unix newlines.  Floats are written with ``repr`` (shortest round-trip), so a
write/parse cycle is the identity and identical runs produce byte-identical
files.  Configs and run manifests are flat ``key = value`` text with
dotted section prefixes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .budding import BuddingDataset
from .flow import N_CHANNELS, FlowDataset
from .mcmc import Chain, PosteriorSummary, SamplerConfig
from .population import ModelConfig
from .priors import PriorSpec


class DataValidationError(ValueError):
    """Malformed or inconsistent input data (CLI exit code 3)."""


def _fmt(x: float) -> str:
    return repr(float(x))


# -- budding counts ----------------------------------------------------------

def parse_budding_csv(path) -> BuddingDataset:
    """Read ``time_min,budded,total`` rows (header required, sorted output)."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or [c.strip() for c in lines[0].split(",")] != ["time_min", "budded", "total"]:
        raise DataValidationError(f"{path}: expected header 'time_min,budded,total'")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataValidationError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
        try:
            t, b, n = float(parts[0]), int(parts[1]), int(parts[2])
        except ValueError as e:
            raise DataValidationError(f"{path}:{lineno}: {e}") from None
        if not 0 <= b <= n:
            raise DataValidationError(f"{path}:{lineno}: budded={b} outside [0, total={n}]")
        if n < 1:
            raise DataValidationError(f"{path}:{lineno}: total must be >= 1")
        rows.append((t, b, n))
    rows.sort(key=lambda r: r[0])
    times = np.array([r[0] for r in rows])
    if times.size and np.any(np.diff(times) <= 0):
        raise DataValidationError(f"{path}: duplicate time points")
    try:
        return BuddingDataset(
            times=times,
            budded=np.array([r[1] for r in rows], dtype=np.int64),
            total=np.array([r[2] for r in rows], dtype=np.int64),
        )
    except ValueError as e:
        raise DataValidationError(f"{path}: {e}") from None


def write_budding_csv(path, data: BuddingDataset) -> None:
    lines = ["time_min,budded,total"]
    for t, b, n in zip(data.times, data.budded, data.total):
        lines.append(f"{_fmt(t)},{int(b)},{int(n)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- flow histograms ----------------------------------------------------------

def parse_flow_table(path) -> FlowDataset:
    """Read wide histograms: ``time_min,ch0001..ch1024`` (counts per channel).

    Missing time points are simply absent rows; grids need not match the
    budding data.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    expected = ["time_min"] + [f"ch{k:04d}" for k in range(1, N_CHANNELS + 1)]
    if not lines:
        raise DataValidationError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    if header != expected:
        raise DataValidationError(
            f"{path}: bad header: expected time_min,ch0001..ch{N_CHANNELS:04d} ({len(expected)} columns), got {len(header)}"
        )
    times = []
    hists = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != N_CHANNELS + 1:
            raise DataValidationError(f"{path}:{lineno}: expected {N_CHANNELS + 1} columns, got {len(parts)}")
        try:
            times.append(float(parts[0]))
            counts = np.array([int(v) for v in parts[1:]], dtype=np.int64)
        except ValueError as e:
            raise DataValidationError(f"{path}:{lineno}: {e}") from None
        if np.any(counts < 0):
            raise DataValidationError(f"{path}:{lineno}: negative channel count")
        hists.append(counts)
    order = np.argsort(times)
    try:
        return FlowDataset(times=np.array(times)[order], histograms=np.array(hists)[order])
    except ValueError as e:
        raise DataValidationError(f"{path}: {e}") from None


def write_flow_table(path, data: FlowDataset) -> None:
    header = "time_min," + ",".join(f"ch{k:04d}" for k in range(1, N_CHANNELS + 1))
    lines = [header]
    for i, t in enumerate(data.times):
        lines.append(_fmt(t) + "," + ",".join(str(int(c)) for c in data.histograms[i]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- chains and summaries -------------------------------------------------------

def write_chain_csv(path, chain: Chain) -> None:
    lines = [",".join(chain.names)]
    for row in chain.draws:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_chain_csv(path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataValidationError(f"{path}: empty chain file")
    names = [c.strip() for c in lines[0].split(",")]
    draws = np.array([[float(v) for v in line.split(",")] for line in lines[1:] if line.strip()])
    if draws.ndim != 2 or draws.shape[1] != len(names):
        raise DataValidationError(f"{path}: ragged chain rows")
    return names, draws


def write_summary_csv(path, summary: PosteriorSummary) -> None:
    lines = ["parameter,mean,q2.5,q97.5"]
    for i, name in enumerate(summary.names):
        lines.append(f"{name},{_fmt(summary.mean[i])},{_fmt(summary.q025[i])},{_fmt(summary.q975[i])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- config and manifests ---------------------------------------------------------

def parse_kv_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` comments and blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DataValidationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_kv_file(path, entries: dict) -> None:
    lines = [f"{k} = {v}" for k, v in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_PRIOR_KEYS = {
    "lambda_mean": float,
    "lambda_sd": float,
    "sigma_v_shape": float,
    "sigma_v_scale": float,
    "sigma_0_shape": float,
    "sigma_0_mean": float,
    "mu0_mean": float,
    "delta_mean": float,
    "eta_tau": float,
    "eta_a1": float,
    "eta_a2": float,
    "kappa_tau": float,
    "kappa_a1": float,
    "kappa_a2": float,
    "nu_tau": float,
    "nu_a1": float,
    "nu_a2": float,
    "gamma2_tau": float,
    "gamma2_a1": float,
    "gamma2_a2": float,
}


def prior_spec_from_config(cfg: dict[str, str]) -> PriorSpec:
    """PriorSpec with any ``prior.*`` entries overriding the defaults.

    Beta blocks are set via ``prior.gamma1_a``/``prior.gamma1_b`` (same for
    beta and gamma2).
    """
    kwargs = {}
    for key, cast in _PRIOR_KEYS.items():
        if f"prior.{key}" in cfg:
            kwargs[key] = cast(cfg[f"prior.{key}"])
    for block in ("gamma1", "beta", "gamma2"):
        a = cfg.get(f"prior.{block}_a")
        b = cfg.get(f"prior.{block}_b")
        if a is not None or b is not None:
            default = {"gamma1": (2.0, 18.0), "beta": (2.4, 17.6), "gamma2": (7.0, 13.0)}[block]
            kwargs[f"{block}_ab"] = (
                float(a) if a is not None else default[0],
                float(b) if b is not None else default[1],
            )
    return PriorSpec(**kwargs)


def model_config_from_config(cfg: dict[str, str]) -> ModelConfig:
    return ModelConfig(
        R=int(cfg.get("model.r_max", 6)),
        C=int(cfg.get("model.cycles", 8)),
    )


def sampler_config_from_config(cfg: dict[str, str], seed: int | None = None) -> SamplerConfig:
    reduced = SamplerConfig.reduced()
    return SamplerConfig(
        iterations=int(cfg.get("sampler.iterations", reduced.iterations)),
        thin=int(cfg.get("sampler.thin", reduced.thin)),
        burn_in=int(cfg.get("sampler.burn_in", reduced.burn_in)),
        seed=int(cfg.get("sampler.seed", 0)) if seed is None else seed,
    )
