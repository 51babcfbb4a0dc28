"""Fitted-curve emission: delimited tables plus quick-look figures.

Every report is written as CSV first (the authoritative artifact), with a
matplotlib rendering of the same content saved alongside for eyeballing.
Figures use the Agg backend and never open windows.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .budding import BuddingDataset, fitted_budding_curve
from .flow import FlowDataset, FlowPerTime, FlowShared, channel_grid, flow_density
from .model import CloccsModel
from .population import ModelConfig

_FMT = repr


def budding_curve_bands(
    draws: np.ndarray,
    names: list[str],
    t_grid: np.ndarray,
    config: ModelConfig,
    n_draws: int = 200,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pointwise posterior mean and 2.5/97.5% bands of the budded fraction."""
    from .model import _make_theta

    take = min(n_draws, draws.shape[0])
    idx = np.linspace(0, draws.shape[0] - 1, take).astype(int)
    col = {n: j for j, n in enumerate(names)}
    curves = np.empty((take, t_grid.size))
    for k, i in enumerate(idx):
        row = draws[i]
        theta = _make_theta(
            mu0=row[col["mu0"]] if "mu0" in col else 0.0,
            sigma0_sq=(row[col["sigma0"]] ** 2) if "sigma0" in col else 0.0,
            sigmav_sq=row[col["sigmav"]] ** 2,
            lam=row[col["lambda"]],
            delta=row[col["delta"]] if "delta" in col else 0.0,
        )
        curves[k] = fitted_budding_curve(theta, row[col["beta"]], t_grid, config)
    return curves.mean(axis=0), np.quantile(curves, 0.025, axis=0), np.quantile(curves, 0.975, axis=0)


def write_budding_curve_csv(path, t_grid, mean, lo, hi) -> None:
    lines = ["time_min,mean_pct,q2.5_pct,q97.5_pct"]
    for t, m, a, b in zip(t_grid, mean, lo, hi):
        lines.append(f"{_FMT(float(t))},{_FMT(100 * m)},{_FMT(100 * a)},{_FMT(100 * b)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def plot_budding_fit(path, t_grid, mean, lo, hi, data: BuddingDataset | None = None) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.fill_between(t_grid, 100 * lo, 100 * hi, color="tab:red", alpha=0.25, label="95% pointwise band")
    ax.plot(t_grid, 100 * mean, color="tab:red", label="posterior mean")
    if data is not None:
        ax.plot(data.times, 100 * data.observed_fraction(), "k.-", lw=1, ms=4, label="observed")
    ax.set_xlabel("time since release (min)")
    ax.set_ylabel("budded cells (%)")
    ax.set_ylim(-2, 102)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def flow_density_table(
    model: CloccsModel,
    draws: np.ndarray,
    flow_data: FlowDataset,
    n_draws: int = 30,
) -> np.ndarray:
    """Posterior-mean model density at every channel value and time point.

    Returns an array of shape (n_times, 1024); column grid is
    ``channel_grid()``.
    """
    grid = channel_grid()
    take = min(n_draws, draws.shape[0])
    idx = np.linspace(0, draws.shape[0] - 1, take).astype(int)
    out = np.zeros((len(flow_data), grid.size))
    for i in idx:
        theta, _, shared, per_time, _ = model.unpack(draws[i])
        for j, t in enumerate(flow_data.times):
            out[j] += flow_density(theta, shared, per_time[j], grid, float(t), model.config)
    out /= take
    return out


def write_flow_density_csv(path, flow_data: FlowDataset, model_density: np.ndarray) -> None:
    """Long-format CSV: time, log2 value, model density, observed density."""
    grid = channel_grid()
    lines = ["time_min,log2_fluorescence,model_density,observed_density"]
    for j, t in enumerate(flow_data.times):
        obs = flow_data.observed_density(j)
        for k in range(grid.size):
            lines.append(f"{_FMT(float(t))},{_FMT(grid[k])},{_FMT(model_density[j, k])},{_FMT(obs[k])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def plot_flow_fits(path, flow_data: FlowDataset, model_density: np.ndarray, max_panels: int = 6) -> None:
    grid = channel_grid()
    n = len(flow_data)
    pick = np.unique(np.linspace(0, n - 1, min(max_panels, n)).astype(int))
    fig, axes = plt.subplots(1, pick.size, figsize=(2.8 * pick.size, 3.0), sharey=True, squeeze=False)
    for ax, j in zip(axes[0], pick):
        obs = flow_data.observed_density(j)
        ax.fill_between(grid, obs, color="0.75", step="mid", label="observed")
        ax.plot(grid, model_density[j], color="tab:red", lw=1.2, label="model")
        ax.set_title(f"t = {flow_data.times[j]:g} min", fontsize=9)
        ax.set_xlim(6.5, 10.5)
        ax.set_xlabel("log2 fluorescence")
    axes[0][0].set_ylabel("density")
    axes[0][0].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_submodel_curves(path, data: BuddingDataset, curves: dict[str, np.ndarray], t_grid) -> None:
    """Posterior-mean budding curves of competing submodels over the data."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(data.times, 100 * data.observed_fraction(), "k.-", lw=1, ms=4, label="observed")
    for label, curve in curves.items():
        ax.plot(t_grid, 100 * curve, lw=1.2, label=label)
    ax.set_xlabel("time since release (min)")
    ax.set_ylabel("budded cells (%)")
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_synthetic_budding(path, data: BuddingDataset) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(data.times, 100 * data.observed_fraction(), "k.-", lw=1, ms=4)
    ax.set_xlabel("time since release (min)")
    ax.set_ylabel("budded cells (%)")
    ax.set_ylim(-2, 102)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
