"""Command-line interface: simulate, fit, compare, summarize.

Every run writes a ``manifest.txt`` echoing the seed and resolved
configuration so that outputs are reproducible; identical seeds and configs
give byte-identical chains, summaries, and comparison tables.

Exit codes: 0 success, 2 usage error, 3 data validation error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, io, reports
from .comparison import SUBMODEL_LATTICE, compare_submodels
from .flow import FlowPerTime, FlowShared
from .mcmc import Chain, SamplerConfig, run_chain, summarize
from .model import CloccsModel, SubmodelSpec
from .population import CloccsParams, ModelConfig
from .priors import PriorSpec
from .simulate import simulate_lineage_population, synth_budding_dataset, synth_flow_dataset

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

# Experimental design defaults: samples every 8 minutes starting 30 minutes
# after release; the flow aliquot at 38 minutes is unavailable.
DEFAULT_T_START = 30.0
DEFAULT_T_STEP = 8.0
DEFAULT_T_COUNT = 33
DEFAULT_MISSING_FLOW = (38.0,)


def default_grids() -> tuple[np.ndarray, np.ndarray]:
    t = DEFAULT_T_START + DEFAULT_T_STEP * np.arange(DEFAULT_T_COUNT)
    flow_t = np.array([x for x in t if x not in DEFAULT_MISSING_FLOW])
    return t, flow_t


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cloccs", description="Cell-synchrony branching-process model toolkit")
    p.add_argument("--version", action="version", version=f"cloccs {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, data=True):
        if data:
            sp.add_argument("--budding", type=Path, help="budding counts CSV (time_min,budded,total)")
            sp.add_argument("--flow", type=Path, help="flow histogram CSV (time_min,ch0001..ch1024)")
        sp.add_argument("--config", type=Path, help="key = value config file")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("simulate", help="emit synthetic budding/flow datasets from the forward simulator")
    add_common(sp, data=False)
    sp.add_argument("--founders", type=int, default=100_000)
    sp.add_argument("--budding-cells", type=int, default=200)
    sp.add_argument("--flow-cells", type=int, default=1000)

    sp = sub.add_parser("fit", help="posterior sampling by random-walk Metropolis")
    add_common(sp)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--fix", action="append", default=[], choices=["mu0", "sigma0", "delta"], help="fix an asynchrony source to zero (repeatable)")

    sp = sub.add_parser("compare", help="nested-submodel Bayes factors by importance sampling")
    add_common(sp)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--importance-draws", type=int, default=10_000)

    sp = sub.add_parser("summarize", help="recompute posterior summaries from a saved chain")
    sp.add_argument("--chain", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)
    return p


def _load_config(args) -> dict[str, str]:
    if getattr(args, "config", None):
        return io.parse_kv_file(args.config)
    return {}


def _sampler_config(args, cfg) -> SamplerConfig:
    sc = io.sampler_config_from_config(cfg, seed=args.seed)
    overrides = {}
    if getattr(args, "iterations", None):
        overrides["iterations"] = args.iterations
    if getattr(args, "thin", None):
        overrides["thin"] = args.thin
    if getattr(args, "burn_in", None):
        overrides["burn_in"] = args.burn_in
    if overrides:
        sc = SamplerConfig(
            iterations=overrides.get("iterations", sc.iterations),
            thin=overrides.get("thin", sc.thin),
            burn_in=overrides.get("burn_in", sc.burn_in),
            seed=sc.seed,
        )
    return sc


def _manifest(out_dir: Path, command: str, args, cfg: dict, extra: dict) -> None:
    entries = {
        "command": command,
        "version": __version__,
        "seed": args.seed if hasattr(args, "seed") else "",
    }
    for k in sorted(cfg):
        entries[f"config.{k}"] = cfg[k]
    entries.update(extra)
    io.write_kv_file(out_dir / "manifest.txt", entries)


def _sim_truth(cfg: dict[str, str]) -> tuple[CloccsParams, float, FlowShared]:
    """Simulation ground truth; defaults sit near the reference posterior."""
    g = lambda key, d: float(cfg.get(f"sim.{key}", d))
    theta = CloccsParams(
        mu0=g("mu0", 94.0),
        sigma0_sq=g("sigma0", 18.0) ** 2,
        sigmav_sq=g("sigmav", 0.025) ** 2,
        lam=g("lambda", 79.5),
        delta=g("delta", 44.0),
    )
    return theta, g("beta", 0.15), FlowShared(gamma1=g("gamma1", 0.05), gamma2=g("gamma2", 0.35))


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    theta, beta, shared = _sim_truth(cfg)
    model_cfg = io.model_config_from_config(cfg)
    rng = np.random.default_rng(args.seed)
    t_bud, t_flow = default_grids()

    t0 = time.time()
    population = simulate_lineage_population(theta, model_cfg, t_bud, args.founders, rng)
    budding = synth_budding_dataset(theta, beta, t_bud, args.budding_cells, rng, model_cfg, population=population)
    mu_tau = float(cfg.get("sim.mu_tau", -2.09))
    per_time = [
        FlowPerTime(
            alpha1=rng.normal(float(cfg.get("sim.mu_alpha1", 8.24)), 0.15),
            alpha2=abs(rng.normal(float(cfg.get("sim.mu_alpha2", 1.04)), 0.15)) + 0.1,
            tau=math.exp(rng.normal(mu_tau, 0.15)),
        )
        for _ in t_flow
    ]
    flow = synth_flow_dataset(theta, shared, per_time, t_flow, args.flow_cells, rng, model_cfg, population=population)

    io.write_budding_csv(out / "budding.csv", budding)
    io.write_flow_table(out / "flow.csv", flow)
    reports.plot_synthetic_budding(out / "budding.png", budding)
    _manifest(
        out,
        "simulate",
        args,
        cfg,
        {
            "founders": args.founders,
            "budding_cells": args.budding_cells,
            "flow_cells": args.flow_cells,
            "population_size": len(population),
            "runtime_s": f"{time.time() - t0:.2f}",
        },
    )
    return EXIT_OK


def _load_data(args):
    budding = io.parse_budding_csv(args.budding) if args.budding else None
    flow = io.parse_flow_table(args.flow) if args.flow else None
    if budding is None and flow is None:
        print("error: need --budding and/or --flow", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return budding, flow


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    budding, flow = _load_data(args)
    model_cfg = io.model_config_from_config(cfg)
    prior = io.prior_spec_from_config(cfg)
    sampler_cfg = _sampler_config(args, cfg)
    submodel = SubmodelSpec(
        fix_mu0="mu0" in args.fix,
        fix_sigma0="sigma0" in args.fix,
        fix_delta="delta" in args.fix,
    )
    model = CloccsModel(budding_data=budding, flow_data=flow, prior_spec=prior, config=model_cfg, submodel=submodel)

    t0 = time.time()
    chain = run_chain(model, sampler_cfg)
    io.write_chain_csv(out / "chain.csv", chain)
    summary = summarize(chain)
    io.write_summary_csv(out / "summary.csv", summary)

    if budding is not None:
        t_grid = np.linspace(budding.times[0], budding.times[-1], 160)
        mean, lo, hi = reports.budding_curve_bands(chain.draws, chain.names, t_grid, model_cfg)
        reports.write_budding_curve_csv(out / "budding_curve.csv", t_grid, mean, lo, hi)
        reports.plot_budding_fit(out / "budding_curve.png", t_grid, mean, lo, hi, budding)
    if flow is not None:
        dens = reports.flow_density_table(model, chain.draws, flow)
        reports.write_flow_density_csv(out / "flow_densities.csv", flow, dens)
        reports.plot_flow_fits(out / "flow_densities.png", flow, dens)

    extra = {
        "submodel": submodel.label,
        "iterations": sampler_cfg.iterations,
        "burn_in": sampler_cfg.burn_in,
        "thin": sampler_cfg.thin,
        "saved_draws": len(chain),
        "runtime_s": f"{time.time() - t0:.2f}",
    }
    for label, rate in chain.acceptance.items():
        extra[f"acceptance.{label}"] = f"{rate:.6f}"
    _manifest(out, "fit", args, cfg, extra)
    return EXIT_OK


def _write_comparison_csv(path, result, labels) -> None:
    bf = result.bf_matrix()
    lines = ["submodel," + ",".join(labels)]
    for i, row_label in enumerate(labels):
        cells = [row_label]
        for j in range(len(labels)):
            cells.append(repr(float(bf[i, j])) if not math.isnan(bf[i, j]) else "")
        lines.append(",".join(cells))
    lines.append("E(RMSE)," + ",".join(repr(float(v)) for v in result.rmse_mean))
    lines.append("SD(RMSE)," + ",".join(repr(float(v)) for v in result.rmse_sd))
    lines.append("log_ml," + ",".join(repr(float(e.log_ml)) for e in result.estimates))
    lines.append("weight_variance," + ",".join(repr(float(e.weight_variance)) for e in result.estimates))
    lines.append("ess," + ",".join(repr(float(e.ess)) for e in result.estimates))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    budding, flow = _load_data(args)
    model_cfg = io.model_config_from_config(cfg)
    prior = io.prior_spec_from_config(cfg)
    sampler_cfg = _sampler_config(args, cfg)

    t0 = time.time()
    result, chains = compare_submodels(
        budding,
        flow,
        prior_spec=prior,
        config=model_cfg,
        sampler_config=sampler_cfg,
        n_importance=args.importance_draws,
        seed=args.seed,
    )
    labels = [sm.label for sm in result.submodels]
    _write_comparison_csv(out / "comparison.csv", result, labels)

    if budding is not None:
        t_grid = np.linspace(budding.times[0], budding.times[-1], 160)
        curves = {}
        for sm, chain in zip(result.submodels, chains):
            mean, _, _ = reports.budding_curve_bands(chain.draws, chain.names, t_grid, model_cfg, n_draws=100)
            curves[sm.label] = mean
        reports.plot_submodel_curves(out / "submodel_fits.png", budding, curves, t_grid)

    extra = {
        "importance_draws": args.importance_draws,
        "iterations": sampler_cfg.iterations,
        "runtime_s": f"{time.time() - t0:.2f}",
    }
    for sm, est in zip(result.submodels, result.estimates):
        extra[f"log_ml.{sm.label}"] = repr(est.log_ml)
        extra[f"ess.{sm.label}"] = f"{est.ess:.1f}"
    _manifest(out, "compare", args, cfg, extra)
    return EXIT_OK


def cmd_summarize(args) -> int:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    names, draws = io.parse_chain_csv(args.chain)
    chain = Chain(
        names=names,
        draws=draws,
        log_posteriors=np.zeros(draws.shape[0]),
        acceptance={},
        seed=0,
        config=SamplerConfig.reduced(),
    )
    io.write_summary_csv(out / "summary.csv", summarize(chain))
    return EXIT_OK


def run_command(argv: list[str]) -> int:
    """Parse and execute; returns the exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0,) else 0
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "compare":
            return cmd_compare(args)
        if args.command == "summarize":
            return cmd_summarize(args)
        parser.error(f"unknown command {args.command}")
        return EXIT_USAGE
    except io.DataValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_USAGE
    except (np.linalg.LinAlgError, FloatingPointError, RuntimeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
