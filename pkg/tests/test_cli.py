import numpy as np
import pytest

from cloccs.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, default_grids, run_command
from cloccs.io import parse_budding_csv, parse_chain_csv, parse_flow_table


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    rc = run_command(
        ["simulate", "--out", str(out), "--seed", "7", "--founders", "30000", "--budding-cells", "120", "--flow-cells", "300"]
    )
    assert rc == EXIT_OK
    return out


class TestSimulate:
    def test_artifacts_exist(self, sim_dir):
        for name in ("budding.csv", "flow.csv", "manifest.txt", "budding.png"):
            assert (sim_dir / name).exists(), name

    def test_default_design_grids(self, sim_dir):
        bud = parse_budding_csv(sim_dir / "budding.csv")
        flow = parse_flow_table(sim_dir / "flow.csv")
        t_bud, t_flow = default_grids()
        np.testing.assert_array_equal(bud.times, t_bud)
        assert bud.times.size == 33 and bud.times[0] == 30.0
        # flow grid mirrors the design's missing 38-minute aliquot
        np.testing.assert_array_equal(flow.times, t_flow)
        assert 38.0 not in flow.times
        assert np.all(bud.total == 120)
        assert flow.histograms.sum(axis=1).tolist() == [300] * len(flow)


class TestFit:
    @pytest.fixture(scope="class")
    def fit_dir(self, sim_dir, tmp_path_factory):
        out = tmp_path_factory.mktemp("fit")
        rc = run_command(
            [
                "fit",
                "--budding", str(sim_dir / "budding.csv"),
                "--out", str(out),
                "--seed", "3",
                "--iterations", "6000",
                "--burn-in", "2000",
                "--thin", "4",
            ]
        )
        assert rc == EXIT_OK
        return out

    def test_artifacts(self, fit_dir):
        for name in ("chain.csv", "summary.csv", "budding_curve.csv", "budding_curve.png", "manifest.txt"):
            assert (fit_dir / name).exists(), name

    def test_summary_rows_for_every_free_parameter(self, fit_dir):
        names, _ = parse_chain_csv(fit_dir / "chain.csv")
        lines = (fit_dir / "summary.csv").read_text().splitlines()
        params = [ln.split(",")[0] for ln in lines[1:]]
        for n in names:
            assert n in params
        assert "start_position_mean" in params

    def test_bands_contain_mean_curve(self, fit_dir):
        lines = (fit_dir / "budding_curve.csv").read_text().splitlines()[1:]
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines])
        assert np.all(rows[:, 1] >= rows[:, 2] - 1e-12)
        assert np.all(rows[:, 1] <= rows[:, 3] + 1e-12)

    def test_summarize_matches_fit_summary(self, fit_dir, tmp_path_factory):
        out = tmp_path_factory.mktemp("resummary")
        rc = run_command(["summarize", "--chain", str(fit_dir / "chain.csv"), "--out", str(out)])
        assert rc == EXIT_OK
        assert (out / "summary.csv").read_bytes() == (fit_dir / "summary.csv").read_bytes()

    def test_fix_flags_drop_parameters(self, sim_dir, tmp_path_factory):
        out = tmp_path_factory.mktemp("fit_fixed")
        rc = run_command(
            [
                "fit",
                "--budding", str(sim_dir / "budding.csv"),
                "--out", str(out),
                "--seed", "3",
                "--iterations", "3000",
                "--burn-in", "1000",
                "--fix", "mu0",
                "--fix", "delta",
            ]
        )
        assert rc == EXIT_OK
        names, _ = parse_chain_csv(out / "chain.csv")
        assert "mu0" not in names and "delta" not in names and "sigma0" in names


class TestReproducibility:
    def test_same_seed_byte_identical(self, sim_dir, tmp_path_factory):
        outs = []
        for k in range(2):
            out = tmp_path_factory.mktemp(f"repro{k}")
            rc = run_command(
                [
                    "fit",
                    "--budding", str(sim_dir / "budding.csv"),
                    "--out", str(out),
                    "--seed", "11",
                    "--iterations", "4000",
                    "--burn-in", "1000",
                ]
            )
            assert rc == EXIT_OK
            outs.append(out)
        assert (outs[0] / "chain.csv").read_bytes() == (outs[1] / "chain.csv").read_bytes()
        assert (outs[0] / "summary.csv").read_bytes() == (outs[1] / "summary.csv").read_bytes()


class TestFlowFitSmoke:
    def test_joint_fit_small(self, sim_dir, tmp_path_factory):
        out = tmp_path_factory.mktemp("fit_joint")
        rc = run_command(
            [
                "fit",
                "--budding", str(sim_dir / "budding.csv"),
                "--flow", str(sim_dir / "flow.csv"),
                "--out", str(out),
                "--seed", "5",
                "--iterations", "1200",
                "--burn-in", "400",
            ]
        )
        assert rc == EXIT_OK
        assert (out / "flow_densities.csv").exists()
        assert (out / "flow_densities.png").exists()
        lines = (out / "flow_densities.csv").read_text().splitlines()
        assert lines[0] == "time_min,log2_fluorescence,model_density,observed_density"
        # observed density integrates to one per time point on the grid
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        t0 = rows[rows[:, 0] == rows[0, 0]]
        assert np.trapezoid(t0[:, 3], t0[:, 1]) == pytest.approx(1.0, abs=1e-3)

    def test_chain_alpha_columns_exist(self, sim_dir, tmp_path_factory):
        out = tmp_path_factory.mktemp("fit_joint2")
        rc = run_command(
            [
                "fit",
                "--flow", str(sim_dir / "flow.csv"),
                "--out", str(out),
                "--seed", "5",
                "--iterations", "800",
                "--burn-in", "300",
            ]
        )
        assert rc == EXIT_OK
        names, _ = parse_chain_csv(out / "chain.csv")
        assert "alpha1_t30" in names and "tau_t46" in names and "mu_alpha1" in names


class TestErrorsAndExitCodes:
    def test_unknown_flag_usage_error(self, tmp_path):
        assert run_command(["fit", "--nonsense", str(tmp_path)]) == EXIT_USAGE

    def test_missing_data_usage_error(self, tmp_path):
        assert run_command(["fit", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_invalid_data_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("time_min,budded,total\n30.0,50,20\n")
        assert run_command(["fit", "--budding", str(bad), "--out", str(tmp_path / "o")]) == EXIT_DATA

    def test_compare_smoke_tiny(self, tmp_path):
        # Two-model lattice on a tiny dataset exercises the compare path.
        from cloccs.budding import BuddingDataset
        from cloccs.io import write_budding_csv

        rng = np.random.default_rng(6)
        t = 30.0 + 16.0 * np.arange(8)
        ds = BuddingDataset(times=t, budded=rng.integers(0, 40, 8), total=np.full(8, 40))
        path = tmp_path / "bud.csv"
        write_budding_csv(path, ds)
        out = tmp_path / "cmp"
        rc = run_command(
            [
                "compare",
                "--budding", str(path),
                "--out", str(out),
                "--seed", "2",
                "--iterations", "2500",
                "--burn-in", "800",
                "--importance-draws", "800",
            ]
        )
        assert rc == EXIT_OK
        lines = (out / "comparison.csv").read_text().splitlines()
        assert lines[0].startswith("submodel,full,")
        assert len(lines[0].split(",")) == 9  # label column + 8 models
        # 8 model rows + E(RMSE) + SD(RMSE) + log_ml + weight_variance + ess
        assert len(lines) == 1 + 8 + 5
        assert (out / "submodel_fits.png").exists()
        # diagonal entries are exactly zero
        row_full = lines[1].split(",")
        assert row_full[0] == "full" and float(row_full[1]) == 0.0
