import numpy as np
import pytest

from cloccs import BuddingDataset, FlowDataset, PriorSpec
from cloccs.io import (
    DataValidationError,
    model_config_from_config,
    parse_budding_csv,
    parse_chain_csv,
    parse_flow_table,
    parse_kv_file,
    prior_spec_from_config,
    sampler_config_from_config,
    write_budding_csv,
    write_chain_csv,
    write_flow_table,
    write_kv_file,
)


class TestBuddingCsv:
    def test_parse_well_formed(self, tmp_path):
        p = tmp_path / "b.csv"
        p.write_text("time_min,budded,total\n30.0,5,200\n38.0,11,200\n46.0,30,201\n")
        ds = parse_budding_csv(p)
        assert len(ds) == 3
        assert ds.total[2] == 201

    def test_budded_exceeds_total_names_line(self, tmp_path):
        p = tmp_path / "b.csv"
        p.write_text("time_min,budded,total\n30.0,5,200\n38.0,300,200\n")
        with pytest.raises(DataValidationError, match=":3"):
            parse_budding_csv(p)

    def test_malformed_row_names_line(self, tmp_path):
        p = tmp_path / "b.csv"
        p.write_text("time_min,budded,total\n30.0,5\n")
        with pytest.raises(DataValidationError, match=":2"):
            parse_budding_csv(p)

    def test_missing_header(self, tmp_path):
        p = tmp_path / "b.csv"
        p.write_text("30.0,5,200\n")
        with pytest.raises(DataValidationError, match="header"):
            parse_budding_csv(p)

    def test_roundtrip_identity(self, tmp_path):
        ds = BuddingDataset(times=[30.0, 38.5, 46.25], budded=[1, 7, 19], total=[200, 200, 200])
        p = tmp_path / "b.csv"
        write_budding_csv(p, ds)
        back = parse_budding_csv(p)
        np.testing.assert_array_equal(back.times, ds.times)
        np.testing.assert_array_equal(back.budded, ds.budded)
        np.testing.assert_array_equal(back.total, ds.total)
        # serialized form is stable
        q = tmp_path / "b2.csv"
        write_budding_csv(q, back)
        assert p.read_bytes() == q.read_bytes()


class TestFlowTable:
    def _write(self, path, times, hists):
        ds = FlowDataset(times=np.asarray(times, dtype=float), histograms=np.asarray(hists, dtype=np.int64))
        write_flow_table(path, ds)
        return ds

    def test_roundtrip_identity(self, tmp_path):
        rng = np.random.default_rng(0)
        hists = rng.integers(0, 40, size=(2, 1024))
        hists[:, 5] += 1
        p = tmp_path / "f.csv"
        ds = self._write(p, [30.0, 46.0], hists)
        back = parse_flow_table(p)
        np.testing.assert_array_equal(back.times, ds.times)
        np.testing.assert_array_equal(back.histograms, ds.histograms)

    def test_wrong_column_count(self, tmp_path):
        p = tmp_path / "f.csv"
        header = "time_min," + ",".join(f"ch{k:04d}" for k in range(1, 1024))  # 1023 channels
        p.write_text(header + "\n" + "30.0," + ",".join("0" for _ in range(1023)) + "\n")
        with pytest.raises(DataValidationError, match="header"):
            parse_flow_table(p)

    def test_negative_count(self, tmp_path):
        p = tmp_path / "f.csv"
        header = "time_min," + ",".join(f"ch{k:04d}" for k in range(1, 1025))
        row = ["30.0"] + ["0"] * 1024
        row[3] = "-2"
        p.write_text(header + "\n" + ",".join(row) + "\n")
        with pytest.raises(DataValidationError, match="negative"):
            parse_flow_table(p)

    def test_missing_time_points_ok(self, tmp_path):
        # The 38-minute aliquot is absent: parsing simply yields fewer rows.
        rng = np.random.default_rng(1)
        hists = rng.integers(0, 9, size=(2, 1024))
        hists[:, 100] += 3
        p = tmp_path / "f.csv"
        self._write(p, [30.0, 46.0], hists)
        ds = parse_flow_table(p)
        assert list(ds.times) == [30.0, 46.0]


class TestChainCsv:
    def test_roundtrip_exact(self, tmp_path):
        from cloccs.mcmc import Chain, SamplerConfig

        rng = np.random.default_rng(2)
        draws = rng.standard_normal((50, 3)) * np.array([1e-4, 1.0, 1e4])
        ch = Chain(
            names=["a", "b", "c"],
            draws=draws,
            log_posteriors=np.zeros(50),
            acceptance={},
            seed=1,
            config=SamplerConfig.reduced(),
        )
        p = tmp_path / "chain.csv"
        write_chain_csv(p, ch)
        names, back = parse_chain_csv(p)
        assert names == ["a", "b", "c"]
        np.testing.assert_array_equal(back, draws)  # repr round-trip is exact


class TestKvAndConfigs:
    def test_kv_roundtrip(self, tmp_path):
        p = tmp_path / "cfg.txt"
        p.write_text("# comment\nsampler.iterations = 1234\n\nprior.lambda_mean=80.5  # inline\n")
        cfg = parse_kv_file(p)
        assert cfg == {"sampler.iterations": "1234", "prior.lambda_mean": "80.5"}
        q = tmp_path / "out.txt"
        write_kv_file(q, cfg)
        assert parse_kv_file(q) == cfg

    def test_malformed_kv(self, tmp_path):
        p = tmp_path / "cfg.txt"
        p.write_text("justakey\n")
        with pytest.raises(DataValidationError):
            parse_kv_file(p)

    def test_prior_overrides(self):
        spec = prior_spec_from_config({"prior.lambda_mean": "80.5", "prior.gamma1_a": "3.0"})
        assert spec.lambda_mean == 80.5
        assert spec.gamma1_ab == (3.0, 18.0)
        assert spec.delta_mean == 55.0  # untouched default
        assert prior_spec_from_config({}) == PriorSpec()

    def test_model_and_sampler_configs(self):
        mc = model_config_from_config({"model.r_max": "4", "model.cycles": "6"})
        assert (mc.R, mc.C) == (4, 6)
        sc = sampler_config_from_config({"sampler.iterations": "30000", "sampler.burn_in": "5000"}, seed=9)
        assert sc.iterations == 30_000 and sc.burn_in == 5000 and sc.seed == 9
