"""Tests for the Monte Carlo harness, CSV reports and the CLI."""

import numpy as np
import pytest
from click.testing import CliRunner

from sicsim.cli import build_sim_config, main, parse_config_file
from sicsim.harness import (ALL_MODES, MODE_PERFECT_CSI, PerCurve, PerPoint,
                            SimConfig, SimConfigError, compute_rate_loss,
                            crossing_esn0, measure_gap, run_sweep, run_trial,
                            trial_rng, write_gaps_csv, write_per_csv)
from sicsim.waveform import classic_layout, psam_layout


def small_cfg(**kw):
    base = dict(layout_name="classic", modes=(MODE_PERFECT_CSI,),
                esn0_start=1.0, esn0_step=1.0, esn0_stop=1.0,
                trials=50, min_errors=10, master_seed=7)
    base.update(kw)
    return SimConfig(**base)


class TestSimConfig:
    def test_esn0_points_inclusive(self):
        cfg = small_cfg(esn0_start=0.0, esn0_step=0.5, esn0_stop=2.0)
        assert cfg.esn0_points() == [0.0, 0.5, 1.0, 1.5, 2.0]

    def test_single_point(self):
        assert small_cfg().esn0_points() == [1.0]

    def test_rejects_bad_values(self):
        with pytest.raises(SimConfigError):
            small_cfg(layout_name="other")
        with pytest.raises(SimConfigError):
            small_cfg(modes=("nonsense",))
        with pytest.raises(SimConfigError):
            small_cfg(modes=())
        with pytest.raises(SimConfigError):
            small_cfg(esn0_stop=0.0)
        with pytest.raises(SimConfigError):
            small_cfg(min_errors=5)

    def test_psam_mode_needs_psam_layout(self):
        with pytest.raises(SimConfigError):
            small_cfg(modes=("em_autocorr_psam",))
        small_cfg(modes=("em_autocorr_psam",), layout_name="psam")

    def test_all_modes_exposed(self):
        assert MODE_PERFECT_CSI in ALL_MODES
        assert "em_autocorr" in ALL_MODES and "autocorr" in ALL_MODES


class TestTrialRng:
    def test_reproducible(self):
        a = trial_rng(1, 2, 3).integers(0, 1 << 30, 4)
        b = trial_rng(1, 2, 3).integers(0, 1 << 30, 4)
        assert np.array_equal(a, b)

    def test_distinct_across_indices(self):
        draws = {tuple(trial_rng(1, p, t).integers(0, 1 << 30, 4))
                 for p in range(3) for t in range(3)}
        assert len(draws) == 9


class TestRunTrial:
    def test_perfect_csi_high_snr_succeeds(self):
        res = run_trial(small_cfg(esn0_start=8.0, esn0_stop=8.0),
                        trial_seed=0)
        assert res.success
        assert res.residual_power == 0.0
        assert res.estimate_errors[0] == (0.0, 0.0, 0.0)

    def test_estimated_mode_reports_errors(self):
        cfg = small_cfg(modes=("em_autocorr",), esn0_start=8.0, esn0_stop=8.0)
        res = run_trial(cfg, trial_seed=0)
        assert res.residual_power > 0.0
        assert any(abs(e[1]) > 0 for e in res.estimate_errors)

    def test_deterministic_given_seed(self):
        cfg = small_cfg(modes=("em_autocorr",), esn0_start=3.0, esn0_stop=3.0)
        a = run_trial(cfg, trial_seed=5)
        b = run_trial(cfg, trial_seed=5)
        assert a.success == b.success
        assert a.residual_power == b.residual_power
        assert a.estimate_errors == b.estimate_errors


class TestSweep:
    def test_stop_rule_and_stats(self):
        # at 0 dB the PER is high, so min_errors stops the point early
        cfg = small_cfg(esn0_start=0.0, esn0_stop=0.0, trials=2000,
                        min_errors=10, batch_size=250)
        curves = run_sweep(cfg)
        assert len(curves) == 1 and len(curves[0].points) == 1
        p = curves[0].points[0]
        assert p.errors >= 10
        assert p.trials < 2000
        assert p.per == p.errors / p.trials
        expect_ci = 1.96 * np.sqrt(p.per * (1 - p.per) / p.trials)
        assert p.ci95 == pytest.approx(expect_ci)

    def test_trials_cap_respected(self):
        cfg = small_cfg(esn0_start=8.0, esn0_stop=8.0, trials=40,
                        min_errors=10)
        p = run_sweep(cfg)[0].points[0]
        assert p.trials == 40

    def test_batch_size_does_not_change_results(self):
        kw = dict(esn0_start=0.5, esn0_stop=0.5, trials=600, min_errors=1000)
        a = run_sweep(small_cfg(batch_size=100, **kw))[0].points[0]
        b = run_sweep(small_cfg(batch_size=600, **kw))[0].points[0]
        assert a == b

    def test_modes_share_channel_draws(self):
        # matched seeds: the perfect-CSI curve can only be better, never
        # worse, trial by trial, so its error count is a lower bound
        cfg = small_cfg(modes=(MODE_PERFECT_CSI, "em_autocorr"),
                        esn0_start=1.0, esn0_stop=1.0, trials=300,
                        min_errors=1000, dfmax=0.01)
        curves = {c.mode: c.points[0] for c in run_sweep(cfg)}
        assert curves[MODE_PERFECT_CSI].trials == curves["em_autocorr"].trials
        assert curves[MODE_PERFECT_CSI].errors <= curves["em_autocorr"].errors


class TestRateLoss:
    def test_pilot_insertion_overhead(self):
        loss = compute_rate_loss(psam_layout(), classic_layout())
        assert loss == pytest.approx(0.0544, abs=1e-3)

    def test_identical_layouts_zero(self):
        assert compute_rate_loss(classic_layout(), classic_layout()) == 0.0


def curve(mode, pts):
    return PerCurve(mode=mode, layout_name="classic", points=tuple(
        PerPoint(esn0_db=e, per=per, trials=n, errors=int(round(per * n)),
                 ci95=0.0, mean_df_rmse=0.0, mean_residual_power=0.0)
        for e, per, n in pts))


class TestCrossing:
    def test_log_linear_interpolation(self):
        c = curve("m", [(2.0, 1e-2, 100000), (3.0, 1e-4, 10 ** 6)])
        # PER=1e-3 is the log midpoint of 1e-2 and 1e-4
        assert crossing_esn0(c, 1e-3) == pytest.approx(2.5)

    def test_exact_point_hit(self):
        c = curve("m", [(2.0, 1e-2, 10 ** 5), (3.0, 1e-3, 10 ** 6)])
        assert crossing_esn0(c, 1e-3) == pytest.approx(3.0)

    def test_never_crosses(self):
        c = curve("m", [(2.0, 0.9, 1000), (3.0, 0.8, 1000)])
        assert crossing_esn0(c, 1e-3) is None

    def test_sparse_points_excluded(self):
        # the second point has too few errors to participate
        c = curve("m", [(2.0, 1e-2, 10 ** 5), (3.0, 1e-4, 10 ** 5)])
        assert crossing_esn0(c, 1e-3, min_errors=100) is None

    def test_gap(self):
        ref = curve("ref", [(1.0, 1e-2, 10 ** 5), (2.0, 1e-4, 10 ** 6)])
        est = curve("est", [(2.0, 1e-2, 10 ** 5), (3.0, 1e-4, 10 ** 6)])
        assert measure_gap(est, ref, 1e-3) == pytest.approx(1.0)
        bad = curve("bad", [(1.0, 0.9, 1000)])
        assert measure_gap(bad, ref, 1e-3) is None


class TestCsvReports:
    def test_per_csv_layout(self, tmp_path):
        c = curve("perfect_csi", [(1.0, 0.5, 100), (2.0, 0.25, 200)])
        out = tmp_path / "per.csv"
        write_per_csv([c], out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == ("esn0_db,mode,trials,errors,per,ci95,"
                            "mean_df_rmse,mean_residual_power")
        assert lines[1].startswith("1.0000,perfect_csi,100,50,5.000000e-01")
        assert len(lines) == 3

    def test_gaps_csv_inf(self, tmp_path):
        out = tmp_path / "gaps.csv"
        write_gaps_csv([("em_autocorr", 1e-3, 0.1234), ("autocorr", 1e-3,
                                                        None)], out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "mode,per_target,gap_db"
        assert lines[1] == "em_autocorr,1.0e-03,0.1234"
        assert lines[2] == "autocorr,1.0e-03,inf"

    def test_byte_identical_reruns(self, tmp_path):
        cfg = small_cfg(modes=(MODE_PERFECT_CSI, "em_autocorr"),
                        esn0_start=1.0, esn0_step=1.0, esn0_stop=2.0,
                        trials=120, min_errors=10)
        paths = []
        for name in ("a.csv", "b.csv"):
            p = tmp_path / name
            write_per_csv(run_sweep(cfg), p)
            paths.append(p.read_bytes())
        assert paths[0] == paths[1]


CONFIG_TEXT = """\
# sweep settings
layout = psam
modes = perfect_csi,em_autocorr_psam
esn0_start = 1.0
esn0_step = 1.0
esn0_stop = 1.0
trials = 60          # cap
min_errors = 10
seed = 3
"""


class TestConfigFile:
    def test_parse_types_and_comments(self, tmp_path):
        path = tmp_path / "sweep.cfg"
        path.write_text(CONFIG_TEXT)
        values = parse_config_file(path)
        assert values["trials"] == 60
        assert values["esn0_stop"] == 1.0
        assert values["layout"] == "psam"

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("bogus = 1\n")
        with pytest.raises(SimConfigError, match="unknown key"):
            parse_config_file(path)

    def test_missing_equals_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("trials 60\n")
        with pytest.raises(SimConfigError):
            parse_config_file(path)

    def test_build_defaults(self):
        cfg = build_sim_config({})
        assert cfg.layout_name == "classic"
        assert cfg.modes == (MODE_PERFECT_CSI,)


class TestCli:
    def run_cli(self, tmp_path, *args):
        runner = CliRunner()
        return runner.invoke(main, ["simulate", *args], catch_exceptions=False)

    def test_config_file_run_writes_reports(self, tmp_path):
        cfg_path = tmp_path / "sweep.cfg"
        cfg_path.write_text(CONFIG_TEXT)
        out = tmp_path / "per.csv"
        result = self.run_cli(tmp_path, "--config", str(cfg_path),
                              "--out", str(out))
        assert result.exit_code == 0, result.output
        assert out.exists()
        gaps = tmp_path / "gaps.csv"
        assert gaps.exists()  # perfect CSI + estimator mode present
        header = out.read_text().splitlines()[0]
        assert header.startswith("esn0_db,mode,")

    def test_overrides_beat_config(self, tmp_path):
        cfg_path = tmp_path / "sweep.cfg"
        cfg_path.write_text(CONFIG_TEXT)
        out = tmp_path / "per.csv"
        result = self.run_cli(tmp_path, "--config", str(cfg_path),
                              "--out", str(out), "--mode", "perfect_csi",
                              "--esn0", "2.0:1.0:2.0", "--trials", "30",
                              "--layout", "classic")
        assert result.exit_code == 0, result.output
        body = out.read_text().strip().splitlines()[1:]
        assert len(body) == 1
        assert body[0].startswith("2.0000,perfect_csi,30,")
        assert not (tmp_path / "gaps.csv").exists()

    def test_bad_esn0_spec(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, ["simulate", "--out",
                                      str(tmp_path / "x.csv"),
                                      "--esn0", "1.0-2.0"])
        assert result.exit_code != 0
        assert "start:step:stop" in result.output

    def test_incompatible_mode_layout_reported(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, ["simulate", "--out",
                                      str(tmp_path / "x.csv"),
                                      "--mode", "em_autocorr_psam",
                                      "--layout", "classic",
                                      "--esn0", "1.0:1.0:1.0",
                                      "--trials", "20"])
        assert result.exit_code != 0
        assert "psam" in result.output

    def test_identical_seed_identical_files(self, tmp_path):
        args = ["--mode", "perfect_csi", "--esn0", "1.0:1.0:1.0",
                "--trials", "40", "--seed", "5"]
        outs = []
        for name in ("r1.csv", "r2.csv"):
            out = tmp_path / name
            result = self.run_cli(tmp_path, "--out", str(out), *args)
            assert result.exit_code == 0, result.output
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
