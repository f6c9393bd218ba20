"""End-to-end command-line behavior on small, fast scenarios."""

import json

import numpy as np
import pytest

from drainback import cli

from helpers import tiny_scenario_config

FIT_FILES = (
    "samples.csv",
    "summary.txt",
    "diagnostics.csv",
    "trajectories.csv",
    "discrepancy.csv",
    "residual_bins.csv",
)


def write_config(path, config):
    with open(path, "w") as fh:
        json.dump(config, fh, indent=2)
    return str(path)


def read_summary(path):
    out = {}
    for line in open(path):
        key, _, value = line.strip().partition("=")
        out[key] = value
    return out


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """One simulate + fit pipeline shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("tiny")
    config = tiny_scenario_config(root / "out")
    config_path = write_config(root / "config.json", config)
    assert cli.main(["simulate", "--config", config_path]) == 0
    fit_rc = cli.main(["fit", "--config", config_path])
    return {
        "root": root,
        "out": root / "out",
        "config": config,
        "config_path": config_path,
        "fit_rc": fit_rc,
    }


class TestSimulate:
    def test_writes_dataset_and_truth(self, tiny_run):
        out = tiny_run["out"]
        assert (out / "dataset.csv").exists()
        truth = read_summary(out / "truth.txt")
        assert float(truth["param.pollution_h0"]) == 12.0
        assert float(truth["param.h_max"]) == 14.0
        header = (out / "dataset.csv").read_text().splitlines()[0]
        assert header == "experiment_id,kind,t,level,held_out"

    def test_requires_scenario_section(self, tmp_path, capsys):
        config_path = write_config(tmp_path / "c.json", {"out_dir": str(tmp_path)})
        assert cli.main(["simulate", "--config", config_path]) == 1
        assert "simulate" in capsys.readouterr().err

    def test_seed_changes_data(self, tmp_path):
        config = tiny_scenario_config(tmp_path / "a")
        path = write_config(tmp_path / "c.json", config)
        assert cli.main(["simulate", "--config", path]) == 0
        assert cli.main(["simulate", "--config", path, "--seed", "8", "--out-dir", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "dataset.csv").read_bytes()
        b = (tmp_path / "b" / "dataset.csv").read_bytes()
        assert a != b

    def test_regeneration_is_byte_identical(self, tmp_path):
        config = tiny_scenario_config(tmp_path / "a")
        path = write_config(tmp_path / "c.json", config)
        assert cli.main(["simulate", "--config", path]) == 0
        assert cli.main(["simulate", "--config", path, "--out-dir", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "dataset.csv").read_bytes()
        b = (tmp_path / "b" / "dataset.csv").read_bytes()
        assert a == b


class TestFit:
    def test_exit_code_reflects_health(self, tiny_run):
        # a deliberately under-sampled run cannot pass the gates
        assert tiny_run["fit_rc"] == 2

    def test_report_files_written_even_when_unhealthy(self, tiny_run):
        for name in FIT_FILES:
            assert (tiny_run["out"] / name).exists(), name

    def test_no_figures_flag_respected(self, tiny_run):
        for name in ("trajectories.png", "discrepancy.png", "traces.png", "reconstruction.png"):
            assert not (tiny_run["out"] / name).exists()

    def test_summary_contents(self, tiny_run):
        summary = read_summary(tiny_run["out"] / "summary.txt")
        assert summary["healthy"] == "false"
        assert int(summary["chains"]) == 2
        assert int(summary["iterations"]) == 80
        assert "param.pollution_h0.mean" in summary
        assert "param.pollution_h0.ci90_low" in summary
        assert "correlation.c.r" in summary
        assert "mae.calib1" in summary
        assert 0.0 < float(summary["acceptance_rate"]) < 1.0

    def test_diagnostics_table_shape(self, tiny_run):
        lines = (tiny_run["out"] / "diagnostics.csv").read_text().splitlines()
        assert lines[0] == "parameter,mean,sd,rhat,ess,rhat_pass,ess_pass"
        assert len(lines) == 1 + 15

    def test_samples_parseable_and_shaped(self, tiny_run):
        from drainback.io import load_samples

        samples = load_samples(tiny_run["out"] / "samples.csv")
        assert samples.n_chains == 2
        assert samples.n_draws == 80 - 26  # iterations minus burn-in
        assert "pollution_h0" in samples.names
        assert np.all(np.isfinite(samples.values))

    def test_missing_dataset_errors(self, tmp_path, capsys):
        config = tiny_scenario_config(tmp_path / "out")
        del config["simulate"]
        path = write_config(tmp_path / "c.json", config)
        assert cli.main(["fit", "--config", path]) == 1
        assert "error:" in capsys.readouterr().err

    def test_figures_written_when_enabled(self, tmp_path):
        config = tiny_scenario_config(tmp_path / "out", figures=True, n_iterations=40)
        path = write_config(tmp_path / "c.json", config)
        assert cli.main(["simulate", "--config", path]) == 0
        assert cli.main(["fit", "--config", path]) in (0, 2)
        for name in ("trajectories.png", "discrepancy.png", "traces.png", "reconstruction.png"):
            assert (tmp_path / "out" / name).exists(), name

    def test_fit_deterministic(self, tmp_path):
        config = tiny_scenario_config(tmp_path / "a", n_iterations=40)
        path = write_config(tmp_path / "c.json", config)
        assert cli.main(["simulate", "--config", path]) == 0
        assert cli.main(["fit", "--config", path]) in (0, 2)
        config_b = dict(config, out_dir=str(tmp_path / "b"), dataset=str(tmp_path / "a" / "dataset.csv"))
        path_b = write_config(tmp_path / "cb.json", config_b)
        assert cli.main(["fit", "--config", path_b]) in (0, 2)
        a = (tmp_path / "a" / "samples.csv").read_bytes()
        b = (tmp_path / "b" / "samples.csv").read_bytes()
        assert a == b


class TestReconstruct:
    def test_report(self, tiny_run, capsys):
        config_path = tiny_run["config_path"]
        assert cli.main(["reconstruct", "--config", config_path]) == 0
        captured = capsys.readouterr()
        assert "start level h0" in captured.out
        report = read_summary(tiny_run["out"] / "reconstruction.txt")
        assert report["pollution_id"] == "pollution"
        assert float(report["h0.ci90_low"]) <= float(report["h0.mean"]) <= float(report["h0.ci90_high"])
        assert report["heldout.h0"] == "12.0"
        assert report["heldout.h0_in_ci90"] in ("true", "false")
        assert "correlation_t0_h0" in report

    def test_single_draw_zero_width_warning(self, tmp_path, capsys):
        samples = tmp_path / "samples.csv"
        samples.write_text(
            "chain,iteration,log_posterior,pollution_t0,pollution_h0\n"
            "0,0,-1.0,0.5,11.5\n"
        )
        assert cli.main(["reconstruct", "--samples", str(samples), "--out-dir", str(tmp_path)]) == 0
        err = capsys.readouterr().err
        assert "single posterior draw" in err
        report = read_summary(tmp_path / "reconstruction.txt")
        assert float(report["h0.ci90_low"]) == float(report["h0.ci90_high"]) == 11.5
        assert float(report["h0.sd"]) == 0.0

    def test_missing_pollution_parameters(self, tmp_path, capsys):
        samples = tmp_path / "samples.csv"
        samples.write_text("chain,iteration,log_posterior,alpha\n0,0,-1.0,0.5\n")
        assert cli.main(["reconstruct", "--samples", str(samples), "--out-dir", str(tmp_path)]) == 1
        assert "cannot locate pollution parameters" in capsys.readouterr().err

    def test_missing_samples_file(self, tmp_path, capsys):
        rc = cli.main(["reconstruct", "--samples", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestDiagnose:
    def test_gates_applied(self, tiny_run, capsys):
        rc = cli.main(["diagnose", "--samples", str(tiny_run["out"] / "samples.csv"), "--out-dir", str(tiny_run["root"] / "diag")])
        captured = capsys.readouterr()
        assert rc == 2  # the tiny run is far from converged
        assert "gate failures" in captured.out
        assert "RHAT-FAIL" in captured.out
        assert (tiny_run["root"] / "diag" / "diagnostics.csv").exists()

    def test_loose_gates_pass(self, tiny_run):
        rc = cli.main(
            [
                "diagnose",
                "--samples",
                str(tiny_run["out"] / "samples.csv"),
                "--out-dir",
                str(tiny_run["root"] / "diag2"),
                "--rhat-gate",
                "10.0",
                "--ess-gate",
                "1.0",
            ]
        )
        assert rc == 0

    def test_single_chain_unavailable(self, tmp_path, capsys):
        samples = tmp_path / "samples.csv"
        rows = ["chain,iteration,log_posterior,c"]
        rows += [f"0,{k},-1.0,{0.5 + 0.01 * k}" for k in range(10)]
        samples.write_text("\n".join(rows) + "\n")
        rc = cli.main(["diagnose", "--samples", str(samples), "--out-dir", str(tmp_path)])
        assert rc == 2
        assert "unavailable" in capsys.readouterr().out
        table = (tmp_path / "diagnostics.csv").read_text()
        assert "unavailable" in table

    def test_malformed_samples(self, tmp_path, capsys):
        samples = tmp_path / "samples.csv"
        samples.write_text("bogus\n")
        assert cli.main(["diagnose", "--samples", str(samples), "--out-dir", str(tmp_path)]) == 1
        assert "error:" in capsys.readouterr().err


class TestArgumentHandling:
    def test_help_exits_zero(self, capsys):
        assert cli.main(["--help"]) == 0
        assert "simulate" in capsys.readouterr().out

    def test_no_arguments_is_usage_error(self, capsys):
        assert cli.main([]) == 1

    def test_unknown_subcommand(self, capsys):
        assert cli.main(["calibrate"]) == 1

    def test_missing_config_file(self, tmp_path, capsys):
        assert cli.main(["simulate", "--config", str(tmp_path / "none.json")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_invalid_config_rejected(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"bogus_key": 1}))
        assert cli.main(["fit", "--config", str(path)]) == 1
        assert "unknown config keys" in capsys.readouterr().err
