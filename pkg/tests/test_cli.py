"""Command-line behavior: subcommands, exit codes, and written artifacts."""

import json

import pytest

from fusionrobust.cli import (
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_OK,
    EXIT_VERIFY,
    main,
)


def write_config(tmp_path, **overrides):
    data = {
        "task": {
            "kind": "linear_regression",
            "n_train": 256,
            "n_val": 128,
            "beta1": [1.0],
            "beta2": [2.0],
            "beta3": [3.0],
        },
        "train": {
            "algorithm": "ssn",
            "iterations": 40,
            "batch_size": 32,
            "lr": 0.001,
        },
        "eval": {"trials": 2},
        "seeds": [0],
        "output": str(tmp_path / "runs"),
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key].update(value)
        else:
            data[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


class TestVerifyCommand:
    def test_passes_and_prints_suites(self, capsys):
        assert main(["verify", "--suite", "linear"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "suite linear: PASS" in out

    def test_mutation_mode_fails_with_verify_exit_code(self, capsys):
        assert main(["verify", "--suite", "linear", "--mutate"]) == EXIT_VERIFY
        assert "FAIL" in capsys.readouterr().out


class TestMotivateCommand:
    def test_table_values(self, capsys):
        assert main(["motivate"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "c1=1.0 c2=1.0 c3=10.0" in out
        first = next(line for line in out.splitlines() if line.strip().startswith("0.10"))
        cells = first.split()
        assert cells == ["0.10", "1.0050", "9.9504", "9.90"]

    def test_sigma_flag_scales_errors(self, capsys):
        assert main(["motivate", "--sigma", "2.0"]) == EXIT_OK
        out = capsys.readouterr().out
        first = next(line for line in out.splitlines() if line.strip().startswith("0.10"))
        assert first.split()[1] == "2.0100"


class TestRunCommand:
    def test_writes_reports_and_figures(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["run", "--config", str(config)]) == EXIT_OK
        out_root = tmp_path / "runs"
        assert (out_root / "summary.csv").is_file()
        seed_dir = out_root / "seed_0"
        for name in (
            "trace.csv",
            "report.json",
            "checkpoint",
            "config.json",
            "trace.png",
            "robustness.png",
        ):
            path = seed_dir / name
            assert path.is_file() and path.stat().st_size > 0, name
        summary = (out_root / "summary.csv").read_text().splitlines()
        assert summary[0].startswith("# config:")
        assert summary[1] == "# seeds: 0"
        assert summary[2].startswith("algorithm,fusion,seed,")
        report = json.loads((seed_dir / "report.json").read_text())
        assert report["metric_kind"] == "neg_mse"

    def test_seed_and_out_overrides(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "other"
        code = main(
            ["run", "--config", str(config), "--seed", "3", "--out", str(out)]
        )
        assert code == EXIT_OK
        assert (out / "seed_3").is_dir()
        assert not (out / "seed_0").exists()

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "absent.json")])
        assert code == EXIT_CONFIG
        assert "configuration error" in capsys.readouterr().err

    def test_invalid_field_exits_config(self, tmp_path, capsys):
        config = write_config(tmp_path, train={"algorithm": "pgd"})
        assert main(["run", "--config", str(config)]) == EXIT_CONFIG
        assert "train.algorithm" in capsys.readouterr().err

    def test_unknown_field_exits_config(self, tmp_path, capsys):
        config = write_config(tmp_path, extra_section=1)
        assert main(["run", "--config", str(config)]) == EXIT_CONFIG
        assert "extra_section" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_divergence_exits_with_marker(self, tmp_path, capsys):
        config = write_config(tmp_path, train={"algorithm": "clean", "lr": 1e160})
        assert main(["run", "--config", str(config)]) == EXIT_DIVERGED
        failed = tmp_path / "runs" / "seed_0" / "FAILED"
        assert failed.is_file()
        assert "diverged at iteration" in failed.read_text()


class TestSweepCommand:
    def test_compares_all_algorithms(self, tmp_path, capsys):
        config = write_config(
            tmp_path,
            train={"algorithm": "clean", "iterations": 20},
            output=str(tmp_path / "sweep"),
        )
        assert main(["sweep", "--config", str(config)]) == EXIT_OK
        out = capsys.readouterr().out
        for algorithm in ("clean", "asn", "ssn", "ssn_alt"):
            assert algorithm in out
            assert (tmp_path / "sweep" / algorithm / "seed_0").is_dir()
        summary = (tmp_path / "sweep" / "summary.csv").read_text()
        assert "ssn_alt" in summary
