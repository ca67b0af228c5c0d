import csv

import pytest

from contactflow.main import EXIT_FAILED, EXIT_PASSED, EXIT_USAGE, main
from contactflow.runner.config_loader import parse_config
from contactflow.runner.suites import run_suites

CERTIFICATE_EXPERIMENT = """
[grid]
counts = 4
sample_points = 8
time_knots = 5

[[experiments]]
name = "certificate"
suite = "nonsmooth"
params = { ks = [1, 2, 5], delta = 0.5, displacement = true }
"""

METRICS_EXPERIMENT = """
[chart]
kind = "torus3"

[grid]
counts = 4
sample_points = 8
time_knots = 5

[hamiltonians.A]
builtin = "constant"
params = { c = 0.25 }

[[experiments]]
name = "reeb"
suite = "metrics"
expression = "A"
"""


@pytest.fixture
def write_config(tmp_path):
    def write(text, name="experiments.toml"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write


# ==========================================
# Suites
# ==========================================


def test_run_suites_stamps_every_row():
    report = run_suites(parse_config(CERTIFICATE_EXPERIMENT), "certificate.toml")
    assert report.experiments == ["certificate"]
    assert report.passed
    assert all(row.grid_hash == report.grid_hash for row in report.rows)
    assert {row.anchor for row in report.rows} == {"nonsmooth.lipschitz_certificate", "metrics.displacement_check"}


def test_metrics_suite_on_a_reeb_translation():
    report = run_suites(parse_config(METRICS_EXPERIMENT), suite="metrics")
    assert report.passed
    rows = {row.quantity: row for row in report.rows}
    assert rows["L1inf"].measured == pytest.approx(0.25, abs=1e-12)
    assert rows["energy_upper_bound"].note == "A"


def test_suite_filter_skips_other_experiments():
    report = run_suites(parse_config(CERTIFICATE_EXPERIMENT), suite="verify")
    assert report.experiments == []
    assert report.rows == []


def test_construction_errors_become_failed_rows():
    config = parse_config(CERTIFICATE_EXPERIMENT.replace("delta = 0.5", "delta = 1.5"))
    report = run_suites(config)
    (row,) = report.rows
    assert row.quantity == "error"
    assert not row.passed
    assert "GalleryError" in row.note


# ==========================================
# Command line
# ==========================================


def test_run_command_writes_reports(write_config, tmp_path):
    path = write_config(CERTIFICATE_EXPERIMENT)
    out = tmp_path / "out"
    assert main(["--quiet", "run", "--config", str(path), "--out", str(out)]) == EXIT_PASSED
    assert (out / "experiments.csv").exists()
    assert (out / "experiments.json").exists()


def test_empty_experiment_list_passes(write_config, tmp_path):
    path = write_config("[run]\nseed = 1\n[grid]\ncounts = 4\n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == EXIT_PASSED


def test_failed_bounds_exit_with_one(write_config, tmp_path):
    path = write_config(CERTIFICATE_EXPERIMENT.replace("delta = 0.5", "delta = 1.5"))
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == EXIT_FAILED


@pytest.mark.parametrize(
    "text",
    ["[run]\nseed = = 1\n", '[[experiments]]\nname = "x"\nsuite = "verify"\nexpression = "missing"\n'],
)
def test_bad_configs_exit_with_two(write_config, tmp_path, text):
    path = write_config(text)
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == EXIT_USAGE


def test_missing_config_and_bad_workers(write_config, tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == EXIT_USAGE
    path = write_config(CERTIFICATE_EXPERIMENT)
    assert main(["run", "--config", str(path), "--workers", "0"]) == EXIT_USAGE


def test_suite_subcommand(write_config, tmp_path):
    path = write_config(METRICS_EXPERIMENT)
    assert main(["metrics", "--config", str(path), "--out", str(tmp_path)]) == EXIT_PASSED


def test_nonsmooth_command(tmp_path):
    out = tmp_path / "certificate.csv"
    argv = ["nonsmooth", "--a", "1.0", "--delta", "0.5", "--kmax", "100", "--count", "5", "--out", str(out)]
    assert main(argv) == EXIT_PASSED
    with out.open(encoding="utf-8", newline="") as f:
        table = list(csv.reader(f))
    assert table[0] == ["k", "s_k", "s_k'", "quotient", "bound", "pass"]
    assert [line[0] for line in table[1:]] == ["1", "3", "10", "32", "100"]


def test_nonsmooth_command_rejects_bad_exponents(tmp_path):
    argv = ["nonsmooth", "--a", "1.0", "--delta", "1.5", "--out", str(tmp_path / "c.csv")]
    assert main(argv) == EXIT_USAGE


def test_unknown_commands_are_usage_errors():
    with pytest.raises(SystemExit) as excinfo:
        main(["sideways"])
    assert excinfo.value.code == 2
