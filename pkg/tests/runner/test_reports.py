import csv
import json

import numpy as np
import pytest

from contactflow.constructions.nonsmooth import CutoffEta, RhoProfile, lipschitz_certificate
from contactflow.core.errors import ReportError
from contactflow.runner.reports import CERTIFICATE_FIELDS, ROW_FIELDS, emit_certificate, emit_report, format_cell
from contactflow.schemas.report import ResultRow, RunReport


@pytest.fixture
def report():
    rows = [
        ResultRow.check("metrics.ham_norm", "e1", "L1inf_le_Linf", 0.1, 0.3),
        ResultRow.check("cds.cross_check", "e1", "oracle_distance", 2e-5, 1e-5, seed=4),
        ResultRow.info("metrics.ham_norm", "e2", "L1inf", 1.0 / 3.0, grid_hash="abc"),
        ResultRow(anchor="verify.run", experiment="e3", quantity="error", measured=np.nan, relation="info", passed=False),
    ]
    return RunReport(source="experiments.toml", seed=4, experiments=["e1", "e2", "e3"], rows=rows)


def test_result_rows_evaluate_their_relation(report):
    assert report.rows[0].passed
    assert not report.rows[1].passed
    assert report.rows[2].required is None
    assert [row.quantity for row in report.failures()] == ["oracle_distance", "error"]
    assert not report.passed


def test_format_cell():
    assert format_cell(None) == ""
    assert format_cell(True) == "true"
    assert format_cell(0.1) == "0.1"
    assert format_cell(1.0 / 3.0) == repr(1.0 / 3.0)


def test_csv_and_json_agree(report, tmp_path):
    csv_path, json_path = emit_report(report, tmp_path, stem="run")
    assert (csv_path.name, json_path.name) == ("run.csv", "run.json")

    with csv_path.open(encoding="utf-8", newline="") as f:
        table = list(csv.reader(f))
    assert tuple(table[0]) == ROW_FIELDS
    assert len(table) == len(report.rows) + 1

    dumped = json.loads(json_path.read_text(encoding="utf-8"))
    assert [row["quantity"] for row in dumped["rows"]] == [line[ROW_FIELDS.index("quantity")] for line in table[1:]]
    measured = ROW_FIELDS.index("measured")
    assert float(table[3][measured]) == dumped["rows"][2]["measured"] == 1.0 / 3.0
    assert dumped["rows"][3]["measured"] is None


def test_reports_are_reproducible(report, tmp_path):
    first = [p.read_bytes() for p in emit_report(report, tmp_path / "a")]
    second = [p.read_bytes() for p in emit_report(report, tmp_path / "b")]
    assert first == second


def test_unknown_format_is_rejected(report, tmp_path):
    with pytest.raises(ReportError) as excinfo:
        emit_report(report, tmp_path, formats=["xml"])
    assert excinfo.value.path.endswith("report.xml")


def test_unwritable_directory_is_reported(report, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("", encoding="utf-8")
    with pytest.raises(ReportError):
        emit_report(report, blocker / "inside")


def test_certificate_table(tmp_path):
    certificate = lipschitz_certificate(RhoProfile(), CutoffEta(), 0.5, ks=[1, 2, 3])
    path = emit_certificate(certificate, tmp_path / "certificate.csv")
    with path.open(encoding="utf-8", newline="") as f:
        table = list(csv.reader(f))
    assert tuple(table[0]) == CERTIFICATE_FIELDS == ("k", "s_k", "s_k'", "quotient", "bound", "pass")
    assert [line[0] for line in table[1:]] == ["1", "2", "3"]
    assert all(line[-1] == "true" for line in table[1:])
    assert float(table[1][1]) == certificate.rows[0].s_k
