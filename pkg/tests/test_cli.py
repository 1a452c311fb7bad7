import json

import pandas as pd
import pytest
from numpy.testing import assert_allclose
from typer.testing import CliRunner

from roughdyadic.cli.commands.integrate import ORACLE_TOL
from roughdyadic.cli.main import cli
from roughdyadic.reporting.tables import read_verdicts
from roughdyadic.rough.dyadic_paths import generate, load_csv
from roughdyadic.rough.rough_integration import ONE_FORMS

runner = CliRunner()


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("ROUGHDYADIC_THREADS", raising=False)


def invoke(*args: str):
    return runner.invoke(cli, [str(a) for a in args])


def test_help_lists_commands():
    result = invoke("--help")
    assert result.exit_code == 0
    for command in ("simulate", "verify", "solve", "integrate", "report"):
        assert command in result.output


def test_simulate(tmp_path):
    out = tmp_path / "paths"
    result = invoke("simulate", "--dim", 2, "--resolution", 4, "--seed", 5, "--out", out)
    assert result.exit_code == 0, result.output
    path = load_csv(out / "path_0000.csv")
    assert_allclose(path.values, generate(2, 4, 5).values, rtol=0, atol=0)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["outputs"] == ["path_0000.csv"]

    many = invoke("simulate", "--resolution", 3, "--samples", 3, "--out", tmp_path / "many")
    assert many.exit_code == 0
    assert sorted(p.name for p in (tmp_path / "many").glob("path_*.csv")) == [
        "path_0000.csv",
        "path_0001.csv",
        "path_0002.csv",
    ]


def test_verify_needs_a_known_lemma(tmp_path):
    assert invoke("verify", "--out", tmp_path).exit_code == 2
    assert invoke("verify", "--lemma", "le42", "--out", tmp_path).exit_code == 2


def test_verify_rejects_bad_parameters(tmp_path):
    assert invoke("verify", "--lemma", "le3", "--p", 3.5, "--out", tmp_path).exit_code == 2
    assert invoke("verify", "--lemma", "th8", "--beta", 0.05, "--out", tmp_path).exit_code == 2


def test_verify_is_reproducible(tmp_path):
    args = ["verify", "--lemma", "lem1a", "--m", "2..4", "--n", "2..6", "--samples", 400, "--tol", 0.5, "--seed", 8]
    first = invoke(*args, "--out", tmp_path / "a")
    second = invoke(*args, "--threads", 2, "--out", tmp_path / "b")
    assert first.exit_code == 0, first.output
    assert second.exit_code == 0
    assert (tmp_path / "a" / "estimates.csv").read_text() == (tmp_path / "b" / "estimates.csv").read_text()
    verdicts = pd.read_csv(tmp_path / "a" / "verdicts.csv")
    assert verdicts["check"].tolist() == ["lem1a"]
    assert list((tmp_path / "a").glob("lem1a_slope_*.svg"))
    estimates = pd.read_csv(tmp_path / "a" / "estimates.csv")
    assert estimates["anchor"].str.startswith("lemma lem1a: ").all()

    report = invoke("report", str(tmp_path / "a"), "--out", tmp_path / "report")
    assert report.exit_code == 0, report.output
    text = (tmp_path / "report" / "report.md").read_text()
    assert "## Citation map" in text
    assert "| lem1a | lemma lem1a | `" in text


def test_solve(tmp_path):
    out = tmp_path / "solve"
    result = invoke(
        "solve", "--case", "exp_scalar", "--case", "rotation_area", "--resolution", 6, "--m", "2..5",
        "--samples", 3, "--out", out,
    )
    assert result.exit_code in (0, 1), result.output
    frame = pd.read_csv(out / "wong_zakai.csv")
    assert set(frame["case"]) == {"exp_scalar", "rotation_area"}
    assert len(frame) == 2 * 3 * 4
    assert (out / "rotation_area_trajectory.csv").is_file()
    assert invoke("solve", "--case", "lorenz", "--out", out).exit_code == 2


def test_integrate_and_report(tmp_path):
    run_dir = tmp_path / "integrate"
    result = invoke("integrate", "--form", "identity", "--resolution", 6, "--m", "2..4", "--out", run_dir)
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(run_dir / "integrate.csv")
    assert frame["m"].tolist() == [2, 3, 4]
    assert (frame["oracle_error"] <= 1e-10).all()
    assert (frame["chen_gap"] <= 1e-9).all()
    oracle = {check: detail for check, _, detail in read_verdicts(run_dir / "verdicts.csv")}
    assert oracle["identity: oracle"].endswith("tolerance 1e-10")

    report_dir = tmp_path / "report"
    report = invoke("report", str(run_dir), "--out", report_dir)
    assert report.exit_code == 0, report.output
    text = (report_dir / "report.md").read_text()
    assert "identity: oracle" in text
    assert (report_dir / "report_manifest.json").is_file()


def test_integrate_rejections(tmp_path):
    assert invoke("integrate", "--form", "tangent", "--out", tmp_path).exit_code == 2
    assert invoke("integrate", "--resolution", 4, "--m", "2..4", "--out", tmp_path).exit_code == 2


def test_report_needs_finished_runs(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert invoke("report", str(empty), "--out", tmp_path / "r").exit_code == 2


def test_every_form_has_an_oracle_tolerance():
    assert set(ORACLE_TOL) == set(ONE_FORMS)
    assert ORACLE_TOL["identity"] == 1e-10
    assert ORACLE_TOL["cosine"] > ORACLE_TOL["identity"]
