import json

import pytest

from roughdyadic.models import EstimateRow, Verdict, cite, split_anchor
from roughdyadic.reporting.plots import ReportEntry, render_report, render_slope_svg, slope_series, write_lemma_plots
from roughdyadic.reporting.tables import (
    new_manifest,
    read_manifest,
    read_rows,
    read_verdicts,
    verdict_table,
    write_manifest,
    write_rows,
    write_verdicts,
)


@pytest.fixture
def rows() -> list[EstimateRow]:
    sweep = [
        EstimateRow(
            lemma_id="lem1a",
            statistic="||X1||_q",
            m=2,
            n=n,
            q=2.0,
            estimate=0.1 * 2.0**-n,
            stderr=1e-4,
            samples=400,
            slope=-1.0,
            verdict=Verdict.PASS,
            anchor="lemma lem1a: ||X1||_q <= C q 2^(m/2) 2^(-n), n > m",
        )
        for n in (3, 4, 5)
    ]
    zero = EstimateRow(lemma_id="lem1a", statistic="||X1||_q", m=2, n=2, q=2.0, estimate=0.0, verdict=Verdict.PASS)
    return sweep + [zero]


def test_rows_keep_indices_and_digits(tmp_path, rows):
    target = write_rows(rows, tmp_path / "estimates.csv")
    header = target.read_text().splitlines()[0]
    assert header.startswith("lemma_id,statistic,m,n,q,estimate")
    assert ",2,3," in target.read_text()
    back = read_rows(target)
    assert back == rows


def test_rows_without_indices(tmp_path):
    row = EstimateRow(lemma_id="le4", statistic="rho", m=3, estimate=1.5, slope=None)
    back = read_rows(write_rows([row], tmp_path / "e.csv"))
    assert back[0].n is None and back[0].slope is None and back[0].verdict is None


def test_verdicts_and_manifest(tmp_path):
    entries = [("le1", Verdict.PASS, "ok"), ("le2", Verdict.FAIL, "slope 0.9, bound 0.5")]
    assert read_verdicts(write_verdicts(entries, tmp_path / "verdicts.csv")) == entries

    manifest = new_manifest("verify", 42, {"seed": 42})
    manifest.outputs.append("estimates.csv")
    write_manifest(manifest, tmp_path / "manifest.json")
    assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 42
    assert read_manifest(tmp_path / "manifest.json") == manifest

    table = verdict_table("checks", entries)
    assert table.row_count == 2


def test_slope_series_groups_sweeps(rows):
    series = slope_series(rows)
    assert len(series) == 1
    assert series[0].axis == "n"
    assert series[0].x == [3.0, 4.0, 5.0]


def test_svg_carries_its_data(rows):
    svg = render_slope_svg(slope_series(rows)[0])
    assert svg.startswith("<?xml")
    assert "<!-- statistic: ||X1||_q -->" in svg
    assert "<!-- fitted slope: -1 -->" in svg
    # the bound text is escaped inside the svg
    assert "&lt;= C q" in svg
    assert svg.count("<circle") == 3


def test_anchor_splits_into_reference_and_bound(rows):
    assert rows[0].citation == ("lemma lem1a", "||X1||_q <= C q 2^(m/2) 2^(-n), n > m")
    assert split_anchor(cite("theorem th8", "P{d_p > C1 2^(-beta m)}: decays")) == (
        "theorem th8",
        "P{d_p > C1 2^(-beta m)}: decays",
    )
    assert split_anchor("no reference") == ("", "no reference")


def test_report(tmp_path, rows):
    plots = write_lemma_plots("lem1a", rows, tmp_path)
    assert [p.name for p in plots] == ["lem1a_slope_01.svg"]
    citations = list(dict.fromkeys(row.citation for row in rows if row.anchor))
    entry = ReportEntry("lem1a", Verdict.PASS, "L^q norms", citations, len(rows), [p.name for p in plots])
    run = {"directory": "runs/a", "command": "verify", "seed": 1, "version": "0.3.0", "started_at": "now"}
    text = render_report([entry], [run], tmp_path / "report.md").read_text()
    assert "| lem1a | pass | 4 | L^q norms |" in text
    assert "## Citation map" in text
    assert "| lem1a | lemma lem1a | `||X1||_q <= C q 2^(m/2) 2^(-n), n > m` |" in text
    assert "![lem1a](lem1a_slope_01.svg)" in text
    assert "note:" not in text
