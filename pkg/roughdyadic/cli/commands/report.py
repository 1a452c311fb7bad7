import logging
from pathlib import Path
from typing import Annotated

import typer

from roughdyadic.cli import options, runner
from roughdyadic.models import EstimateRow, Verdict, combine_verdicts
from roughdyadic.reporting.plots import ReportEntry, render_report, write_lemma_plots
from roughdyadic.reporting.tables import (
    console,
    new_manifest,
    read_manifest,
    read_rows,
    read_verdicts,
    verdict_table,
)

logger = logging.getLogger(__name__)

RunDirs = Annotated[
    list[Path] | None,
    typer.Argument(exists=True, file_okay=False, help="Run directories to aggregate (default: --out)."),
]


def _load_run(directory: Path) -> tuple[dict, list[tuple[str, Verdict, str]], list[EstimateRow]]:
    manifest_file = directory / "manifest.json"
    verdict_file = directory / "verdicts.csv"
    if not manifest_file.is_file() or not verdict_file.is_file():
        raise typer.BadParameter(f"{directory} holds no manifest.json/verdicts.csv", param_hint="RUNS")
    manifest = read_manifest(manifest_file)
    estimates = directory / "estimates.csv"
    rows = read_rows(estimates) if estimates.is_file() else []
    run = {
        "directory": str(directory),
        "command": manifest.command,
        "seed": manifest.seed,
        "version": manifest.version,
        "started_at": manifest.started_at,
    }
    return run, read_verdicts(verdict_file), rows


def report(
    runs: RunDirs = None,
    out: options.Out = None,
    config: options.Config = None,
    verbose: options.Verbose = False,
    quiet: options.Quiet = False,
) -> None:
    """Aggregate finished runs into report.md with one SVG per fitted sweep."""
    cfg = runner.start("report", config, verbose, quiet, out=out)
    directories = runs or [cfg.out]
    out_dir = runner.output_dir(cfg)
    manifest = new_manifest("report", cfg.seed, cfg.model_dump(mode="json"))

    runs_info = []
    entries: list[ReportEntry] = []
    summary: list[tuple[str, Verdict, str]] = []
    for directory in directories:
        run, verdicts, rows = _load_run(directory)
        runs_info.append(run)
        for check, verdict, detail in verdicts:
            lemma_rows = [row for row in rows if row.lemma_id == check]
            plots = write_lemma_plots(check.replace(":", "_").replace(" ", "_"), lemma_rows, out_dir)
            manifest.outputs.extend(plot.name for plot in plots)
            citations = list(dict.fromkeys(row.citation for row in lemma_rows if row.anchor))
            entries.append(
                ReportEntry(check, verdict, detail, citations, len(lemma_rows), [plot.name for plot in plots])
            )
            summary.append((check, verdict, f"{run['command']} in {directory}"))

    render_report(entries, runs_info, out_dir / "report.md")
    manifest.outputs.append("report.md")
    console.print(verdict_table("Report", summary))
    verdict = combine_verdicts([v for _, v, _ in summary]) if summary else Verdict.INCONCLUSIVE
    # the report may share a directory with the runs it reads
    runner.finish(manifest, out_dir, verdict, name="report_manifest.json")
