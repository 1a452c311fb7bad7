"""CSV tables, run manifests and console verdict tables."""

import logging
from collections.abc import Iterable
from datetime import datetime, timezone
from pathlib import Path

import pandas as pd
from rich.console import Console
from rich.table import Table

from roughdyadic import __version__
from roughdyadic.models import EstimateRow, RunManifest, Verdict

logger = logging.getLogger(__name__)

ESTIMATE_COLUMNS = [
    "lemma_id",
    "statistic",
    "m",
    "n",
    "q",
    "estimate",
    "stderr",
    "samples",
    "slope",
    "verdict",
    "anchor",
    "kind",
]
FLOAT_FORMAT = "%.17g"

console = Console()


def rows_frame(rows: Iterable[EstimateRow]) -> pd.DataFrame:
    records = [row.model_dump(mode="json") for row in rows]
    frame = pd.DataFrame.from_records(records, columns=ESTIMATE_COLUMNS)
    # nullable integer indices keep "3" from turning into "3.0"
    for column in ("m", "n"):
        frame[column] = frame[column].astype("Int64")
    return frame


def write_rows(rows: Iterable[EstimateRow], target: Path) -> Path:
    frame = rows_frame(rows)
    frame.to_csv(target, index=False, float_format=FLOAT_FORMAT)
    logger.info("Wrote %d estimate rows to %s", len(frame), target)
    return target


def read_rows(source: Path) -> list[EstimateRow]:
    frame = pd.read_csv(source, keep_default_na=False, na_values=[""])
    missing = set(ESTIMATE_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"{source}: missing columns {sorted(missing)}")
    frame[["anchor", "kind"]] = frame[["anchor", "kind"]].fillna("")
    frame = frame.astype(object).where(frame.notna(), None)
    return [EstimateRow.model_validate(record) for record in frame.to_dict(orient="records")]


def write_frame(frame: pd.DataFrame, target: Path, what: str = "rows") -> Path:
    frame.to_csv(target, index=False, float_format=FLOAT_FORMAT)
    logger.info("Wrote %d %s to %s", len(frame), what, target)
    return target


def new_manifest(command: str, seed: int, config: dict) -> RunManifest:
    return RunManifest(
        command=command,
        version=__version__,
        seed=seed,
        started_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        config=config,
    )


def write_manifest(manifest: RunManifest, target: Path) -> Path:
    target.write_text(manifest.model_dump_json(indent=2) + "\n")
    logger.info("Wrote manifest to %s", target)
    return target


def read_manifest(source: Path) -> RunManifest:
    return RunManifest.model_validate_json(source.read_text())


_STYLES = {Verdict.PASS: "green", Verdict.FAIL: "red", Verdict.INCONCLUSIVE: "yellow"}


def verdict_table(title: str, entries: Iterable[tuple[str, Verdict, str]]) -> Table:
    table = Table(title=title)
    table.add_column("check")
    table.add_column("verdict")
    table.add_column("detail", overflow="fold")
    for name, verdict, detail in entries:
        style = _STYLES[verdict]
        table.add_row(name, f"[{style}]{verdict.value}[/{style}]", detail)
    return table


def write_verdicts(entries: Iterable[tuple[str, Verdict, str]], target: Path) -> Path:
    frame = pd.DataFrame(
        [{"check": name, "verdict": verdict.value, "detail": detail} for name, verdict, detail in entries],
        columns=["check", "verdict", "detail"],
    )
    return write_frame(frame, target, "verdicts")


def read_verdicts(source: Path) -> list[tuple[str, Verdict, str]]:
    frame = pd.read_csv(source, keep_default_na=False)
    return [(row.check, Verdict(row.verdict), row.detail) for row in frame.itertuples(index=False)]
