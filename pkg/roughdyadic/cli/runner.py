"""Plumbing shared by the commands: settings, output directory, exit codes."""

import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import typer

from roughdyadic.core.config import RunConfig, load_settings
from roughdyadic.core.errors import ConfigError, RejectedInputError, RoughDyadicError
from roughdyadic.models import RunManifest, Verdict
from roughdyadic.reporting.tables import write_manifest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

DEFAULT_SAMPLES = {"simulate": 1, "verify": 10_000, "solve": 100, "integrate": 1, "report": 1}


def set_verbosity(verbose: bool, quiet: bool) -> None:
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif quiet:
        logging.getLogger().setLevel(logging.WARNING)


def start(command: str, config: Path | None, verbose: bool, quiet: bool, **flags: Any) -> RunConfig:
    set_verbosity(verbose, quiet)
    try:
        cfg = load_settings(config, command=command, **flags)
    except ConfigError as e:
        logger.error("%s", e)
        raise typer.Exit(EXIT_USAGE) from e
    logger.info("Starting %s (seed %d, output %s)", command, cfg.seed, cfg.out)
    return cfg


def samples(cfg: RunConfig) -> int:
    return cfg.samples if cfg.samples is not None else DEFAULT_SAMPLES[cfg.command]


def output_dir(cfg: RunConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


@contextmanager
def guarded(what: str) -> Iterator[None]:
    """Turn library errors into exit codes: rejected input 2, anything else 1."""
    try:
        yield
    except RejectedInputError as e:
        logger.error("%s: %s", what, e)
        raise typer.Exit(EXIT_USAGE) from e
    except RoughDyadicError as e:
        logger.error("%s failed: %s", what, e)
        raise typer.Exit(EXIT_FAILED) from e


def exit_code(verdict: Verdict) -> int:
    return EXIT_OK if verdict is Verdict.PASS else EXIT_FAILED


def finish(manifest: RunManifest, out: Path, verdict: Verdict, name: str = "manifest.json") -> None:
    manifest.verdict = verdict
    manifest.outputs = sorted(manifest.outputs)
    write_manifest(manifest, out / name)
    code = exit_code(verdict)
    if code:
        logger.warning("%s finished with verdict %s", manifest.command, verdict.value)
    raise typer.Exit(code)
