import logging

import typer
from pydantic import ValidationError

from roughdyadic.cli import options, runner
from roughdyadic.core.errors import RejectedInputError, RoughDyadicError
from roughdyadic.models import EstimateRow, Verdict, combine_verdicts
from roughdyadic.reporting.plots import write_lemma_plots
from roughdyadic.reporting.tables import console, new_manifest, verdict_table, write_rows, write_verdicts
from roughdyadic.verify.lemmas import LEMMAS, verify_lemma

logger = logging.getLogger(__name__)


def verify(
    lemma: options.Lemma = None,
    dim: options.Dim = None,
    seed: options.Seed = None,
    p: options.P = None,
    gamma: options.Gamma = None,
    m: options.MRange = None,
    n: options.NRange = None,
    samples: options.Samples = None,
    q: options.Q = None,
    beta: options.Beta = None,
    theta: options.Theta = None,
    delta: options.Delta = None,
    eps: options.Eps = None,
    tol: options.Tol = None,
    order: options.Order = None,
    n_tilde: options.NTilde = None,
    out: options.Out = None,
    threads: options.Threads = None,
    config: options.Config = None,
    verbose: options.Verbose = False,
    quiet: options.Quiet = False,
) -> None:
    """Run the Monte Carlo lemma checks and write estimates, verdicts and plots."""
    cfg = runner.start(
        "verify",
        config,
        verbose,
        quiet,
        lemmas=",".join(lemma) if lemma else None,
        dim=dim,
        seed=seed,
        p=p,
        gamma=gamma,
        m_range=m,
        n_range=n,
        samples=samples,
        q=q,
        beta=beta,
        theta=theta,
        delta=delta,
        eps=eps,
        tol=tol,
        order=order,
        n_tilde=n_tilde,
        out=out,
        threads=threads,
    )
    if not cfg.lemmas:
        raise typer.BadParameter(f"name at least one lemma: {', '.join(LEMMAS)}", param_hint="--lemma")
    unknown = [lemma_id for lemma_id in cfg.lemmas if lemma_id not in LEMMAS]
    if unknown:
        raise typer.BadParameter(
            f"unknown lemma(s) {', '.join(unknown)}; choose from {', '.join(LEMMAS)}", param_hint="--lemma"
        )

    try:
        spec = cfg.rate_check_spec(runner.samples(cfg))
    except ValidationError as e:
        logger.error("Invalid rate-check parameters: %s", e)
        raise typer.Exit(runner.EXIT_USAGE) from e

    out_dir = runner.output_dir(cfg)
    manifest = new_manifest("verify", cfg.seed, cfg.model_dump(mode="json"))
    rows: list[EstimateRow] = []
    entries: list[tuple[str, Verdict, str]] = []
    for lemma_id in cfg.lemmas:
        try:
            result = verify_lemma(lemma_id, spec)
        except RejectedInputError as e:
            logger.error("%s: %s", lemma_id, e)
            raise typer.Exit(runner.EXIT_USAGE) from e
        except RoughDyadicError as e:
            logger.error("%s failed: %s", lemma_id, e)
            entries.append((lemma_id, Verdict.FAIL, str(e)))
            continue
        rows.extend(result.rows)
        entries.append((lemma_id, result.verdict, "; ".join(result.notes) or LEMMAS[lemma_id].summary))
        manifest.outputs.extend(plot.name for plot in write_lemma_plots(lemma_id, result.rows, out_dir))

    write_rows(rows, out_dir / "estimates.csv")
    write_verdicts(entries, out_dir / "verdicts.csv")
    manifest.outputs.extend(["estimates.csv", "verdicts.csv"])
    console.print(verdict_table("Lemma checks", entries))
    runner.finish(manifest, out_dir, combine_verdicts([v for _, v, _ in entries]))
