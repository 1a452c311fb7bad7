import logging

import numpy as np
import pandas as pd

from roughdyadic.cli import options, runner
from roughdyadic.core.config import RunConfig
from roughdyadic.core.errors import BlowUpError
from roughdyadic.core.parallel import map_chunks, path_seeds
from roughdyadic.models import Verdict, combine_verdicts
from roughdyadic.reporting.tables import console, new_manifest, verdict_table, write_frame, write_verdicts
from roughdyadic.rough.dyadic_paths import generate
from roughdyadic.rough.rde_solver import (
    REFERENCE_CASES,
    ReferenceCase,
    SolveResult,
    dump_trajectory_csv,
    reference_case,
    stratonovich_reference,
    wz_sequence,
)
from roughdyadic.verify.estimators import fit_slope

logger = logging.getLogger(__name__)


def _case_rows(case: ReferenceCase, seeds: list[tuple[int, int]], cfg: RunConfig) -> tuple[list[dict], SolveResult]:
    rows = []
    first = None
    for index, seed in seeds:
        path = generate(case.spec.dim_in, cfg.resolution, seed)
        steps = wz_sequence(
            case.spec, case.y0, path, cfg.m_range, cfg.substeps, p=cfg.p, anchor_level_cap=cfg.anchor_level_cap
        )
        for step in steps:
            exact = stratonovich_reference(case.case_id, path, level=step.m, y0=case.y0)
            rows.append(
                {
                    "case": case.case_id,
                    "path": index,
                    "seed": seed,
                    "m": step.m,
                    "error_t1": float(np.max(np.abs(step.result.y[-1] - exact[-1]))),
                    "sup_error": float(np.max(np.abs(step.result.y - exact))),
                    "dp_gap": step.dp_gap,
                    "sup_gap": step.sup_gap,
                }
            )
        if first is None:
            first = steps[-1].result
    return rows, first


def _case_verdict(frame: pd.DataFrame) -> tuple[Verdict, str]:
    medians = frame.groupby("m")[["error_t1", "dp_gap"]].median()
    finest = medians.index.max()
    detail = f"median |y(1) - exact| at m={finest}: {medians.loc[finest, 'error_t1']:.3g}"
    if len(medians) < 3 or np.any(medians["dp_gap"] <= 0.0):
        return Verdict.INCONCLUSIVE, detail + "; too few levels for a d_p slope"
    slope = fit_slope(medians.index.to_numpy(), medians["dp_gap"].to_numpy()).slope
    detail += f"; d_p gap slope {slope:.3f}"
    return (Verdict.PASS if slope < 0.0 else Verdict.FAIL), detail


def solve(
    case: options.Case = None,
    resolution: options.Resolution = None,
    seed: options.Seed = None,
    p: options.P = None,
    m: options.MRange = None,
    samples: options.Samples = None,
    substeps: options.Substeps = None,
    out: options.Out = None,
    threads: options.Threads = None,
    config: options.Config = None,
    verbose: options.Verbose = False,
    quiet: options.Quiet = False,
) -> None:
    """Wong-Zakai sequences of the reference cases against their exact solutions."""
    cfg = runner.start(
        "solve",
        config,
        verbose,
        quiet,
        cases=",".join(case) if case else None,
        resolution=resolution,
        seed=seed,
        p=p,
        m_range=m,
        samples=samples,
        substeps=substeps,
        out=out,
        threads=threads,
    )
    case_ids = cfg.cases or list(REFERENCE_CASES)
    with runner.guarded("solve"):
        cases = [reference_case(case_id) for case_id in case_ids]
    count = runner.samples(cfg)
    seeds = list(enumerate(int(s) for s in path_seeds(cfg.seed, count)))
    size = -(-count // cfg.threads)
    batches = [seeds[i : i + size] for i in range(0, count, size)]

    out_dir = runner.output_dir(cfg)
    manifest = new_manifest("solve", cfg.seed, cfg.model_dump(mode="json"))
    frames = []
    entries: list[tuple[str, Verdict, str]] = []
    for ref in cases:
        logger.info("Solving %s on %d paths, m in %s", ref.case_id, count, cfg.m_range)
        with runner.guarded(ref.case_id):
            try:
                results = map_chunks(lambda batch: _case_rows(ref, batch, cfg), batches, cfg.threads)
            except BlowUpError as e:
                logger.error("%s blew up at t=%g", ref.case_id, e.time)
                entries.append((ref.case_id, Verdict.FAIL, str(e)))
                continue
        frame = pd.DataFrame([row for rows, _ in results for row in rows])
        frames.append(frame)
        trajectory = out_dir / f"{ref.case_id}_trajectory.csv"
        dump_trajectory_csv(results[0][1], trajectory)
        manifest.outputs.append(trajectory.name)
        verdict, detail = _case_verdict(frame)
        entries.append((ref.case_id, verdict, detail))

    if frames:
        write_frame(pd.concat(frames, ignore_index=True), out_dir / "wong_zakai.csv", "solver rows")
        manifest.outputs.append("wong_zakai.csv")
    write_verdicts(entries, out_dir / "verdicts.csv")
    manifest.outputs.append("verdicts.csv")
    console.print(verdict_table("Wong-Zakai cases", entries))
    runner.finish(manifest, out_dir, combine_verdicts([v for _, v, _ in entries]))
