import logging

from roughdyadic.cli import options, runner
from roughdyadic.core.parallel import path_seeds
from roughdyadic.models import Verdict
from roughdyadic.reporting.tables import console, new_manifest
from roughdyadic.rough.dyadic_paths import dump_csv, generate

logger = logging.getLogger(__name__)


def simulate(
    dim: options.Dim = None,
    resolution: options.Resolution = None,
    seed: options.Seed = None,
    samples: options.Samples = None,
    out: options.Out = None,
    config: options.Config = None,
    verbose: options.Verbose = False,
    quiet: options.Quiet = False,
) -> None:
    """Dump dyadic Brownian paths as CSV (t, x1..xd)."""
    cfg = runner.start(
        "simulate", config, verbose, quiet, dim=dim, resolution=resolution, seed=seed, samples=samples, out=out
    )
    count = runner.samples(cfg)
    out_dir = runner.output_dir(cfg)
    manifest = new_manifest("simulate", cfg.seed, cfg.model_dump(mode="json"))

    # a single path uses the master seed itself so it can be regenerated by hand
    seeds = [cfg.seed] if count == 1 else [int(s) for s in path_seeds(cfg.seed, count)]
    with runner.guarded("simulate"):
        for i, s in enumerate(seeds):
            target = out_dir / f"path_{i:04d}.csv"
            dump_csv(generate(cfg.dim, cfg.resolution, s), target)
            manifest.outputs.append(target.name)

    console.print(f"Wrote {len(seeds)} path(s) of resolution {cfg.resolution} to {out_dir}")
    runner.finish(manifest, out_dir, Verdict.PASS)
