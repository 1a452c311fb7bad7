import logging

import numpy as np
import pandas as pd
import typer

from roughdyadic.cli import options, runner
from roughdyadic.models import Verdict, combine_verdicts
from roughdyadic.reporting.tables import console, new_manifest, verdict_table, write_frame, write_verdicts
from roughdyadic.rough.dyadic_paths import generate
from roughdyadic.rough.level2_lift import DyadicLift
from roughdyadic.rough.rough_integration import ONE_FORMS, integrate as integrate_form, integrate_path
from roughdyadic.rough.tensor_algebra import chen_mul, tensor_distance
from roughdyadic.rough.variation_metrics import d_p_grid, default_anchors

logger = logging.getLogger(__name__)

# refinement levels tried beyond the driver level, and the settling tolerance
REFINEMENT_DEPTH = 10
SETTLE_TOL = 1e-6
# the identity form integrates exactly, the cosine form only to the settling tolerance
ORACLE_TOL = {"identity": 1e-10, "cosine": 1e-5}
CHEN_TOL = 1e-9


def _oracle_error(form_name: str, value, lift: DyadicLift) -> float:
    exact = lift.increment(0.0, 1.0)
    if form_name == "identity":
        return tensor_distance(value, exact)
    # cosine: level 1 is sin(w_1) - sin(w_0) coordinatewise
    w0, w1 = lift.position_at(np.array([0.0, 1.0]))
    return float(np.max(np.abs(value.level1 - (np.sin(w1) - np.sin(w0)))))


def integrate(
    form: options.Form = "identity",
    dim: options.Dim = None,
    resolution: options.Resolution = None,
    seed: options.Seed = None,
    p: options.P = None,
    m: options.MRange = None,
    out: options.Out = None,
    config: options.Config = None,
    verbose: options.Verbose = False,
    quiet: options.Quiet = False,
) -> None:
    """Integrate a 1-form along the dyadic lifts w^(m) of one Brownian path."""
    cfg = runner.start(
        "integrate", config, verbose, quiet, dim=dim, resolution=resolution, seed=seed, p=p, m_range=m, out=out
    )
    if form not in ONE_FORMS:
        raise typer.BadParameter(f"choose from {', '.join(ONE_FORMS)}", param_hint="--form")
    one_form = ONE_FORMS[form](cfg.dim)
    out_dir = runner.output_dir(cfg)
    manifest = new_manifest("integrate", cfg.seed, cfg.model_dump(mode="json"))

    rows = []
    with runner.guarded(f"integrate {form}"):
        if max(cfg.m_range) + 1 > cfg.resolution:
            raise typer.BadParameter(f"m up to {max(cfg.m_range)} needs --resolution >= {max(cfg.m_range) + 1}")
        path = generate(cfg.dim, cfg.resolution, cfg.seed)
        for level in cfg.m_range:
            lift, finer = DyadicLift(path, level), DyadicLift(path, level + 1)
            schedule = range(level, level + REFINEMENT_DEPTH + 1)
            whole = integrate_form(one_form, lift, schedule=schedule, tol=SETTLE_TOL)
            anchors = default_anchors(level, cfg.anchor_level_cap)
            driver_gap = d_p_grid(finer, lift, anchors, cfg.p)
            running = integrate_path(one_form, lift)
            integral_gap = d_p_grid(integrate_path(one_form, finer), running, anchors, cfg.p)
            halves = chen_mul(running.increment(0.0, 0.5), running.increment(0.5, 1.0))
            rows.append(
                {
                    "form": form,
                    "m": level,
                    "oracle_error": _oracle_error(form, whole, lift),
                    "chen_gap": tensor_distance(halves, running.increment(0.0, 1.0)),
                    "dp_driver": driver_gap,
                    "dp_integral": integral_gap,
                    "continuity_ratio": integral_gap / driver_gap if driver_gap > 0.0 else float("nan"),
                }
            )
            logger.info("m=%d: continuity ratio %.4g", level, rows[-1]["continuity_ratio"])

    frame = pd.DataFrame(rows)
    write_frame(frame, out_dir / "integrate.csv", "integration rows")
    oracle_ok = bool((frame["oracle_error"] <= ORACLE_TOL[form]).all())
    chen_ok = bool((frame["chen_gap"] <= CHEN_TOL).all())
    entries = [
        (
            f"{form}: oracle",
            Verdict.PASS if oracle_ok else Verdict.FAIL,
            f"max error {frame['oracle_error'].max():.3g}, tolerance {ORACLE_TOL[form]:g}",
        ),
        (f"{form}: Chen consistency", Verdict.PASS if chen_ok else Verdict.FAIL, f"max gap {frame['chen_gap'].max():.3g}"),
    ]
    write_verdicts(entries, out_dir / "verdicts.csv")
    manifest.outputs.extend(["integrate.csv", "verdicts.csv"])
    console.print(verdict_table(f"Rough integration of the {form} form", entries))
    runner.finish(manifest, out_dir, combine_verdicts([v for _, v, _ in entries]))
