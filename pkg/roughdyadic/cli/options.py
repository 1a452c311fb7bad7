"""Shared option declarations. Every option defaults to None so the config
file and the environment can fill in what the command line leaves out."""

from pathlib import Path
from typing import Annotated

import typer

Dim = Annotated[int | None, typer.Option("--dim", help="Path dimension d (1-8).")]
Resolution = Annotated[int | None, typer.Option("--resolution", help="Dyadic resolution M of generated paths (0-24).")]
Seed = Annotated[int | None, typer.Option("--seed", help="64-bit master seed.")]
P = Annotated[float | None, typer.Option("--p", help="Variation exponent p in (2, 3).")]
Gamma = Annotated[float | None, typer.Option("--gamma", help="Level weight exponent gamma > p/2 - 1.")]
Lemma = Annotated[
    list[str] | None, typer.Option("--lemma", help="Lemma id to check; repeat or comma-separate.")
]
MRange = Annotated[str | None, typer.Option("--m", help="m sweep, e.g. 2..10 or 2,4,6.")]
NRange = Annotated[str | None, typer.Option("--n", help="n sweep, e.g. 3..12.")]
Samples = Annotated[int | None, typer.Option("--samples", help="Monte Carlo sample (or path) count.")]
Q = Annotated[float | None, typer.Option("--q", help="Moment order q >= 1.")]
Beta = Annotated[float | None, typer.Option("--beta", help="Rate exponent beta.")]
Theta = Annotated[float | None, typer.Option("--theta", help="Level split exponent theta > 0.")]
Delta = Annotated[float | None, typer.Option("--delta", help="Growth exponent delta > 0.")]
Eps = Annotated[float | None, typer.Option("--eps", help="Target decay rate epsilon.")]
Tol = Annotated[float | None, typer.Option("--tol", help="Slope tolerance.")]
Order = Annotated[int | None, typer.Option("--order", help="Derivative order of Sobolev norms (1 or 2).")]
NTilde = Annotated[int | None, typer.Option("--n-tilde", help="Power N of the |X|^(2N) functionals.")]
Out = Annotated[Path | None, typer.Option("--out", help="Output directory.")]
Threads = Annotated[
    int | None, typer.Option("--threads", envvar="ROUGHDYADIC_THREADS", help="Worker threads for Monte Carlo chunks.")
]
Config = Annotated[
    Path | None, typer.Option("--config", exists=True, dir_okay=False, help="TOML file mirroring the flags.")
]
Case = Annotated[list[str] | None, typer.Option("--case", help="Reference case id; repeat for several.")]
Substeps = Annotated[int | None, typer.Option("--substeps", help="RK4 substeps per driver segment.")]
Form = Annotated[str, typer.Option("--form", help="1-form to integrate: identity or cosine.")]
Verbose = Annotated[bool, typer.Option("--verbose", "-v", help="Log debug detail.")]
Quiet = Annotated[bool, typer.Option("--quiet", help="Log warnings and errors only.")]
