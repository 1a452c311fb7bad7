import typer

from roughdyadic.cli.commands import integrate, report, simulate, solve, verify

cli = typer.Typer(
    name="roughdyadic",
    help="Dyadic rough-path numerics and Monte Carlo checks of their quantitative bounds.",
    no_args_is_help=True,
    add_completion=False,
)
cli.command("simulate")(simulate.simulate)
cli.command("verify")(verify.verify)
cli.command("solve")(solve.solve)
cli.command("integrate")(integrate.integrate)
cli.command("report")(report.report)
