"""
gradcheck: every finite-difference suite; exits 1 when any fails.
"""

import click

from app.commands.common import emit, json_option
from app.services.gradcheck import TOLERANCE, run_gradchecks


@click.command("gradcheck")
@click.option("--instances", type=click.IntRange(min=1), default=20, show_default=True,
              help="Random instances per suite.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the random instances.")
@click.option("--tolerance", type=click.FloatRange(min=0.0), default=TOLERANCE, show_default=True,
              help="Maximum relative error.")
@json_option
@click.pass_context
def gradcheck(ctx, instances, seed, tolerance, as_json):
    """Check analytic gradients against central finite differences."""
    report = run_gradchecks(instances, seed, tolerance)
    lines = [
        f"{r.name:<16} {r.instances:>3} instances  max rel err {r.max_rel_error:.2e}  {'ok' if r.passed else 'FAILED'}"
        for r in report.results
    ]
    emit({"passed": report.passed, "results": [r.model_dump(mode="json") for r in report.results]},
         as_json, "\n".join(lines))
    if not report.passed:
        ctx.exit(1)
