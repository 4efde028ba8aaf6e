"""
gamma-solve: the regularized gamma for the lightness of two images.
"""

from pathlib import Path

import click

from app.commands.common import emit, json_option
from app.repositories.netpbm import NetpbmRepository
from app.schemas.image import L_RANGE, UNIT_RANGE
from app.services.imgproc import DEFAULT_BETA, channel_histogram, gamma_objective, rgb_to_lab, solve_gamma


@click.command("gamma-solve")
@click.option("--src", type=click.Path(path_type=Path), required=True, help="Source PPM.")
@click.option("--ref", type=click.Path(path_type=Path), required=True, help="Reference PPM.")
@click.option("--beta", type=click.FloatRange(min=0.0), default=DEFAULT_BETA, show_default=True,
              help="Gamma regularization weight.")
@json_option
def gamma_solve(src, ref, beta, as_json):
    """Solve the regularized gamma mapping src lightness toward ref."""
    netpbm = NetpbmRepository()
    lo, hi = L_RANGE
    src_hist = channel_histogram((rgb_to_lab(netpbm.read_ppm(src)).L - lo) / (hi - lo), UNIT_RANGE)
    ref_hist = channel_histogram((rgb_to_lab(netpbm.read_ppm(ref)).L - lo) / (hi - lo), UNIT_RANGE)
    solution = solve_gamma(src_hist, ref_hist, beta)
    payload = {
        **solution.model_dump(mode="json"),
        "beta": beta,
        "objective_at_identity": gamma_objective(1.0, src_hist, ref_hist, beta),
    }
    emit(payload, as_json, f"gamma={solution.gamma:.6f} J={solution.objective_value:.3e}")
