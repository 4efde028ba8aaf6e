"""
CLI Commands

One module per command; register_commands attaches them all to the group.
"""

import click

from app.commands import ablate, align, data, evaluate, gamma, gradcheck, train


def register_commands(group: click.Group) -> None:
    group.add_command(data.gen_data)
    group.add_command(align.align)
    group.add_command(gamma.gamma_solve)
    group.add_command(train.train)
    group.add_command(evaluate.eval_command)
    group.add_command(ablate.ablate_command)
    group.add_command(gradcheck.gradcheck)
