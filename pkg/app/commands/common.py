"""
Shared CLI options and output helpers.
"""

from pathlib import Path
from typing import Any, Callable, Optional

import click

from app.core.config import settings
from app.core.exceptions import DataIOError
from app.utils.helpers import dumps_stable

MANIFEST_NAMES = {"source": "source.json", "target": "target_train.json", "eval": "target_eval.json"}


def json_option(func: Callable) -> Callable:
    return click.option(
        "--json", "as_json", is_flag=True, default=False, help="Print a machine-readable JSON result to stdout."
    )(func)


def threads_option(func: Callable) -> Callable:
    return click.option(
        "--threads",
        type=click.IntRange(min=1),
        default=settings.DEFAULT_THREADS,
        show_default=True,
        help="Worker threads for per-image work; results do not depend on it.",
    )(func)


def data_dir_options(func: Callable) -> Callable:
    """--data-dir plus per-manifest overrides."""
    func = click.option("--eval", "eval_manifest", type=click.Path(path_type=Path), default=None,
                        help="Evaluation manifest (default: <data-dir>/target_eval.json when present).")(func)
    func = click.option("--target", "target_manifest", type=click.Path(path_type=Path), default=None,
                        help="Target training manifest (default: <data-dir>/target_train.json).")(func)
    func = click.option("--source", "source_manifest", type=click.Path(path_type=Path), default=None,
                        help="Source manifest (default: <data-dir>/source.json).")(func)
    func = click.option("--data-dir", type=click.Path(path_type=Path), default=None,
                        help="Directory written by gen-data.")(func)
    return func


def resolve_manifests(
    data_dir: Optional[Path],
    source: Optional[Path],
    target: Optional[Path],
    eval_manifest: Optional[Path],
    need_eval: bool = False,
):
    """Returns (source, target, eval or None); raises a usage error when one cannot be found."""
    if data_dir is not None:
        source = source or data_dir / MANIFEST_NAMES["source"]
        target = target or data_dir / MANIFEST_NAMES["target"]
        if eval_manifest is None and (need_eval or (data_dir / MANIFEST_NAMES["eval"]).is_file()):
            eval_manifest = data_dir / MANIFEST_NAMES["eval"]
    if source is None or target is None:
        raise click.UsageError("give --data-dir or both --source and --target")
    if need_eval and eval_manifest is None:
        raise click.UsageError("an evaluation manifest is required (--eval or --data-dir)")
    for path in (source, target, eval_manifest):
        if path is not None and not Path(path).is_file():
            raise DataIOError(f"File not found: {path}")
    return source, target, eval_manifest


def emit(payload: Any, as_json: bool, human: Optional[str] = None) -> None:
    """JSON to stdout with --json, otherwise a short human-readable line."""
    if as_json:
        click.echo(dumps_stable(payload), nl=False)
    elif human is not None:
        click.echo(human)
