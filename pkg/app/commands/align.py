"""
align: photometric alignment of one image, or of every image in a manifest.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Tuple

import click

from app.commands.common import emit, json_option, threads_option
from app.core.exceptions import DataIOError
from app.middleware.logging import log_duration
from app.repositories.manifest import ManifestRepository
from app.repositories.netpbm import NetpbmRepository
from app.schemas.dataset import DatasetManifest
from app.schemas.image import AlignmentReport
from app.services.imgproc import DEFAULT_BETA, photometric_align_with_report
from app.utils.enums import AlignScheme
from app.utils.helpers import derive_rng, dumps_stable

logger = logging.getLogger(__name__)


def sidecar_payload(report: AlignmentReport, src: Path, ref: Path) -> dict:
    return {"source": str(src), "reference": str(ref), **report.model_dump(mode="json")}


def align_file(src: Path, ref: Path, out: Path, beta: float, scheme: AlignScheme) -> AlignmentReport:
    """Align src toward ref, write the PPM and its .json sidecar."""
    netpbm = NetpbmRepository()
    aligned, report = photometric_align_with_report(netpbm.read_ppm(src), netpbm.read_ppm(ref), beta, scheme)
    netpbm.write_ppm(aligned, out)
    netpbm.write_text(Path(out).with_suffix(".json"), dumps_stable(sidecar_payload(report, src, ref)))
    return report


def align_manifest(
    manifest_path: Path,
    ref_manifest_path: Path,
    out_dir: Path,
    beta: float,
    scheme: AlignScheme,
    seed: int,
    threads: int,
) -> Tuple[int, int, Path]:
    """
    Align every image of a manifest to a reference drawn uniformly (with
    replacement) from the reference manifest.

    Returns:
        (succeeded, failed, path of the aligned manifest)
    """
    repo = ManifestRepository()
    manifest = repo.read_manifest(manifest_path, check_files=False)
    ref_manifest = repo.read_manifest(ref_manifest_path)
    if ref_manifest.count == 0:
        raise DataIOError(f"{ref_manifest_path}: reference manifest lists no images")
    src_dir, ref_dir = Path(manifest_path).parent, Path(ref_manifest_path).parent
    picks = derive_rng(seed).integers(ref_manifest.count, size=manifest.count)

    def work(index: int) -> Optional[str]:
        out = out_dir / "images" / f"{index:04d}.ppm"
        try:
            align_file(src_dir / manifest.image_paths[index], ref_dir / ref_manifest.image_paths[int(picks[index])],
                       out, beta, scheme)
        except DataIOError as e:
            logger.error(f"align {manifest.image_paths[index]}: {e.detail}")
            return None
        return os.path.relpath(out, out_dir)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(work, range(manifest.count)))
    else:
        outputs = [work(i) for i in range(manifest.count)]

    kept = [i for i, rel in enumerate(outputs) if rel is not None]
    labels = None
    if manifest.label_paths is not None:
        labels = [os.path.relpath(src_dir / manifest.label_paths[i], out_dir) for i in kept]
    aligned = DatasetManifest(
        split=manifest.split,
        num_categories=manifest.num_categories,
        count=len(kept),
        image_paths=[outputs[i] for i in kept],
        label_paths=labels,
        seeds=[manifest.seeds[i] for i in kept] if len(manifest.seeds) == manifest.count else [],
        profile=manifest.profile,
    )
    path = repo.write_manifest(aligned, out_dir / "aligned.json")
    return len(kept), manifest.count - len(kept), path


@click.command("align")
@click.option("--src", type=click.Path(path_type=Path), default=None, help="Source PPM (single-image mode).")
@click.option("--ref", type=click.Path(path_type=Path), default=None, help="Reference PPM (single-image mode).")
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Output PPM; the sidecar is written next to it with a .json suffix.")
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), default=None,
              help="Manifest of images to align (batch mode).")
@click.option("--ref-manifest", type=click.Path(path_type=Path), default=None,
              help="Manifest of reference images (batch mode).")
@click.option("--out-dir", type=click.Path(path_type=Path), default=None, help="Output directory (batch mode).")
@click.option("--beta", type=click.FloatRange(min=0.0), default=DEFAULT_BETA, show_default=True,
              help="Gamma regularization weight.")
@click.option("--scheme", type=click.Choice([s.value for s in AlignScheme]), default=AlignScheme.HYBRID.value,
              show_default=True, help="Alignment scheme.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for reference picking in batch mode.")
@threads_option
@json_option
@click.pass_context
def align(ctx, src, ref, out, manifest_path, ref_manifest, out_dir, beta, scheme, seed, threads, as_json):
    """Align source image(s) to target reference(s) in Lab space."""
    scheme = AlignScheme(scheme)
    single = any(v is not None for v in (src, ref, out))
    batch = any(v is not None for v in (manifest_path, ref_manifest, out_dir))
    if single == batch:
        raise click.UsageError("use either --src/--ref/--out or --manifest/--ref-manifest/--out-dir")

    if single:
        if None in (src, ref, out):
            raise click.UsageError("--src, --ref and --out are all required")
        report = align_file(src, ref, out, beta, scheme)
        gamma = report.gamma.get("L")
        emit(
            sidecar_payload(report, src, ref),
            as_json,
            f"Aligned {src} -> {out}" + (f" (gamma={gamma.gamma:.4f})" if gamma else ""),
        )
        return

    if None in (manifest_path, ref_manifest, out_dir):
        raise click.UsageError("--manifest, --ref-manifest and --out-dir are all required")
    with log_duration(f"align {manifest_path}", logger):
        succeeded, failed, aligned_path = align_manifest(
            manifest_path, ref_manifest, out_dir, beta, scheme, seed, threads
        )
    emit(
        {"processed": succeeded + failed, "succeeded": succeeded, "failed": failed, "manifest": str(aligned_path)},
        as_json,
        f"Aligned {succeeded}/{succeeded + failed} images -> {aligned_path}",
    )
    if failed:
        ctx.exit(2)
