"""
Dataset Generation Service

Deterministic synthetic two-domain segmentation benchmark. Scenes are
random rectangles and ellipses over a background category; each domain
renders them with its own palette (category-level shift) and its own
gamma/color cast/noise (image-level shift).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.repositories.manifest import ManifestRepository
from app.repositories.netpbm import NetpbmRepository
from app.schemas.dataset import BenchmarkConfig, DatasetManifest, DomainProfile, PaletteEntry, SceneSpec
from app.schemas.image import LabImage, RgbImage
from app.services.imgproc import lab_to_rgb
from app.utils.enums import ShapeKind, SplitName
from app.utils.helpers import derive_seed

logger = logging.getLogger(__name__)

_SPLIT_KEYS = {SplitName.SOURCE: 0, SplitName.TARGET_TRAIN: 1, SplitName.TARGET_EVAL: 2}
_RENDER_OFFSET = 10


# ----------------------------------------------------
# Default domains
# ----------------------------------------------------
def default_source_profile() -> DomainProfile:
    """Five categories; 3 and 4 are deliberately close in color."""
    return DomainProfile(
        name="source",
        gamma_shift=1.0,
        color_cast=(0.0, 0.0),
        noise_sigma=2.0,
        palette=[
            PaletteEntry(L=50.0, a=0.0, b=0.0, spread=4.0),
            PaletteEntry(L=65.0, a=-35.0, b=40.0, spread=5.0),
            PaletteEntry(L=45.0, a=45.0, b=25.0, spread=5.0),
            PaletteEntry(L=62.0, a=5.0, b=-38.0, spread=6.0),
            PaletteEntry(L=56.0, a=16.0, b=-30.0, spread=6.0),
        ],
    )


def default_target_profile() -> DomainProfile:
    """
    Darker, warmer, noisier, with per-category color drift and wider spreads.
    Imaging conditions also vary from image to image.
    """
    return DomainProfile(
        name="target",
        gamma_shift=1.6,
        color_cast=(10.0, 14.0),
        noise_sigma=3.0,
        gamma_jitter=0.15,
        cast_jitter=4.0,
        palette=[
            PaletteEntry(L=52.0, a=2.0, b=-3.0, spread=6.0),
            PaletteEntry(L=60.0, a=-28.0, b=34.0, spread=7.0),
            PaletteEntry(L=48.0, a=38.0, b=30.0, spread=7.0),
            PaletteEntry(L=60.0, a=10.0, b=-32.0, spread=8.0),
            PaletteEntry(L=58.0, a=18.0, b=-24.0, spread=8.0),
        ],
    )


def categories_overlap(profile: DomainProfile, first: int, second: int) -> bool:
    """True when the two categories' color balls (radius = 2 * spread) intersect in Lab."""
    p, q = profile.palette[first], profile.palette[second]
    distance = float(np.linalg.norm([p.L - q.L, p.a - q.a, p.b - q.b]))
    return distance < 2.0 * (p.spread + q.spread)


# ----------------------------------------------------
# Scenes and rendering
# ----------------------------------------------------
def generate_scene(
    spec: SceneSpec,
    seed: int,
    image_size: Optional[Tuple[int, int]] = None,
    cover_category: Optional[int] = None,
) -> np.ndarray:
    """
    Paint random axis-aligned rectangles and ellipses back to front over the
    background category. With cover_category, the front-most shape is a
    rectangle of that category, so it shows in at least one pixel.

    Returns:
        (height, width) int64 category map
    """
    if cover_category is not None and not 0 <= cover_category < spec.num_categories:
        raise ValueError(f"cover_category must lie in [0, {spec.num_categories - 1}], got {cover_category}")
    height, width = image_size or spec.image_size
    rng = np.random.default_rng(seed)
    layout = np.full((height, width), spec.background_category, dtype=np.int64)
    foreground = [c for c in range(spec.num_categories) if c != spec.background_category]
    rows, cols = np.mgrid[0:height, 0:width]

    num_shapes = int(rng.integers(spec.min_shapes, spec.max_shapes + 1))
    for shape in range(num_shapes):
        kind = ShapeKind.RECTANGLE if rng.random() < 0.5 else ShapeKind.ELLIPSE
        category = foreground[int(rng.integers(len(foreground)))]
        if cover_category is not None and shape == num_shapes - 1:
            kind, category = ShapeKind.RECTANGLE, cover_category
        half_h = max(0.5, 0.5 * height * rng.uniform(spec.min_extent, spec.max_extent))
        half_w = max(0.5, 0.5 * width * rng.uniform(spec.min_extent, spec.max_extent))
        cy = rng.uniform(0, height)
        cx = rng.uniform(0, width)
        dy = (rows + 0.5 - cy) / half_h
        dx = (cols + 0.5 - cx) / half_w
        if kind == ShapeKind.RECTANGLE:
            mask = (np.abs(dy) <= 1.0) & (np.abs(dx) <= 1.0)
        else:
            mask = dy * dy + dx * dx <= 1.0
        layout[mask] = category
    return layout


def render_domain(layout: np.ndarray, profile: DomainProfile, seed: int) -> RgbImage:
    """
    Per-pixel Lab = palette base + Gaussian spread, then the domain's a/b
    cast, lightness raised to gamma_shift, Gaussian noise, and conversion to
    sRGB. gamma_jitter and cast_jitter vary the gamma and the cast from one
    image to the next around the domain's values.
    """
    layout = np.asarray(layout, dtype=np.int64)
    if layout.size and (layout.min() < 0 or layout.max() >= profile.num_categories):
        raise ValueError(f"layout categories must lie in [0, {profile.num_categories - 1}]")
    rng = np.random.default_rng(seed)
    base = np.array([[e.L, e.a, e.b] for e in profile.palette], dtype=np.float64)
    spread = np.array([e.spread for e in profile.palette], dtype=np.float64)

    # draw both noise fields unconditionally so the streams do not depend on the profile
    category_noise = rng.standard_normal(layout.shape + (3,))
    pixel_noise = rng.standard_normal(layout.shape + (3,))
    image_noise = rng.standard_normal(3)

    gamma = float(np.clip(profile.gamma_shift * np.exp(profile.gamma_jitter * image_noise[0]), 0.3, 3.0))
    lab = base[layout] + category_noise * spread[layout][..., None]
    lab[..., 1] += profile.color_cast[0] + profile.cast_jitter * image_noise[1]
    lab[..., 2] += profile.color_cast[1] + profile.cast_jitter * image_noise[2]
    lightness = np.clip(lab[..., 0], 0.0, 100.0)
    if gamma != 1.0:
        lightness = 100.0 * (lightness / 100.0) ** gamma
    lab[..., 0] = lightness
    if profile.noise_sigma > 0.0:
        lab += pixel_noise * profile.noise_sigma
    return lab_to_rgb(LabImage(L=lab[..., 0], a=lab[..., 1], b=lab[..., 2]))


def check_category_coverage(split: SplitName, layouts: List[np.ndarray], scene: SceneSpec) -> List[int]:
    """
    Categories missing from a split's label maps. A split with at least
    C - 1 scenes (and at least one shape per scene) fronts every foreground
    category once, so anything missing there is a generation error; smaller
    splits only get a warning.

    Raises:
        ValueError: a split large enough to cover every category does not
    """
    present = np.zeros(scene.num_categories, dtype=bool)
    for layout in layouts:
        present[np.unique(layout)] = True
    missing = [int(c) for c in np.flatnonzero(~present)]
    if missing:
        message = f"{split.value}: categories {missing} never appear in {len(layouts)} scenes"
        if scene.min_shapes >= 1 and len(layouts) >= scene.num_categories - 1:
            raise ValueError(message)
        logger.warning(message)
    return missing


# ----------------------------------------------------
# Benchmark on disk
# ----------------------------------------------------
class DatasetService:
    """Generates the benchmark and writes images, labels, and manifests."""

    def __init__(self, output_dir: Path, threads: int = 1):
        self.output_dir = Path(output_dir)
        self.threads = max(1, threads)
        self.netpbm = NetpbmRepository(self.output_dir)
        self.manifests = ManifestRepository(self.output_dir)

    def _render_split(
        self,
        split: SplitName,
        count: int,
        profile: DomainProfile,
        config: BenchmarkConfig,
        image_size: Tuple[int, int],
    ) -> Tuple[List[int], List[np.ndarray], List[RgbImage]]:
        key = _SPLIT_KEYS[split]
        layout_key = _SPLIT_KEYS[SplitName.SOURCE] if config.paired_layouts else key
        layout_seeds = [derive_seed(config.seed, layout_key, i) for i in range(count)]
        render_seeds = [derive_seed(config.seed, _RENDER_OFFSET + key, i) for i in range(count)]
        scene = config.scene
        foreground = [c for c in range(scene.num_categories) if c != scene.background_category]

        def make(index: int) -> Tuple[np.ndarray, RgbImage]:
            # scene i fronts foreground category i mod (C - 1)
            cover = foreground[index % len(foreground)]
            layout = generate_scene(scene, layout_seeds[index], image_size, cover_category=cover)
            return layout, render_domain(layout, profile, render_seeds[index])

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                pairs = list(pool.map(make, range(count)))
        else:
            pairs = [make(i) for i in range(count)]
        layouts = [p[0] for p in pairs]
        check_category_coverage(split, layouts, scene)
        return layout_seeds, layouts, [p[1] for p in pairs]

    def _write_split(
        self,
        split: SplitName,
        count: int,
        profile: DomainProfile,
        config: BenchmarkConfig,
        image_size: Tuple[int, int],
        list_labels: bool,
    ) -> Path:
        seeds, layouts, images = self._render_split(split, count, profile, config, image_size)
        image_paths, label_paths = [], []
        for index, (layout, image) in enumerate(zip(layouts, images)):
            image_rel = f"{split.value}/images/{index:04d}.ppm"
            label_rel = f"{split.value}/labels/{index:04d}.pgm"
            self.netpbm.write_ppm(image, image_rel)
            # ground truth is always written; only listed when the split may use it
            self.netpbm.write_label_pgm(layout, label_rel)
            image_paths.append(image_rel)
            label_paths.append(label_rel)

        manifest = DatasetManifest(
            split=split,
            num_categories=config.scene.num_categories,
            count=count,
            image_paths=image_paths,
            label_paths=label_paths if list_labels else None,
            seeds=seeds,
            profile=profile,
        )
        path = self.manifests.write_manifest(manifest, f"{split.value}.json")
        logger.info(f"Wrote {count} {split.value} images ({image_size[0]}x{image_size[1]}) -> {path}")
        return path

    def generate_benchmark(self, config: BenchmarkConfig) -> Dict[str, Path]:
        """
        Write the three splits and their manifests under output_dir.

        Returns:
            split name -> manifest path
        """
        source_profile = config.source_profile or default_source_profile()
        target_profile = config.target_profile or default_target_profile()
        for profile in (source_profile, target_profile):
            if profile.num_categories != config.scene.num_categories:
                raise ValueError(
                    f"profile '{profile.name}' has {profile.num_categories} categories, "
                    f"scene has {config.scene.num_categories}"
                )

        return {
            SplitName.SOURCE.value: self._write_split(
                SplitName.SOURCE, config.num_source, source_profile, config, config.image_size, True
            ),
            SplitName.TARGET_TRAIN.value: self._write_split(
                SplitName.TARGET_TRAIN, config.num_target_train, target_profile, config, config.image_size, False
            ),
            SplitName.TARGET_EVAL.value: self._write_split(
                SplitName.TARGET_EVAL, config.num_target_eval, target_profile, config, config.eval_image_size, True
            ),
        }
