#!/usr/bin/env python3
"""
Tests for the synthetic benchmark: scenes, domain rendering, and the
on-disk splits.

Usage:
    python scripts/test_datagen.py
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from app.repositories.manifest import ManifestRepository
from app.schemas.dataset import BenchmarkConfig, DomainProfile, PaletteEntry, SceneSpec
from app.services.datagen import (
    DatasetService,
    categories_overlap,
    check_category_coverage,
    default_source_profile,
    default_target_profile,
    generate_scene,
    render_domain,
)
from app.services.imgproc import rgb_to_lab
from app.utils.enums import SplitName
from testkit import tiny_benchmark


def _flat_profile(gamma_shift: float = 1.0) -> DomainProfile:
    return DomainProfile(
        name="flat",
        gamma_shift=gamma_shift,
        palette=[PaletteEntry(L=50.0, a=0.0, b=0.0), PaletteEntry(L=70.0, a=30.0, b=-20.0)],
    )


def test_zero_shapes_leave_background():
    spec = SceneSpec(min_shapes=0, max_shapes=0, background_category=2)
    layout = generate_scene(spec, seed=1)
    assert layout.shape == spec.image_size
    assert np.all(layout == 2)


def test_scene_is_seeded_and_in_range():
    spec = SceneSpec(image_size=(20, 16))
    a, b = generate_scene(spec, 5), generate_scene(spec, 5)
    assert np.array_equal(a, b)
    assert a.shape == (20, 16)
    assert a.min() >= 0 and a.max() < spec.num_categories
    assert generate_scene(spec, 5, image_size=(8, 9)).shape == (8, 9)


def test_one_layout_two_domains():
    layout = generate_scene(SceneSpec(image_size=(16, 16)), seed=3)
    source = render_domain(layout, default_source_profile(), seed=10)
    target = render_domain(layout, default_target_profile(), seed=10)
    assert source.data.shape == target.data.shape == (16, 16, 3)
    assert not np.array_equal(source.data, target.data)
    assert np.array_equal(source.data, render_domain(layout, default_source_profile(), seed=10).data)


def test_identity_profile_renders_palette_colors():
    layout = np.array([[0, 1], [1, 0]])
    image = render_domain(layout, _flat_profile(), seed=0)
    lab = rgb_to_lab(image)
    assert abs(lab.L[0, 0] - 50.0) < 0.5 and abs(lab.L[0, 1] - 70.0) < 0.5
    assert np.array_equal(image.data[0, 0], image.data[1, 1])


def test_gamma_shift_on_flat_layout():
    layout = np.zeros((4, 4), dtype=int)
    lab = rgb_to_lab(render_domain(layout, _flat_profile(gamma_shift=2.0), seed=0))
    assert np.allclose(lab.L, 25.0, atol=0.5)


def test_layout_outside_palette_is_rejected():
    try:
        render_domain(np.array([[0, 5]]), _flat_profile(), seed=0)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")


def test_default_profiles_share_category_count_and_close_pair():
    source, target = default_source_profile(), default_target_profile()
    assert source.num_categories == target.num_categories == 5
    assert categories_overlap(source, 3, 4)
    assert not categories_overlap(source, 1, 2)


def test_benchmark_on_disk(tmp_path):
    manifests = tiny_benchmark(tmp_path)
    assert set(manifests) == {s.value for s in SplitName}

    repo = ManifestRepository()
    source = repo.load_split(manifests["source"])
    target = repo.load_split(manifests["target_train"])
    evaluation = repo.load_split(manifests["target_eval"])
    assert (source.count, target.count, evaluation.count) == (4, 3, 2)
    assert target.labels is None and target.manifest.label_paths is None
    assert source.labels is not None and evaluation.labels is not None
    assert source.images[0].data.shape == (12, 12, 3)

    raw = json.loads(Path(manifests["target_train"]).read_text())
    assert raw["label_paths"] is None and raw["split"] == "target_train"


def test_benchmark_is_deterministic(tmp_path):
    first = tiny_benchmark(tmp_path / "a", seed=4)
    second = tiny_benchmark(tmp_path / "b", seed=4)
    for split in first:
        assert Path(first[split]).read_bytes() == Path(second[split]).read_bytes()
    for rel in ("source/images/0000.ppm", "target_eval/labels/0001.pgm"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_cover_category_is_always_visible():
    spec = SceneSpec(image_size=(6, 6), min_shapes=1, max_shapes=6)
    for seed in range(50):
        cover = 1 + seed % 4
        assert np.any(generate_scene(spec, seed, cover_category=cover) == cover), seed
    try:
        generate_scene(spec, 0, cover_category=5)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")


def test_every_category_appears_in_each_large_split(tmp_path):
    manifests = tiny_benchmark(tmp_path)
    source = ManifestRepository().load_split(manifests["source"])
    assert set(np.unique(np.stack(source.labels))) == set(range(5))

    spec = SceneSpec(num_categories=3)
    flat = [np.zeros((4, 4), dtype=np.int64)] * 2
    try:
        check_category_coverage(SplitName.SOURCE, flat, spec)
    except ValueError as e:
        assert "[1, 2]" in str(e)
    else:
        raise AssertionError("expected ValueError")
    assert check_category_coverage(SplitName.SOURCE, flat[:1], spec) == [1, 2]


def test_paired_layouts_share_label_maps(tmp_path):
    config = BenchmarkConfig(num_source=4, num_target_train=3, num_target_eval=3, image_size=(12, 12),
                             eval_image_size=(12, 12), paired_layouts=True,
                             scene=SceneSpec(image_size=(12, 12), min_shapes=2, max_shapes=4))
    manifests = DatasetService(tmp_path).generate_benchmark(config)
    repo = ManifestRepository()
    source = repo.load_split(manifests["source"])
    evaluation = repo.load_split(manifests["target_eval"])
    assert evaluation.manifest.seeds == source.manifest.seeds[:3]
    for a, b in zip(source.labels, evaluation.labels):
        assert np.array_equal(a, b)
    assert not np.array_equal(source.images[0].data, evaluation.images[0].data)

    unpaired = tiny_benchmark(tmp_path / "unpaired")
    assert repo.read_manifest(unpaired["target_eval"]).seeds != repo.read_manifest(unpaired["source"]).seeds[:2]


def test_per_image_imaging_conditions_vary():
    layout = np.zeros((6, 6), dtype=int)
    steady = _flat_profile()
    varying = steady.model_copy(update={"gamma_jitter": 0.3, "cast_jitter": 5.0})
    means = [rgb_to_lab(render_domain(layout, varying, seed=s)).L.mean() for s in range(5)]
    assert max(means) - min(means) > 1.0
    steady_means = [rgb_to_lab(render_domain(layout, steady, seed=s)).L.mean() for s in range(5)]
    assert max(steady_means) - min(steady_means) < 1e-9


def test_thread_count_does_not_change_output(tmp_path):
    config = BenchmarkConfig(num_source=3, num_target_train=2, num_target_eval=1,
                             image_size=(10, 10), eval_image_size=(10, 10))
    DatasetService(tmp_path / "one", threads=1).generate_benchmark(config)
    DatasetService(tmp_path / "four", threads=4).generate_benchmark(config)
    for rel in ("source/images/0002.ppm", "target_train/images/0001.ppm"):
        assert (tmp_path / "one" / rel).read_bytes() == (tmp_path / "four" / rel).read_bytes()


if __name__ == "__main__":
    from testkit import run_tests

    run_tests(dict(globals()))
