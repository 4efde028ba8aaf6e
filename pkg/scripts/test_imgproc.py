#!/usr/bin/env python3
"""
Tests for color conversion, histograms, the gamma solver, alignment, and
jitter.

Usage:
    python scripts/test_imgproc.py
"""

import sys
from fractions import Fraction
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from app.core.exceptions import EmptyInputError
from app.schemas.image import (
    AB_RANGE,
    L_RANGE,
    NUM_BINS,
    UNIT_RANGE,
    JitterParams,
    LabImage,
    LookupTable,
    RgbImage,
)
from app.schemas.dataset import SceneSpec
from app.services.datagen import default_source_profile, default_target_profile, generate_scene, render_domain
from app.services.imgproc import (
    DEFAULT_SETTLE_PASSES,
    align_many,
    apply_gamma,
    apply_lut,
    bin_indices,
    channel_histogram,
    color_jitter,
    corrected_mean,
    gamma_objective,
    histogram_match_map,
    lab_to_rgb,
    photometric_align,
    photometric_align_with_report,
    rgb_to_lab,
    solve_gamma,
)
from app.utils.enums import AlignScheme


def _flat(rgb, size=(4, 4)) -> RgbImage:
    return RgbImage(data=np.tile(np.array(rgb, dtype=np.uint8), size + (1,)))


def _scene_pair(seed: int):
    layout = generate_scene(SceneSpec(image_size=(24, 24)), seed)
    return (
        render_domain(layout, default_source_profile(), seed + 1),
        render_domain(layout, default_target_profile(), seed + 2),
    )


def _ks(src_hist, ref_hist, lut) -> float:
    """Max CDF distance between the remapped source histogram and the reference."""
    remapped = np.bincount(lut.map, weights=src_hist.bins, minlength=NUM_BINS)
    cdf_out = np.cumsum(remapped) / src_hist.total
    return float(np.max(np.abs(cdf_out - ref_hist.cdf())))


# ----------------------------------------------------
# Color conversion
# ----------------------------------------------------
def test_lab_of_white_and_black():
    white = rgb_to_lab(_flat([255, 255, 255]))
    assert np.allclose(white.L, 100.0, atol=1e-6)
    assert np.allclose(white.a, 0.0, atol=1e-6) and np.allclose(white.b, 0.0, atol=1e-6)

    black = rgb_to_lab(_flat([0, 0, 0]))
    assert np.allclose(black.L, 0.0, atol=1e-9)


def test_mid_gray_lightness():
    gray = rgb_to_lab(_flat([119, 119, 119]))
    assert np.allclose(gray.L, 50.03, atol=0.02), gray.L[0, 0]
    assert np.allclose(gray.a, 0.0, atol=1e-6) and np.allclose(gray.b, 0.0, atol=1e-6)


def test_zero_lightness_is_black():
    lab = LabImage(L=np.zeros((2, 2)), a=np.full((2, 2), 40.0), b=np.full((2, 2), -30.0))
    assert np.array_equal(lab_to_rgb(lab).data, np.zeros((2, 2, 3), dtype=np.uint8))


def test_lab_round_trip_is_within_one_level():
    rng = np.random.default_rng(0)
    image = RgbImage(data=rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
    back = lab_to_rgb(rgb_to_lab(image))
    assert np.max(np.abs(back.data.astype(int) - image.data.astype(int))) <= 1


def test_lab_channels_are_clamped():
    lab = LabImage(L=np.array([[120.0, -5.0]]), a=np.array([[200.0, -300.0]]), b=np.array([[0.0, 0.0]]))
    assert lab.L.max() == 100.0 and lab.L.min() == 0.0
    assert lab.a.max() == AB_RANGE[1] and lab.a.min() == AB_RANGE[0]


# ----------------------------------------------------
# Histograms and matching
# ----------------------------------------------------
def test_bin_edges():
    assert bin_indices(np.array([L_RANGE[0]]), L_RANGE)[0] == 0
    assert bin_indices(np.array([L_RANGE[1]]), L_RANGE)[0] == NUM_BINS - 1
    hist = channel_histogram(np.array([0.0, 1.0]), UNIT_RANGE)
    normalized = hist.normalized()
    assert normalized[0] == 0.5 and normalized[-1] == 0.5


def test_empty_channel_raises():
    try:
        channel_histogram(np.array([]), UNIT_RANGE)
    except EmptyInputError as e:
        assert "empty input" in str(e)
    else:
        raise AssertionError("expected EmptyInputError")


def test_identical_histograms_match_to_identity():
    rng = np.random.default_rng(1)
    hist = channel_histogram(rng.random(500), UNIT_RANGE)
    lut = histogram_match_map(hist, hist)
    occupied = hist.bins > 0
    assert np.array_equal(lut.map[occupied], np.arange(NUM_BINS)[occupied])


def test_matching_is_monotone_and_ks_bounded_by_bin_mass():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        src = channel_histogram(rng.beta(*rng.uniform(0.3, 4, 2), size=int(rng.integers(50, 2000))), UNIT_RANGE)
        ref = channel_histogram(rng.beta(*rng.uniform(0.3, 4, 2), size=int(rng.integers(50, 2000))), UNIT_RANGE)
        lut = histogram_match_map(src, ref)
        assert np.all(np.diff(lut.map) >= 0)
        # a source bin cannot be split, so its mass bounds the CDF gap
        assert _ks(src, ref, lut) <= src.bins.max() / src.total + 1e-12


def test_matching_ks_on_spread_histograms():
    rng = np.random.default_rng(3)
    for _ in range(200):
        src_values = np.repeat((np.arange(NUM_BINS) + 0.5) / NUM_BINS, 100 + rng.integers(0, 50, NUM_BINS))
        ref_values = np.repeat((np.arange(NUM_BINS) + 0.5) / NUM_BINS, 100 + rng.integers(0, 50, NUM_BINS))
        src = channel_histogram(src_values, UNIT_RANGE)
        ref = channel_histogram(ref_values, UNIT_RANGE)
        assert _ks(src, ref, histogram_match_map(src, ref)) <= 2.0 / 256 + 1.0 / src.total


def _match_oracle(src, ref) -> np.ndarray:
    """Smallest j with CDF_ref(j) >= CDF_src(i), in exact fractions."""
    cdf_src = [Fraction(int(c), src.total) for c in np.cumsum(src.bins)]
    cdf_ref = [Fraction(int(c), ref.total) for c in np.cumsum(ref.bins)]
    return np.array([next((j for j, r in enumerate(cdf_ref) if r >= s), NUM_BINS - 1) for s in cdf_src])


def test_point_mass_maps_onto_point_mass():
    src = channel_histogram(np.full(50, 10.5 / NUM_BINS), UNIT_RANGE)
    ref = channel_histogram(np.full(80, 200.5 / NUM_BINS), UNIT_RANGE)
    lut = histogram_match_map(src, ref)
    assert lut.map[10] == 200
    assert np.array_equal(lut.map, _match_oracle(src, ref))


def test_uniform_onto_upper_half():
    centers = (np.arange(NUM_BINS) + 0.5) / NUM_BINS
    src = channel_histogram(centers, UNIT_RANGE)
    ref = channel_histogram(centers[NUM_BINS // 2:], UNIT_RANGE)
    lut = histogram_match_map(src, ref)
    assert lut.map[0] == 128 and lut.map[-1] == 255
    assert np.array_equal(lut.map, 127 + (np.arange(NUM_BINS) + 2) // 2)
    assert np.array_equal(lut.map, _match_oracle(src, ref))


def test_matching_agrees_with_exact_oracle():
    rng = np.random.default_rng(6)
    for _ in range(100):
        src = channel_histogram(rng.beta(*rng.uniform(0.3, 4, 2), size=int(rng.integers(1, 300))), UNIT_RANGE)
        ref = channel_histogram(rng.beta(*rng.uniform(0.3, 4, 2), size=int(rng.integers(1, 300))), UNIT_RANGE)
        assert np.array_equal(histogram_match_map(src, ref).map, _match_oracle(src, ref))


def test_identity_lut_snaps_to_bin_midpoints():
    rng = np.random.default_rng(7)
    for value_range in (UNIT_RANGE, L_RANGE, AB_RANGE):
        lo, hi = value_range
        width = (hi - lo) / NUM_BINS
        values = rng.uniform(lo, hi, size=500)
        out = apply_lut(values, LookupTable.identity(), value_range)
        assert np.all(np.abs(out - values) <= width / 2 + 1e-9)
        assert np.array_equal(bin_indices(out, value_range), bin_indices(values, value_range))


def test_shifted_lut_shifts_every_value_equally():
    width = 1.0 / NUM_BINS
    values = np.full(40, 10.5 / NUM_BINS)
    src = channel_histogram(values, UNIT_RANGE)
    ref = channel_histogram(np.full(40, 200.5 / NUM_BINS), UNIT_RANGE)
    out = apply_lut(values, histogram_match_map(src, ref), UNIT_RANGE)
    assert np.allclose(out - values, 190 * width, atol=1e-12)

    shift = LookupTable(map=np.minimum(np.arange(NUM_BINS) + 5, NUM_BINS - 1))
    values = (np.arange(NUM_BINS - 5) + 0.5) / NUM_BINS
    assert np.allclose(apply_lut(values, shift, UNIT_RANGE) - values, 5 * width, atol=1e-12)


def test_near_identity_lut_only_moves_its_own_bin():
    table = np.arange(NUM_BINS)
    table[100] = 101
    values = (np.arange(NUM_BINS) + 0.5) / NUM_BINS
    out = apply_lut(values, LookupTable(map=table), UNIT_RANGE)
    moved = np.flatnonzero(np.abs(out - values) > 1e-12)
    assert list(moved) == [100]
    assert abs(out[100] - 101.5 / NUM_BINS) < 1e-12


# ----------------------------------------------------
# Gamma
# ----------------------------------------------------
def test_gamma_point_masses():
    src = channel_histogram(np.full(100, 0.25), UNIT_RANGE)
    ref = channel_histogram(np.full(100, 0.5), UNIT_RANGE)
    solution = solve_gamma(src, ref, beta=0.0)
    assert abs(solution.gamma - 0.5) <= 1e-3, solution


def test_corrected_mean_never_rises_with_gamma():
    rng = np.random.default_rng(8)
    gammas = np.geomspace(0.1, 10.0, 200)
    for _ in range(50):
        src = channel_histogram(rng.beta(*rng.uniform(0.3, 4, 2), size=300), UNIT_RANGE)
        means = np.array([corrected_mean(g, src) for g in gammas])
        assert np.all(np.diff(means) <= 1e-15)
        assert 0.0 < means[-1] <= means[0] < 1.0


def test_gamma_identical_histograms():
    rng = np.random.default_rng(4)
    hist = channel_histogram(rng.random(300), UNIT_RANGE)
    for beta in (0.0, 0.01, 1.0):
        assert abs(solve_gamma(hist, hist, beta).gamma - 1.0) <= 1e-4


def test_gamma_never_worse_than_identity():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        src = channel_histogram(rng.beta(*rng.uniform(0.3, 4, 2), size=200), UNIT_RANGE)
        ref = channel_histogram(rng.beta(*rng.uniform(0.3, 4, 2), size=200), UNIT_RANGE)
        beta = float(rng.uniform(0, 0.2))
        solution = solve_gamma(src, ref, beta)
        assert solution.objective_value <= gamma_objective(1.0, src, ref, beta) + 1e-15
        assert 0.1 <= solution.gamma <= 10.0


def test_apply_gamma_rejects_out_of_range():
    for gamma in (0.05, 11.0):
        try:
            apply_gamma(np.array([50.0]), gamma)
        except ValueError:
            continue
        raise AssertionError(f"gamma {gamma} should be rejected")
    assert np.allclose(apply_gamma(np.array([0.0, 25.0, 100.0]), 0.5), [0.0, 50.0, 100.0])


# ----------------------------------------------------
# Alignment
# ----------------------------------------------------
def test_self_alignment_is_near_identity():
    for seed in range(50):
        image, _ = _scene_pair(seed)
        aligned, report = photometric_align_with_report(image, image)
        assert abs(report.gamma["L"].gamma - 1.0) <= 1e-4
        assert np.max(np.abs(aligned.data.astype(int) - image.data.astype(int))) <= 2


def test_alignment_matches_reference_lightness_mean():
    for seed in range(100):
        src, _ = _scene_pair(1000 + seed)
        _, ref = _scene_pair(2000 + seed)
        out = photometric_align(src, ref, beta=0.0)
        gap = abs(rgb_to_lab(out).L.mean() - rgb_to_lab(ref).L.mean()) / 100.0
        assert gap <= 0.02, (seed, gap)


def test_align_idempotent():
    settled = 0
    for seed in range(20):
        src, _ = _scene_pair(3000 + seed)
        _, ref = _scene_pair(4000 + seed)
        ref_L = rgb_to_lab(ref).L.mean()

        once, report = photometric_align_with_report(src, ref, beta=0.0, max_settle_passes=16)
        twice = photometric_align(once, ref, beta=0.0)
        move = abs(rgb_to_lab(twice).L.mean() - rgb_to_lab(once).L.mean()) / 100.0
        assert move < 0.01, (seed, move)
        if report.settle_passes < 16:
            settled += 1
            assert np.array_equal(twice.data, once.data), seed

        # with beta > 0 a second pass shrinks the remaining lightness gap again
        once = photometric_align(src, ref, beta=0.01)
        twice = photometric_align(once, ref, beta=0.01)
        once_L = rgb_to_lab(once).L.mean()
        move = abs(rgb_to_lab(twice).L.mean() - once_L) / 100.0
        assert move <= abs(once_L - ref_L) / 100.0 + 0.01, seed
    assert settled > 0
    _, report = photometric_align_with_report(src, ref)
    assert 0 <= report.settle_passes <= DEFAULT_SETTLE_PASSES


def test_alignment_accepts_different_sizes():
    src = _flat([120, 60, 30], (6, 5))
    ref = _flat([30, 60, 120], (3, 9))
    out = photometric_align(src, ref)
    assert out.data.shape == src.data.shape


def test_alignment_schemes_report_gammas():
    src, ref = _scene_pair(7)
    _, hybrid = photometric_align_with_report(src, ref, scheme=AlignScheme.HYBRID)
    _, gamma = photometric_align_with_report(src, ref, scheme=AlignScheme.GAMMA)
    _, histogram = photometric_align_with_report(src, ref, scheme=AlignScheme.HISTOGRAM)
    assert set(hybrid.gamma) == {"L"}
    assert set(gamma.gamma) == {"L", "a", "b"}
    assert histogram.gamma == {}


def test_align_many_keeps_order_across_threads():
    pairs = [_scene_pair(s) for s in range(6)]
    sources = [p[0] for p in pairs]
    refs = [p[1] for p in pairs[::-1]]
    sequential = align_many(sources, refs, threads=1)
    threaded = align_many(sources, refs, threads=3)
    for a, b in zip(sequential, threaded):
        assert np.array_equal(a.data, b.data)


# ----------------------------------------------------
# Jitter
# ----------------------------------------------------
def test_zero_jitter_is_identity():
    image, _ = _scene_pair(8)
    params = JitterParams(brightness=0.0, contrast=0.0, saturation=0.0, hue=0.0)
    assert np.array_equal(color_jitter(image, params).data, image.data)


def test_jitter_is_deterministic_per_seed():
    image, _ = _scene_pair(9)
    params = JitterParams(seed=3)
    first = color_jitter(image, params)
    assert np.array_equal(first.data, color_jitter(image, params).data)
    assert not np.array_equal(first.data, color_jitter(image, JitterParams(seed=4)).data)


def test_jitter_keeps_gray_images_gray():
    image = _flat([90, 90, 90], (6, 6))
    for seed in range(10):
        out = color_jitter(image, JitterParams(seed=seed)).data.astype(int)
        assert np.max(out.max(axis=-1) - out.min(axis=-1)) <= 1


if __name__ == "__main__":
    from testkit import run_tests

    run_tests(dict(globals()))
