"""
Image Processing Service

Color-space conversion, channel histograms, histogram matching, the
regularized gamma solve, photometric alignment, and color jitter.

Every function here is pure: outputs depend only on the arguments (random
draws come from the seed carried by JitterParams), so they are safe to call
from several threads at once.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import EmptyInputError
from app.schemas.image import (
    AB_RANGE,
    L_RANGE,
    NUM_BINS,
    UNIT_RANGE,
    AlignmentReport,
    ChannelHistogram,
    GammaSolution,
    JitterParams,
    LabImage,
    LookupTable,
    RgbImage,
)
from app.utils.enums import AlignScheme

logger = logging.getLogger(__name__)

# ----------------------------------------------------
# Color-space constants (sRGB primaries, D65 white)
# ----------------------------------------------------
SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
XYZ_TO_SRGB = np.linalg.inv(SRGB_TO_XYZ)
# white point as the image of RGB (1, 1, 1), so white maps to a = b = 0 exactly
D65_WHITE = SRGB_TO_XYZ.sum(axis=1)
_DELTA = 6.0 / 29.0

GAMMA_MIN, GAMMA_MAX = 0.1, 10.0
DEFAULT_BETA = 0.01
DEFAULT_GAMMA_STEP = 0.5
DEFAULT_GAMMA_TOL = 1e-6
DEFAULT_GAMMA_ITERS = 200

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
RGB_TO_YIQ = np.array([
    [0.299, 0.587, 0.114],
    [0.595716, -0.274453, -0.321263],
    [0.211456, -0.522591, 0.311135],
])
YIQ_TO_RGB = np.linalg.inv(RGB_TO_YIQ)


# ----------------------------------------------------
# sRGB <-> CIELAB
# ----------------------------------------------------
def _srgb_decode(v: np.ndarray) -> np.ndarray:
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def _srgb_encode(v: np.ndarray) -> np.ndarray:
    return np.where(v <= 0.0031308, 12.92 * v, 1.055 * np.power(v, 1.0 / 2.4) - 0.055)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA ** 3, np.cbrt(t), t / (3.0 * _DELTA ** 2) + 4.0 / 29.0)


def _lab_f_inv(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA, t ** 3, 3.0 * _DELTA ** 2 * (t - 4.0 / 29.0))


def rgb_to_lab(img: RgbImage) -> LabImage:
    """sRGB -> linear RGB -> XYZ (D65) -> CIELAB."""
    linear = _srgb_decode(img.to_unit())
    xyz = linear @ SRGB_TO_XYZ.T / D65_WHITE
    f = _lab_f(xyz)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    return LabImage(L=116.0 * fy - 16.0, a=500.0 * (fx - fy), b=200.0 * (fy - fz))


def lab_to_rgb(img: LabImage) -> RgbImage:
    """Inverse of rgb_to_lab; out-of-gamut linear RGB is clamped to [0, 1] per channel."""
    fy = (img.L + 16.0) / 116.0
    fx = fy + img.a / 500.0
    fz = fy - img.b / 200.0
    xyz = _lab_f_inv(np.stack([fx, fy, fz], axis=-1)) * D65_WHITE
    linear = np.clip(xyz @ XYZ_TO_SRGB.T, 0.0, 1.0)
    # zero lightness is black whatever the chroma says
    linear[img.L <= 0.0] = 0.0
    return RgbImage.from_unit(_srgb_encode(linear))


# ----------------------------------------------------
# Histograms and lookup tables
# ----------------------------------------------------
def bin_indices(values: np.ndarray, value_range: Tuple[float, float]) -> np.ndarray:
    lo, hi = value_range
    if not hi > lo:
        raise ValueError(f"range must satisfy hi > lo, got ({lo}, {hi})")
    clipped = np.clip(np.asarray(values, dtype=np.float64), lo, hi)
    idx = np.floor(NUM_BINS * (clipped - lo) / (hi - lo)).astype(np.int64)
    return np.clip(idx, 0, NUM_BINS - 1)


def channel_histogram(channel: np.ndarray, value_range: Tuple[float, float]) -> ChannelHistogram:
    """
    256-bin histogram of a channel; values are clamped into range first.

    Raises:
        EmptyInputError: channel has no values
    """
    values = np.asarray(channel, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyInputError()
    counts = np.bincount(bin_indices(values, value_range), minlength=NUM_BINS)
    lo, hi = value_range
    return ChannelHistogram(bins=counts, total=int(values.size), lo=float(lo), hi=float(hi))


def histogram_match_map(src: ChannelHistogram, ref: ChannelHistogram) -> LookupTable:
    """
    Classic CDF matching: map[i] is the smallest reference bin j with
    CDF_ref(j) >= CDF_src(i).

    CDFs are compared as exact integers (cum_ref * total_src vs.
    cum_src * total_ref), so identical histograms give the identity
    wherever the CDF increases.
    """
    if src.range != ref.range:
        raise ValueError(f"histogram ranges differ: {src.range} vs {ref.range}")
    cum_src = np.cumsum(src.bins) * ref.total
    cum_ref = np.cumsum(ref.bins) * src.total
    mapping = np.searchsorted(cum_ref, cum_src, side="left")
    return LookupTable(map=np.minimum(mapping, NUM_BINS - 1))


def apply_lut(channel: np.ndarray, lut: LookupTable, value_range: Tuple[float, float]) -> np.ndarray:
    """Bin each value, map it through the LUT, and return the mapped bin's midpoint."""
    lo, hi = value_range
    width = (hi - lo) / NUM_BINS
    mapped = lut.map[bin_indices(channel, value_range)]
    return lo + (mapped + 0.5) * width


def match_channel(channel: np.ndarray, reference: np.ndarray, value_range: Tuple[float, float]) -> np.ndarray:
    lut = histogram_match_map(channel_histogram(channel, value_range), channel_histogram(reference, value_range))
    return apply_lut(channel, lut, value_range)


# ----------------------------------------------------
# Regularized gamma
# ----------------------------------------------------
def _require_unit_range(*hists: ChannelHistogram) -> None:
    for h in hists:
        if h.range != UNIT_RANGE:
            raise ValueError(f"gamma histograms must span {UNIT_RANGE}, got {h.range}")


def corrected_mean(gamma: float, src: ChannelHistogram) -> float:
    """Mean of the gamma-corrected source: sum over bins of midpoint^gamma * p_src."""
    return float(np.sum(src.midpoints() ** gamma * src.normalized()))


def gamma_objective(gamma: float, src: ChannelHistogram, ref: ChannelHistogram, beta: float = DEFAULT_BETA) -> float:
    """
    J(gamma) = (mean_corrected(gamma) - mean_ref)^2 + beta * (gamma - 1)^2.

    Both histograms are over normalized values in [0, 1].
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    _require_unit_range(src, ref)
    mean_ref = float(np.sum(ref.midpoints() * ref.normalized()))
    diff = corrected_mean(gamma, src) - mean_ref
    return diff * diff + beta * (gamma - 1.0) ** 2


def gamma_gradient(gamma: float, src: ChannelHistogram, ref: ChannelHistogram, beta: float = DEFAULT_BETA) -> float:
    """Analytic dJ/dgamma."""
    mids = src.midpoints()
    p = src.normalized()
    powered = mids ** gamma
    mean_ref = float(np.sum(ref.midpoints() * ref.normalized()))
    diff = float(np.sum(powered * p)) - mean_ref
    d_mean = float(np.sum(powered * np.log(mids) * p))
    return 2.0 * diff * d_mean + 2.0 * beta * (gamma - 1.0)


def solve_gamma(
    src: ChannelHistogram,
    ref: ChannelHistogram,
    beta: float = DEFAULT_BETA,
    max_iters: int = DEFAULT_GAMMA_ITERS,
    tol: float = DEFAULT_GAMMA_TOL,
    step: float = DEFAULT_GAMMA_STEP,
) -> GammaSolution:
    """
    Minimize J by gradient descent from gamma = 1.

    A step that fails to lower J is rejected and the step size halved, so
    J(gamma*) <= J(1) always holds. gamma stays within [0.1, 10]. Running
    out of iterations is reported through `converged`, not raised.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    _require_unit_range(src, ref)

    gamma = 1.0
    value = gamma_objective(gamma, src, ref, beta)
    converged = False
    iterations = 0
    while iterations < max_iters:
        grad = gamma_gradient(gamma, src, ref, beta)
        if abs(grad) <= tol:
            converged = True
            break
        iterations += 1
        trial = float(np.clip(gamma - step * grad, GAMMA_MIN, GAMMA_MAX))
        if trial == gamma:
            # pinned at a bound with the gradient pointing outward
            converged = True
            break
        trial_value = gamma_objective(trial, src, ref, beta)
        if trial_value < value:
            gamma, value = trial, trial_value
        else:
            step *= 0.5
            if step < 1e-12:
                converged = True
                break

    if not converged:
        logger.debug(f"Gamma solve stopped at max_iters={max_iters} (gamma={gamma:.6f}, J={value:.3e})")
    return GammaSolution(gamma=gamma, objective_value=max(value, 0.0), iterations=iterations, converged=converged)


def apply_gamma_range(values: np.ndarray, gamma: float, value_range: Tuple[float, float]) -> np.ndarray:
    lo, hi = value_range
    normalized = np.clip((np.asarray(values, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)
    return lo + (hi - lo) * normalized ** gamma


def apply_gamma(L: np.ndarray, gamma: float) -> np.ndarray:
    """f_gamma on lightness: normalize to [0, 1], raise to gamma, rescale to [0, 100]."""
    if not GAMMA_MIN <= gamma <= GAMMA_MAX:
        raise ValueError(f"gamma must lie in [{GAMMA_MIN}, {GAMMA_MAX}], got {gamma}")
    return apply_gamma_range(L, gamma, L_RANGE)


def gamma_channel(
    channel: np.ndarray,
    reference: np.ndarray,
    value_range: Tuple[float, float],
    beta: float,
) -> Tuple[np.ndarray, GammaSolution]:
    """Solve and apply the regularized gamma on one channel normalized over value_range."""
    lo, hi = value_range
    src_hist = channel_histogram((np.asarray(channel) - lo) / (hi - lo), UNIT_RANGE)
    ref_hist = channel_histogram((np.asarray(reference) - lo) / (hi - lo), UNIT_RANGE)
    solution = solve_gamma(src_hist, ref_hist, beta)
    return apply_gamma_range(channel, solution.gamma, value_range), solution


# ----------------------------------------------------
# Photometric alignment
# ----------------------------------------------------
LAB_RANGES = {"L": L_RANGE, "a": AB_RANGE, "b": AB_RANGE}
DEFAULT_SETTLE_PASSES = 4


def _uses_gamma(scheme: AlignScheme, name: str) -> bool:
    return scheme == AlignScheme.GAMMA or (scheme == AlignScheme.HYBRID and name == "L")


def align_lab(
    src: LabImage,
    ref: LabImage,
    beta: float = DEFAULT_BETA,
    scheme: AlignScheme = AlignScheme.HYBRID,
    channels: Optional[Sequence[str]] = None,
) -> Tuple[LabImage, Dict[str, GammaSolution]]:
    """
    Align the Lab channels of src toward ref under the chosen scheme.
    Channels not listed in `channels` (default: all three) pass through.
    """
    solutions: Dict[str, GammaSolution] = {}
    out = {}
    for name, value_range in LAB_RANGES.items():
        channel, reference = getattr(src, name), getattr(ref, name)
        if channels is not None and name not in channels:
            out[name] = channel
        elif _uses_gamma(scheme, name):
            out[name], solutions[name] = gamma_channel(channel, reference, value_range, beta)
        else:
            out[name] = match_channel(channel, reference, value_range)
    return LabImage(**out), solutions


def settle_channels(scheme: AlignScheme, beta: float) -> List[str]:
    """
    Channels that are re-aligned after 8-bit quantization. Histogram-matched
    channels always are; gamma channels only for beta = 0, where re-solving
    converges to the same target mean instead of shrinking toward it again.
    """
    return [name for name in LAB_RANGES if not _uses_gamma(scheme, name) or beta == 0.0]


def settle_alignment(
    aligned: RgbImage,
    ref_lab: LabImage,
    beta: float,
    scheme: AlignScheme,
    max_passes: int = DEFAULT_SETTLE_PASSES,
) -> Tuple[RgbImage, int]:
    """
    Re-align the quantized output against the reference until the 8-bit
    image stops changing (or max_passes runs out). Gamut clipping and
    rounding shift the matched histograms; a settled image is a fixed point,
    so aligning it to the same reference again leaves it unchanged.

    Returns:
        (image, passes run)
    """
    channels = settle_channels(scheme, beta)
    for passes in range(max_passes):
        relaxed, _ = align_lab(rgb_to_lab(aligned), ref_lab, beta, scheme, channels)
        candidate = lab_to_rgb(relaxed)
        if np.array_equal(candidate.data, aligned.data):
            return aligned, passes
        aligned = candidate
    return aligned, max_passes


def photometric_align_with_report(
    src: RgbImage,
    ref: RgbImage,
    beta: float = DEFAULT_BETA,
    scheme: AlignScheme = AlignScheme.HYBRID,
    max_settle_passes: int = DEFAULT_SETTLE_PASSES,
) -> Tuple[RgbImage, AlignmentReport]:
    """
    Align a source image to a target reference image.

    Default (hybrid) scheme: regularized gamma on L, histogram matching on a
    and b. Image sizes may differ; only histograms are compared.
    """
    src_lab, ref_lab = rgb_to_lab(src), rgb_to_lab(ref)
    aligned_lab, solutions = align_lab(src_lab, ref_lab, beta, scheme)
    aligned, passes = settle_alignment(lab_to_rgb(aligned_lab), ref_lab, beta, scheme, max_settle_passes)

    out_means = rgb_to_lab(aligned).channel_means()
    ref_means, src_means = ref_lab.channel_means(), src_lab.channel_means()
    report = AlignmentReport(
        scheme=scheme.value,
        beta=beta,
        gamma=solutions,
        mean_delta_to_reference={k: out_means[k] - ref_means[k] for k in out_means},
        mean_delta_to_source={k: out_means[k] - src_means[k] for k in out_means},
        settle_passes=passes,
    )
    return aligned, report


def photometric_align(
    src: RgbImage,
    ref: RgbImage,
    beta: float = DEFAULT_BETA,
    scheme: AlignScheme = AlignScheme.HYBRID,
) -> RgbImage:
    return photometric_align_with_report(src, ref, beta, scheme)[0]


def align_many(
    sources: Sequence[RgbImage],
    references: Sequence[RgbImage],
    beta: float = DEFAULT_BETA,
    scheme: AlignScheme = AlignScheme.HYBRID,
    threads: int = 1,
) -> List[RgbImage]:
    """Align sources[i] to references[i]; order is preserved for any thread count."""
    if len(sources) != len(references):
        raise ValueError(f"{len(sources)} sources but {len(references)} references")
    if threads <= 1:
        return [photometric_align(s, r, beta, scheme) for s, r in zip(sources, references)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda pair: photometric_align(pair[0], pair[1], beta, scheme), zip(sources, references)))


# ----------------------------------------------------
# Color jitter
# ----------------------------------------------------
def _luma(x: np.ndarray) -> np.ndarray:
    return x @ LUMA_WEIGHTS


def color_jitter(img: RgbImage, params: JitterParams, rng: Optional[np.random.Generator] = None) -> RgbImage:
    """
    Random brightness -> contrast -> saturation -> hue, in that fixed order.

    Factors come from [1 - r, 1 + r] and the hue rotation (degrees) from
    [-hue, +hue]; all four draws happen every call so the stream position
    does not depend on which half-ranges are zero.
    """
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    f_brightness = rng.uniform(1.0 - params.brightness, 1.0 + params.brightness)
    f_contrast = rng.uniform(1.0 - params.contrast, 1.0 + params.contrast)
    f_saturation = rng.uniform(1.0 - params.saturation, 1.0 + params.saturation)
    hue_degrees = rng.uniform(-params.hue, params.hue)

    x = img.to_unit()
    if f_brightness != 1.0:
        x = np.clip(x * max(f_brightness, 0.0), 0.0, 1.0)
    if f_contrast != 1.0:
        mean = float(_luma(x).mean())
        x = np.clip((x - mean) * max(f_contrast, 0.0) + mean, 0.0, 1.0)
    if f_saturation != 1.0:
        gray = _luma(x)[..., None]
        x = np.clip(gray + (x - gray) * max(f_saturation, 0.0), 0.0, 1.0)
    if hue_degrees != 0.0:
        theta = np.deg2rad(hue_degrees)
        cos, sin = np.cos(theta), np.sin(theta)
        rotation = np.array([[1.0, 0.0, 0.0], [0.0, cos, -sin], [0.0, sin, cos]])
        yiq = x @ RGB_TO_YIQ.T
        x = np.clip(yiq @ rotation.T @ YIQ_TO_RGB.T, 0.0, 1.0)
    return RgbImage.from_unit(x)
