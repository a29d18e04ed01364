"""Reconstruction quality metrics and the paired significance test.

Conventions chosen to match the experiment harness: reconstruction error
for a set of images is the mean over images of the *summed* per-pixel
squared error, and SSIM uses an 11x11 Gaussian window (sigma 1.5) with
only fully-valid window placements contributing to the mean.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.stats import rankdata


def reconstruction_mse(originals: np.ndarray, reconstructions: np.ndarray) -> float:
    """Mean over images of the summed squared pixel error."""
    o = np.atleast_2d(np.asarray(originals, dtype=np.float64))
    r = np.atleast_2d(np.asarray(reconstructions, dtype=np.float64))
    if o.shape != r.shape:
        raise ValueError(f"shape mismatch: {o.shape} vs {r.shape}")
    o = o.reshape(o.shape[0], -1)
    r = r.reshape(r.shape[0], -1)
    return float(((o - r) ** 2).sum(axis=1).mean())


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(
    image_a: np.ndarray,
    image_b: np.ndarray,
    data_range: float = 1.0,
    kernel_size: int = 11,
    kernel_sigma: float = 1.5,
) -> float:
    """Structural similarity between two images or two equal stacks of them.

    Inputs are (H, W) or (N, H, W); for stacks the result is the mean of
    the per-image scores.  Local statistics are Gaussian-weighted and the
    similarity map is averaged over window placements that lie fully
    inside the image, so images must be at least kernel_size on each side.
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    if a.ndim != 3:
        raise ValueError("expected (H, W) images or an (N, H, W) stack")
    if min(a.shape[1], a.shape[2]) < kernel_size:
        raise ValueError(
            f"images of shape {a.shape[1:]} are smaller than the "
            f"{kernel_size}x{kernel_size} window"
        )
    kernel = _gaussian_kernel(kernel_size, kernel_sigma)[None]

    def local_mean(stack):
        return fftconvolve(stack, kernel, mode="valid", axes=(1, 2))

    mu_a = local_mean(a)
    mu_b = local_mean(b)
    var_a = local_mean(a * a) - mu_a * mu_a
    var_b = local_mean(b * b) - mu_b * mu_b
    cov = local_mean(a * b) - mu_a * mu_b

    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    numerator = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float((numerator / denominator).mean())


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float    # min(W+, W-), average ranks for tied |differences|
    p_value: float      # two-sided
    n_effective: int    # pairs remaining after zero differences are dropped
    method: str         # "exact" (enumeration) or "approx" (normal)
    significant: bool   # p_value < alpha


# the test needs at least this many nonzero differences to say anything
MIN_EFFECTIVE_N = 5

# largest n for which the 2^n sign assignments are enumerated exactly
_EXACT_LIMIT = 20


def _exact_two_sided_p(doubled_ranks: np.ndarray, doubled_stat: int) -> float:
    """P(min(W+, W-) <= observed) over all equally likely sign choices.

    Ranks arrive doubled so tied average ranks become integers; the
    distribution of the doubled W+ is built by dynamic programming, one
    rank at a time.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    low = counts[: doubled_stat + 1].sum()
    high = counts[total - doubled_stat :].sum()
    return min(1.0, (low + high) / 2.0 ** len(doubled_ranks))


def wilcoxon_signed_rank(
    sample_a: np.ndarray, sample_b: np.ndarray, alpha: float = 0.05
) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are discarded, and at least MIN_EFFECTIVE_N nonzero
    differences must remain.  Tied absolute differences share the average
    of the ranks they span.  Up to n=20 the null distribution is
    enumerated exactly (ties included); beyond that a normal
    approximation with tie-corrected variance and a 0.5 continuity
    correction is used.
    """
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"paired samples differ in length: {a.size} vs {b.size}")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n < MIN_EFFECTIVE_N:
        raise ValueError(
            f"only {n} nonzero difference(s); the test needs at least "
            f"{MIN_EFFECTIVE_N}"
        )

    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)

    if n <= _EXACT_LIMIT:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        p = _exact_two_sided_p(doubled, int(round(2.0 * stat)))
        method = "exact"
    else:
        mean = n * (n + 1) / 4.0
        variance = n * (n + 1) * (2 * n + 1) / 24.0
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        variance -= (tie_counts.astype(np.float64) ** 3 - tie_counts).sum() / 48.0
        if variance <= 0:
            # every |d| identical and even n can still leave variance > 0;
            # this only triggers in degenerate constant cases
            return WilcoxonResult(stat, 1.0, n, "approx", False)
        z = (stat - mean + 0.5) / math.sqrt(variance)
        p = min(1.0, math.erfc(-z / math.sqrt(2.0)))
        method = "approx"

    return WilcoxonResult(stat, p, n, method, p < alpha)
