"""Metrics, watermark powers, distribution tests and Monte-Carlo oracles"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy import stats as sps

from .config import DEFAULT_DIGITS, USABILITY_PAIR_INDEX
from .errors import DegenerateSampleError, DomainError
from .hs_baseline import normalize_decimal_exponent, preprocess
from .rqim_core import QimParams, rqim_embed, theoretical_mse

logger = logging.getLogger(__name__)

Cdf = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RegionProbabilities:
    p_i: float
    p_ii: float
    p_iii: float


@dataclass(frozen=True)
class DistributionSummary:
    n: int
    skewness: float
    kurtosis: float
    ks_statistic: float
    ks_p: float
    jb_statistic: float
    jb_p: float


@dataclass(frozen=True)
class RegionPowers:
    """Monte-Carlo modification powers next to their closed forms"""

    hs_measured: float
    hs_closed_form: float
    rqim_measured: float
    rqim_closed_form: float
    rqim_derived: float


@dataclass(frozen=True)
class DistortionReport:
    mse: float
    max_error: float
    closed_form: float
    derived: float
    bound: float
    samples: int


@dataclass(frozen=True)
class UsabilityTrial:
    trial: int
    skewness: float
    kurtosis: float
    ks_p: float
    jb_p: float
    qq_r2: float


def ber(x: ArrayLike, x_hat: ArrayLike) -> float:
    """Fraction of positions where the two sequences differ"""
    a = np.asarray(x).reshape(-1)
    b = np.asarray(x_hat).reshape(-1)
    if len(a) != len(b):
        raise DomainError(f"sequence lengths differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise DomainError("BER of empty sequences is undefined")
    return float(np.count_nonzero(a != b)) / len(a)


def swr(sigma2_s: float, sigma2_w: float) -> float:
    """Signal-to-watermark ratio in dB"""
    if not sigma2_s > 0 or not sigma2_w > 0:
        raise DomainError(f"powers must be positive, got {sigma2_s} and {sigma2_w}")
    return 10.0 * math.log10(sigma2_s / sigma2_w)


def empirical_swr(original: ArrayLike, watermarked: ArrayLike) -> float:
    s = np.asarray(original, dtype=np.float64).reshape(-1)
    w = np.asarray(watermarked, dtype=np.float64).reshape(-1)
    if len(s) != len(w) or len(s) == 0:
        raise DomainError("SWR needs two non-empty tensors of equal size")
    return swr(float(np.mean(s * s)), float(np.mean((w - s) ** 2)))


def _check_probability(p_iii: float) -> None:
    if not 0 <= p_iii <= 0.5:
        raise DomainError(f"region iii probability must lie in [0, 0.5], got {p_iii}")


def _check_qim(alpha: float, delta: float) -> None:
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if not delta > 0:
        raise DomainError(f"step size must be positive, got {delta}")


def hs_watermark_power(p_iii: float) -> float:
    _check_probability(p_iii)
    return 0.25 + p_iii / 2


def rqim_watermark_power(alpha: float, delta: float, p_iii: float) -> float:
    """(alpha * delta^2 / 12) * (1 - 2 p_iii): embedding on region ii only"""
    _check_qim(alpha, delta)
    _check_probability(p_iii)
    return alpha * delta ** 2 / 12 * (1 - 2 * p_iii)


def rqim_watermark_power_derived(alpha: float, delta: float, p_iii: float) -> float:
    """Same setting with the alpha^2 distortion that s' - s = alpha * e implies"""
    _check_qim(alpha, delta)
    _check_probability(p_iii)
    return alpha ** 2 * delta ** 2 / 12 * (1 - 2 * p_iii)


def swr_gap(alpha: float, delta: float, p_iii: float) -> float:
    """HS watermark power minus R-QIM watermark power; positive means R-QIM has higher SWR"""
    _check_qim(alpha, delta)
    _check_probability(p_iii)
    a = alpha * delta ** 2
    return (3 - a) / 12 + (3 + a) / 6 * p_iii


def region_probabilities(host: ArrayLike, peak: int) -> RegionProbabilities:
    h = np.asarray(host).reshape(-1)
    if h.size == 0:
        raise DomainError("host is empty")
    n = len(h)
    below = np.count_nonzero(h < peak)
    at = np.count_nonzero(h == peak)
    return RegionProbabilities(p_i=below / n, p_ii=at / n, p_iii=(n - below - at) / n)


def _sample(sample: ArrayLike, minimum: int) -> np.ndarray:
    x = np.asarray(sample, dtype=np.float64).reshape(-1)
    if len(x) < minimum:
        raise DegenerateSampleError(f"need at least {minimum} values, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise DegenerateSampleError("sample contains non-finite values")
    if np.ptp(x) == 0:
        raise DegenerateSampleError("sample has zero variance")
    return x


def skewness(sample: ArrayLike) -> float:
    return float(sps.skew(_sample(sample, 3), bias=True))


def kurtosis(sample: ArrayLike) -> float:
    """Pearson (non-excess) kurtosis m4 / m2^2"""
    return float(sps.kurtosis(_sample(sample, 4), fisher=False, bias=True))


def ks_test(sample: ArrayLike, null_cdf: Cdf) -> Tuple[float, float]:
    """One-sample K-S statistic and asymptotic p-value with the small-n correction"""
    x = np.sort(_sample(sample, 8))
    n = len(x)
    f0 = np.asarray(null_cdf(x), dtype=np.float64)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f0), np.max(f0 - (i - 1) / n)))
    sqrt_n = math.sqrt(n)
    lam = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d
    p = float(np.clip(sps.kstwobign.sf(lam), 0.0, 1.0))
    return d, p


def jb_test(sample: ArrayLike) -> Tuple[float, float]:
    x = _sample(sample, 8)
    s = skewness(x)
    k = kurtosis(x)
    jb = len(x) * (s ** 2 / 6 + (k - 3) ** 2 / 24)
    return float(jb), float(sps.chi2.sf(jb, 2))


def fitted_normal_cdf(sample: ArrayLike) -> Cdf:
    x = np.asarray(sample, dtype=np.float64)
    return sps.norm(loc=x.mean(), scale=x.std()).cdf


def fitted_normal_ppf(sample: ArrayLike) -> Cdf:
    x = np.asarray(sample, dtype=np.float64)
    return sps.norm(loc=x.mean(), scale=x.std()).ppf


def uniform_cdf(low: float, high: float) -> Cdf:
    return sps.uniform(loc=low, scale=high - low).cdf


def uniform_ppf(low: float, high: float) -> Cdf:
    return sps.uniform(loc=low, scale=high - low).ppf


def qq_points(sample: ArrayLike, reference_quantile: Cdf) -> np.ndarray:
    """(theoretical, empirical) pairs, one row per sorted sample value"""
    x = np.sort(np.asarray(sample, dtype=np.float64).reshape(-1))
    n = len(x)
    if n < 2:
        raise DegenerateSampleError(f"need at least 2 values, got {n}")
    probs = (np.arange(1, n + 1) - 0.5) / n
    return np.column_stack([np.asarray(reference_quantile(probs), dtype=np.float64), x])


def qq_linearity(points: np.ndarray) -> float:
    """R^2 of a straight-line fit through Q-Q points"""
    fit = sps.linregress(points[:, 0], points[:, 1])
    return float(fit.rvalue ** 2)


def summarize_distribution(sample: ArrayLike, null: str = "normal") -> DistributionSummary:
    x = _sample(sample, 8)
    if null == "normal":
        cdf = fitted_normal_cdf(x)
    elif null == "uniform":
        cdf = uniform_cdf(float(x.min()), float(x.max()))
    else:
        raise DomainError(f"unknown null distribution {null!r}")
    d, ks_p = ks_test(x, cdf)
    jb, jb_p = jb_test(x)
    return DistributionSummary(
        n=len(x),
        skewness=skewness(x),
        kurtosis=kurtosis(x),
        ks_statistic=d,
        ks_p=ks_p,
        jb_statistic=jb,
        jb_p=jb_p,
    )


def preprocessed_view(
    weights: ArrayLike, q: int = DEFAULT_DIGITS, pair_index: int = USABILITY_PAIR_INDEX
) -> np.ndarray:
    """HS host values of weights of any magnitude (V = 0)"""
    scaled, _ = normalize_decimal_exponent(weights)
    return preprocess(scaled, q, 0, pair_index).host_values


def simulate_region_powers(
    alpha: float, delta: float, p_iii: float, samples: int, seed: int = 0
) -> RegionPowers:
    """Mean-square modification of HS and R-QIM at equal payload on the three regions.

    HS: region ii carries a fair bit (variance 1/4), region iii moves by one.
    R-QIM: region ii is embedded, the other regions are untouched.
    """
    _check_qim(alpha, delta)
    _check_probability(p_iii)
    rng = np.random.default_rng(seed)
    region = rng.choice(3, size=samples, p=[p_iii, 1 - 2 * p_iii, p_iii])
    in_ii = region == 1

    bits = rng.integers(0, 2, size=samples)
    hs_mod = np.where(in_ii, bits - 0.5, np.where(region == 2, 1.0, 0.0))

    params = QimParams(delta=delta, m_card=2, alpha=alpha)
    cover = rng.uniform(-50 * delta, 50 * delta, size=samples)
    symbols = rng.integers(0, 2, size=samples)
    moved = np.asarray(rqim_embed(cover, symbols, params).watermarked) - cover
    rqim_mod = np.where(in_ii, moved, 0.0)

    return RegionPowers(
        hs_measured=float(np.mean(hs_mod ** 2)),
        hs_closed_form=hs_watermark_power(p_iii),
        rqim_measured=float(np.mean(rqim_mod ** 2)),
        rqim_closed_form=rqim_watermark_power(alpha, delta, p_iii),
        rqim_derived=rqim_watermark_power_derived(alpha, delta, p_iii),
    )


def measure_distortion(
    params: QimParams, samples: int, seed: int = 0, grid: bool = False
) -> DistortionReport:
    """MSE and max |s' - s| over s in [0, delta) with random symbols"""
    if samples < 1:
        raise DomainError(f"sample count must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    if grid:
        cover = np.arange(samples, dtype=np.float64) * (params.delta / samples)
    else:
        cover = rng.uniform(0.0, params.delta, size=samples)
    symbols = rng.integers(0, params.m_card, size=samples)
    err = np.asarray(rqim_embed(cover, symbols, params).watermarked) - cover
    closed, derived = theoretical_mse(params)
    report = DistortionReport(
        mse=float(np.mean(err ** 2)),
        max_error=float(np.max(np.abs(err))),
        closed_form=closed,
        derived=derived,
        bound=params.alpha * params.delta / 2,
        samples=samples,
    )
    logger.debug(f"Distortion at alpha={params.alpha}: mse={report.mse:.6g}, max={report.max_error:.6g}")
    return report


def usability_trials(
    trials: int,
    samples: int,
    seed: int = 0,
    pair_index: int = USABILITY_PAIR_INDEX,
    q: int = DEFAULT_DIGITS,
) -> List[UsabilityTrial]:
    """Preprocess repeated N(0,1) draws and test the host against normality"""
    rng = np.random.default_rng(seed)
    results = []
    for t in range(trials):
        host = preprocessed_view(rng.standard_normal(samples), q, pair_index)
        summary = summarize_distribution(host, "normal")
        qq = qq_points(host, uniform_ppf(float(host.min()), float(host.max())))
        results.append(
            UsabilityTrial(
                trial=t,
                skewness=summary.skewness,
                kurtosis=summary.kurtosis,
                ks_p=summary.ks_p,
                jb_p=summary.jb_p,
                qq_r2=qq_linearity(qq),
            )
        )
    rejected = sum(r.ks_p <= 0.05 for r in results)
    logger.info(f"Usability study: K-S rejected normality in {rejected}/{trials} trials")
    return results


def swr_sweep(
    alphas: Iterable[float], deltas: Iterable[float], p_values: Iterable[float]
) -> List[Tuple[float, float, float, float, float, float, bool]]:
    """Rows (alpha, delta, p_iii, hs_power, rqim_power, gap, rqim_better)"""
    rows = []
    p_list = list(p_values)
    delta_list = list(deltas)
    for alpha in alphas:
        for delta in delta_list:
            for p in p_list:
                gap = swr_gap(alpha, delta, p)
                rows.append(
                    (
                        alpha,
                        delta,
                        p,
                        hs_watermark_power(p),
                        rqim_watermark_power(alpha, delta, p),
                        gap,
                        gap > 0,
                    )
                )
    return rows


def capacity_fraction(n: int, percent: float) -> int:
    """Prefix length floor(percent/100 * n)"""
    if not 0 < percent <= 100:
        raise DomainError(f"fraction must lie in (0, 100], got {percent}")
    return int((n * percent) // 100)
