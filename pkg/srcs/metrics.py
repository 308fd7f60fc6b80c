"""
Metrics module.

Detection metrics over countermeasure scores: DET operating points, equal
error rate and the ASV-constrained normalized minimum t-DCF.

Higher scores support the bona fide hypothesis. A score >= threshold is
accepted, so ties at the threshold count as acceptances.
"""

import numpy as np

from config import ConfigError
from type_defs import MetricsRow, ScoreRow, ScoreSet, TdcfParams


class EmptyClassError(Exception):
    """Raised when bona fide or spoof scores are missing."""

    pass


class NonFiniteScoreError(Exception):
    """Raised when a score is NaN or infinite."""

    pass


class InvalidCoefficientsError(Exception):
    """Raised when the t-DCF parameters give non-positive C1 or C2."""

    pass


def make_score_set(bona_scores, spoof_scores) -> ScoreSet:
    """Build a ScoreSet from any sequences of scores."""

    return {
        "bona_scores": np.asarray(bona_scores, dtype=np.float64).reshape(-1),
        "spoof_scores": np.asarray(spoof_scores, dtype=np.float64).reshape(-1),
    }


def score_set_from_rows(rows: list[ScoreRow]) -> ScoreSet:
    """Split score-file rows into bona fide and spoof scores."""

    return make_score_set(
        [r["score"] for r in rows if r["label"] == 0],
        [r["score"] for r in rows if r["label"] == 1],
    )


def _checked(s: ScoreSet) -> tuple[np.ndarray, np.ndarray]:
    bona = np.asarray(s["bona_scores"], dtype=np.float64)
    spoof = np.asarray(s["spoof_scores"], dtype=np.float64)
    if bona.size == 0 or spoof.size == 0:
        raise EmptyClassError(
            f"Need bona fide and spoof scores, got {bona.size} and {spoof.size}"
        )
    if not (np.all(np.isfinite(bona)) and np.all(np.isfinite(spoof))):
        raise NonFiniteScoreError("Scores must be finite")
    return np.sort(bona), np.sort(spoof)


def _operating_points(s: ScoreSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thresholds (-inf, distinct scores, +inf) with their FAR and FRR."""

    bona, spoof = _checked(s)
    thresholds = np.concatenate(([-np.inf], np.unique(np.concatenate((bona, spoof))), [np.inf]))

    # FAR: spoof accepted (score >= t); FRR: bona fide rejected (score < t)
    far = (spoof.size - np.searchsorted(spoof, thresholds, side="left")) / spoof.size
    frr = np.searchsorted(bona, thresholds, side="left") / bona.size
    return thresholds, far, frr


def det_points(s: ScoreSet) -> list[tuple[float, float, float]]:
    """
    DET operating points.

    Args:
        s: Scores.

    Returns:
        (threshold, FAR, FRR) for -inf, every distinct score and +inf, in
        increasing threshold order. FAR is non-increasing, FRR non-decreasing.

    Raises:
        EmptyClassError: If either class has no scores.
        NonFiniteScoreError: If a score is NaN or infinite.
    """

    thresholds, far, frr = _operating_points(s)
    return [(float(t), float(a), float(r)) for t, a, r in zip(thresholds, far, frr)]


def eer(s: ScoreSet) -> tuple[float, float]:
    """
    Equal error rate by linear interpolation of the DET points.

    FAR - FRR starts at 1 and ends at -1. If it hits zero on a run of
    operating points, the EER is the common value there and the threshold is
    the midpoint of the score interval over which it holds, from the score
    just below the run to the last score in it. Otherwise the two points
    straddling the sign change are interpolated linearly.

    Args:
        s: Scores.

    Returns:
        (EER in [0, 1], threshold).

    Raises:
        EmptyClassError: If either class has no scores.
        NonFiniteScoreError: If a score is NaN or infinite.
    """

    thresholds, far, frr = _operating_points(s)
    diff = far - frr

    k = int(np.argmax(diff <= 0.0))

    if diff[k] == 0.0:
        j = k
        while diff[j + 1] == 0.0:
            j += 1
        # k >= 2 and j < len - 1, so both ends are finite scores
        return float(far[k]), float((thresholds[k - 1] + thresholds[j]) / 2.0)

    # diff[k - 1] > 0 > diff[k]; k >= 2 because FAR = 1, FRR = 0 at the lowest score
    frac = diff[k - 1] / (diff[k - 1] - diff[k])
    value = far[k - 1] + frac * (far[k] - far[k - 1])

    if np.isfinite(thresholds[k]):
        threshold = thresholds[k - 1] + frac * (thresholds[k] - thresholds[k - 1])
    else:
        threshold = thresholds[k - 1]

    return float(value), float(threshold)


def validate_tdcf_params(p: TdcfParams) -> None:
    """
    Check priors, costs and ASV rates.

    Raises:
        ConfigError: On invalid values.
    """

    priors = (p["p_target"], p["p_nontarget"], p["p_spoof"])
    if min(priors) <= 0 or abs(sum(priors) - 1.0) > 1e-9:
        raise ConfigError(f"t-DCF priors must be positive and sum to 1, got {priors}")

    for key in ("c_miss_cm", "c_fa_cm", "c_miss_asv", "c_fa_asv"):
        if not p[key] > 0:
            raise ConfigError(f"t-DCF cost '{key}' must be > 0, got {p[key]}")

    for key in ("p_miss_asv", "p_fa_asv", "p_miss_spoof_asv"):
        if not 0.0 <= p[key] <= 1.0:
            raise ConfigError(f"ASV rate '{key}' must lie in [0, 1], got {p[key]}")


def tdcf_coefficients(p: TdcfParams) -> tuple[float, float]:
    """
    Weights of the CM miss and false alarm rates in the tandem cost.

    C1 = p_tar (C_miss_cm - C_miss_asv P_miss_asv) - p_non C_fa_asv P_fa_asv
    C2 = C_fa_cm p_spoof (1 - P_miss_spoof_asv)

    Args:
        p: t-DCF parameters.

    Returns:
        (C1, C2).

    Raises:
        ConfigError: Invalid parameters.
        InvalidCoefficientsError: C1 <= 0 or C2 <= 0.
    """

    validate_tdcf_params(p)

    c1 = p["p_target"] * (p["c_miss_cm"] - p["c_miss_asv"] * p["p_miss_asv"]) - (
        p["p_nontarget"] * p["c_fa_asv"] * p["p_fa_asv"]
    )
    c2 = p["c_fa_cm"] * p["p_spoof"] * (1.0 - p["p_miss_spoof_asv"])

    if c1 <= 0 or c2 <= 0:
        raise InvalidCoefficientsError(
            f"t-DCF coefficients must be positive, got C1={c1:.6g}, C2={c2:.6g}"
        )
    return c1, c2


def min_tdcf(s: ScoreSet, p: TdcfParams) -> float:
    """
    Minimum normalized t-DCF over all CM thresholds.

    min over t of (C1 FRR(t) + C2 FAR(t)) / min(C1, C2). The sweep includes
    the accept-all and reject-all thresholds, so the result is at most 1.

    Args:
        s: Scores.
        p: t-DCF parameters.

    Returns:
        Value in [0, 1].

    Raises:
        EmptyClassError, NonFiniteScoreError, InvalidCoefficientsError,
        ConfigError.
    """

    c1, c2 = tdcf_coefficients(p)
    _, far, frr = _operating_points(s)
    normalized = (c1 * frr + c2 * far) / min(c1, c2)
    return float(np.min(normalized))


def metrics_row(mode: str, s: ScoreSet, p: TdcfParams) -> MetricsRow:
    """EER, its threshold and min t-DCF for one scoring mode."""

    value, threshold = eer(s)
    return {
        "mode": mode,
        "eer": value,
        "eer_threshold": threshold,
        "min_tdcf": min_tdcf(s, p),
    }
