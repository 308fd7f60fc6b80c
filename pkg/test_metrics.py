"""Tests for DET points, EER and min t-DCF, with brute-force oracles."""

import math

import numpy as np
import pytest

from config import ConfigError, default_config, tdcf_params
from metrics import (
    EmptyClassError,
    InvalidCoefficientsError,
    NonFiniteScoreError,
    det_points,
    eer,
    make_score_set,
    metrics_row,
    min_tdcf,
    score_set_from_rows,
    tdcf_coefficients,
)
from numerics import make_rng

DEFAULT_TDCF = tdcf_params(default_config())


def _naive_rates(bona, spoof):
    """(FAR, FRR) per candidate threshold: sentinels and midpoints of distinct scores."""

    distinct = sorted(set(bona) | set(spoof))
    thresholds = [-math.inf]
    thresholds += [(a + b) / 2 for a, b in zip(distinct, distinct[1:])]
    thresholds.append(math.inf)

    rates = []
    for t in thresholds:
        far = sum(1 for s in spoof if s >= t) / len(spoof)
        frr = sum(1 for s in bona if s < t) / len(bona)
        rates.append((far, frr))
    return rates


def _brute_force_eer(bona, spoof):
    rates = _naive_rates(bona, spoof)
    for k, (far, frr) in enumerate(rates):
        if far - frr == 0:
            return far
        if far - frr < 0:
            prev_far, prev_frr = rates[k - 1]
            d0, d1 = prev_far - prev_frr, far - frr
            return prev_far + d0 / (d0 - d1) * (far - prev_far)
    raise AssertionError("FAR - FRR never crossed zero")


def _brute_force_tdcf(bona, spoof, p):
    c1, c2 = tdcf_coefficients(p)
    return min((c1 * frr + c2 * far) / min(c1, c2) for far, frr in _naive_rates(bona, spoof))


def _random_scores(rng):
    """Score lists of sizes 1-200 with injected duplicates."""

    bona = list(np.round(rng.normal(1.0, 1.0, size=int(rng.integers(1, 201))), 2))
    spoof = list(np.round(rng.normal(0.0, 1.0, size=int(rng.integers(1, 201))), 2))
    if len(bona) > 1:
        bona[-1] = bona[0]
    spoof[0] = bona[0]
    return [float(x) for x in bona], [float(x) for x in spoof]


# =============================================================================
# DET POINTS
# =============================================================================


@pytest.mark.parametrize(
    "bona, spoof, far, frr",
    [([0.9], [0.1], 0.0, 0.0), ([0.1], [0.9], 1.0, 1.0)],
)
def test_det_point_at_half(bona, spoof, far, frr):
    points = det_points(make_score_set(bona, spoof))
    # no score lies in [0.5, 0.9), so 0.9 gives the rates of a 0.5 threshold
    rates = {t: (a, r) for t, a, r in points}
    assert rates[0.9] == (far, frr)


def test_det_points_monotonic():
    rng = make_rng(0)
    points = det_points(make_score_set(rng.normal(size=100), rng.normal(size=100)))
    thresholds = [p[0] for p in points]
    far = [p[1] for p in points]
    frr = [p[2] for p in points]
    assert thresholds == sorted(thresholds)
    assert thresholds[0] == -math.inf and thresholds[-1] == math.inf
    assert all(a >= b for a, b in zip(far, far[1:]))
    assert all(a <= b for a, b in zip(frr, frr[1:]))


@pytest.mark.parametrize(
    "bona, spoof, error",
    [
        ([], [0.1], EmptyClassError),
        ([0.1], [], EmptyClassError),
        ([float("nan")], [0.1], NonFiniteScoreError),
        ([0.5], [float("inf")], NonFiniteScoreError),
    ],
)
def test_metrics_reject_bad_score_sets(bona, spoof, error):
    with pytest.raises(error):
        eer(make_score_set(bona, spoof))
    with pytest.raises(error):
        min_tdcf(make_score_set(bona, spoof), DEFAULT_TDCF)


# =============================================================================
# EER
# =============================================================================


@pytest.mark.parametrize(
    "bona, spoof, expected",
    [
        ([0.9, 0.8], [0.1, 0.2], 0.0),
        ([0.8, 0.2], [0.9, 0.1], 0.5),
        ([0.1], [0.9], 1.0),
    ],
)
def test_eer_examples(bona, spoof, expected):
    value, _ = eer(make_score_set(bona, spoof))
    assert value == pytest.approx(expected, abs=1e-12)


def test_eer_flat_region_threshold_is_midpoint():
    value, threshold = eer(make_score_set([0.8, 0.2], [0.9, 0.1]))
    assert value == 0.5
    assert threshold == pytest.approx(0.5)


@pytest.mark.parametrize("bona, spoof", [([0.1], [0.9]), ([0.9], [0.1])])
def test_eer_single_score_threshold_splits_the_gap(bona, spoof):
    _, threshold = eer(make_score_set(bona, spoof))
    assert threshold == pytest.approx(0.5)


def test_eer_perfect_separation_threshold_between_classes():
    _, threshold = eer(make_score_set([0.9, 0.8], [0.1, 0.2]))
    assert 0.2 < threshold <= 0.8


def test_eer_matches_brute_force_sweep():
    rng = make_rng(42)
    for _ in range(200):
        bona, spoof = _random_scores(rng)
        value, _ = eer(make_score_set(bona, spoof))
        assert 0.0 <= value <= 1.0
        assert abs(value - _brute_force_eer(bona, spoof)) <= 1e-12


def test_eer_invariant_to_monotone_transforms_and_order():
    rng = make_rng(7)
    bona, spoof = rng.normal(1.0, 1.0, 50), rng.normal(0.0, 1.0, 40)
    reference, _ = eer(make_score_set(bona, spoof))

    shifted, _ = eer(make_score_set(3.0 * bona + 2.0, 3.0 * spoof + 2.0))
    assert shifted == reference
    permuted, _ = eer(make_score_set(rng.permutation(bona), rng.permutation(spoof)))
    assert permuted == reference


# =============================================================================
# T-DCF
# =============================================================================


def test_tdcf_coefficients_hand_example():
    c1, c2 = tdcf_coefficients(DEFAULT_TDCF)
    assert c1 == pytest.approx(0.892525, abs=1e-12)
    assert c2 == pytest.approx(0.25, abs=1e-12)


def test_tdcf_coefficients_without_asv_errors():
    p = {**DEFAULT_TDCF, "p_miss_asv": 0.0, "p_fa_asv": 0.0}
    c1, _ = tdcf_coefficients(p)
    assert c1 == pytest.approx(p["p_target"] * p["c_miss_cm"])


def test_tdcf_coefficients_reject_zero_c2():
    with pytest.raises(InvalidCoefficientsError):
        tdcf_coefficients({**DEFAULT_TDCF, "p_miss_spoof_asv": 1.0})


@pytest.mark.parametrize(
    "override",
    [
        {"p_target": 0.5},
        {"p_spoof": 0.0, "p_target": 0.9905},
        {"c_fa_cm": 0.0},
        {"p_fa_asv": 1.5},
    ],
)
def test_tdcf_params_validation(override):
    with pytest.raises(ConfigError):
        tdcf_coefficients({**DEFAULT_TDCF, **override})


def test_min_tdcf_perfect_separation():
    assert min_tdcf(make_score_set([0.9, 0.8], [0.1, 0.2]), DEFAULT_TDCF) == 0.0


def test_min_tdcf_reversed_with_equal_coefficients():
    # C1 = C2 = 0.25
    p = {
        **DEFAULT_TDCF,
        "p_target": 0.25,
        "p_nontarget": 0.5,
        "p_spoof": 0.25,
        "c_miss_cm": 1.0,
        "c_fa_cm": 2.0,
        "p_miss_asv": 0.0,
        "p_fa_asv": 0.0,
        "p_miss_spoof_asv": 0.5,
    }
    c1, c2 = tdcf_coefficients(p)
    assert c1 == c2
    assert min_tdcf(make_score_set([0.1], [0.9]), p) == pytest.approx(1.0)


def test_min_tdcf_matches_brute_force():
    rng = make_rng(43)
    for _ in range(200):
        bona, spoof = _random_scores(rng)
        value = min_tdcf(make_score_set(bona, spoof), DEFAULT_TDCF)
        assert 0.0 <= value <= 1.0
        assert abs(value - _brute_force_tdcf(bona, spoof, DEFAULT_TDCF)) <= 1e-12


def test_metrics_row_and_rows_to_score_set():
    rows = [
        {"utt_id": "a", "speaker": "s", "label": 0, "attack_tag": "-", "mode": "m", "score": 0.9},
        {"utt_id": "b", "speaker": "s", "label": 1, "attack_tag": "A01", "mode": "m", "score": 0.1},
    ]
    s = score_set_from_rows(rows)
    np.testing.assert_array_equal(s["bona_scores"], [0.9])
    row = metrics_row("with_enrollment", s, DEFAULT_TDCF)
    assert row["mode"] == "with_enrollment"
    assert row["eer"] == 0.0
    assert row["min_tdcf"] == 0.0
