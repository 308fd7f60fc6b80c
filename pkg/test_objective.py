"""Tests for the losses, attractors and inference scoring."""

import math

import numpy as np
import pytest

from config import ConfigError, OCS_MARGINS, SAMO_MARGINS
from encoder import backward, forward, init_params, params_to_tensors, tensors_to_params
from numerics import DimensionMismatchError, ZeroNormError, l2_normalize, l2_normalize_rows, make_rng
from objective import (
    EmptyAttractorsError,
    TooManySpeakersError,
    UnknownSpeakerError,
    enrollment_center,
    enrollment_centers,
    init_attractors,
    init_attractors_onehot,
    init_attractors_orthonormal,
    init_oc_center,
    init_softmax_head,
    oc_softmax_loss,
    samo_loss,
    score,
    score_batch,
    similarity_d,
    softmax_ce_loss,
    softmax_scores,
    softplus,
    update_attractors,
    validate_margins,
)


def _identity(dim):
    return {"weights": [np.eye(dim)], "biases": [np.zeros(dim)], "activation": "relu"}


def _bona(utt_id, speaker, features):
    return {
        "utt_id": utt_id,
        "speaker": speaker,
        "label": 0,
        "attack_tag": "-",
        "features": np.asarray(features, dtype=np.float64),
    }


TWO_AXES = {"speakers": ["a", "b"], "vectors": np.array([[1.0, 0.0], [0.0, 1.0]])}


# =============================================================================
# ATTRACTORS
# =============================================================================


def test_onehot_two_speakers():
    attractors = init_attractors_onehot(["s2", "s1"], 3)
    assert attractors["speakers"] == ["s1", "s2"]
    np.testing.assert_array_equal(attractors["vectors"], [[1, 0, 0], [0, 1, 0]])


def test_onehot_twenty_speakers_orthonormal():
    attractors = init_attractors_onehot([f"s{i:02d}" for i in range(20)], 160)
    v = attractors["vectors"]
    np.testing.assert_array_equal(v @ v.T, np.eye(20))


def test_onehot_too_many_speakers():
    with pytest.raises(TooManySpeakersError):
        init_attractors_onehot(["a", "b", "c", "d", "e"], 4)


@pytest.mark.parametrize("n_speakers, dim", [(3, 5), (7, 3)])
def test_orthonormal_init_blocks(n_speakers, dim):
    speakers = [f"s{i}" for i in range(n_speakers)]
    attractors = init_attractors_orthonormal(speakers, dim, make_rng(0))
    v = attractors["vectors"]
    assert v.shape == (n_speakers, dim)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)
    block = v[: min(n_speakers, dim)]
    np.testing.assert_allclose(block @ block.T, np.eye(block.shape[0]), atol=1e-12)


def test_init_attractors_dispatch():
    onehot = init_attractors(["a", "b"], 3, "onehot", make_rng(0))
    np.testing.assert_array_equal(onehot["vectors"], [[1, 0, 0], [0, 1, 0]])
    ortho = init_attractors(["a", "b"], 3, "orthonormal", make_rng(0))
    assert ortho["vectors"].shape == (2, 3)


def test_update_one_utterance_per_speaker():
    utts = [_bona("u1", "a", [3.0, 4.0]), _bona("u2", "b", [0.0, 2.0])]
    updated = update_attractors(_identity(2), utts, TWO_AXES)
    np.testing.assert_allclose(updated["vectors"], [[0.6, 0.8], [0.0, 1.0]], atol=1e-15)


def test_update_symmetric_mean():
    utts = [_bona("u1", "a", [1.0, 0.0]), _bona("u2", "a", [0.0, 1.0])]
    updated = update_attractors(_identity(2), utts, TWO_AXES)
    np.testing.assert_allclose(updated["vectors"][0], [0.70710678, 0.70710678], atol=1e-8)
    np.testing.assert_array_equal(updated["vectors"][1], [0.0, 1.0])


def test_update_antipodal_embeddings():
    utts = [_bona("u1", "a", [1.0, 0.0]), _bona("u2", "a", [-1.0, 0.0])]
    with pytest.raises(ZeroNormError):
        update_attractors(_identity(2), utts, TWO_AXES)


def test_update_raw_average_differs_from_normalized():
    utts = [_bona("u1", "a", [10.0, 0.0]), _bona("u2", "a", [0.0, 1.0])]
    normalized = update_attractors(_identity(2), utts, TWO_AXES, "normalized")
    raw = update_attractors(_identity(2), utts, TWO_AXES, "raw")
    np.testing.assert_allclose(normalized["vectors"][0], [0.70710678, 0.70710678], atol=1e-8)
    np.testing.assert_allclose(raw["vectors"][0], l2_normalize(np.array([10.0, 1.0]))[0])


def test_update_ignores_spoof():
    spoof = {**_bona("u9", "a", [0.0, 5.0]), "label": 1, "attack_tag": "A01"}
    utts = [_bona("u1", "a", [2.0, 0.0]), spoof]
    updated = update_attractors(_identity(2), utts, TWO_AXES)
    np.testing.assert_allclose(updated["vectors"][0], [1.0, 0.0])


# =============================================================================
# SIMILARITY AND LOSSES
# =============================================================================


@pytest.mark.parametrize(
    "x_hat, label, speaker, expected_d, expected_speaker",
    [
        ((1.0, 0.0), 0, "a", 1.0, None),
        ((0.6, 0.8), 1, "a", 0.8, "b"),
        ((0.0, 1.0), 0, "a", 0.0, None),
    ],
)
def test_similarity_d(x_hat, label, speaker, expected_d, expected_speaker):
    d, chosen = similarity_d(np.array(x_hat), label, speaker, TWO_AXES)
    assert d == pytest.approx(expected_d, abs=1e-15)
    assert chosen == expected_speaker


def test_similarity_unknown_bona_fide_speaker():
    with pytest.raises(UnknownSpeakerError):
        similarity_d(np.array([1.0, 0.0]), 0, "zz", TWO_AXES)


def test_samo_loss_rejects_speaker_count_mismatch():
    with pytest.raises(DimensionMismatchError):
        samo_loss(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1], ["a"], TWO_AXES, SAMO_MARGINS)


def test_samo_loss_bona_fide_example():
    loss, _ = samo_loss(np.array([[2.0, 0.0]]), [0], ["a"], TWO_AXES, SAMO_MARGINS)
    assert loss == pytest.approx(math.log1p(math.exp(-6.0)), rel=1e-12)
    assert loss == pytest.approx(0.0024757, abs=1e-7)


def test_samo_loss_spoof_at_margin():
    attractors = {"speakers": ["a"], "vectors": np.array([[1.0, 0.0]])}
    loss, _ = samo_loss(np.array([[0.0, 3.0]]), [1], ["a"], attractors, SAMO_MARGINS)
    assert loss == pytest.approx(math.log(2.0), rel=1e-12)


def test_oc_softmax_uniform_example():
    margins = {"alpha": 1.0, "m0": 0.0, "m1": -0.2}
    loss, _, _ = oc_softmax_loss(np.array([[0.0, 1.0]]), [0], np.array([1.0, 0.0]), margins)
    assert loss == pytest.approx(math.log(2.0), rel=1e-12)


def test_oc_softmax_spoof_scalar_values():
    center = np.array([1.0, 0.0])
    # spoof pointing away from the center: exponent -16
    far, _, _ = oc_softmax_loss(np.array([[-1.0, 0.0]]), [1], center, OCS_MARGINS)
    assert far == pytest.approx(math.log1p(math.exp(-16.0)), rel=1e-9)
    # spoof at cosine 0.6: exponent 20 * 0.8 = 16
    near, _, _ = oc_softmax_loss(np.array([[0.6, 0.8]]), [1], center, OCS_MARGINS)
    assert near == pytest.approx(16.0 + math.log1p(math.exp(-16.0)), rel=1e-12)


def test_softplus_is_stable():
    values = softplus(np.array([-800.0, 0.0, 800.0]))
    assert np.all(np.isfinite(values))
    assert values[2] == pytest.approx(800.0)
    assert values[1] == pytest.approx(math.log(2.0))


@pytest.mark.parametrize("label", [0, 1])
def test_softmax_ce_uniform_logits(label):
    head = {"W2": np.zeros((2, 3)), "b2": np.zeros(2)}
    loss, _, _ = softmax_ce_loss(np.array([[1.0, 2.0, 3.0]]), [label], head)
    assert loss == pytest.approx(math.log(2.0), rel=1e-12)


def test_softmax_ce_confident_logits():
    head = {"W2": np.zeros((2, 3)), "b2": np.array([10.0, -10.0])}
    loss, _, _ = softmax_ce_loss(np.array([[1.0, 0.0, 0.0]]), [0], head)
    assert loss == pytest.approx(2.06e-9, rel=1e-2)


def test_softmax_scores_are_logit_difference():
    head = {"W2": np.array([[1.0, 0.0], [0.0, 1.0]]), "b2": np.array([0.5, 0.0])}
    np.testing.assert_allclose(softmax_scores(np.array([[3.0, 4.0]]), head), [0.6 + 0.5 - 0.8])


@pytest.mark.parametrize(
    "margins",
    [
        {"alpha": 0.0, "m0": 0.7, "m1": 0.0},
        {"alpha": 20.0, "m0": 0.0, "m1": 0.0},
        {"alpha": 20.0, "m0": 1.5, "m1": 0.0},
    ],
)
def test_validate_margins(margins):
    with pytest.raises(ConfigError):
        validate_margins(margins)


def _numeric_grad(fn, array, h=1e-6):
    numeric = np.zeros_like(array)
    for idx in np.ndindex(array.shape):
        original = array[idx]
        array[idx] = original + h
        plus = fn()
        array[idx] = original - h
        minus = fn()
        array[idx] = original
        numeric[idx] = (plus - minus) / (2 * h)
    return numeric


def _spoof_margin_ok(x, labels, vectors, gap=1e-6):
    """No spoof row within gap of an argmax tie."""

    sims = np.sort(l2_normalize_rows(x)[0] @ vectors.T, axis=1)
    return all(sims[i, -1] - sims[i, -2] > gap for i in range(len(labels)) if labels[i] == 1)


def test_samo_grad_matches_finite_differences():
    rng = make_rng(21)
    attractors = init_attractors_orthonormal(["a", "b", "c"], 5, rng)
    x = rng.normal(size=(6, 5))
    labels = np.array([0, 1, 0, 1, 1, 0])
    speakers = ["a", "b", "c", "a", "b", "c"]
    assert _spoof_margin_ok(x, labels, attractors["vectors"])

    _, grad_x = samo_loss(x, labels, speakers, attractors, SAMO_MARGINS)
    numeric = _numeric_grad(lambda: samo_loss(x, labels, speakers, attractors, SAMO_MARGINS)[0], x)
    np.testing.assert_allclose(grad_x, numeric, rtol=1e-6, atol=1e-9)


def test_oc_softmax_grads_match_finite_differences():
    rng = make_rng(22)
    x = rng.normal(size=(5, 4))
    center = rng.normal(size=4)
    labels = np.array([0, 1, 1, 0, 1])

    _, grad_x, grad_w = oc_softmax_loss(x, labels, center, OCS_MARGINS)

    def _loss():
        return oc_softmax_loss(x, labels, center, OCS_MARGINS)[0]

    np.testing.assert_allclose(grad_x, _numeric_grad(_loss, x), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(grad_w, _numeric_grad(_loss, center), rtol=1e-6, atol=1e-9)


def test_softmax_grads_match_finite_differences():
    rng = make_rng(23)
    x = rng.normal(size=(5, 4))
    head = init_softmax_head(4, rng)
    head["b2"] = rng.normal(size=2)
    labels = np.array([0, 1, 1, 0, 0])

    _, grad_x, grad_head = softmax_ce_loss(x, labels, head)

    def _loss():
        return softmax_ce_loss(x, labels, head)[0]

    np.testing.assert_allclose(grad_x, _numeric_grad(_loss, x), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(grad_head["W2"], _numeric_grad(_loss, head["W2"]), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(grad_head["b2"], _numeric_grad(_loss, head["b2"]), rtol=1e-6, atol=1e-9)


def _end_to_end_case(rng, objective):
    """Random encoder, batch and objective state for the gradient sweep."""

    n_layers = int(rng.integers(1, 4))
    dims = [int(rng.integers(2, 9)) for _ in range(n_layers)] + [int(rng.integers(3, 9))]
    params = init_params(dims, "tanh", rng)
    batch = int(rng.integers(1, 9))
    features = rng.normal(size=(batch, dims[0]))
    labels = rng.integers(0, 2, size=batch)
    speakers = [f"s{int(k)}" for k in rng.integers(0, 3, size=batch)]
    state = {
        "attractors": init_attractors_orthonormal(["s0", "s1", "s2"], dims[-1], rng),
        "center": init_oc_center(dims[-1], rng),
        "head": init_softmax_head(dims[-1], rng),
    }
    return params, features, labels, speakers, state


def _loss_and_grad_x(objective, x, labels, speakers, state):
    if objective == "samo":
        return samo_loss(x, labels, speakers, state["attractors"], SAMO_MARGINS)
    if objective == "oc_softmax":
        loss, grad_x, _ = oc_softmax_loss(x, labels, state["center"], OCS_MARGINS)
        return loss, grad_x
    loss, grad_x, _ = softmax_ce_loss(x, labels, state["head"])
    return loss, grad_x


@pytest.mark.parametrize("objective", ["samo", "oc_softmax", "softmax"])
def test_end_to_end_parameter_gradients(objective):
    rng = make_rng({"samo": 100, "oc_softmax": 200, "softmax": 300}[objective])
    checked = 0

    while checked < 20:
        params, features, labels, speakers, state = _end_to_end_case(rng, objective)
        embeddings, cache = forward(params, features)
        if objective == "samo" and not _spoof_margin_ok(embeddings, labels, state["attractors"]["vectors"], 1e-4):
            continue

        _, grad_x = _loss_and_grad_x(objective, embeddings, labels, speakers, state)
        analytic = params_to_tensors(backward(params, cache, grad_x))
        tensors = params_to_tensors(params)

        def _loss():
            emb, _ = forward(tensors_to_params(tensors, "tanh"), features)
            return _loss_and_grad_x(objective, emb, labels, speakers, state)[0]

        for t, grad in zip(tensors, analytic):
            np.testing.assert_allclose(grad, _numeric_grad(_loss, t), rtol=1e-5, atol=1e-8)
        checked += 1


def test_samo_reduces_to_oc_softmax_with_one_speaker():
    rng = make_rng(31)
    margins = {"alpha": 20.0, "m0": 0.7, "m1": 0.0}

    for _ in range(100):
        center = rng.normal(size=6)
        attractors = {"speakers": ["only"], "vectors": l2_normalize(center)[0][None, :]}
        n = int(rng.integers(1, 10))
        x = rng.normal(size=(n, 6))
        labels = rng.integers(0, 2, size=n)

        samo, _ = samo_loss(x, labels, ["only"] * n, attractors, margins)
        ocs, _, _ = oc_softmax_loss(x, labels, center, margins)
        assert abs(samo - ocs) <= 1e-12


@pytest.mark.parametrize("factor", [1e-3, 7.5, 1e4])
def test_losses_and_scores_ignore_embedding_scale(factor):
    rng = make_rng(41)
    attractors = init_attractors_orthonormal(["a", "b"], 4, rng)
    x = rng.normal(size=(6, 4))
    labels = np.array([0, 1, 0, 1, 1, 0])
    speakers = ["a", "b", "b", "a", "a", "b"]
    center = rng.normal(size=4)

    samo, _ = samo_loss(x, labels, speakers, attractors, SAMO_MARGINS)
    assert samo_loss(factor * x, labels, speakers, attractors, SAMO_MARGINS)[0] == pytest.approx(samo, rel=1e-12)
    ocs = oc_softmax_loss(x, labels, center, OCS_MARGINS)[0]
    assert oc_softmax_loss(factor * x, labels, center, OCS_MARGINS)[0] == pytest.approx(ocs, rel=1e-12)

    centers = {"a": l2_normalize(center)[0]}
    np.testing.assert_allclose(
        score_batch(factor * x, speakers, centers, attractors),
        score_batch(x, speakers, centers, attractors),
        atol=1e-12,
    )


def test_every_sample_has_positive_loss():
    rng = make_rng(43)
    attractors = init_attractors_orthonormal(["a", "b", "c"], 5, rng)
    center = rng.normal(size=5)
    for _ in range(50):
        x = rng.normal(size=(1, 5))
        label = int(rng.integers(0, 2))
        speaker = ["a", "b", "c"][int(rng.integers(0, 3))]
        assert samo_loss(x, [label], [speaker], attractors, SAMO_MARGINS)[0] > 0.0
        assert oc_softmax_loss(x, [label], center, OCS_MARGINS)[0] > 0.0


def test_samo_loss_is_monotone_in_similarity():
    attractors = {"speakers": ["a"], "vectors": np.array([[1.0, 0.0]])}
    grid = np.linspace(-0.9, 0.9, 19)
    x = np.stack([grid, np.sqrt(1.0 - grid**2)], axis=1)

    bona = [samo_loss(row[None, :], [0], ["a"], attractors, SAMO_MARGINS)[0] for row in x]
    spoof = [samo_loss(row[None, :], [1], ["a"], attractors, SAMO_MARGINS)[0] for row in x]

    assert np.all(np.diff(bona) < 0.0)
    assert np.all(np.diff(spoof) > 0.0)


def test_samo_loss_ignores_attractors_no_sample_selects():
    attractors = {"speakers": ["a", "b", "c"], "vectors": np.eye(3)}
    x = np.array([[2.0, 0.1, 0.2], [0.1, 3.0, 0.0], [1.0, 0.2, 0.1]])
    labels = [0, 0, 1]
    speakers = ["a", "b", "b"]

    loss, grad = samo_loss(x, labels, speakers, attractors, SAMO_MARGINS)

    moved = {"speakers": ["a", "b", "c"], "vectors": np.eye(3)}
    moved["vectors"][2] = l2_normalize(np.array([0.1, 0.1, 1.0]))[0]
    moved_loss, moved_grad = samo_loss(x, labels, speakers, moved, SAMO_MARGINS)

    assert moved_loss == loss
    np.testing.assert_array_equal(moved_grad, grad)


# =============================================================================
# INFERENCE
# =============================================================================


def test_enrollment_center_examples():
    np.testing.assert_allclose(enrollment_center(np.array([[3.0, 4.0]])), [0.6, 0.8])
    np.testing.assert_allclose(
        enrollment_center(np.array([[1.0, 0.0], [0.0, 1.0]])), [0.70710678, 0.70710678], atol=1e-8
    )
    with pytest.raises(ZeroNormError):
        enrollment_center(np.array([[1.0, 0.0], [-1.0, 0.0]]))


def test_enrollment_centers_per_speaker():
    utts = [_bona("e1", "x", [2.0, 0.0]), _bona("e2", "y", [0.0, 5.0])]
    centers = enrollment_centers(_identity(2), utts)
    assert sorted(centers) == ["x", "y"]
    np.testing.assert_allclose(centers["y"], [0.0, 1.0])


@pytest.mark.parametrize(
    "x_hat, claimed, centers, expected",
    [
        ((0.6, 0.8), "x", {"x": np.array([1.0, 0.0])}, 0.6),
        ((0.6, 0.8), "z", {}, 0.8),
        ((1.0, 0.0), "x", {"x": np.array([1.0, 0.0])}, 1.0),
    ],
)
def test_score_examples(x_hat, claimed, centers, expected):
    assert score(np.array(x_hat), claimed, centers, TWO_AXES) == pytest.approx(expected, abs=1e-15)


def test_score_without_attractors_or_enrollment():
    with pytest.raises(EmptyAttractorsError):
        score(np.array([1.0, 0.0]), "z", {}, {"speakers": [], "vectors": np.zeros((0, 2))})
    with pytest.raises(EmptyAttractorsError):
        score(np.array([1.0, 0.0]), "z", {}, None)


def test_score_batch_normalizes_raw_embeddings():
    scores = score_batch(np.array([[3.0, 4.0], [0.0, 7.0]]), ["x", "q"], {"x": np.array([1.0, 0.0])}, TWO_AXES)
    np.testing.assert_allclose(scores, [0.6, 1.0])
