"""
Objective module.

Training losses with analytic gradients (SAMO, OC-Softmax, softmax
cross-entropy), the speaker-attractor set and its scheduled update, and the
inference score with or without enrollment.

Every loss takes raw embeddings x, normalizes them internally and returns
the gradient with respect to the raw embeddings. Attractors never receive
gradients; they only change through update_attractors.
"""

from typing import Optional

import numpy as np

from config import ConfigError
from encoder import forward
from numerics import (
    DimensionMismatchError,
    l2_normalize,
    l2_normalize_backward,
    l2_normalize_rows,
)
from type_defs import AttractorSet, EncoderParams, MarginConfig, SoftmaxHead, Utterance


class TooManySpeakersError(Exception):
    """Raised when one-hot attractors need more speakers than dimensions."""

    pass


class UnknownSpeakerError(Exception):
    """Raised when a bona fide sample names a speaker without an attractor."""

    pass


class EmptyAttractorsError(Exception):
    """Raised when scoring against an empty attractor set."""

    pass


# =============================================================================
# HELPERS
# =============================================================================


def validate_margins(margins: MarginConfig) -> None:
    """
    Check alpha > 0, m0 > m1 and both margins in [-1, 1].

    Raises:
        ConfigError: If any condition fails.
    """

    alpha, m0, m1 = margins["alpha"], margins["m0"], margins["m1"]
    if not alpha > 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    if not m0 > m1:
        raise ConfigError(f"m0 must exceed m1, got m0={m0}, m1={m1}")
    if not (-1.0 <= m0 <= 1.0 and -1.0 <= m1 <= 1.0):
        raise ConfigError(f"Margins must lie in [-1, 1], got m0={m0}, m1={m1}")


def softplus(z: np.ndarray) -> np.ndarray:
    """log(1 + e^z), as log1p(e^z) for z <= 0 and z + log1p(e^-z) above."""

    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z > 0
    out[pos] = z[pos] + np.log1p(np.exp(-z[pos]))
    out[~pos] = np.log1p(np.exp(z[~pos]))
    return out


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Overflow-free logistic function."""

    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_batch(x: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if x.shape[0] == 0:
        raise DimensionMismatchError("Loss needs a nonempty batch")
    if labels.shape[0] != x.shape[0]:
        raise DimensionMismatchError(
            f"{labels.shape[0]} labels for a batch of {x.shape[0]} embeddings"
        )
    return x, labels


def _margin_loss(
    d: np.ndarray, labels: np.ndarray, margins: MarginConfig
) -> tuple[float, np.ndarray]:
    """
    Mean of log(1 + exp(alpha (m_y - d) (-1)^y)) and its derivative in d.

    The derivative already carries the 1/N of the mean.
    """

    alpha = margins["alpha"]
    sign = np.where(labels == 0, 1.0, -1.0)
    margin = np.where(labels == 0, margins["m0"], margins["m1"])
    z = alpha * (margin - d) * sign

    n = d.shape[0]
    loss = float(np.sum(softplus(z)) / n)
    grad_d = sigmoid(z) * (-alpha * sign) / n
    return loss, grad_d


# =============================================================================
# ATTRACTORS
# =============================================================================


def init_attractors_onehot(speakers: list[str], dim: int) -> AttractorSet:
    """
    One-hot attractors: the k-th speaker in sorted order gets e_k.

    Args:
        speakers: Training speaker ids.
        dim: Embedding dimension D.

    Returns:
        AttractorSet.

    Raises:
        TooManySpeakersError: If there are more speakers than dimensions.
    """

    ordered = sorted(set(speakers))
    if len(ordered) > dim:
        raise TooManySpeakersError(
            f"{len(ordered)} speakers cannot get one-hot attractors in {dim} dimensions"
        )

    vectors = np.zeros((len(ordered), dim))
    vectors[np.arange(len(ordered)), np.arange(len(ordered))] = 1.0
    return {"speakers": ordered, "vectors": vectors}


def init_attractors_orthonormal(
    speakers: list[str], dim: int, rng: np.random.Generator
) -> AttractorSet:
    """
    Random orthonormal attractors from the QR of seeded Gaussian matrices.

    Speakers are taken in blocks of D; rows within a block are orthonormal,
    which is the best possible when there are more speakers than dimensions.

    Args:
        speakers: Training speaker ids.
        dim: Embedding dimension D.
        rng: Generator.

    Returns:
        AttractorSet.
    """

    ordered = sorted(set(speakers))
    blocks = []
    remaining = len(ordered)

    while remaining > 0:
        size = min(dim, remaining)
        q, r = np.linalg.qr(rng.normal(size=(dim, size)))
        # Fix signs so the factorization is unique
        q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
        blocks.append(q.T)
        remaining -= size

    vectors = np.vstack(blocks) if blocks else np.zeros((0, dim))
    return {"speakers": ordered, "vectors": vectors}


def init_attractors(
    speakers: list[str], dim: int, method: str, rng: np.random.Generator
) -> AttractorSet:
    """Dispatch on attractor_init ("onehot" or "orthonormal")."""

    if method == "orthonormal":
        return init_attractors_orthonormal(speakers, dim, rng)
    return init_attractors_onehot(speakers, dim)


def _speaker_embeddings(
    params: EncoderParams, utts: list[Utterance]
) -> dict[str, np.ndarray]:
    """Raw embeddings grouped by speaker (utterance order kept)."""

    grouped: dict[str, list[np.ndarray]] = {}
    for utt in utts:
        grouped.setdefault(utt["speaker"], []).append(utt["features"])

    embedded = {}
    for speaker, rows in grouped.items():
        embedded[speaker], _ = forward(params, np.vstack(rows))
    return embedded


def update_attractors(
    params: EncoderParams,
    bona_utts: list[Utterance],
    attractors: AttractorSet,
    average: str = "normalized",
) -> AttractorSet:
    """
    Reset each attractor to the mean bona fide embedding of its speaker.

    Args:
        params: Current encoder.
        bona_utts: Training utterances; spoof entries are ignored.
        attractors: Current attractors (speaker order is kept).
        average: "normalized" averages unit embeddings, "raw" averages raw
            embeddings; the mean is normalized either way.

    Returns:
        New AttractorSet. Speakers without bona fide data keep their row.

    Raises:
        ZeroNormError: If a speaker's mean embedding is numerically zero.
    """

    bona = [u for u in bona_utts if u["label"] == 0]
    embedded = _speaker_embeddings(params, bona)

    vectors = attractors["vectors"].copy()
    for row, speaker in enumerate(attractors["speakers"]):
        if speaker not in embedded:
            continue
        emb = embedded[speaker]
        if average == "normalized":
            emb, _ = l2_normalize_rows(emb)
        vectors[row], _ = l2_normalize(emb.mean(axis=0))

    return {"speakers": list(attractors["speakers"]), "vectors": vectors}


def _select_similarity(
    x_hat: np.ndarray, labels: np.ndarray, speakers: list[str], attractors: AttractorSet
) -> tuple[np.ndarray, np.ndarray]:
    """
    Similarity d_i and the attractor row it came from.

    Bona fide samples use their own speaker's attractor; spoof samples use
    the most similar attractor, ties going to the first row.
    """

    if len(attractors["speakers"]) == 0:
        raise EmptyAttractorsError("Attractor set is empty")
    if len(speakers) != len(labels):
        raise DimensionMismatchError(
            f"{len(speakers)} speaker ids for a batch of {len(labels)} samples"
        )

    sims = x_hat @ attractors["vectors"].T
    index = {speaker: row for row, speaker in enumerate(attractors["speakers"])}

    rows = np.empty(len(labels), dtype=np.int64)
    for i, (label, speaker) in enumerate(zip(labels, speakers)):
        if label == 0:
            if speaker not in index:
                raise UnknownSpeakerError(f"No attractor for bona fide speaker '{speaker}'")
            rows[i] = index[speaker]
        else:
            rows[i] = int(np.argmax(sims[i]))

    return sims[np.arange(len(labels)), rows], rows


def similarity_d(
    x_hat: np.ndarray, label: int, speaker: str, attractors: AttractorSet
) -> tuple[float, Optional[str]]:
    """
    Similarity used by the SAMO loss for one normalized embedding.

    Args:
        x_hat: Unit embedding.
        label: 0 for bona fide, 1 for spoof.
        speaker: Speaker id (only used for bona fide).
        attractors: Attractor set.

    Returns:
        (d, argmax speaker for spoof samples or None for bona fide).

    Raises:
        UnknownSpeakerError: Bona fide speaker without an attractor.
    """

    d, rows = _select_similarity(
        np.atleast_2d(x_hat), np.array([label]), [speaker], attractors
    )
    chosen = attractors["speakers"][rows[0]] if label == 1 else None
    return float(d[0]), chosen


# =============================================================================
# LOSSES
# =============================================================================


def samo_loss(
    x: np.ndarray,
    labels,
    speakers: list[str],
    attractors: AttractorSet,
    margins: MarginConfig,
) -> tuple[float, np.ndarray]:
    """
    Speaker-attractor multi-center one-class loss.

    Bona fide samples are pulled above m0 toward their own speaker's
    attractor; spoof samples are pushed below m1 from the nearest attractor.
    The spoof gradient flows only through that nearest attractor.

    Args:
        x: Raw embeddings (n, D).
        labels: 0/1 labels.
        speakers: Speaker id per sample.
        attractors: Fixed attractors.
        margins: alpha, m0, m1.

    Returns:
        (mean loss, gradient with respect to x).

    Raises:
        UnknownSpeakerError: Bona fide speaker without an attractor.
        DimensionMismatchError: Speaker ids and labels differ in length.
    """

    x, labels = _as_batch(x, labels)
    x_hat, _ = l2_normalize_rows(x)
    d, rows = _select_similarity(x_hat, labels, speakers, attractors)
    loss, grad_d = _margin_loss(d, labels, margins)

    grad_hat = grad_d[:, None] * attractors["vectors"][rows]
    return loss, l2_normalize_backward(x, grad_hat)


def oc_softmax_loss(
    x: np.ndarray, labels, center: np.ndarray, margins: MarginConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """
    One-class softmax loss around a single trainable center.

    Args:
        x: Raw embeddings (n, D).
        labels: 0/1 labels.
        center: Raw center vector w.
        margins: alpha, m0, m1.

    Returns:
        (mean loss, gradient w.r.t. x, gradient w.r.t. w).

    Raises:
        ZeroNormError: If the center is degenerate.
    """

    x, labels = _as_batch(x, labels)
    w_hat, _ = l2_normalize(center)
    x_hat, _ = l2_normalize_rows(x)
    d = x_hat @ w_hat
    loss, grad_d = _margin_loss(d, labels, margins)

    grad_x = l2_normalize_backward(x, grad_d[:, None] * w_hat[None, :])
    grad_w = l2_normalize_backward(center, grad_d @ x_hat)
    return loss, grad_x, grad_w


def init_oc_center(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian initial center."""

    return rng.normal(size=dim)


def init_softmax_head(dim: int, rng: np.random.Generator) -> SoftmaxHead:
    """Glorot-uniform 2 x D head with zero bias."""

    limit = np.sqrt(6.0 / (dim + 2))
    return {"W2": rng.uniform(-limit, limit, size=(2, dim)), "b2": np.zeros(2)}


def softmax_ce_loss(
    x: np.ndarray, labels, head: SoftmaxHead
) -> tuple[float, np.ndarray, SoftmaxHead]:
    """
    Two-class cross entropy on logits W2 x_hat + b2.

    Class 0 is bona fide, class 1 is spoof.

    Args:
        x: Raw embeddings (n, D).
        labels: 0/1 labels.
        head: Linear head.

    Returns:
        (mean loss, gradient w.r.t. x, gradient w.r.t. the head).
    """

    x, labels = _as_batch(x, labels)
    x_hat, _ = l2_normalize_rows(x)
    logits = x_hat @ head["W2"].T + head["b2"]

    n = x.shape[0]
    lse = np.logaddexp(logits[:, 0], logits[:, 1])
    picked = logits[np.arange(n), labels]
    loss = float(np.sum(lse - picked) / n)

    probs = np.exp(logits - lse[:, None])
    grad_logits = probs
    grad_logits[np.arange(n), labels] -= 1.0
    grad_logits /= n

    grad_head: SoftmaxHead = {
        "W2": grad_logits.T @ x_hat,
        "b2": grad_logits.sum(axis=0),
    }
    grad_x = l2_normalize_backward(x, grad_logits @ head["W2"])
    return loss, grad_x, grad_head


def softmax_scores(x: np.ndarray, head: SoftmaxHead) -> np.ndarray:
    """Bona fide logit minus spoof logit on normalized embeddings."""

    x_hat, _ = l2_normalize_rows(np.atleast_2d(x))
    logits = x_hat @ head["W2"].T + head["b2"]
    return logits[:, 0] - logits[:, 1]


# =============================================================================
# INFERENCE
# =============================================================================


def enrollment_center(embeddings: np.ndarray) -> np.ndarray:
    """
    Normalized mean of normalized enrollment embeddings.

    Args:
        embeddings: (k, D) raw embeddings, k >= 1.

    Returns:
        Unit vector.

    Raises:
        DimensionMismatchError: No embeddings.
        ZeroNormError: Degenerate mean.
    """

    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    if embeddings.shape[0] == 0:
        raise DimensionMismatchError("Enrollment center needs at least one embedding")

    units, _ = l2_normalize_rows(embeddings)
    center, _ = l2_normalize(units.mean(axis=0))
    return center


def enrollment_centers(
    params: EncoderParams, enroll_utts: list[Utterance]
) -> dict[str, np.ndarray]:
    """Enrollment center per speaker present in enroll_utts."""

    embedded = _speaker_embeddings(params, enroll_utts)
    return {speaker: enrollment_center(emb) for speaker, emb in sorted(embedded.items())}


def score(
    x_hat: np.ndarray,
    claimed_speaker: str,
    centers: dict[str, np.ndarray],
    attractors: Optional[AttractorSet],
) -> float:
    """
    Inference score of one normalized embedding.

    Enrolled speakers are scored against their enrollment center; everyone
    else against the most similar training attractor.

    Args:
        x_hat: Unit embedding.
        claimed_speaker: Speaker the utterance claims to be.
        centers: Enrollment centers by speaker (may be empty).
        attractors: Training attractors.

    Returns:
        Cosine similarity score.

    Raises:
        EmptyAttractorsError: Unenrolled speaker and no attractors.
    """

    if claimed_speaker in centers:
        return float(centers[claimed_speaker] @ x_hat)

    if attractors is None or len(attractors["speakers"]) == 0:
        raise EmptyAttractorsError(
            f"Speaker '{claimed_speaker}' is not enrolled and there are no attractors"
        )
    return float(np.max(attractors["vectors"] @ x_hat))


def score_batch(
    x: np.ndarray,
    claimed_speakers: list[str],
    centers: dict[str, np.ndarray],
    attractors: Optional[AttractorSet],
) -> np.ndarray:
    """score() for every row of a batch of raw embeddings."""

    x_hat, _ = l2_normalize_rows(np.atleast_2d(x))
    return np.array(
        [score(row, s, centers, attractors) for row, s in zip(x_hat, claimed_speakers)]
    )
