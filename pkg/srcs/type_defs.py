"""
Type definitions for SAMO

Central repository for all TypedDict structures used across the project.
Ensures type consistency and provides IDE autocompletion support.

Numeric payloads are float64 ``numpy`` arrays; everything else is plain
Python data so records can be written to CSV without conversion.
"""

from typing import TypedDict, Optional

import numpy as np


# =============================================================================
# CORPUS TYPES
# =============================================================================


class Utterance(TypedDict):
    """One labeled feature vector (stands in for an audio file)."""

    utt_id: str
    speaker: str
    label: int  # 0 = bona fide, 1 = spoof
    attack_tag: str  # "-" for bona fide
    features: np.ndarray


class Corpus(TypedDict):
    """Ordered list of utterances sharing one feature dimension."""

    utterances: list[Utterance]
    feature_dim: int


class Partition(TypedDict):
    """Train, dev or eval slice of a corpus."""

    name: str
    train_utts: list[Utterance]
    enroll_utts: list[Utterance]
    test_utts: list[Utterance]


class Protocol(TypedDict):
    """Speaker assignment and enrollment count for split_partitions."""

    train_speakers: list[str]
    dev_speakers: list[str]
    eval_speakers: list[str]
    enroll_per_speaker: int


class SynthConfig(TypedDict):
    """Parameters of the synthetic multi-speaker generator."""

    n_speakers: int
    bona_per_speaker: int
    spoof_per_attack: int
    n_attacks: int
    feature_dim: int
    speaker_spread: float
    spoof_spread: float
    speaker_scale: float
    spoof_placement: str
    eval_attacks: int
    eval_speakers: list[str]
    n_seen_speakers: int
    seed: int


class PartitionSummary(TypedDict):
    """Counts printed in the Table-1-like corpus summary."""

    partition: str
    speakers: int
    enrollment: int
    bona_fide: int
    spoof: int
    attacks: str


# =============================================================================
# MODEL TYPES
# =============================================================================


class EncoderParams(TypedDict):
    """Weights of the MLP embedding network."""

    weights: list[np.ndarray]  # W_i has shape (out, in)
    biases: list[np.ndarray]
    activation: str


class ForwardCache(TypedDict):
    """Per-layer values kept by forward for backward."""

    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    single: bool


class AdamState(TypedDict):
    """Moment accumulators for a flat list of tensors."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int
    beta1: float
    beta2: float
    eps: float


class LrSchedule(TypedDict):
    """Cosine annealing schedule over epochs."""

    lr0: float
    lr_min: float
    total_epochs: int


class MarginConfig(TypedDict):
    """Scale factor and margins shared by OC-Softmax and SAMO."""

    alpha: float
    m0: float
    m1: float


class AttractorSet(TypedDict):
    """One unit-norm attractor row per training speaker, sorted by id."""

    speakers: list[str]
    vectors: np.ndarray


class SoftmaxHead(TypedDict):
    """Two-class linear head of the softmax baseline."""

    W2: np.ndarray
    b2: np.ndarray


class Checkpoint(TypedDict):
    """Everything needed to score utterances after training."""

    encoder: EncoderParams
    objective: str
    epoch: int
    attractors: Optional[AttractorSet]
    center: Optional[np.ndarray]
    head: Optional[SoftmaxHead]


# =============================================================================
# TRAINING TYPES
# =============================================================================


class TdcfParams(TypedDict):
    """Priors, costs and fixed ASV error rates of the tandem cost."""

    p_target: float
    p_nontarget: float
    p_spoof: float
    c_miss_cm: float
    c_fa_cm: float
    c_miss_asv: float
    c_fa_asv: float
    p_miss_asv: float
    p_fa_asv: float
    p_miss_spoof_asv: float


class TrainConfig(TypedDict):
    """Resolved training configuration."""

    objective: str
    epochs: int
    update_interval: int
    update_epochs: Optional[list[int]]
    attractors_frozen: bool
    attractor_init: str
    attractor_average: str
    margins: MarginConfig
    lr0: float
    lr_min: float
    batch_size: int
    weight_decay: float
    hidden_dims: list[int]
    embedding_dim: int
    activation: str
    seed: int
    tdcf: TdcfParams


class EpochRecord(TypedDict):
    """One row of the training history."""

    epoch: int
    train_loss: float
    lr: float
    attractor_updated: bool
    dev_eer_enroll: float
    dev_eer_noenroll: float
    dev_min_tdcf_enroll: float
    dev_min_tdcf_noenroll: float


class TrainResult(TypedDict):
    """Outcome of one training run."""

    best: Checkpoint
    final: Checkpoint
    history: list[EpochRecord]
    best_epoch: int


# =============================================================================
# EVALUATION TYPES
# =============================================================================


class ScoreSet(TypedDict):
    """Bona fide and spoof scores of one scoring pass."""

    bona_scores: np.ndarray
    spoof_scores: np.ndarray


class ScoreRow(TypedDict):
    """One line of a score file."""

    utt_id: str
    speaker: str
    label: int
    attack_tag: str
    mode: str
    score: float


class MetricsRow(TypedDict):
    """EER and min t-DCF of one scoring mode."""

    mode: str
    eer: float
    eer_threshold: float
    min_tdcf: float


class EvalResult(TypedDict):
    """Scores and metrics produced by trainer.evaluate."""

    metrics: MetricsRow
    scores: list[ScoreRow]


class AblationRow(TypedDict):
    """One line of the ablation report."""

    setup: int
    configuration: str
    best_epoch: int
    eer_noenroll: float
    min_tdcf_noenroll: float
    eer_enroll: float
    min_tdcf_enroll: float


class SeedsSummary(TypedDict):
    """Mean and best metrics across seeds, plus the per-seed rows."""

    seeds: list[int]
    per_seed: list[dict]
    mean: dict
    best: dict
