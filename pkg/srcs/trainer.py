"""
Trainer module.

Runs the SAMO training schedule end to end: epoch loop with scheduled
speaker-attractor updates, Adam optimization under a cosine learning rate,
per-epoch dev evaluation in both scoring modes, model selection, the
ablation harness and multi-seed runs.

Epochs are numbered 1..T. An attractor update scheduled for epoch i runs at
the start of that epoch, before any of its gradient steps.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np

from checkpoint import save_checkpoint
from config import ConfigError, num_threads
from dataset import ProtocolError, batch_iter, scoring_utts
from encoder import (
    adam_init,
    adam_step,
    backward,
    cosine_lr,
    forward,
    init_params,
    params_to_tensors,
    tensors_to_params,
)
from metrics import EmptyClassError, make_score_set, metrics_row
from numerics import l2_normalize, spawn_rngs
from objective import (
    enrollment_centers,
    init_attractors,
    init_oc_center,
    init_softmax_head,
    oc_softmax_loss,
    samo_loss,
    score_batch,
    softmax_ce_loss,
    softmax_scores,
    update_attractors,
    validate_margins,
)
from reports import write_score_file
from type_defs import (
    AblationRow,
    AttractorSet,
    Checkpoint,
    EpochRecord,
    EvalResult,
    Partition,
    SeedsSummary,
    TdcfParams,
    TrainConfig,
    TrainResult,
)

WITH_ENROLLMENT = "with_enrollment"
WITHOUT_ENROLLMENT = "without_enrollment"
MODES = (WITH_ENROLLMENT, WITHOUT_ENROLLMENT)

# setup id: (label, overrides applied to the base config)
ABLATION_SETUPS: dict[int, tuple[str, dict]] = {
    1: ("SAMO", {}),
    2: (
        "one-hot and fixed attractors",
        {"attractor_init": "onehot", "attractors_frozen": True, "update_epochs": None},
    ),
    3: ("w/o speaker attractor update", {"attractors_frozen": False, "update_epochs": [2]}),
    4: (
        "update every epoch (M=1)",
        {"attractors_frozen": False, "update_interval": 1, "update_epochs": None},
    ),
    5: (
        "update every 10 epochs (M=10)",
        {"attractors_frozen": False, "update_interval": 10, "update_epochs": None},
    ),
}

METRIC_KEYS = ("eer_noenroll", "min_tdcf_noenroll", "eer_enroll", "min_tdcf_enroll")


class NonFiniteLossError(Exception):
    """Raised when a training batch produces a NaN or infinite loss."""

    pass


class MissingEnrollmentError(Exception):
    """Raised when enrollment scoring is asked of a partition without enrollment data."""

    pass


# =============================================================================
# SCHEDULE
# =============================================================================


def validate_train_config(cfg: TrainConfig) -> None:
    """
    Check the numeric ranges of a training configuration.

    Raises:
        ConfigError: On T < 1, M < 1, N < 1, bad widths or bad margins.
    """

    if cfg["epochs"] < 1:
        raise ConfigError(f"epochs must be >= 1, got {cfg['epochs']}")
    if cfg["update_interval"] < 1:
        raise ConfigError(f"update_interval must be >= 1, got {cfg['update_interval']}")
    if cfg["batch_size"] < 1:
        raise ConfigError(f"batch_size must be >= 1, got {cfg['batch_size']}")
    if cfg["embedding_dim"] < 1:
        raise ConfigError(f"embedding_dim must be >= 1, got {cfg['embedding_dim']}")
    if cfg["weight_decay"] < 0:
        raise ConfigError(f"weight_decay must be >= 0, got {cfg['weight_decay']}")
    if cfg["objective"] != "softmax":
        validate_margins(cfg["margins"])


def should_update(epoch: int, cfg: TrainConfig) -> bool:
    """
    Whether attractors are refreshed at the start of an epoch.

    Args:
        epoch: 1-based epoch index.
        cfg: Training configuration.

    Returns:
        False for non-SAMO objectives or frozen attractors; membership in
        update_epochs when given; otherwise epoch mod M == 0.
    """

    if cfg["objective"] != "samo" or cfg["attractors_frozen"]:
        return False
    if cfg["update_epochs"]:
        return epoch in cfg["update_epochs"]
    return epoch % cfg["update_interval"] == 0


# =============================================================================
# TRAINING
# =============================================================================


def _train_speakers(train_utts: list) -> list[str]:
    """Sorted training speakers; each must have bona fide data."""

    speakers = sorted({u["speaker"] for u in train_utts})
    with_bona = {u["speaker"] for u in train_utts if u["label"] == 0}
    lacking = [s for s in speakers if s not in with_bona]
    if lacking:
        raise ProtocolError(
            f"Train speakers without bona fide utterances: {', '.join(lacking)}"
        )
    return speakers


def _snapshot(
    cfg: TrainConfig,
    tensors: list[np.ndarray],
    n_encoder: int,
    epoch: int,
    attractors: Optional[AttractorSet],
) -> Checkpoint:
    """Checkpoint of the current flat tensor list."""

    encoder = tensors_to_params(tensors[:n_encoder], cfg["activation"])
    extra = tensors[n_encoder:]

    center = extra[0] if cfg["objective"] == "oc_softmax" else None
    head = {"W2": extra[0], "b2": extra[1]} if cfg["objective"] == "softmax" else None

    return {
        "encoder": encoder,
        "objective": cfg["objective"],
        "epoch": epoch,
        "attractors": attractors,
        "center": center,
        "head": head,
    }


def _batch_step(
    ckpt: Checkpoint, batch: list, margins
) -> tuple[float, list[np.ndarray]]:
    """Loss of one mini-batch and the gradient of every trained tensor."""

    features = np.vstack([u["features"] for u in batch])
    labels = np.array([u["label"] for u in batch], dtype=np.int64)
    speakers = [u["speaker"] for u in batch]

    params = ckpt["encoder"]
    embeddings, cache = forward(params, features)
    objective = ckpt["objective"]

    if objective == "samo":
        loss, grad_x = samo_loss(embeddings, labels, speakers, ckpt["attractors"], margins)
        extra = []
    elif objective == "oc_softmax":
        loss, grad_x, grad_w = oc_softmax_loss(embeddings, labels, ckpt["center"], margins)
        extra = [grad_w]
    else:
        loss, grad_x, grad_head = softmax_ce_loss(embeddings, labels, ckpt["head"])
        extra = [grad_head["W2"], grad_head["b2"]]

    grads = params_to_tensors(backward(params, cache, grad_x)) + extra
    return loss, grads


def _dev_metrics(ckpt: Checkpoint, dev: Optional[Partition], tdcf: TdcfParams) -> dict:
    """Dev EER and min t-DCF in both modes; NaN where dev cannot be scored."""

    values = {
        "dev_eer_enroll": float("nan"),
        "dev_eer_noenroll": float("nan"),
        "dev_min_tdcf_enroll": float("nan"),
        "dev_min_tdcf_noenroll": float("nan"),
    }
    if dev is None or not scoring_utts(dev):
        return values

    for mode, suffix in ((WITH_ENROLLMENT, "enroll"), (WITHOUT_ENROLLMENT, "noenroll")):
        if mode == WITH_ENROLLMENT and not dev["enroll_utts"]:
            continue
        try:
            metrics = evaluate(ckpt, dev, mode, tdcf)["metrics"]
        except EmptyClassError:
            continue
        values[f"dev_eer_{suffix}"] = metrics["eer"]
        values[f"dev_min_tdcf_{suffix}"] = metrics["min_tdcf"]

    return values


def train(
    cfg: TrainConfig,
    partitions: tuple[Partition, ...],
    out_dir: Optional[str] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainResult:
    """
    Train an encoder (plus attractors, center or head) for cfg["epochs"] epochs.

    Three PCG64 streams are spawned from cfg["seed"]: weight initialization,
    batch shuffling and attractor initialization. After every epoch the
    model is snapshotted, optionally written to
    ``<out_dir>/checkpoints/epoch_XXX.ckpt``, and evaluated on dev.

    Args:
        cfg: Training configuration.
        partitions: (train, dev[, eval]); dev may be None.
        out_dir: Optional directory for per-epoch checkpoints.
        on_epoch: Called with each EpochRecord as soon as it is complete.

    Returns:
        TrainResult with the best checkpoint by dev EER with enrollment.

    Raises:
        ConfigError: Invalid configuration.
        ProtocolError: Empty train partition or a speaker without bona fide data.
        NonFiniteLossError: A batch loss is NaN or infinite.
    """

    validate_train_config(cfg)

    train_part = partitions[0]
    dev = partitions[1] if len(partitions) > 1 else None
    train_utts = train_part["train_utts"]
    if not train_utts:
        raise ProtocolError("Train partition is empty")

    init_rng, batch_rng, attractor_rng = spawn_rngs(cfg["seed"], 3)

    feature_dim = train_utts[0]["features"].shape[0]
    dims = [feature_dim] + list(cfg["hidden_dims"]) + [cfg["embedding_dim"]]
    params = init_params(dims, cfg["activation"], init_rng)
    dim = cfg["embedding_dim"]

    attractors = None
    extra: list[np.ndarray] = []
    if cfg["objective"] == "samo":
        attractors = init_attractors(
            _train_speakers(train_utts), dim, cfg["attractor_init"], attractor_rng
        )
    elif cfg["objective"] == "oc_softmax":
        extra = [init_oc_center(dim, init_rng)]
    else:
        head = init_softmax_head(dim, init_rng)
        extra = [head["W2"], head["b2"]]

    tensors = params_to_tensors(params) + extra
    n_encoder = len(tensors) - len(extra)
    state = adam_init(tensors)
    schedule = {"lr0": cfg["lr0"], "lr_min": cfg["lr_min"], "total_epochs": cfg["epochs"]}

    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)

    history: list[EpochRecord] = []
    snapshots: list[Checkpoint] = []

    for epoch in range(1, cfg["epochs"] + 1):
        updated = should_update(epoch, cfg)
        if updated:
            current = tensors_to_params(tensors[:n_encoder], cfg["activation"])
            attractors = update_attractors(
                current, train_utts, attractors, cfg["attractor_average"]
            )

        lr = cosine_lr(epoch - 1, schedule)
        total_loss = 0.0
        seen = 0

        for number, batch in enumerate(batch_iter(train_utts, cfg["batch_size"], batch_rng), 1):
            ckpt = _snapshot(cfg, tensors, n_encoder, epoch, attractors)
            loss, grads = _batch_step(ckpt, batch, cfg["margins"])
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"Loss is {loss} at epoch {epoch}, batch {number} (lr={lr:.3g})"
                )
            tensors, state = adam_step(tensors, grads, state, lr, cfg["weight_decay"])
            total_loss += loss * len(batch)
            seen += len(batch)

        snapshot = _snapshot(cfg, tensors, n_encoder, epoch, attractors)
        snapshots.append(snapshot)
        if out_dir is not None:
            save_checkpoint(
                snapshot, os.path.join(out_dir, "checkpoints", f"epoch_{epoch:03d}.ckpt")
            )

        record: EpochRecord = {
            "epoch": epoch,
            "train_loss": total_loss / seen,
            "lr": lr,
            "attractor_updated": updated,
            **_dev_metrics(snapshot, dev, cfg["tdcf"]),
        }
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)

    best_epoch = select_model(history)
    return {
        "best": snapshots[best_epoch - 1],
        "final": snapshots[-1],
        "history": history,
        "best_epoch": best_epoch,
    }


def select_model(history: list[EpochRecord]) -> int:
    """
    Epoch with the lowest dev EER with enrollment, ties to the earliest.

    NaN EERs never win. When no epoch has a dev EER, the last epoch is kept.

    Args:
        history: Nonempty training history.

    Returns:
        1-based epoch index.
    """

    best_epoch = None
    best_eer = None
    for record in history:
        value = record["dev_eer_enroll"]
        if np.isnan(value):
            continue
        if best_eer is None or value < best_eer:
            best_epoch, best_eer = record["epoch"], value

    return best_epoch if best_epoch is not None else history[-1]["epoch"]


# =============================================================================
# EVALUATION
# =============================================================================


def _center_as_attractors(center: np.ndarray) -> AttractorSet:
    unit, _ = l2_normalize(center)
    return {"speakers": ["center"], "vectors": unit[None, :]}


def evaluate(
    ckpt: Checkpoint,
    partition: Partition,
    mode: str,
    tdcf: TdcfParams,
    score_path: Optional[str] = None,
) -> EvalResult:
    """
    Score a partition with a checkpoint and compute its metrics.

    With enrollment, every claimed speaker that has enrollment utterances is
    scored against its enrollment center. Without enrollment, enroll_utts
    is never read: SAMO scores against the closest attractor, OC-Softmax
    against its center and softmax uses the logit difference.

    Args:
        ckpt: Trained model.
        partition: Partition to score (test_utts, or train_utts for train).
        mode: "with_enrollment" or "without_enrollment".
        tdcf: t-DCF parameters.
        score_path: Optional score file to write.

    Returns:
        EvalResult with metrics and per-utterance score rows.

    Raises:
        MissingEnrollmentError: Enrollment mode without enrollment data.
        EmptyClassError: Nothing to score, or a class is absent.
        ConfigError: Unknown mode.
    """

    if mode not in MODES:
        raise ConfigError(f"Unknown scoring mode '{mode}'")

    utts = scoring_utts(partition)
    if not utts:
        raise EmptyClassError(f"Partition '{partition['name']}' has no utterances to score")

    params = ckpt["encoder"]
    embeddings, _ = forward(params, np.vstack([u["features"] for u in utts]))
    claimed = [u["speaker"] for u in utts]

    if ckpt["objective"] == "samo":
        fallback = ckpt["attractors"]
    elif ckpt["objective"] == "oc_softmax":
        fallback = _center_as_attractors(ckpt["center"])
    else:
        fallback = None

    if mode == WITH_ENROLLMENT:
        if not partition["enroll_utts"]:
            raise MissingEnrollmentError(
                f"Partition '{partition['name']}' has no enrollment utterances"
            )
        centers = enrollment_centers(params, partition["enroll_utts"])
        scores = score_batch(embeddings, claimed, centers, fallback)
    elif fallback is not None:
        scores = score_batch(embeddings, claimed, {}, fallback)
    else:
        scores = softmax_scores(embeddings, ckpt["head"])

    rows = [
        {
            "utt_id": u["utt_id"],
            "speaker": u["speaker"],
            "label": u["label"],
            "attack_tag": u["attack_tag"],
            "mode": mode,
            "score": float(s),
        }
        for u, s in zip(utts, scores)
    ]

    score_set = make_score_set(
        [r["score"] for r in rows if r["label"] == 0],
        [r["score"] for r in rows if r["label"] == 1],
    )
    result: EvalResult = {"metrics": metrics_row(mode, score_set, tdcf), "scores": rows}

    if score_path is not None:
        write_score_file(score_path, rows)

    return result


def evaluate_both(ckpt: Checkpoint, partition: Partition, tdcf: TdcfParams) -> dict:
    """EER and min t-DCF of both modes, keyed like an AblationRow."""

    enroll = evaluate(ckpt, partition, WITH_ENROLLMENT, tdcf)["metrics"]
    noenroll = evaluate(ckpt, partition, WITHOUT_ENROLLMENT, tdcf)["metrics"]
    return {
        "eer_noenroll": noenroll["eer"],
        "min_tdcf_noenroll": noenroll["min_tdcf"],
        "eer_enroll": enroll["eer"],
        "min_tdcf_enroll": enroll["min_tdcf"],
    }


# =============================================================================
# EXPERIMENTS
# =============================================================================


def ablation_config(setup: int, base: TrainConfig) -> TrainConfig:
    """
    Training configuration of an ablation setup.

    Args:
        setup: Setup id, 1 to 5.
        base: Configuration the overrides apply to.

    Returns:
        A SAMO TrainConfig with the setup's overrides.

    Raises:
        ConfigError: Unknown setup id.
    """

    if setup not in ABLATION_SETUPS:
        raise ConfigError(f"Unknown ablation setup {setup} (expected 1-5)")

    cfg = dict(base)
    cfg["objective"] = "samo"
    cfg.update(ABLATION_SETUPS[setup][1])
    return cfg


def run_ablation(
    setup: int,
    base: TrainConfig,
    partitions: tuple[Partition, Partition, Partition],
    out_dir: Optional[str] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> tuple[AblationRow, TrainResult]:
    """
    Train one ablation setup and evaluate its best checkpoint on eval.

    Args:
        setup: Setup id, 1 to 5.
        base: Base configuration.
        partitions: (train, dev, eval).
        out_dir: Optional directory for per-epoch checkpoints.
        on_epoch: Per-epoch callback passed to train.

    Returns:
        (report row, training result).
    """

    cfg = ablation_config(setup, base)
    result = train(cfg, partitions, out_dir, on_epoch)
    row: AblationRow = {
        "setup": setup,
        "configuration": ABLATION_SETUPS[setup][0],
        "best_epoch": result["best_epoch"],
        **evaluate_both(result["best"], partitions[2], cfg["tdcf"]),
    }
    return row, result


def _seed_run(cfg: TrainConfig, partitions: tuple, seed: int) -> dict:
    seeded = dict(cfg)
    seeded["seed"] = seed
    result = train(seeded, partitions)
    return {"seed": seed, **evaluate_both(result["best"], partitions[2], cfg["tdcf"])}


def run_seeds(
    cfg: TrainConfig,
    partitions: tuple[Partition, Partition, Partition],
    seeds: list[int],
    workers: Optional[int] = None,
) -> SeedsSummary:
    """
    Train once per seed and aggregate eval metrics.

    Runs share nothing but read-only partitions, so they execute on a thread
    pool; results are ordered by the input seed list.

    Args:
        cfg: Training configuration; its seed is replaced per run.
        partitions: (train, dev, eval).
        seeds: At least one seed.
        workers: Thread count, SAMO_NUM_THREADS when None.

    Returns:
        SeedsSummary with per-seed rows, mean and best (minimum) per metric.

    Raises:
        ConfigError: Empty seed list.
    """

    if not seeds:
        raise ConfigError("At least one seed is required")

    workers = workers or num_threads()
    with ThreadPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
        per_seed = list(pool.map(lambda s: _seed_run(cfg, partitions, s), seeds))

    mean = {key: float(np.mean([row[key] for row in per_seed])) for key in METRIC_KEYS}
    best = {key: float(np.min([row[key] for row in per_seed])) for key in METRIC_KEYS}
    return {"seeds": list(seeds), "per_seed": per_seed, "mean": mean, "best": best}
