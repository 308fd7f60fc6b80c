"""
Dataset module.

Synthetic multi-speaker corpora, corpus file ingestion, the train/dev/eval
protocol with enrollment, and mini-batch iteration.

Corpus file format (UTF-8 CSV):
    utt_id,speaker,label,attack_tag,f0,f1,...,f{F-1}
label is 0 (bona fide) or 1 (spoof); attack_tag is "-" exactly for bona fide.
"""

import csv
from itertools import combinations
from typing import Iterator

import numpy as np

from config import ConfigError, PLACEMENTS
from numerics import DimensionMismatchError, make_rng, seeded_shuffle
from type_defs import (
    Corpus,
    Partition,
    PartitionSummary,
    Protocol,
    SynthConfig,
    Utterance,
)

HEADER_PREFIX = ["utt_id", "speaker", "label", "attack_tag"]
BONA_TAG = "-"


class ParseError(Exception):
    """Raised when a corpus file is malformed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ProtocolError(Exception):
    """Raised when a partition protocol does not fit the corpus."""

    pass


# =============================================================================
# SYNTHETIC GENERATION
# =============================================================================


def speaker_ids(n_speakers: int) -> list[str]:
    """Zero-padded speaker ids whose string order matches their index."""

    width = max(3, len(str(n_speakers - 1)))
    return [f"spk{k:0{width}d}" for k in range(n_speakers)]


def speaker_means(n_speakers: int, feature_dim: int, scale: float) -> np.ndarray:
    """
    Speaker means on scaled basis directions, paired by sign.

    Speaker k sits at (-1)^k * scale * e_{k // 2}, so speakers 0 and 1 are
    at +-scale along the first axis, 2 and 3 along the second, and so on.

    Args:
        n_speakers: Number of speakers.
        feature_dim: Feature dimension F.
        scale: Distance of each mean from the origin.

    Returns:
        (n_speakers, F) matrix.
    """

    means = np.zeros((n_speakers, feature_dim))
    for k in range(n_speakers):
        means[k, k // 2] = scale if k % 2 == 0 else -scale
    return means


def _validate_synth(cfg: SynthConfig) -> None:
    for key in ("n_speakers", "bona_per_speaker", "spoof_per_attack", "n_attacks", "feature_dim"):
        if cfg[key] < 1:
            raise ConfigError(f"'{key}' must be >= 1, got {cfg[key]}")
    for key in ("speaker_spread", "spoof_spread", "speaker_scale"):
        if not cfg[key] > 0:
            raise ConfigError(f"'{key}' must be > 0, got {cfg[key]}")
    if cfg["spoof_placement"] not in PLACEMENTS:
        raise ConfigError(f"Unknown spoof_placement '{cfg['spoof_placement']}'")

    # between_speakers needs one axis per speaker; the others only need a
    # distinct signed axis per speaker
    limit = cfg["feature_dim"]
    if cfg["spoof_placement"] != "between_speakers":
        limit *= 2
    if cfg["n_speakers"] > limit:
        raise ConfigError(
            f"n_speakers ({cfg['n_speakers']}) must not exceed {limit} "
            f"for feature_dim {cfg['feature_dim']} and {cfg['spoof_placement']}"
        )

    if cfg["eval_attacks"] < 0:
        raise ConfigError(f"'eval_attacks' must be >= 0, got {cfg['eval_attacks']}")
    if cfg["eval_attacks"] and cfg["eval_attacks"] >= cfg["n_attacks"]:
        raise ConfigError(
            f"eval_attacks ({cfg['eval_attacks']}) must be below "
            f"n_attacks ({cfg['n_attacks']})"
        )


def _attack_targets(cfg: SynthConfig, speakers: list[str]) -> list[int]:
    """
    Indices of the speakers that receive the held-out attacks.

    Raises:
        ConfigError: If eval_attacks is set and the targets are empty,
            unknown or cover every speaker.
    """

    if not cfg["eval_attacks"]:
        return []

    names = cfg["eval_speakers"] or speakers[cfg["n_seen_speakers"]:]
    unknown = sorted(set(names) - set(speakers))
    if unknown:
        raise ConfigError(f"eval_speakers not in the corpus: {', '.join(unknown)}")
    if not names or len(set(names)) == len(speakers):
        raise ConfigError(
            "eval_attacks needs eval speakers that are a nonempty, "
            "proper subset of the corpus speakers"
        )
    return sorted(speakers.index(name) for name in set(names))


def _speaker_pairs(members: list[int], means: np.ndarray) -> list[tuple[int, int]]:
    """
    Member pairs ordered by index gap, then by first index.

    Pairs whose midpoint is the origin are dropped unless nothing else is
    left, so distinct attacks do not collapse onto the same center.
    """

    pairs = sorted(combinations(members, 2), key=lambda p: (p[1] - p[0], p[0]))
    off_origin = [(i, j) for i, j in pairs if np.any(means[i] + means[j] != 0.0)]
    return off_origin or pairs


def _attack_means(
    cfg: SynthConfig,
    means: np.ndarray,
    members: list[int],
    n_attacks: int,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """
    Attack cluster centers for one group of speakers.

    between_speakers cycles over midpoints of member pairs, or half the
    mean of a lone member. per_speaker_offset returns offsets instead,
    added to each target mean.
    """

    scale = cfg["speaker_scale"]
    placement = cfg["spoof_placement"]

    if placement == "between_speakers":
        if len(members) == 1:
            return [means[members[0]] / 2.0 for _ in range(n_attacks)]
        pairs = _speaker_pairs(members, means)
        return [
            (means[i] + means[j]) / 2.0
            for i, j in (pairs[a % len(pairs)] for a in range(n_attacks))
        ]

    directions = rng.normal(size=(n_attacks, cfg["feature_dim"]))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    if placement == "uniform_shell":
        return [scale * d for d in directions]

    # per_speaker_offset: half-way out of the speaker cluster
    return [0.5 * scale * d for d in directions]


def generate_synthetic(cfg: SynthConfig) -> Corpus:
    """
    Generate a corpus where bona fide speech forms one cluster per speaker.

    Bona fide features of speaker s are Gaussian around its mean with std
    speaker_spread. Spoof features of each attack are Gaussian (std
    spoof_spread) around a placement-dependent center; spoof utterance j of
    an attack claims member j mod len(members) of the attack's group.

    With eval_attacks = 0 there is one group holding every speaker. With
    eval_attacks = k > 0 the last k attack tags are built from and claim
    only the eval speakers (the explicit list, or everyone after the
    automatic train/dev split), and the first n_attacks - k tags belong to
    the remaining speakers. Train/dev and eval then see disjoint attacks.

    Args:
        cfg: Generator configuration.

    Returns:
        Corpus with n_speakers * bona_per_speaker bona fide utterances
        followed by n_attacks * spoof_per_attack spoof utterances.

    Raises:
        ConfigError: On invalid counts or spreads, too many speakers for
            feature_dim, or an unusable eval_attacks setting.
    """

    _validate_synth(cfg)

    rng = make_rng(cfg["seed"])
    n_speakers = cfg["n_speakers"]
    feature_dim = cfg["feature_dim"]
    speakers = speaker_ids(n_speakers)
    means = speaker_means(n_speakers, feature_dim, cfg["speaker_scale"])

    held_out = _attack_targets(cfg, speakers)
    seen = [k for k in range(n_speakers) if k not in held_out]
    groups = [(seen, cfg["n_attacks"] - cfg["eval_attacks"])]
    if held_out:
        groups.append((held_out, cfg["eval_attacks"]))

    attacks = [
        (members, center)
        for members, count in groups
        for center in _attack_means(cfg, means, members, count, rng)
    ]

    utterances: list[Utterance] = []

    def _add(speaker: str, label: int, tag: str, features: np.ndarray) -> None:
        utterances.append(
            {
                "utt_id": f"utt_{len(utterances):06d}",
                "speaker": speaker,
                "label": label,
                "attack_tag": tag,
                "features": features,
            }
        )

    for k, speaker in enumerate(speakers):
        noise = rng.normal(0.0, cfg["speaker_spread"], size=(cfg["bona_per_speaker"], feature_dim))
        for row in means[k] + noise:
            _add(speaker, 0, BONA_TAG, row)

    width = max(2, len(str(cfg["n_attacks"])))
    for a, (members, center) in enumerate(attacks):
        tag = f"A{a + 1:0{width}d}"
        noise = rng.normal(0.0, cfg["spoof_spread"], size=(cfg["spoof_per_attack"], feature_dim))
        for j in range(cfg["spoof_per_attack"]):
            target = members[j % len(members)]
            if cfg["spoof_placement"] == "per_speaker_offset":
                mean = means[target] + center
            else:
                mean = center
            _add(speakers[target], 1, tag, mean + noise[j])

    return {"utterances": utterances, "feature_dim": feature_dim}


# =============================================================================
# CORPUS FILES
# =============================================================================


def _parse_row(row: list[str], line_number: int, feature_dim: int) -> Utterance:
    """
    Parse one CSV row into an Utterance.

    Raises:
        DimensionMismatchError: Wrong number of feature columns.
        ParseError: Any other malformed field.
    """

    if len(row) != len(HEADER_PREFIX) + feature_dim:
        raise DimensionMismatchError(
            f"line {line_number}: expected {feature_dim} features, "
            f"got {len(row) - len(HEADER_PREFIX)}"
        )

    utt_id, speaker, label_text, attack_tag = (field.strip() for field in row[:4])

    if not utt_id or not speaker:
        raise ParseError("empty utt_id or speaker", line_number)
    if label_text not in ("0", "1"):
        raise ParseError(f"label must be 0 or 1, got '{label_text}'", line_number)

    label = int(label_text)
    if (attack_tag == BONA_TAG) != (label == 0):
        raise ParseError(
            f"attack_tag '{attack_tag}' inconsistent with label {label}", line_number
        )

    try:
        features = np.array([float(x) for x in row[4:]], dtype=np.float64)
    except ValueError as e:
        raise ParseError(f"bad feature value ({e})", line_number)
    if not np.all(np.isfinite(features)):
        raise ParseError("non-finite feature value", line_number)

    return {
        "utt_id": utt_id,
        "speaker": speaker,
        "label": label,
        "attack_tag": attack_tag,
        "features": features,
    }


def load_corpus(path: str) -> Corpus:
    """
    Read a corpus CSV file.

    Args:
        path: Path to the corpus file.

    Returns:
        Corpus with utterances in file order.

    Raises:
        ParseError: Missing/invalid header, malformed rows, duplicate ids.
        DimensionMismatchError: A row disagrees with the header on F.
    """

    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)

        if header is None:
            raise ParseError("empty file, missing header", 1)

        header = [column.strip() for column in header]
        feature_columns = header[len(HEADER_PREFIX):]
        expected = [f"f{i}" for i in range(len(feature_columns))]
        if header[: len(HEADER_PREFIX)] != HEADER_PREFIX or not feature_columns or feature_columns != expected:
            raise ParseError(
                "header must be utt_id,speaker,label,attack_tag,f0,...,f{F-1}", 1
            )

        feature_dim = len(feature_columns)
        utterances = []
        seen = set()

        for line_number, row in enumerate(reader, start=2):
            if not row or all(not field.strip() for field in row):
                continue
            utt = _parse_row(row, line_number, feature_dim)
            if utt["utt_id"] in seen:
                raise ParseError(f"duplicate utt_id '{utt['utt_id']}'", line_number)
            seen.add(utt["utt_id"])
            utterances.append(utt)

    return {"utterances": utterances, "feature_dim": feature_dim}


def write_corpus(corpus: Corpus, path: str) -> None:
    """
    Write a corpus CSV file readable by load_corpus.

    Features use 17 significant digits so values round-trip exactly.

    Args:
        corpus: Corpus to write.
        path: Destination file.
    """

    header = HEADER_PREFIX + [f"f{i}" for i in range(corpus["feature_dim"])]

    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for utt in corpus["utterances"]:
            writer.writerow(
                [utt["utt_id"], utt["speaker"], utt["label"], utt["attack_tag"]]
                + [format(float(x), ".17g") for x in utt["features"]]
            )


# =============================================================================
# PROTOCOL
# =============================================================================


def auto_protocol(
    corpus: Corpus, n_train: int, n_dev: int, enroll_per_speaker: int
) -> Protocol:
    """
    Split the sorted speaker list into train, dev and eval speakers.

    Args:
        corpus: Corpus whose speakers are split.
        n_train: Number of train speakers (first in sorted order).
        n_dev: Number of dev speakers (next in order); the rest is eval.
        enroll_per_speaker: Enrollment utterances per dev/eval speaker.

    Returns:
        Protocol.

    Raises:
        ProtocolError: If the counts do not fit the corpus.
    """

    speakers = sorted({utt["speaker"] for utt in corpus["utterances"]})

    if n_train < 1 or n_dev < 0 or n_train + n_dev > len(speakers):
        raise ProtocolError(
            f"Cannot split {len(speakers)} speakers into {n_train} train "
            f"and {n_dev} dev speakers"
        )

    return {
        "train_speakers": speakers[:n_train],
        "dev_speakers": speakers[n_train : n_train + n_dev],
        "eval_speakers": speakers[n_train + n_dev :],
        "enroll_per_speaker": enroll_per_speaker,
    }


def _check_protocol(corpus: Corpus, protocol: Protocol) -> None:
    corpus_speakers = {utt["speaker"] for utt in corpus["utterances"]}
    listed = (
        protocol["train_speakers"] + protocol["dev_speakers"] + protocol["eval_speakers"]
    )

    if len(listed) != len(set(listed)):
        raise ProtocolError("Speaker lists must be disjoint")

    missing = corpus_speakers - set(listed)
    if missing:
        raise ProtocolError(f"Speakers not assigned to a partition: {', '.join(sorted(missing))}")

    unknown = set(listed) - corpus_speakers
    if unknown:
        raise ProtocolError(f"Speakers not in the corpus: {', '.join(sorted(unknown))}")

    if protocol["enroll_per_speaker"] < 0:
        raise ProtocolError("enroll_per_speaker must be >= 0")


def _split_enrollment(
    name: str,
    utterances: list[Utterance],
    speakers: list[str],
    enroll_per_speaker: int,
    rng: np.random.Generator,
) -> Partition:
    """Pick enrollment utterances per speaker; everything else is test."""

    chosen: set[str] = set()

    for speaker in sorted(speakers):
        bona = [u for u in utterances if u["speaker"] == speaker and u["label"] == 0]
        if len(bona) <= enroll_per_speaker:
            raise ProtocolError(
                f"Speaker '{speaker}' in {name} has {len(bona)} bona fide "
                f"utterances, needs more than {enroll_per_speaker}"
            )
        order = seeded_shuffle(len(bona), rng)
        chosen.update(bona[i]["utt_id"] for i in order[:enroll_per_speaker])

    members = set(speakers)
    enroll, test = [], []
    for utt in utterances:
        if utt["speaker"] not in members:
            continue
        (enroll if utt["utt_id"] in chosen else test).append(utt)

    return {"name": name, "train_utts": [], "enroll_utts": enroll, "test_utts": test}


def split_partitions(
    corpus: Corpus, protocol: Protocol, rng: np.random.Generator
) -> tuple[Partition, Partition, Partition]:
    """
    Build the train, dev and eval partitions.

    Train keeps every utterance of its speakers as training data with no
    enrollment. For dev and eval, enroll_per_speaker bona fide utterances
    per speaker are drawn as enrollment; the remaining bona fide and all
    spoof utterances are test data. Lists keep corpus order.

    Args:
        corpus: Corpus to split.
        protocol: Speaker assignment and enrollment count.
        rng: Generator used to draw enrollment utterances.

    Returns:
        (train, dev, eval) partitions.

    Raises:
        ProtocolError: On overlapping or incomplete speaker lists, or a
            dev/eval speaker with too few bona fide utterances.
    """

    _check_protocol(corpus, protocol)

    utterances = corpus["utterances"]
    train_members = set(protocol["train_speakers"])
    train: Partition = {
        "name": "train",
        "train_utts": [u for u in utterances if u["speaker"] in train_members],
        "enroll_utts": [],
        "test_utts": [],
    }

    k = protocol["enroll_per_speaker"]
    dev = _split_enrollment("dev", utterances, protocol["dev_speakers"], k, rng)
    evaluation = _split_enrollment("eval", utterances, protocol["eval_speakers"], k, rng)

    return train, dev, evaluation


def scoring_utts(partition: Partition) -> list[Utterance]:
    """Utterances scored for a partition: test data, or all data for train."""

    if partition["test_utts"]:
        return partition["test_utts"]
    return partition["train_utts"]


def batch_iter(
    utts: list[Utterance], batch_size: int, rng: np.random.Generator
) -> Iterator[list[Utterance]]:
    """
    Yield one reshuffled epoch of mini-batches.

    Args:
        utts: Utterances of the epoch.
        batch_size: Batch size N; the final short batch is kept.
        rng: Generator consumed by the shuffle.

    Yields:
        Lists of utterances.

    Raises:
        ConfigError: If batch_size < 1.
    """

    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")

    order = seeded_shuffle(len(utts), rng)
    for start in range(0, len(order), batch_size):
        yield [utts[i] for i in order[start : start + batch_size]]


# =============================================================================
# SUMMARY
# =============================================================================


def _attack_range(utts: list[Utterance]) -> str:
    tags = sorted({u["attack_tag"] for u in utts if u["label"] == 1})
    if not tags:
        return "-"
    if len(tags) == 1:
        return tags[0]
    return f"{tags[0]}~{tags[-1]}"


def corpus_summary(partitions: tuple[Partition, ...]) -> list[PartitionSummary]:
    """
    Per-partition counts in the layout of the dataset summary table.

    Args:
        partitions: Partitions to summarize.

    Returns:
        One summary per partition.
    """

    rows = []
    for part in partitions:
        scored = part["train_utts"] + part["test_utts"]
        everything = scored + part["enroll_utts"]
        rows.append(
            {
                "partition": part["name"],
                "speakers": len({u["speaker"] for u in everything}),
                "enrollment": len(part["enroll_utts"]),
                "bona_fide": sum(1 for u in scored if u["label"] == 0),
                "spoof": sum(1 for u in scored if u["label"] == 1),
                "attacks": _attack_range(scored),
            }
        )
    return rows

