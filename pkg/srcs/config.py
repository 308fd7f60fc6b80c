"""
Configuration layer for SAMO.

Config files are flat ``key=value`` text (``#`` comments allowed) read with
python-dotenv. Every key has a default and a help string in SCHEMA; unknown
keys are rejected. Values stay as strings in the resolved config so it can
be echoed verbatim, and are parsed on access.

Precedence: defaults < config file < ``--set key=value`` < dedicated flags.
"""

import os
from typing import Optional

from dotenv import dotenv_values, load_dotenv

from type_defs import SynthConfig, TdcfParams, TrainConfig, MarginConfig


class ConfigError(Exception):
    """Raised when a configuration key or value is invalid."""

    pass


OBJECTIVES = ("samo", "oc_softmax", "softmax")
OBJECTIVE_ALIASES = {"ocs": "oc_softmax", "oc-softmax": "oc_softmax"}
PLACEMENTS = ("between_speakers", "per_speaker_offset", "uniform_shell")

# Margins per objective (softmax ignores them)
SAMO_MARGINS: MarginConfig = {"alpha": 20.0, "m0": 0.7, "m1": 0.0}
OCS_MARGINS: MarginConfig = {"alpha": 20.0, "m0": 0.5, "m1": -0.2}

# key: (kind, default, help)
SCHEMA: dict[str, tuple[str, str, str]] = {
    "seed": ("int", "0", "Seed for generation, splitting and training"),
    # Synthetic corpus
    "n_speakers": ("int", "12", "Number of speakers in the synthetic corpus"),
    "bona_per_speaker": ("int", "30", "Bona fide utterances per speaker"),
    "spoof_per_attack": ("int", "60", "Spoof utterances per attack type"),
    "n_attacks": ("int", "6", "Number of attack types"),
    "feature_dim": ("int", "16", "Feature dimension F"),
    "speaker_spread": ("float", "0.5", "Std of bona fide features around the speaker mean"),
    "spoof_spread": ("float", "0.5", "Std of spoof features around the attack mean"),
    "speaker_scale": ("float", "3.0", "Distance of speaker means from the origin"),
    "spoof_placement": (
        "choice:" + ",".join(PLACEMENTS),
        "between_speakers",
        "Where attack clusters are placed",
    ),
    "eval_attacks": (
        "int",
        "0",
        "Attacks held out of train/dev and aimed at the eval speakers (0 = shared attacks)",
    ),
    # Protocol
    "train_speakers": ("strs", "", "Explicit train speakers (empty = automatic split)"),
    "dev_speakers": ("strs", "", "Explicit dev speakers (empty = automatic split)"),
    "eval_speakers": ("strs", "", "Explicit eval speakers (empty = automatic split)"),
    "n_train_speakers": ("int", "6", "Train speakers in the automatic split"),
    "n_dev_speakers": ("int", "2", "Dev speakers in the automatic split (rest is eval)"),
    "enroll_per_speaker": ("int", "3", "Enrollment utterances per dev/eval speaker"),
    # Training
    "objective": ("choice:" + ",".join(OBJECTIVES), "samo", "Training objective"),
    "epochs": ("int", "100", "Total number of epochs T"),
    "update_interval": ("int", "3", "Attractor update interval M (epochs)"),
    "update_epochs": ("ints", "", "Explicit attractor update epochs (overrides M)"),
    "attractors_frozen": ("bool", "false", "Never update attractors after init"),
    "attractor_init": ("choice:onehot,orthonormal", "onehot", "Attractor initialization"),
    "attractor_average": (
        "choice:normalized,raw",
        "normalized",
        "Average normalized or raw embeddings into attractors",
    ),
    "alpha": ("optfloat", "", "Scale factor (empty = objective default)"),
    "m0": ("optfloat", "", "Bona fide margin (empty = objective default)"),
    "m1": ("optfloat", "", "Spoof margin (empty = objective default)"),
    "lr0": ("float", "1e-4", "Initial learning rate"),
    "lr_min": ("float", "0", "Final learning rate of the cosine schedule"),
    "batch_size": ("int", "24", "Mini-batch size N"),
    "weight_decay": ("float", "0", "L2 weight decay added to gradients"),
    "hidden_dims": ("ints", "64,64", "Hidden layer widths of the encoder"),
    "embedding_dim": ("int", "160", "Embedding dimension D"),
    "activation": ("choice:relu,tanh", "relu", "Hidden activation"),
    # t-DCF
    "p_target": ("float", "0.9405", "Prior of target speakers"),
    "p_nontarget": ("float", "0.0095", "Prior of non-target speakers"),
    "p_spoof": ("float", "0.05", "Prior of spoofing attacks"),
    "c_miss_cm": ("float", "1", "Cost of the CM rejecting a target"),
    "c_fa_cm": ("float", "10", "Cost of the CM accepting a spoof"),
    "c_miss_asv": ("float", "1", "Cost of the ASV rejecting a target"),
    "c_fa_asv": ("float", "10", "Cost of the ASV accepting a non-target"),
    "p_miss_asv": ("float", "0.05", "Fixed ASV miss rate"),
    "p_fa_asv": ("float", "0.01", "Fixed ASV false alarm rate"),
    "p_miss_spoof_asv": ("float", "0.5", "Fixed ASV miss rate on spoofs"),
    # Paths
    "corpus": ("str", "corpus.csv", "Corpus CSV path"),
    "out_dir": ("str", "runs", "Output directory"),
}


def default_config() -> dict[str, str]:
    """Return every key with its default value."""

    return {key: default for key, (_, default, _) in SCHEMA.items()}


def parse_value(key: str, text: str):
    """
    Parse the raw text of a key according to its schema kind.

    Args:
        key: Config key.
        text: Raw value.

    Returns:
        Typed value (int, float, bool, str, list or None).

    Raises:
        ConfigError: If the key is unknown or the value does not parse.
    """

    if key not in SCHEMA:
        raise ConfigError(f"Unknown config key '{key}'")

    kind = SCHEMA[key][0]
    text = text.strip()

    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "optfloat":
            return float(text) if text else None
        if kind == "bool":
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind == "ints":
            return [int(part) for part in text.split(",") if part.strip()]
        if kind == "strs":
            return [part.strip() for part in text.split(",") if part.strip()]
        if kind.startswith("choice:"):
            if key == "objective":
                text = OBJECTIVE_ALIASES.get(text, text)
            options = kind.split(":", 1)[1].split(",")
            if text not in options:
                raise ValueError(f"expected one of {', '.join(options)}")
            return text
        return text
    except ValueError as e:
        raise ConfigError(f"Invalid value for '{key}': {e}")


def parse_overrides(items: Optional[list[str]]) -> dict[str, str]:
    """
    Turn ``key=value`` strings from the command line into a dict.

    Args:
        items: Strings such as ``"epochs=10"``.

    Returns:
        Mapping of key to raw value.

    Raises:
        ConfigError: If an item has no ``=``.
    """

    overrides = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"Expected key=value, got '{item}'")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def load_config(
    path: Optional[str] = None, overrides: Optional[dict[str, str]] = None
) -> dict[str, str]:
    """
    Resolve defaults, an optional config file and overrides.

    Args:
        path: Optional ``key=value`` config file.
        overrides: Values that win over the file.

    Returns:
        Raw resolved config (every schema key present).

    Raises:
        ConfigError: On unknown keys, unparsable values or a missing file.
    """

    config = default_config()
    layers = []

    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"Config file '{path}' does not exist.")
        layers.append(dotenv_values(path))
    if overrides:
        layers.append(overrides)

    for layer in layers:
        for key, value in layer.items():
            if key not in SCHEMA:
                raise ConfigError(f"Unknown config key '{key}'")
            config[key] = "" if value is None else str(value)

    # Parse everything once so errors surface before any work starts
    for key, value in config.items():
        parse_value(key, value)

    return config


def get(config: dict[str, str], key: str):
    """Return the typed value of a key."""

    return parse_value(key, config[key])


def write_config(config: dict[str, str], path: str) -> None:
    """
    Echo the resolved config as sorted ``key=value`` lines.

    Args:
        config: Raw resolved config.
        path: Destination file.
    """

    with open(path, "w", encoding="utf-8") as f:
        for key in sorted(config):
            f.write(f"{key}={config[key]}\n")


def num_threads() -> int:
    """
    Worker cap for seed fan-out, read from SAMO_NUM_THREADS (``.env`` aware).

    Returns:
        Positive worker count, 1 when unset.
    """

    load_dotenv()
    raw = os.environ.get("SAMO_NUM_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"SAMO_NUM_THREADS must be an integer, got '{raw}'")
    return max(1, value)


# =============================================================================
# TYPED VIEWS
# =============================================================================


def synth_config(config: dict[str, str]) -> SynthConfig:
    """Build the generator configuration."""

    return {
        "n_speakers": get(config, "n_speakers"),
        "bona_per_speaker": get(config, "bona_per_speaker"),
        "spoof_per_attack": get(config, "spoof_per_attack"),
        "n_attacks": get(config, "n_attacks"),
        "feature_dim": get(config, "feature_dim"),
        "speaker_spread": get(config, "speaker_spread"),
        "spoof_spread": get(config, "spoof_spread"),
        "speaker_scale": get(config, "speaker_scale"),
        "spoof_placement": get(config, "spoof_placement"),
        "eval_attacks": get(config, "eval_attacks"),
        "eval_speakers": get(config, "eval_speakers"),
        "n_seen_speakers": get(config, "n_train_speakers") + get(config, "n_dev_speakers"),
        "seed": get(config, "seed"),
    }


def tdcf_params(config: dict[str, str]) -> TdcfParams:
    """Build the t-DCF parameters."""

    keys = (
        "p_target",
        "p_nontarget",
        "p_spoof",
        "c_miss_cm",
        "c_fa_cm",
        "c_miss_asv",
        "c_fa_asv",
        "p_miss_asv",
        "p_fa_asv",
        "p_miss_spoof_asv",
    )
    return {key: get(config, key) for key in keys}


def margins_for(objective: str, config: Optional[dict[str, str]] = None) -> MarginConfig:
    """
    Objective-specific margins, with explicit alpha/m0/m1 keys winning.

    Args:
        objective: samo, oc_softmax or softmax.
        config: Optional raw config carrying alpha/m0/m1.

    Returns:
        MarginConfig.
    """

    base = OCS_MARGINS if objective == "oc_softmax" else SAMO_MARGINS
    margins = dict(base)
    if config is not None:
        for key in ("alpha", "m0", "m1"):
            value = get(config, key)
            if value is not None:
                margins[key] = value
    return margins


def train_config(config: dict[str, str]) -> TrainConfig:
    """Build the training configuration."""

    objective = get(config, "objective")
    update_epochs = get(config, "update_epochs")

    return {
        "objective": objective,
        "epochs": get(config, "epochs"),
        "update_interval": get(config, "update_interval"),
        "update_epochs": update_epochs if update_epochs else None,
        "attractors_frozen": get(config, "attractors_frozen"),
        "attractor_init": get(config, "attractor_init"),
        "attractor_average": get(config, "attractor_average"),
        "margins": margins_for(objective, config),
        "lr0": get(config, "lr0"),
        "lr_min": get(config, "lr_min"),
        "batch_size": get(config, "batch_size"),
        "weight_decay": get(config, "weight_decay"),
        "hidden_dims": get(config, "hidden_dims"),
        "embedding_dim": get(config, "embedding_dim"),
        "activation": get(config, "activation"),
        "seed": get(config, "seed"),
        "tdcf": tdcf_params(config),
    }
