"""
Checkpoint files.

Line-oriented UTF-8 text that round-trips float64 values bitwise:

    samo-ckpt v1
    dims=F,H1,...,D
    activation=relu
    objective=samo
    epoch=<i>
    W0 <values, row-major>
    b0 <values>
    ...
    center <values>            (oc_softmax only)
    head_W2 <values>           (softmax only)
    head_b2 <values>           (softmax only)
    attractors n=<S> d=<D>     (samo only)
    s=<speaker id> <D values>  (one line per speaker)

Speaker ids may contain inner spaces: the last D fields of an attractor
line are the values, everything before them is the id.
Values are written with 17 significant digits.
"""

import numpy as np

from encoder import layer_dims
from type_defs import AttractorSet, Checkpoint

MAGIC = "samo-ckpt v1"


class CheckpointError(Exception):
    """Raised when a checkpoint file cannot be read."""

    pass


def _fmt(values: np.ndarray) -> str:
    return " ".join(format(float(x), ".17g") for x in np.asarray(values).reshape(-1))


def _floats(fields: list[str], expected: int, what: str) -> np.ndarray:
    if len(fields) != expected:
        raise CheckpointError(f"{what}: expected {expected} values, got {len(fields)}")
    try:
        return np.array([float(x) for x in fields], dtype=np.float64)
    except ValueError as e:
        raise CheckpointError(f"{what}: {e}")


def format_checkpoint(ckpt: Checkpoint) -> str:
    """
    Serialize a checkpoint to text.

    Args:
        ckpt: Checkpoint to serialize.

    Returns:
        File contents.

    Raises:
        CheckpointError: If a speaker id is empty, has surrounding
            whitespace or spans several lines.
    """

    encoder = ckpt["encoder"]
    dims = layer_dims(encoder)

    lines = [
        MAGIC,
        "dims=" + ",".join(str(d) for d in dims),
        f"activation={encoder['activation']}",
        f"objective={ckpt['objective']}",
        f"epoch={ckpt['epoch']}",
    ]

    for i, (w, b) in enumerate(zip(encoder["weights"], encoder["biases"])):
        lines.append(f"W{i} {_fmt(w)}")
        lines.append(f"b{i} {_fmt(b)}")

    if ckpt["center"] is not None:
        lines.append(f"center {_fmt(ckpt['center'])}")

    if ckpt["head"] is not None:
        lines.append(f"head_W2 {_fmt(ckpt['head']['W2'])}")
        lines.append(f"head_b2 {_fmt(ckpt['head']['b2'])}")

    attractors = ckpt["attractors"]
    if attractors is not None:
        vectors = attractors["vectors"]
        lines.append(f"attractors n={len(attractors['speakers'])} d={dims[-1]}")
        for speaker, row in zip(attractors["speakers"], vectors):
            if not speaker or speaker != speaker.strip() or len(speaker.splitlines()) > 1:
                raise CheckpointError(f"Speaker id {speaker!r} cannot be stored in a checkpoint")
            lines.append(f"s={speaker} {_fmt(row)}")

    return "\n".join(lines) + "\n"


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Write a checkpoint file."""

    with open(path, "w", encoding="utf-8") as f:
        f.write(format_checkpoint(ckpt))


def _header_value(line: str, key: str) -> str:
    if not line.startswith(key + "="):
        raise CheckpointError(f"Expected '{key}=...', got '{line[:40]}'")
    return line[len(key) + 1 :]


def parse_checkpoint(text: str) -> Checkpoint:
    """
    Parse checkpoint text.

    Args:
        text: File contents.

    Returns:
        Checkpoint.

    Raises:
        CheckpointError: On any format violation.
    """

    lines = [line for line in text.splitlines() if line.strip()]
    if len(lines) < 5 or lines[0].strip() != MAGIC:
        raise CheckpointError(f"Not a checkpoint file (missing '{MAGIC}' header)")

    try:
        dims = [int(x) for x in _header_value(lines[1], "dims").split(",")]
        epoch = int(_header_value(lines[4], "epoch"))
    except ValueError as e:
        raise CheckpointError(f"Bad header value: {e}")
    activation = _header_value(lines[2], "activation")
    objective = _header_value(lines[3], "objective")

    if len(dims) < 2:
        raise CheckpointError(f"Bad dims {dims}")

    cursor = 5
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        if cursor + 1 >= len(lines):
            raise CheckpointError(f"Missing tensors for layer {i}")
        w_fields = lines[cursor].split()
        b_fields = lines[cursor + 1].split()
        if w_fields[0] != f"W{i}" or b_fields[0] != f"b{i}":
            raise CheckpointError(f"Expected W{i}/b{i}, got {w_fields[0]}/{b_fields[0]}")
        weights.append(_floats(w_fields[1:], fan_out * fan_in, f"W{i}").reshape(fan_out, fan_in))
        biases.append(_floats(b_fields[1:], fan_out, f"b{i}"))
        cursor += 2

    dim = dims[-1]
    center = None
    head = None
    attractors = None

    while cursor < len(lines):
        fields = lines[cursor].split()
        tag = fields[0]

        if tag == "center":
            center = _floats(fields[1:], dim, "center")
            cursor += 1
        elif tag == "head_W2":
            if cursor + 1 >= len(lines) or not lines[cursor + 1].startswith("head_b2"):
                raise CheckpointError("head_W2 without head_b2")
            head = {
                "W2": _floats(fields[1:], 2 * dim, "head_W2").reshape(2, dim),
                "b2": _floats(lines[cursor + 1].split()[1:], 2, "head_b2"),
            }
            cursor += 2
        elif tag == "attractors":
            attractors, cursor = _parse_attractors(lines, cursor, dim)
        else:
            raise CheckpointError(f"Unexpected line '{lines[cursor][:40]}'")

    return {
        "encoder": {"weights": weights, "biases": biases, "activation": activation},
        "objective": objective,
        "epoch": epoch,
        "attractors": attractors,
        "center": center,
        "head": head,
    }


def _parse_attractors(lines: list[str], cursor: int, dim: int) -> tuple[AttractorSet, int]:
    """Parse the attractor block starting at lines[cursor]."""

    fields = lines[cursor].split()
    try:
        n = int(_header_value(fields[1], "n"))
        d = int(_header_value(fields[2], "d"))
    except (IndexError, ValueError):
        raise CheckpointError(f"Bad attractor header '{lines[cursor]}'")
    if d != dim:
        raise CheckpointError(f"Attractor dimension {d} does not match embedding dimension {dim}")
    if cursor + n >= len(lines):
        raise CheckpointError(f"Attractor block declares {n} speakers, file is shorter")

    speakers, rows = [], []
    for line in lines[cursor + 1 : cursor + 1 + n]:
        head, *values = line.rsplit(None, d)
        speakers.append(_header_value(head, "s"))
        rows.append(_floats(values, d, f"attractor {speakers[-1]}"))

    vectors = np.vstack(rows) if rows else np.zeros((0, d))
    return {"speakers": speakers, "vectors": vectors}, cursor + 1 + n


def load_checkpoint(path: str) -> Checkpoint:
    """Read a checkpoint file."""

    with open(path, "r", encoding="utf-8") as f:
        return parse_checkpoint(f.read())
