"""
Encoder module.

Multilayer perceptron that maps feature vectors to D-dimensional raw
embeddings, with exact reverse-mode gradients, an Adam optimizer over flat
tensor lists and a cosine-annealed learning rate.

Hidden layers are affine + activation; the final layer is affine only. L2
normalization happens in the objective module.
"""

import math

import numpy as np

from config import ConfigError
from numerics import DimensionMismatchError
from type_defs import AdamState, EncoderParams, ForwardCache, LrSchedule

ACTIVATIONS = ("relu", "tanh")


def init_params(
    dims: list[int], activation: str, rng: np.random.Generator
) -> EncoderParams:
    """
    Glorot-uniform weights and zero biases.

    Args:
        dims: Layer widths [F, hidden..., D]; at least two entries.
        activation: "relu" or "tanh".
        rng: Generator consumed by the initialization.

    Returns:
        EncoderParams with W_i of shape (dims[i+1], dims[i]).

    Raises:
        ConfigError: On fewer than one layer, non-positive widths or an
            unknown activation.
    """

    if len(dims) < 2:
        raise ConfigError(f"Encoder needs at least one layer, got dims={dims}")
    if any(d < 1 for d in dims):
        raise ConfigError(f"Layer widths must be >= 1, got dims={dims}")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"Unknown activation '{activation}'")

    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))

    return {"weights": weights, "biases": biases, "activation": activation}


def layer_dims(params: EncoderParams) -> list[int]:
    """Layer widths [F, hidden..., D] of an encoder."""

    return [params["weights"][0].shape[1]] + [w.shape[0] for w in params["weights"]]


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - np.tanh(z) ** 2


def forward(params: EncoderParams, features: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """
    Compute raw embeddings.

    Args:
        params: Encoder weights.
        features: One feature vector (F,) or a batch (n, F).

    Returns:
        (embedding with the same rank as the input, cache for backward).

    Raises:
        DimensionMismatchError: If the feature dimension is wrong.
    """

    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    h = np.atleast_2d(x)

    expected = params["weights"][0].shape[1]
    if h.ndim != 2 or h.shape[1] != expected:
        raise DimensionMismatchError(
            f"Encoder expects {expected} features, got shape {x.shape}"
        )

    inputs, pre_activations = [], []
    last = len(params["weights"]) - 1

    for i, (w, b) in enumerate(zip(params["weights"], params["biases"])):
        inputs.append(h)
        z = h @ w.T + b
        pre_activations.append(z)
        h = _activate(z, params["activation"]) if i < last else z

    cache: ForwardCache = {
        "inputs": inputs,
        "pre_activations": pre_activations,
        "single": single,
    }
    return (h[0] if single else h), cache


def backward(
    params: EncoderParams, cache: ForwardCache, grad_embedding: np.ndarray
) -> EncoderParams:
    """
    Gradients of sum(embedding * grad_embedding) with respect to all weights.

    Batch gradients are summed over rows.

    Args:
        params: Encoder weights used in the forward call.
        cache: Cache returned by forward.
        grad_embedding: Upstream gradient, same shape as the embedding.

    Returns:
        EncoderParams-shaped gradients.

    Raises:
        DimensionMismatchError: If the gradient does not match the cache.
    """

    g = np.atleast_2d(np.asarray(grad_embedding, dtype=np.float64))
    if g.shape != cache["pre_activations"][-1].shape:
        raise DimensionMismatchError(
            f"Gradient shape {np.shape(grad_embedding)} does not match the "
            f"embedding shape {cache['pre_activations'][-1].shape}"
        )

    n_layers = len(params["weights"])
    grad_w = [np.empty(0)] * n_layers
    grad_b = [np.empty(0)] * n_layers

    for i in range(n_layers - 1, -1, -1):
        grad_w[i] = g.T @ cache["inputs"][i]
        grad_b[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ params["weights"][i]) * _activation_grad(
                cache["pre_activations"][i - 1], params["activation"]
            )

    return {"weights": grad_w, "biases": grad_b, "activation": params["activation"]}


# =============================================================================
# OPTIMIZATION
# =============================================================================


def params_to_tensors(params: EncoderParams) -> list[np.ndarray]:
    """Flatten to [W0, b0, W1, b1, ...]."""

    tensors = []
    for w, b in zip(params["weights"], params["biases"]):
        tensors.extend([w, b])
    return tensors


def tensors_to_params(tensors: list[np.ndarray], activation: str) -> EncoderParams:
    """Inverse of params_to_tensors."""

    return {
        "weights": list(tensors[0::2]),
        "biases": list(tensors[1::2]),
        "activation": activation,
    }


def adam_init(
    tensors: list[np.ndarray], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
) -> AdamState:
    """Zero moments shaped like the tensors."""

    return {
        "m": [np.zeros_like(t) for t in tensors],
        "v": [np.zeros_like(t) for t in tensors],
        "t": 0,
        "beta1": beta1,
        "beta2": beta2,
        "eps": eps,
    }


def adam_step(
    tensors: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> tuple[list[np.ndarray], AdamState]:
    """
    One bias-corrected Adam update.

    Inputs are not modified; new tensors and a new state are returned.

    Args:
        tensors: Parameters.
        grads: Gradients, one per tensor.
        state: Moments and step counter.
        lr: Learning rate.
        weight_decay: L2 coefficient added to each gradient.

    Returns:
        (updated tensors, updated state).

    Raises:
        DimensionMismatchError: If any shapes differ.
    """

    if len(tensors) != len(grads) or len(tensors) != len(state["m"]):
        raise DimensionMismatchError(
            f"Adam got {len(tensors)} tensors, {len(grads)} grads, "
            f"{len(state['m'])} moments"
        )

    b1, b2, eps = state["beta1"], state["beta2"], state["eps"]
    t = state["t"] + 1
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t

    new_tensors, new_m, new_v = [], [], []
    for p, g, m, v in zip(tensors, grads, state["m"], state["v"]):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionMismatchError(
                f"Parameter shape {p.shape} vs gradient shape {g.shape}"
            )
        if weight_decay:
            g = g + weight_decay * p
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        step = (m / correction1) / (np.sqrt(v / correction2) + eps)
        new_tensors.append(p - lr * step)
        new_m.append(m)
        new_v.append(v)

    return new_tensors, {
        "m": new_m,
        "v": new_v,
        "t": t,
        "beta1": b1,
        "beta2": b2,
        "eps": eps,
    }


def cosine_lr(epoch: int, sched: LrSchedule) -> float:
    """
    Cosine-annealed learning rate.

    Args:
        epoch: 0-based epoch index, 0 <= epoch <= total_epochs.
        sched: Schedule.

    Returns:
        lr_min + (lr0 - lr_min) * (1 + cos(pi * epoch / T)) / 2

    Raises:
        ConfigError: On an invalid schedule or epoch.
    """

    lr0, lr_min, total = sched["lr0"], sched["lr_min"], sched["total_epochs"]
    if total < 1 or not 0.0 <= lr_min <= lr0:
        raise ConfigError(
            f"Invalid schedule lr0={lr0}, lr_min={lr_min}, total_epochs={total}"
        )
    if not 0 <= epoch <= total:
        raise ConfigError(f"Epoch {epoch} outside 0..{total}")

    return lr_min + (lr0 - lr_min) * (1.0 + math.cos(math.pi * epoch / total)) / 2.0
