"""
Numerics module.

Vector primitives shared by every other module: seeded randomness, L2
normalization and its backward rule, Fisher-Yates shuffling and the 2-D PCA
projection used for embedding exports.

All math is float64. Randomness comes from numpy's PCG64 bit generator,
whose stream for a given seed is identical on every platform.
"""

import numpy as np

# Norms below this are treated as zero
ZERO_NORM = 1e-30


class ZeroNormError(Exception):
    """Raised when normalizing a vector whose norm is numerically zero."""

    pass


class DegenerateDataError(Exception):
    """Raised when a projection has no variance to work with."""

    pass


class DimensionMismatchError(Exception):
    """Raised when array shapes disagree."""

    pass


def make_rng(seed: int) -> np.random.Generator:
    """
    Create a generator with a fixed, documented algorithm (PCG64).

    Args:
        seed: Non-negative integer seed.

    Returns:
        A numpy Generator.
    """

    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """
    Derive independent PCG64 streams from one seed.

    Args:
        seed: Root seed.
        count: Number of streams.

    Returns:
        List of generators, stable for a given (seed, count).
    """

    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def l2_normalize(v: np.ndarray) -> tuple[np.ndarray, float]:
    """
    Scale a vector to unit length.

    Args:
        v: 1-D vector.

    Returns:
        (unit vector, original norm).

    Raises:
        ZeroNormError: If ||v|| < 1e-30.
    """

    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if not norm >= ZERO_NORM:
        raise ZeroNormError(f"Cannot normalize a vector of norm {norm:.3g}")
    return v / norm, norm


def l2_normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Row-wise l2_normalize for a batch.

    Args:
        x: (n, D) matrix.

    Returns:
        (unit rows, norms of shape (n,)).

    Raises:
        ZeroNormError: If any row has a numerically zero norm.
    """

    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    if not np.all(norms >= ZERO_NORM):
        bad = int(np.argmin(norms))
        raise ZeroNormError(f"Row {bad} has norm {norms[bad]:.3g}")
    return x / norms[:, None], norms


def l2_normalize_backward(v: np.ndarray, upstream_grad: np.ndarray) -> np.ndarray:
    """
    Gradient of a scalar through l2_normalize.

    For x_hat = v / ||v|| the rule is (g - (x_hat . g) x_hat) / ||v||: the
    radial component of g is removed. Accepts a single vector or a batch of
    rows.

    Args:
        v: Pre-normalization vector(s).
        upstream_grad: Gradient with respect to the normalized vector(s).

    Returns:
        Gradient with respect to v.

    Raises:
        ZeroNormError: If a norm is numerically zero.
        DimensionMismatchError: If shapes differ.
    """

    v = np.asarray(v, dtype=np.float64)
    g = np.asarray(upstream_grad, dtype=np.float64)
    if v.shape != g.shape:
        raise DimensionMismatchError(
            f"Gradient shape {g.shape} does not match input shape {v.shape}"
        )

    if v.ndim == 1:
        unit, norm = l2_normalize(v)
        return (g - np.dot(unit, g) * unit) / norm

    units, norms = l2_normalize_rows(v)
    radial = np.sum(units * g, axis=1, keepdims=True)
    return (g - radial * units) / norms[:, None]


def seeded_shuffle(n: int, rng: np.random.Generator) -> list[int]:
    """
    Uniform Fisher-Yates permutation of 0..n-1.

    Args:
        n: Number of items.
        rng: Generator consumed by the shuffle.

    Returns:
        Permutation as a list of indices.
    """

    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def pca_project_2d(points: np.ndarray) -> np.ndarray:
    """
    Project points onto their top-2 principal components.

    Points are mean-centered; each component's sign is fixed so its
    largest-magnitude loading is positive, which makes the output
    deterministic.

    Args:
        points: (n, d) matrix with n >= 2 and d >= 2.

    Returns:
        (n, 2) matrix of projections.

    Raises:
        DegenerateDataError: Too few points/dimensions or all points identical.
    """

    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2 or points.shape[1] < 2:
        raise DegenerateDataError(
            f"Need at least 2 points of dimension >= 2, got shape {points.shape}"
        )

    centered = points - points.mean(axis=0)
    if not np.any(centered):
        raise DegenerateDataError("All points are identical")

    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2].copy()

    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0

    return centered @ components.T
