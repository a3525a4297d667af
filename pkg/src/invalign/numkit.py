"""Dense numeric kernel: matrix checks, stable primitives, seeded RNG streams,
and the finite-difference gradient checker used to verify every hand-derived
backward pass in this package.

A "matrix" throughout the package is a 2-D C-contiguous float64 ndarray with
finite entries; :func:`as_matrix` is the validation helper that enforces this.
"""

from __future__ import annotations

import zlib
from typing import Callable, Sequence

import numpy as np

# Guard on normalization denominators; embeddings can collapse early in
# training and dividing by a ~0 norm must fail loudly.
EPS_NORM = 1e-12


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Validate and convert input to a 2-D float64 matrix.

    Raises ValueError for wrong dimensionality or non-finite entries.
    """
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    require_finite(a, name)
    return a


def as_vector(x, name: str = "vector") -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {a.shape}")
    require_finite(a, name)
    return a


def as_labels(y, name: str = "labels") -> np.ndarray:
    """Validate a vector of {0, 1} class labels (0 = live, 1 = spoof)."""
    a = np.asarray(y)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {a.shape}")
    a = a.astype(np.int64)
    if not np.all((a == 0) | (a == 1)):
        raise ValueError(f"{name} must contain only 0 (live) and 1 (spoof)")
    return a


def require_finite(a: np.ndarray, name: str = "array") -> None:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"{name} contains non-finite values")


class Rng:
    """Deterministic random source with named sub-streams.

    Backed by numpy's PCG64. Identical seeds yield identical streams.
    Sub-streams for distinct purposes are derived by seeding a fresh
    generator with ``[seed, crc32(label_0), crc32(label_1), ...]``, so the
    stream consumed for e.g. data generation never shifts the stream used
    for parameter init or batching.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._root = np.random.default_rng(self.seed)

    def stream(self, *labels) -> np.random.Generator:
        """Independent generator for the given purpose labels."""
        entropy = [self.seed] + [zlib.crc32(str(l).encode("utf-8")) for l in labels]
        return np.random.default_rng(entropy)

    @property
    def root(self) -> np.random.Generator:
        return self._root


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check.

    Raises ValueError naming both shapes on inner-dimension mismatch.
    """
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: {a.shape[0]}x{a.shape[1]} by "
            f"{b.shape[0]}x{b.shape[1]}"
        )
    out = a @ b
    require_finite(out, "matmul result")
    return out


def l2_normalize_rows(
    z: np.ndarray,
) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Normalize each row to unit Euclidean norm.

    Returns ``(zhat, backward)`` where ``backward`` maps an upstream
    gradient g (same shape as z) to the gradient w.r.t. z, per row:
    ``(g - (g . zhat) zhat) / ||z||``.

    Raises ValueError identifying the first row whose norm is <= EPS_NORM.
    """
    z = as_matrix(z, "rows to normalize")
    norms = np.linalg.norm(z, axis=1)
    bad = np.nonzero(norms <= EPS_NORM)[0]
    if bad.size:
        raise ValueError(
            f"row {bad[0]} has norm {norms[bad[0]]:.3e} <= {EPS_NORM}; "
            "cannot L2-normalize (degenerate embedding)"
        )
    zhat = z / norms[:, None]

    def backward(g: np.ndarray) -> np.ndarray:
        g = as_matrix(g, "upstream gradient")
        if g.shape != z.shape:
            raise ValueError(f"gradient shape {g.shape} != input shape {z.shape}")
        inner = np.sum(g * zhat, axis=1, keepdims=True)
        return (g - inner * zhat) / norms[:, None]

    return zhat, backward


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a matrix.

    The independent oracle against which every analytic backward in this
    package is checked.
    """
    x = as_matrix(x, "point")
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            xp = x.copy()
            xp[i, j] += h
            fp = float(f(xp))
            xm = x.copy()
            xm[i, j] -= h
            fm = float(f(xm))
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(
                    f"non-finite function value near entry ({i}, {j})"
                )
            g[i, j] = (fp - fm) / (2.0 * h)
    return g


def stable_logsumexp(v: Sequence[float] | np.ndarray) -> float:
    """log(sum(exp(v))) with max-subtraction; no overflow for |v_k| <= 700."""
    a = np.asarray(v, dtype=np.float64)
    if a.size == 0:
        raise ValueError("logsumexp of empty sequence")
    m = np.max(a)
    return float(m + np.log(np.sum(np.exp(a - m))))


def logsumexp_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise stable logsumexp; rows with only -inf entries are rejected."""
    m = np.max(a, axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise ValueError("logsumexp row has no finite entries")
    return (m + np.log(np.sum(np.exp(a - m), axis=1, keepdims=True)))[:, 0]


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Relative error max|a-b| / max(1e-300, max|a|, max|b|), for grad checks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(1e-300, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b)) / denom)
