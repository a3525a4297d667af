"""Differentiable objectives: per-domain classification risk, the supervised
contrastive separability loss, the combined separability+alignment objective,
and the gradient-penalty Lagrangian baseline.

Every loss returns its value together with analytic gradients w.r.t. the
embeddings (and hyperplanes where applicable); the test suite checks each
against central finite differences.

Hyperplanes are plain weight vectors of length m, or m+1 when a bias term is
enabled (the last coordinate is the bias and pairs with a constant 1 feature).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import as_labels, as_matrix, as_vector, logsumexp_rows, require_finite


@dataclass
class LossOutput:
    """Loss value plus gradients; fields not applicable to a loss are None.

    ``parts`` carries named sub-terms of a composite loss (for logging).
    """

    value: float
    d_z: np.ndarray | None = None
    d_beta: np.ndarray | None = None
    d_betas: np.ndarray | None = None
    parts: dict | None = None


@dataclass
class AugmentedBatch:
    """A 2b-row batch where rows 2i and 2i+1 are two views of sample i.

    Paired rows must agree on label and domain; embeddings are unit-norm when
    produced by the encoder.
    """

    z: np.ndarray
    y: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        self.z = as_matrix(self.z, "embeddings")
        self.y = as_labels(self.y)
        self.e = np.asarray(self.e, dtype=np.int64)
        n = self.z.shape[0]
        if n % 2 != 0:
            raise ValueError("augmented batch must have an even number of rows")
        if self.y.shape != (n,) or self.e.shape != (n,):
            raise ValueError("embeddings, labels, domains must have equal length")
        if not np.all(self.y[0::2] == self.y[1::2]):
            raise ValueError("paired views must share the same label")
        if not np.all(self.e[0::2] == self.e[1::2]):
            raise ValueError("paired views must share the same domain")


def _sigmoid(s: np.ndarray) -> np.ndarray:
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    ex = np.exp(s[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _split_bias(beta: np.ndarray, m: int):
    """Return (weights, bias) where bias is 0.0 for a bias-free hyperplane."""
    if beta.shape == (m,):
        return beta, 0.0
    if beta.shape == (m + 1,):
        return beta[:m], float(beta[m])
    raise ValueError(
        f"hyperplane has {beta.shape[0]} coordinates, embeddings have {m}"
    )


def linear_scores(z: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Raw scores beta . z (+ bias when beta carries one)."""
    w, b = _split_bias(as_vector(beta, "hyperplane"), z.shape[1])
    return z @ w + b


def env_risk(z: np.ndarray, y, beta: np.ndarray) -> LossOutput:
    """Mean binary cross-entropy of sigmoid(beta . z) against labels.

    Gradients: d/dbeta = mean_i (sigma_i - y_i) z_i and d/dz_i =
    (sigma_i - y_i) beta / n, both in closed form.
    """
    z = as_matrix(z, "embeddings")
    y = as_labels(y)
    n = z.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if y.shape != (n,):
        raise ValueError("labels length does not match batch")
    beta = as_vector(beta, "hyperplane")
    w, _ = _split_bias(beta, z.shape[1])
    s = linear_scores(z, beta)
    # BCE with logits: softplus(s) - y*s, stable for large |s|
    value = float(np.mean(np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s))) - y * s))
    d_s = (_sigmoid(s) - y) / n
    d_beta = np.empty_like(beta)
    d_beta[: z.shape[1]] = z.T @ d_s
    if beta.shape[0] == z.shape[1] + 1:
        d_beta[-1] = d_s.sum()
    d_z = np.outer(d_s, w)
    return LossOutput(value=value, d_z=d_z, d_beta=d_beta)


def supcon_loss(z: np.ndarray, y, e, temperature: float) -> LossOutput:
    """Supervised contrastive separability loss over a pooled batch.

    Positives of an anchor are the other rows with the same label and the
    same domain; every other row is a negative. The per-anchor softmax
    denominator runs over all rows except the anchor, computed with a
    stable log-sum-exp.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    z = as_matrix(z, "embeddings")
    y = as_labels(y)
    e = np.asarray(e, dtype=np.int64)
    n = z.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs at least 2 rows")
    if y.shape != (n,) or e.shape != (n,):
        raise ValueError("embeddings, labels, domains must have equal length")

    sims = (z @ z.T) / temperature
    off_diag = ~np.eye(n, dtype=bool)
    pos = (y[:, None] == y[None, :]) & (e[:, None] == e[None, :]) & off_diag
    counts = pos.sum(axis=1)
    if np.any(counts == 0):
        i = int(np.nonzero(counts == 0)[0][0])
        raise ValueError(
            f"anchor {i} (label {y[i]}, domain {e[i]}) has no positive sample; "
            "use stratified batches with paired views so every anchor has one"
        )

    masked = np.where(off_diag, sims, -np.inf)
    lse = logsumexp_rows(masked)
    value = float(np.sum(-(pos * sims).sum(axis=1) / counts + lse))

    # dL/ds_ij = -pos_ij/|S(i)| + softmax_ij (j != i); dL/dz = (A + A^T) z / tau
    soft = np.exp(masked - lse[:, None])
    a = soft - pos / counts[:, None]
    d_z = (a + a.T) @ z / temperature
    return LossOutput(value=value, d_z=d_z)


def _domain_slices(e: np.ndarray, num_domains: int) -> list[np.ndarray]:
    slices = [np.nonzero(e == dom)[0] for dom in range(num_domains)]
    for dom, idx in enumerate(slices):
        if idx.size == 0:
            raise ValueError(f"domain {dom} has an empty batch")
    return slices


def irm_v1_loss(z: np.ndarray, y, e, beta: np.ndarray, penalty_weight: float,
                num_domains: int | None = None) -> LossOutput:
    """Lagrangian invariance baseline: mean over domains of
    ``risk_e + penalty_weight * ||grad_beta risk_e||^2`` for one shared beta.

    The penalty gradients use the closed-form second derivatives of the
    sigmoid-linear head (Hessian-vector products, never a dense Hessian).
    """
    if penalty_weight < 0:
        raise ValueError("penalty_weight must be >= 0")
    z = as_matrix(z, "embeddings")
    y = as_labels(y)
    e = np.asarray(e, dtype=np.int64)
    beta = as_vector(beta, "hyperplane")
    m = z.shape[1]
    w, _ = _split_bias(beta, m)
    has_bias = beta.shape[0] == m + 1
    if num_domains is None:
        num_domains = int(e.max()) + 1 if e.size else 0
    slices = _domain_slices(e, num_domains)

    value = 0.0
    d_beta = np.zeros_like(beta)
    d_z = np.zeros_like(z)
    n_dom = len(slices)
    for idx in slices:
        ze, ye = z[idx], y[idx]
        n = idx.size
        base = env_risk(ze, ye, beta)
        value += base.value / n_dom
        d_beta += base.d_beta / n_dom
        d_z[idx] += base.d_z / n_dom
        if penalty_weight == 0.0:
            continue
        s = linear_scores(ze, beta)
        p = _sigmoid(s)
        sig_p = p * (1.0 - p)
        a = np.hstack([ze, np.ones((n, 1))]) if has_bias else ze
        g = a.T @ ((p - ye) / n)  # grad_beta risk_e
        value += penalty_weight * float(g @ g) / n_dom
        # grad_beta ||g||^2 = 2 H g with H = (1/n) sum sig' a a^T
        hg = a.T @ (sig_p * (a @ g)) / n
        d_beta += penalty_weight * 2.0 * hg / n_dom
        # grad_{z_i} ||g||^2 = (2/n) [(p_i - y_i) g_w + sig'_i (g . a_i) w]
        g_w = g[:m]
        d_pen = (2.0 / n) * (
            np.outer(p - ye, g_w) + np.outer(sig_p * (a @ g), w)
        )
        d_z[idx] += penalty_weight * d_pen / n_dom
    return LossOutput(value=value, d_z=d_z, d_beta=d_beta)


def sa_fas_loss(z: np.ndarray, y, e, betas: np.ndarray, supcon_weight: float,
                temperature: float) -> LossOutput:
    """Overall objective: mean per-domain risk under that domain's hyperplane,
    plus ``supcon_weight`` times the separability loss on the pooled batch.

    The separability term is hyperplane-free, so each d_betas row is exactly
    the domain's own risk gradient divided by the domain count. When
    ``supcon_weight`` is 0 the contrastive term is skipped entirely; the
    result is bit-identical to the pure alignment objective.
    """
    z = as_matrix(z, "embeddings")
    y = as_labels(y)
    e = np.asarray(e, dtype=np.int64)
    betas = as_matrix(betas, "hyperplanes")
    n_dom = betas.shape[0]
    slices = _domain_slices(e, n_dom)

    value = 0.0
    d_z = np.zeros_like(z)
    d_betas = np.zeros_like(betas)
    for dom, idx in enumerate(slices):
        out = env_risk(z[idx], y[idx], betas[dom])
        value += out.value / n_dom
        d_z[idx] += out.d_z / n_dom
        d_betas[dom] = out.d_beta / n_dom
    if supcon_weight != 0.0:
        sep = supcon_loss(z, y, e, temperature)
        value += supcon_weight * sep.value
        d_z += supcon_weight * sep.d_z
    require_finite(np.asarray(value), "loss value")
    return LossOutput(value=value, d_z=d_z, d_betas=d_betas)
