"""Evaluation metrics and diagnostic scores.

Spoof (label 1) is the positive class everywhere: a rising score means
"more spoof", the false positive rate is the live-classified-spoof rate, and
the false rejection rate is the spoof-classified-live rate.

All threshold metrics scan the n+1 operating points of the rule
"predict spoof iff score >= c" with c ranging over +inf and every distinct
score, so behaviour on ties is fully determined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import as_matrix, as_labels


def _check_scored(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = as_labels(labels, "labels")
    if s.ndim != 1 or s.shape != y.shape:
        raise ValueError("scores and labels must be equal-length vectors")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores contain non-finite values")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("threshold metrics need both classes present")
    return s, y, n_pos, n_neg


@dataclass
class RocCurve:
    """Step-function ROC with endpoints (0,0) and (1,1).

    ``thresholds[k]`` is the cut c of the rule "spoof iff score >= c" that
    attains ``(fpr[k], tpr[k])``; the first entry uses c = +inf.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray


def _operating_points(s, y, n_pos, n_neg):
    """FPR/TPR at every cut "spoof iff score >= c", c descending from +inf."""
    order = np.argsort(-s, kind="stable")
    ys = y[order]
    ss = s[order]
    tp = np.cumsum(ys == 1)
    fp = np.cumsum(ys == 0)
    # keep only the last index of each tied score group
    distinct = np.nonzero(np.diff(ss) != 0)[0]
    last = np.concatenate([distinct, [ss.size - 1]])
    fpr = np.concatenate([[0.0], fp[last] / n_neg])
    tpr = np.concatenate([[0.0], tp[last] / n_pos])
    cuts = np.concatenate([[np.inf], ss[last]])
    return fpr, tpr, cuts


def roc_curve(scores, labels) -> RocCurve:
    s, y, n_pos, n_neg = _check_scored(scores, labels)
    fpr, tpr, cuts = _operating_points(s, y, n_pos, n_neg)
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=cuts)


def auc(scores, labels) -> float:
    """Area under the ROC as the Mann-Whitney statistic: the fraction of
    (spoof, live) pairs where the spoof outscores the live, ties counting
    one half. Computed by sorting, exactly equal to the pairwise count."""
    s, y, n_pos, n_neg = _check_scored(scores, labels)
    order = np.argsort(s, kind="stable")
    ss = s[order]
    ys = y[order]
    total = 0.0
    neg_below = 0
    i = 0
    n = ss.size
    while i < n:
        j = i
        while j < n and ss[j] == ss[i]:
            j += 1
        pos_here = int(np.sum(ys[i:j] == 1))
        neg_here = (j - i) - pos_here
        total += pos_here * neg_below + 0.5 * pos_here * neg_here
        neg_below += neg_here
        i = j
    return total / (n_pos * n_neg)


def hter(scores, labels) -> float:
    """Half total error rate (FAR + FRR) / 2 at the operating point where
    |FAR - FRR| is smallest over the evaluated score set (the equal-error
    convention). Among minimizers the smaller (FAR + FRR) / 2 wins, then the
    earlier point in descending-threshold scan order."""
    s, y, n_pos, n_neg = _check_scored(scores, labels)
    fpr, tpr, _ = _operating_points(s, y, n_pos, n_neg)
    far = fpr
    frr = 1.0 - tpr
    gap = np.abs(far - frr)
    best = np.nonzero(gap == gap.min())[0]
    mean_err = (far[best] + frr[best]) / 2.0
    return float(mean_err.min())


def tpr_at_fpr(scores, labels, fpr_cap: float = 0.05) -> float:
    """Largest true positive rate among operating points with FPR <= cap;
    step function, no interpolation."""
    if not (0.0 < fpr_cap < 1.0):
        raise ValueError("fpr_cap must lie in (0, 1)")
    s, y, n_pos, n_neg = _check_scored(scores, labels)
    fpr, tpr, _ = _operating_points(s, y, n_pos, n_neg)
    ok = fpr <= fpr_cap
    return float(tpr[ok].max())


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine undefined for a zero vector")
    return float(a @ b / (na * nb))


def s_sep(z, labels) -> float:
    """One minus the cosine between the spoof and live embedding means."""
    z = as_matrix(z, "embeddings")
    y = as_labels(labels)
    if not (np.any(y == 0) and np.any(y == 1)):
        raise ValueError("separability score needs both classes present")
    return 1.0 - _cosine(z[y == 1].mean(axis=0), z[y == 0].mean(axis=0))


def s_align(betas, z, labels) -> float:
    """Mean over domains of the cosine between each hyperplane and the
    spoof-minus-live embedding mean difference (bias coordinates, when
    present, are excluded from the direction)."""
    betas = as_matrix(betas, "hyperplanes")
    z = as_matrix(z, "embeddings")
    y = as_labels(labels)
    if not (np.any(y == 0) and np.any(y == 1)):
        raise ValueError("alignment score needs both classes present")
    diff = z[y == 1].mean(axis=0) - z[y == 0].mean(axis=0)
    m = z.shape[1]
    if betas.shape[1] not in (m, m + 1):
        raise ValueError("hyperplane dimension does not match embeddings")
    return float(np.mean([_cosine(b[:m], diff) for b in betas]))


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j < v.size and v[order[j]] == v[order[i]]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0  # average 1-based rank
        i = j
    return ranks


def spearman(xs, ys) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("inputs must be equal-length vectors")
    if x.size < 3:
        raise ValueError("need at least 3 pairs")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt(np.sum(rx * rx) * np.sum(ry * ry))
    if denom == 0:
        raise ValueError("rank correlation undefined for constant input")
    return float(np.sum(rx * ry) / denom)


def metric_report(scores, labels, betas=None, z=None, cos_diag=None) -> dict:
    """The JSON metric record {auc, hter, tpr_at_fpr05, s_sep, s_align, s_cos}."""
    rec = {
        "auc": auc(scores, labels),
        "hter": hter(scores, labels),
        "tpr_at_fpr05": tpr_at_fpr(scores, labels, 0.05),
    }
    rec["s_sep"] = s_sep(z, labels) if z is not None else None
    rec["s_align"] = (
        s_align(betas, z, labels) if (betas is not None and z is not None) else None
    )
    rec["s_cos"] = cos_diag
    return rec
