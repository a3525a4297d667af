"""Per-domain hyperplane machinery: farthest-neighbour selection, the
projection-as-interpolation step, adjacency-set membership checks, the full
per-step update rule, and the cosine convergence diagnostic.

The adjacency set of a hyperplane is the set of vectors whose worst-case
distance to the other domains' hyperplanes is at most ``alpha`` times the
hyperplane's own worst-case distance. During training the only available
representative of each domain's optimal set is its current hyperplane, so
membership checks use that singleton approximation throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numkit import Rng, as_matrix, as_vector, require_finite


@dataclass
class AdjacencyReport:
    """Result of an adjacency-set membership test for one candidate vector."""

    farthest: int
    farthest_distance: float
    member: bool
    lhs: float  # worst-case distance of the candidate to other hyperplanes
    rhs: float  # alpha times the reference hyperplane's worst-case distance


@dataclass
class HyperplaneSet:
    """One linear classifier per training domain plus alignment state.

    ``alpha`` is the interpolation coefficient in [0, 1]; ``align_start_epoch``
    is the epoch after which interpolation activates; ``epoch`` tracks the
    current epoch counter.
    """

    betas: np.ndarray
    alpha: float
    align_start_epoch: int = 0
    epoch: int = 0

    def __post_init__(self):
        self.betas = as_matrix(self.betas, "hyperplanes")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")

    @property
    def num_domains(self) -> int:
        return self.betas.shape[0]

    @property
    def dim(self) -> int:
        return self.betas.shape[1]

    def state(self) -> dict:
        return {
            "betas": self.betas.tolist(),
            "alpha": self.alpha,
            "align_start_epoch": self.align_start_epoch,
            "epoch": self.epoch,
        }

    @classmethod
    def from_state(cls, state: dict) -> "HyperplaneSet":
        return cls(
            betas=np.asarray(state["betas"], dtype=np.float64),
            alpha=float(state["alpha"]),
            align_start_epoch=int(state["align_start_epoch"]),
            epoch=int(state["epoch"]),
        )

    @classmethod
    def init_random(cls, num_domains: int, dim: int, rng: Rng, alpha: float,
                    align_start_epoch: int, std: float = 0.01) -> "HyperplaneSet":
        """Small independent Gaussian draw per domain (std 0.01 by default)."""
        betas = np.vstack(
            [std * rng.stream("beta", dom).standard_normal(dim)
             for dom in range(num_domains)]
        )
        return cls(betas=betas, alpha=alpha, align_start_epoch=align_start_epoch)


def farthest(hset: HyperplaneSet, domain: int, candidate: np.ndarray):
    """Index and distance of the hyperplane farthest from the candidate,
    excluding the candidate's own domain. Ties break to the smallest index."""
    if hset.num_domains < 2:
        raise ValueError("farthest selection needs at least 2 domains")
    if not (0 <= domain < hset.num_domains):
        raise ValueError(f"domain {domain} out of range 0..{hset.num_domains - 1}")
    candidate = as_vector(candidate, "candidate")
    dists = np.linalg.norm(hset.betas - candidate, axis=1)
    dists[domain] = -np.inf
    far = int(np.argmax(dists))  # argmax returns the first max: smallest index
    return far, float(dists[far])


def project_interpolate(candidate: np.ndarray, beta_far: np.ndarray,
                        alpha_prime: float) -> np.ndarray:
    """Linear interpolation ``alpha' * candidate + (1 - alpha') * beta_far``,
    the Euclidean projection onto the adjacency set when the farthest-sphere
    constraint is the binding one."""
    if not (0.0 <= alpha_prime <= 1.0):
        raise ValueError(f"alpha' = {alpha_prime} outside [0, 1]")
    candidate = as_vector(candidate, "candidate")
    beta_far = as_vector(beta_far, "farthest hyperplane")
    return alpha_prime * candidate + (1.0 - alpha_prime) * beta_far


def adjacency_membership(hset: HyperplaneSet, domain: int,
                         v: np.ndarray) -> AdjacencyReport:
    """Test ``max_{e' != e} ||v - beta_e'|| <= alpha * max_{e' != e}
    ||beta_e - beta_e'||`` under the singleton approximation."""
    far, dist = farthest(hset, domain, hset.betas[domain])
    v = as_vector(v, "candidate")
    others = [k for k in range(hset.num_domains) if k != domain]
    lhs = float(np.max(np.linalg.norm(hset.betas[others] - v, axis=1)))
    rhs = hset.alpha * dist
    return AdjacencyReport(farthest=far, farthest_distance=dist,
                           member=lhs <= rhs, lhs=lhs, rhs=rhs)


def pg_irm_update(hset: HyperplaneSet, grads: np.ndarray, lr: float,
                  epoch: int) -> HyperplaneSet:
    """One hyperplane update step.

    Two phases against a consistent snapshot: first every domain takes its
    SGD step, then each post-step candidate is interpolated toward the
    pre-update hyperplane farthest from it. The interpolation gate is
    ``alpha' = 1 - 1[epoch > align_start_epoch] * (1 - alpha)``; before the
    alignment start epoch the update is plain per-domain SGD.
    """
    if lr <= 0:
        raise ValueError("learning rate must be > 0")
    grads = as_matrix(grads, "hyperplane gradients")
    if grads.shape != hset.betas.shape:
        raise ValueError(
            f"gradient shape {grads.shape} != hyperplane shape {hset.betas.shape}"
        )
    require_finite(grads, "hyperplane gradients")
    candidates = hset.betas - lr * grads
    alpha_prime = 1.0 if epoch <= hset.align_start_epoch else hset.alpha
    if alpha_prime == 1.0 or hset.num_domains < 2:
        new_betas = candidates
    else:
        new_betas = np.empty_like(candidates)
        for dom in range(hset.num_domains):
            far, _ = farthest(hset, dom, candidates[dom])
            new_betas[dom] = project_interpolate(
                candidates[dom], hset.betas[far], alpha_prime
            )
    return HyperplaneSet(betas=new_betas, alpha=hset.alpha,
                         align_start_epoch=hset.align_start_epoch, epoch=epoch)


def s_cos(hset: HyperplaneSet) -> float:
    """Mean pairwise cosine over unordered distinct hyperplane pairs."""
    b = hset.betas
    norms = np.linalg.norm(b, axis=1)
    if np.any(norms == 0):
        raise ValueError("cosine diagnostic undefined for a zero hyperplane")
    if hset.num_domains < 2:
        raise ValueError("cosine diagnostic needs at least 2 hyperplanes")
    unit = b / norms[:, None]
    cos = unit @ unit.T
    iu = np.triu_indices(hset.num_domains, k=1)
    return float(np.mean(cos[iu]))


def mean_hyperplane_score(hset: HyperplaneSet, z: np.ndarray) -> np.ndarray:
    """Inference scores against the mean of the per-domain hyperplanes."""
    from .losses import linear_scores

    z = as_matrix(z, "embeddings")
    return linear_scores(z, hset.betas.mean(axis=0))
