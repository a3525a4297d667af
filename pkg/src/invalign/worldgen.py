"""Synthetic multi-domain live/spoof worlds.

Each world is a mixture of Gaussian class-conditional clusters: every domain
shares one live-to-spoof transition direction, sits at its own offset, and may
carry a spurious coordinate whose correlation with the label reverses in a
designated domain. Gaussian clusters keep the Bayes-optimal score analytic,
which gives the evaluation suite a closed-form oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numkit import Rng, as_matrix


@dataclass(frozen=True)
class WorldSpec:
    """Recipe for one synthetic world.

    ``transition_dir`` must be a unit vector; class means within a domain
    differ by exactly ``class_gap * transition_dir``. If ``spurious_dim`` is
    set, that coordinate is overwritten with ``spurious_strength * s_e *
    (2y - 1)`` plus noise, where ``s_e`` is -1 for ``spurious_flip_domain``
    and +1 for every other domain.
    """

    input_dim: int
    num_domains: int
    n_per_domain_per_class: int
    transition_dir: np.ndarray
    domain_offsets: np.ndarray
    class_gap: float
    noise_sigma: float
    spurious_dim: int | None = None
    spurious_strength: float = 0.0
    spurious_flip_domain: int | None = None
    seed: int = 0

    def __post_init__(self):
        t = np.ascontiguousarray(self.transition_dir, dtype=np.float64)
        offs = as_matrix(self.domain_offsets, "domain_offsets")
        object.__setattr__(self, "transition_dir", t)
        object.__setattr__(self, "domain_offsets", offs)
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.num_domains < 2:
            raise ValueError("num_domains must be >= 2")
        if self.n_per_domain_per_class < 1:
            raise ValueError("n_per_domain_per_class must be >= 1")
        if t.shape != (self.input_dim,):
            raise ValueError(
                f"transition_dir has shape {t.shape}, expected ({self.input_dim},)"
            )
        if abs(np.linalg.norm(t) - 1.0) > 1e-9:
            raise ValueError("transition_dir must be a unit vector")
        if offs.shape != (self.num_domains, self.input_dim):
            raise ValueError(
                f"domain_offsets has shape {offs.shape}, expected "
                f"({self.num_domains}, {self.input_dim})"
            )
        if not self.class_gap > 0:
            raise ValueError("class_gap must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.spurious_dim is not None and not (0 <= self.spurious_dim < self.input_dim):
            raise ValueError("spurious_dim out of range")
        if self.spurious_flip_domain is not None and not (
            0 <= self.spurious_flip_domain < self.num_domains
        ):
            raise ValueError("spurious_flip_domain out of range")

    def class_mean(self, domain: int, label: int) -> np.ndarray:
        """Analytic mean of (domain, label), including the spurious overwrite."""
        mu = self.domain_offsets[domain] + label * self.class_gap * self.transition_dir
        if self.spurious_dim is not None:
            s_e = -1.0 if domain == self.spurious_flip_domain else 1.0
            mu = mu.copy()
            mu[self.spurious_dim] = self.spurious_strength * s_e * (2 * label - 1)
        return mu

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "num_domains": self.num_domains,
            "n_per_domain_per_class": self.n_per_domain_per_class,
            "transition_dir": self.transition_dir.tolist(),
            "domain_offsets": self.domain_offsets.tolist(),
            "class_gap": self.class_gap,
            "noise_sigma": self.noise_sigma,
            "spurious_dim": self.spurious_dim,
            "spurious_strength": self.spurious_strength,
            "spurious_flip_domain": self.spurious_flip_domain,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldSpec":
        d = dict(d)
        dim = int(d["input_dim"])
        e = int(d["num_domains"])
        seed = int(d.get("seed", 0))
        t = d.get("transition_dir")
        if t is None:
            axis = int(d.pop("transition_axis", 0))
            t = np.zeros(dim)
            t[axis] = 1.0
        else:
            t = np.asarray(t, dtype=np.float64)
            n = np.linalg.norm(t)
            if n <= 0:
                raise ValueError("transition_dir must be nonzero")
            t = t / n
        offs = d.get("domain_offsets")
        if offs is None:
            scale = float(d.pop("offset_scale", 1.0))
            offs = scale * Rng(seed).stream("offsets").standard_normal((e, dim))
        known = {
            "input_dim", "num_domains", "n_per_domain_per_class", "class_gap",
            "noise_sigma", "spurious_dim", "spurious_strength",
            "spurious_flip_domain", "seed",
        }
        kwargs = {k: d[k] for k in known if k in d and d[k] is not None}
        kwargs["input_dim"] = dim
        kwargs["num_domains"] = e
        kwargs["seed"] = seed
        return cls(transition_dir=t, domain_offsets=np.asarray(offs, float), **kwargs)


@dataclass
class DomainDataset:
    """Feature vectors with live/spoof labels and domain labels.

    Every domain index must be < num_domains and every domain must contain
    both classes; worlds violating that are rejected at construction.
    """

    x: np.ndarray
    y: np.ndarray
    e: np.ndarray
    num_domains: int

    def __post_init__(self):
        self.x = as_matrix(self.x, "features")
        self.y = np.asarray(self.y, dtype=np.int64)
        self.e = np.asarray(self.e, dtype=np.int64)
        n = self.x.shape[0]
        if self.y.shape != (n,) or self.e.shape != (n,):
            raise ValueError("features, labels, and domains must have equal length")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("labels must be 0 (live) or 1 (spoof)")
        if n and (self.e.min() < 0 or self.e.max() >= self.num_domains):
            raise ValueError("domain index out of range")
        for dom in range(self.num_domains):
            ys = self.y[self.e == dom]
            if ys.size == 0:
                raise ValueError(f"domain {dom} has no samples")
            if not (np.any(ys == 0) and np.any(ys == 1)):
                raise ValueError(f"domain {dom} must contain both live and spoof data")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def input_dim(self) -> int:
        return self.x.shape[1]

    def domain_indices(self, dom: int) -> np.ndarray:
        return np.nonzero(self.e == dom)[0]


@dataclass
class LeaveOneOutSplit:
    """Training domains with one domain held out for testing.

    Train-side domain labels are re-densified to 0..E-2; ``train_domain_map``
    records the original index of each densified train domain.
    """

    train: DomainDataset
    test: DomainDataset
    held_out: int
    train_domain_map: list[int] = field(default_factory=list)


def generate_world(spec: WorldSpec) -> DomainDataset:
    """Sample a dataset from the world recipe; deterministic in spec.seed."""
    rng = Rng(spec.seed)
    xs, ys, es = [], [], []
    for dom in range(spec.num_domains):
        for label in (0, 1):
            n = spec.n_per_domain_per_class
            noise = rng.stream("world", dom, label).standard_normal((n, spec.input_dim))
            x = spec.class_mean(dom, label) + spec.noise_sigma * noise
            xs.append(x)
            ys.append(np.full(n, label, dtype=np.int64))
            es.append(np.full(n, dom, dtype=np.int64))
    return DomainDataset(
        x=np.vstack(xs), y=np.concatenate(ys), e=np.concatenate(es),
        num_domains=spec.num_domains,
    )


def bayes_auc_invariant(spec: WorldSpec) -> float:
    """AUC of the oracle scorer x -> transition_dir . x, ignoring any spurious
    coordinate: Phi(class_gap / (sigma * sqrt(2))). Returns 1.0 at zero noise.
    """
    if spec.noise_sigma == 0:
        return 1.0
    z = spec.class_gap / (spec.noise_sigma * math.sqrt(2.0))
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def leave_one_out(data: DomainDataset, held_out: int) -> LeaveOneOutSplit:
    """Partition by domain label; train indices re-densified to 0..E-2."""
    if data.num_domains < 2:
        raise ValueError("leave-one-out requires at least 2 domains")
    if not (0 <= held_out < data.num_domains):
        raise ValueError(
            f"held-out domain {held_out} out of range 0..{data.num_domains - 1}"
        )
    keep = [d for d in range(data.num_domains) if d != held_out]
    remap = {orig: new for new, orig in enumerate(keep)}
    tr = np.nonzero(data.e != held_out)[0]
    te = np.nonzero(data.e == held_out)[0]
    train = DomainDataset(
        x=data.x[tr], y=data.y[tr],
        e=np.array([remap[d] for d in data.e[tr]], dtype=np.int64),
        num_domains=len(keep),
    )
    test = DomainDataset(
        x=data.x[te], y=data.y[te],
        e=np.zeros(te.size, dtype=np.int64), num_domains=1,
    )
    return LeaveOneOutSplit(train=train, test=test, held_out=held_out,
                            train_domain_map=keep)


def write_csv(data: DomainDataset, path) -> None:
    """Write ``domain,label,x0,...,x{d-1}`` rows; 17 significant digits so the
    read side reproduces every float bit-exactly. UTF-8, LF line endings."""
    d = data.input_dim
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain", "label"] + [f"x{j}" for j in range(d)])
        for i in range(len(data)):
            w.writerow(
                [int(data.e[i]), int(data.y[i])]
                + [format(v, ".17g") for v in data.x[i]]
            )


def read_csv(path) -> DomainDataset:
    """Read a dataset written by :func:`write_csv`.

    Malformed rows raise ValueError with the 1-based line number; domain
    indices must be dense from 0.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(header) < 3 or header[:2] != ["domain", "label"]:
            raise ValueError(f"{path}: line 1: bad header {header!r}")
        d = len(header) - 2
        if header[2:] != [f"x{j}" for j in range(d)]:
            raise ValueError(f"{path}: line 1: feature columns must be x0..x{d-1}")
        xs, ys, es = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise ValueError(
                    f"{path}: line {lineno}: expected {d + 2} columns, got {len(row)}"
                )
            try:
                dom = int(row[0])
                lab = int(row[1])
                feats = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            if lab not in (0, 1):
                raise ValueError(f"{path}: line {lineno}: label must be 0 or 1")
            if dom < 0:
                raise ValueError(f"{path}: line {lineno}: negative domain index")
            xs.append(feats)
            ys.append(lab)
            es.append(dom)
    if not xs:
        raise ValueError(f"{path}: no data rows")
    e = np.asarray(es, dtype=np.int64)
    present = np.unique(e)
    num_domains = int(e.max()) + 1
    if present.size != num_domains:
        missing = sorted(set(range(num_domains)) - set(present.tolist()))
        raise ValueError(
            f"{path}: domain indices not dense from 0 (missing {missing})"
        )
    return DomainDataset(
        x=np.asarray(xs, dtype=np.float64), y=np.asarray(ys, dtype=np.int64),
        e=e, num_domains=num_domains,
    )


def with_seed(spec: WorldSpec, seed: int) -> WorldSpec:
    """Same world recipe, different sampling seed."""
    return replace(spec, seed=seed)
