"""Output kernels per feasible state pair and the Bhattacharyya matrix.

Distances are in nats per channel use: d(i, j) = -ln sum_y sqrt(p_i p_j)
for discrete rows, (mu_i - mu_j)^2 / (8 sigma^2) for a shared-variance
Gaussian family. Disjoint-support rows get +inf with a flag; the
optimization layer refuses to run over them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .fsm import FeasiblePairSet

PMF_TOL = 1e-12  # rows are renormalized below this deviation, rejected above

DISCRETE = "discrete"
GAUSSIAN = "gaussian"


@dataclass(frozen=True, eq=False)
class ChannelKernel:
    """One output law per feasible pair: either a pmf row over a finite
    output alphabet or a Gaussian mean with a shared variance."""

    kind: str
    outputs: tuple | None = None
    pmf: np.ndarray | None = None
    means: np.ndarray | None = None
    variance: float | None = None

    @property
    def n_rows(self) -> int:
        return len(self.pmf) if self.kind == DISCRETE else len(self.means)


def discrete_kernel(outputs, pmf) -> ChannelKernel:
    pmf = np.array(pmf, dtype=float)
    if pmf.ndim != 2 or pmf.shape[1] != len(tuple(outputs)):
        raise ValidationError("pmf must be (n_pairs, n_outputs)")
    if (pmf < 0).any():
        raise ValidationError("pmf entries must be nonnegative")
    sums = pmf.sum(axis=1)
    off = np.abs(sums - 1.0)
    if (off > PMF_TOL).any():
        i = int(np.argmax(off))
        raise ValidationError(f"pmf row {i} sums to {sums[i]!r}, not 1")
    pmf /= sums[:, None]
    pmf.setflags(write=False)
    return ChannelKernel(kind=DISCRETE, outputs=tuple(outputs), pmf=pmf)


def gaussian_kernel(means, variance) -> ChannelKernel:
    means = np.array(means, dtype=float)
    if means.ndim != 1:
        raise ValidationError("means must be a vector indexed by pair")
    variance = float(variance)
    if not variance > 0:
        raise ValidationError("variance must be strictly positive")
    means.setflags(write=False)
    return ChannelKernel(kind=GAUSSIAN, means=means, variance=variance)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric nonnegative L x L matrix, zero diagonal, +inf allowed."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValidationError("distance matrix must be square")
        object.__setattr__(self, "d", d)
        d.setflags(write=False)

    def __len__(self) -> int:
        return len(self.d)

    @property
    def has_infinite(self) -> bool:
        return bool(np.isinf(self.d).any())


def bhattacharyya(kernel: ChannelKernel, pairs: FeasiblePairSet) -> DistanceMatrix:
    """The pairwise distance matrix over feasible pairs.

    Each unordered pair is computed once, so symmetry is exact. A zero
    Bhattacharyya coefficient (disjoint supports) is recorded as +inf.
    """
    L = len(pairs)
    if kernel.n_rows != L:
        raise ValidationError(f"kernel has {kernel.n_rows} rows, expected {L}")
    if kernel.kind == GAUSSIAN:
        mu = kernel.means
        diff = mu[:, None] - mu[None, :]
        d = diff * diff / (8.0 * kernel.variance)
        d = np.triu(d, 1)
        d = d + d.T
        return DistanceMatrix(d)
    root = np.sqrt(kernel.pmf)
    bc = root @ root.T
    d = np.zeros((L, L))
    iu = np.triu_indices(L, 1)
    with np.errstate(divide="ignore"):
        vals = -np.log(bc[iu])
    d[iu] = np.maximum(vals, 0.0)  # clip tiny negative roundoff for identical rows
    d = d + d.T
    return DistanceMatrix(d)


def likelihood(kernel: ChannelKernel, pair: int, y) -> float:
    """ln p(y | pair): log-pmf for discrete outputs, log-density for Gaussian."""
    if kernel.kind == GAUSSIAN:
        mu = kernel.means[pair]
        v = kernel.variance
        return float(-((y - mu) ** 2) / (2.0 * v) - 0.5 * np.log(2.0 * np.pi * v))
    try:
        yi = kernel.outputs.index(y)
    except ValueError:
        raise ValidationError(f"output {y!r} not in the output alphabet") from None
    p = kernel.pmf[pair, yi]
    return float(np.log(p)) if p > 0 else float("-inf")


def log_pmf(kernel: ChannelKernel) -> np.ndarray:
    """Dense (L, |Y|) table of ln p(y|pair); -inf where p = 0."""
    with np.errstate(divide="ignore"):
        return np.log(kernel.pmf)
