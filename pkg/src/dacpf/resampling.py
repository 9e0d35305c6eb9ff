"""Stratified resampling and the four child-merge strategies.

A merge combines the particle clouds of two sibling tree nodes into one cloud
for their parent. Candidate pairs always start from the identity matching
(particle n of the left child with particle n of the right child); the
strategies differ in how many extra pairs they look at and in whether the
mixture correction enters the selection probabilities:

- ``merge_full``: every one of the N^2 pairs, behind a memory cap.
- ``merge_lightweight``: identity plus theta-1 random permutation blocks.
- ``merge_adaptive``: adds permutation blocks until the effective sample size
  of the candidate weights reaches a target or theta hits ceil(sqrt(N)).
- ``merge_linear``: selects by pair weights alone and carries the mixture
  weights of the survivors as output importance weights.

Every selection uses stratified resampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    AllWeightsDegenerate,
    CapExceeded,
    InvalidParams,
    InvalidProbabilities,
    NodeCloud,
    effective_sample_size,
    normalize_log_weights,
)

__all__ = [
    "MixtureBatch",
    "MergeStrategy",
    "FunctionPairWeights",
    "stratified_resample",
    "build_identity_block",
    "add_permutation_block",
    "merge_full",
    "merge_lightweight",
    "merge_adaptive",
    "merge_linear",
    "theta_cap",
]

DEFAULT_FULL_CAP = 2000


def theta_cap(n: int) -> int:
    """ceil(sqrt(n)) computed exactly in integers."""
    r = math.isqrt(n)
    return r if r * r == n else r + 1


def stratified_resample(probabilities, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` indices by stratified inversion of the CDF.

    One uniform is drawn in each stratum ((m-1)/M, m/M), so offspring counts
    are unbiased with lower variance than multinomial sampling.

    Parameters
    ----------
    probabilities : array_like
        Nonnegative, summing to 1 within 1e-9.
    count : int
        Number of indices to draw.
    rng : numpy.random.Generator

    Returns
    -------
    ndarray of int, shape (count,), nondecreasing.
    """
    p = np.asarray(probabilities, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidProbabilities("probabilities must be a nonempty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidProbabilities("negative or non-finite probabilities")
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise InvalidProbabilities(f"probabilities sum to {total!r}, not 1")
    u = (np.arange(count) + rng.uniform(size=count)) / count
    cdf = np.cumsum(p)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, p.size - 1)


def resample_pairs(idx_left, probabilities, count: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Stratified inversion over pair candidates, visited in left-particle
    order with one offset shared across strata (the systematic variant).

    Each u_m is still uniform on ((m-1)/M, m/M), so offspring counts stay
    unbiased; the two choices here only cut variance. Sorting by left index
    makes every stratum span few distinct left particles, which pins the
    left marginal of the output to that of the candidate cloud when weights
    are near-uniform. The shared offset then picks the same within-group
    position everywhere, and because the candidate blocks are permutations
    of the right cloud this reproduces a whole block at uniform weights:
    both children's marginals survive the subsampling exactly, which is the
    property the exhaustive N^2 merge has and the theta*N merges are meant
    to approximate.

    Only safe for block-structured candidates. The exhaustive merge repeats
    the right indices in the same order inside every left group, where a
    shared offset would collapse the right marginal to a handful of atoms;
    it uses plain stratified_resample instead.

    Returns positions into the candidate arrays, like stratified_resample.
    """
    order = np.argsort(idx_left, kind="stable")
    p = np.asarray(probabilities, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidProbabilities("probabilities must be a nonempty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidProbabilities("negative or non-finite probabilities")
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise InvalidProbabilities(f"probabilities sum to {total!r}, not 1")
    u = (np.arange(count) + rng.uniform()) / count
    cdf = np.cumsum(p[order])
    sel = np.searchsorted(cdf, u, side="right")
    return order[np.minimum(sel, p.size - 1)]


class FunctionPairWeights:
    """Adapter turning a vectorized callable (il, ir) -> log m into the
    pair-weight interface the merge strategies expect."""

    def __init__(self, fn):
        self._fn = fn

    def log_mixture(self, idx_left: np.ndarray, idx_right: np.ndarray) -> np.ndarray:
        return np.asarray(self._fn(idx_left, idx_right), dtype=float)


@dataclass(frozen=True)
class MixtureBatch:
    """The theta*N candidate pairs of one merge with their weight arrays.

    ``log_updated_weights`` is elementwise ``log_pair_weights +
    log_mixture_weights``; the first N pairs are always the identity
    matching. Permutations are stored as index arrays, the concatenated pair
    vectors are never materialized before resampling.
    """

    left: NodeCloud
    right: NodeCloud
    idx_left: np.ndarray
    idx_right: np.ndarray
    log_pair_weights: np.ndarray
    log_mixture_weights: np.ndarray
    log_updated_weights: np.ndarray
    theta: int

    @property
    def pairs(self) -> list:
        return list(zip(self.idx_left.tolist(), self.idx_right.tolist()))

    @property
    def n(self) -> int:
        return self.left.n


@dataclass(frozen=True)
class MergeStrategy:
    """Configuration of one merge rule.

    kind is one of {"full", "lightweight", "adaptive", "linear"}. theta only
    applies to lightweight (defaulting to ceil(sqrt(N)) when None);
    ess_target only to adaptive (defaulting to N when None); full_cap bounds
    the pair count of the full strategy.
    """

    kind: str
    theta: int | None = None
    ess_target: float | None = None
    full_cap: int = DEFAULT_FULL_CAP

    def __post_init__(self):
        if self.kind not in ("full", "lightweight", "adaptive", "linear"):
            raise InvalidParams(f"unknown merge kind {self.kind!r}")
        if self.theta is not None and self.theta < 1:
            raise InvalidParams("theta must be >= 1")
        if self.ess_target is not None and not self.ess_target > 1.0:
            raise InvalidParams("ess_target must exceed 1")

    @classmethod
    def full(cls, cap: int = DEFAULT_FULL_CAP) -> "MergeStrategy":
        return cls("full", full_cap=cap)

    @classmethod
    def lightweight(cls, theta: int | None = None) -> "MergeStrategy":
        return cls("lightweight", theta=theta)

    @classmethod
    def adaptive(cls, ess_target: float | None = None) -> "MergeStrategy":
        return cls("adaptive", ess_target=ess_target)

    @classmethod
    def linear(cls) -> "MergeStrategy":
        return cls("linear")


def _pair_logw(left: NodeCloud, right: NodeCloud, il, ir) -> np.ndarray:
    return left.log_weights[il] + right.log_weights[ir]


def build_identity_block(left: NodeCloud, right: NodeCloud, weight_fns) -> MixtureBatch:
    """theta=1 batch holding the N identity pairs (n, n)."""
    if left.n != right.n:
        raise InvalidParams("children must hold equally many particles")
    idx = np.arange(left.n)
    lp = _pair_logw(left, right, idx, idx)
    lm = weight_fns.log_mixture(idx, idx)
    return MixtureBatch(
        left=left, right=right, idx_left=idx, idx_right=idx.copy(),
        log_pair_weights=lp, log_mixture_weights=lm,
        log_updated_weights=lp + lm, theta=1,
    )


def add_permutation_block(batch: MixtureBatch, rng: np.random.Generator, weight_fns) -> MixtureBatch:
    """Append N pairs (n, pi(n)) for a fresh uniform permutation pi.

    Existing entries are untouched; duplicates across blocks are allowed and
    kept (the candidate weights sum over all theta*N entries as drawn).
    """
    n = batch.n
    pi = rng.permutation(n)
    il = np.arange(n)
    lp = _pair_logw(batch.left, batch.right, il, pi)
    lm = weight_fns.log_mixture(il, pi)
    return replace(
        batch,
        idx_left=np.concatenate([batch.idx_left, il]),
        idx_right=np.concatenate([batch.idx_right, pi]),
        log_pair_weights=np.concatenate([batch.log_pair_weights, lp]),
        log_mixture_weights=np.concatenate([batch.log_mixture_weights, lm]),
        log_updated_weights=np.concatenate([batch.log_updated_weights, lp + lm]),
        theta=batch.theta + 1,
    )


def _resample_batch(batch: MixtureBatch, count: int, rng: np.random.Generator):
    p, _ = normalize_log_weights(batch.log_updated_weights)
    sel = resample_pairs(batch.idx_left, p, count, rng)
    return batch.idx_left[sel], batch.idx_right[sel]


def _concat_cloud(left: NodeCloud, right: NodeCloud, il, ir, log_weights, node: int) -> NodeCloud:
    return NodeCloud(
        node=node,
        time=left.time,
        particles=np.hstack([left.particles[il], right.particles[ir]]),
        log_weights=np.asarray(log_weights, dtype=float),
        component_ids=np.concatenate([left.component_ids, right.component_ids]),
    )


def select_adaptive(left: NodeCloud, right: NodeCloud, weight_fns, ess_target: float,
                    rng_perm: np.random.Generator) -> MixtureBatch:
    """Grow the candidate set until ESS >= ess_target or theta hits its cap.

    Returns the final batch without resampling, so callers can either
    resample it or hand it to the tempering stage.
    """
    if left.n != right.n:
        raise InvalidParams("children must hold equally many particles")
    if not ess_target > 1.0:
        raise InvalidParams("ess_target must exceed 1")
    cap = theta_cap(left.n)
    batch = build_identity_block(left, right, weight_fns)
    while (batch.theta < cap
           and effective_sample_size(batch.log_updated_weights) < ess_target):
        batch = add_permutation_block(batch, rng_perm, weight_fns)
    return batch


def merge_adaptive(left: NodeCloud, right: NodeCloud, weight_fns, ess_target: float,
                   rng: np.random.Generator, node: int = -1):
    """Adaptive lightweight mixture resampling.

    Returns
    -------
    (NodeCloud, int)
        The resampled equal-weight parent cloud and the theta used.
    """
    batch = select_adaptive(left, right, weight_fns, ess_target, rng)
    il, ir = _resample_batch(batch, left.n, rng)
    cloud = _concat_cloud(left, right, il, ir, np.zeros(left.n), node)
    return cloud, batch.theta


def merge_lightweight(left: NodeCloud, right: NodeCloud, weight_fns, theta: int,
                      rng: np.random.Generator, node: int = -1) -> NodeCloud:
    """Identity block plus theta-1 random permutation blocks, then resample."""
    if not 1 <= theta <= left.n:
        raise InvalidParams("theta must lie in [1, N]")
    batch = build_identity_block(left, right, weight_fns)
    for _ in range(theta - 1):
        batch = add_permutation_block(batch, rng, weight_fns)
    il, ir = _resample_batch(batch, left.n, rng)
    return _concat_cloud(left, right, il, ir, np.zeros(left.n), node)


def merge_full(left: NodeCloud, right: NodeCloud, weight_fns, rng: np.random.Generator,
               node: int = -1, cap: int = DEFAULT_FULL_CAP) -> NodeCloud:
    """Evaluate updated weights on all N^2 pairs and resample N of them."""
    n = left.n
    if n != right.n:
        raise InvalidParams("children must hold equally many particles")
    if n > cap:
        raise CapExceeded(f"full merge with N={n} exceeds the cap {cap}")
    if hasattr(weight_fns, "log_mixture_matrix"):
        lm = weight_fns.log_mixture_matrix()
    else:
        il = np.repeat(np.arange(n), n)
        ir = np.tile(np.arange(n), n)
        lm = weight_fns.log_mixture(il, ir).reshape(n, n)
    lu = (left.log_weights[:, None] + right.log_weights[None, :] + lm).ravel()
    p, _ = normalize_log_weights(lu)
    sel = stratified_resample(p, n, rng)
    il, ir = np.divmod(sel, n)
    return _concat_cloud(left, right, il, ir, np.zeros(n), node)


def merge_linear(left: NodeCloud, right: NodeCloud, weight_fns, rng: np.random.Generator,
                 node: int = -1) -> NodeCloud:
    """Resample N identity pairs by pair weights only, then attach the
    survivors' mixture weights as output importance weights."""
    if left.n != right.n:
        raise InvalidParams("children must hold equally many particles")
    idx = np.arange(left.n)
    p, _ = normalize_log_weights(_pair_logw(left, right, idx, idx))
    sel = stratified_resample(p, left.n, rng)
    lm = weight_fns.log_mixture(sel, sel)
    return _concat_cloud(left, right, sel, sel, lm, node)
