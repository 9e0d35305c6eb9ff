"""Shared primitives: log-weight algebra, particle clouds, model interfaces,
and deterministic random-stream splitting.

All weights in this package live in log space end to end. Densities may be
unnormalized wherever they are only ever used inside ratios or normalized
weight sets, which is everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DacError",
    "AllWeightsDegenerate",
    "InvalidProbabilities",
    "InvalidParams",
    "CapExceeded",
    "AuditFailed",
    "BisectionFailed",
    "NotPositiveDefinite",
    "SingularInnovation",
    "SchemaMismatch",
    "RngStream",
    "split_stream",
    "NodeCloud",
    "NodeState",
    "StateSpaceModel",
    "AuxiliaryFamily",
    "normalize_log_weights",
    "effective_sample_size",
    "log_mean_exp",
]


class DacError(Exception):
    """Base class for structured failures in this package."""


class AllWeightsDegenerate(DacError):
    """Every log-weight in a set is -inf; the target and the particles are
    incompatible and continuing would silently resample uniformly."""


class InvalidProbabilities(DacError):
    pass


class InvalidParams(DacError):
    pass


class CapExceeded(DacError):
    """A full pairwise merge was requested above its configured memory cap."""


class AuditFailed(DacError):
    """The root-weight telescoping identity did not hold to tolerance."""


class BisectionFailed(DacError):
    """A bracketing bisection could not be set up (endpoints do not straddle)."""


class NotPositiveDefinite(DacError):
    pass


class SingularInnovation(DacError):
    pass


class SchemaMismatch(DacError):
    pass


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

# Phase tags used when deriving per-node streams inside a filter step. Kept
# here so every module derives the same tree of streams.
PHASE_LEAF_ANCESTORS = 0
PHASE_LEAF_PROPOSAL = 1
PHASE_MERGE_PERMUTATION = 2
PHASE_MERGE_RESAMPLE = 3
PHASE_TEMPER = 4
PHASE_ROOT_EQUALIZE = 5


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by (seed, path).

    Two streams with identical seed and path produce identical draw
    sequences; streams with different paths are statistically independent
    (counter-based splitting via SeedSequence spawn keys). A stream is a
    value object: ``generator()`` always starts the sequence from the top,
    so a fresh tagged child should be split off for every independent use.

    Parameters
    ----------
    seed : int
        Master 64-bit seed.
    path : tuple of int
        Tags accumulated by :func:`split_stream`, identifying e.g.
        (repetition, time, node, phase).
    """

    seed: int
    path: tuple[int, ...] = ()

    def split(self, tag: int) -> "RngStream":
        return RngStream(self.seed, self.path + (int(tag),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))


def split_stream(parent: RngStream, tag: int) -> RngStream:
    """Derive a child stream deterministically; same tag, same child."""
    return parent.split(tag)


# ---------------------------------------------------------------------------
# log-weight algebra
# ---------------------------------------------------------------------------

def normalize_log_weights(log_weights) -> tuple[np.ndarray, float]:
    """Normalize a set of log-weights into probabilities.

    Subtracts the maximum before exponentiation so arbitrarily large inputs
    cannot overflow; -inf entries map to probability zero.

    Parameters
    ----------
    log_weights : array_like
        One-dimensional set of log-weights; -inf marks dead particles.

    Returns
    -------
    probabilities : ndarray
        Nonnegative, sums to 1 within 1e-12.
    log_normalizer : float
        log sum exp of the input.

    Raises
    ------
    AllWeightsDegenerate
        If every entry is -inf (or the input is empty).
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0:
        raise AllWeightsDegenerate("empty weight set")
    m = np.max(lw)
    if not np.isfinite(m):
        if m == -np.inf:
            raise AllWeightsDegenerate(
                "all %d log-weights are -inf" % lw.size
            )
        raise InvalidParams("non-finite log-weights (nan or +inf)")
    shifted = np.exp(lw - m)
    total = shifted.sum()
    return shifted / total, float(m + np.log(total))


def effective_sample_size(log_weights) -> float:
    """(sum w)^2 / sum w^2 computed stably in log space; in [1, N]."""
    p, _ = normalize_log_weights(log_weights)
    ess = 1.0 / float(np.dot(p, p))
    # guard the [1, N] range against last-bit float excursions
    return min(max(ess, 1.0), float(p.size))


def log_mean_exp(log_values: np.ndarray, axis=None) -> np.ndarray | float:
    """log(mean(exp(x))) with max-shift; all -inf along an axis stays -inf."""
    lv = np.asarray(log_values, dtype=float)
    m = np.max(lv, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.mean(np.exp(lv - safe), axis=axis)) + np.squeeze(safe, axis=axis)
    if np.ndim(out) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# particle clouds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeCloud:
    """Weighted particle population attached to one tree node at one time.

    Attributes
    ----------
    node : int
        Tree node id.
    time : int
        Time index t >= 1 (0 only for sentinel uses).
    particles : ndarray, shape (N, width)
        One row per particle, columns ordered like ``component_ids``.
    log_weights : ndarray, shape (N,)
        Log importance weights; all zero right after a resampling step.
    component_ids : ndarray, shape (width,)
        Global component indices (0-based) in ascending order, so that
        concatenation at a parent node is deterministic.
    """

    node: int
    time: int
    particles: np.ndarray
    log_weights: np.ndarray
    component_ids: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=float)
        if p.ndim != 2:
            raise InvalidParams("particles must be (N, width)")
        lw = np.asarray(self.log_weights, dtype=float)
        cid = np.asarray(self.component_ids, dtype=int)
        if lw.shape != (p.shape[0],):
            raise InvalidParams("log_weights length must match particle count")
        if cid.shape != (p.shape[1],):
            raise InvalidParams("component_ids must match particle width")
        if cid.size > 1 and np.any(np.diff(cid) <= 0):
            raise InvalidParams("component_ids must be strictly ascending")
        object.__setattr__(self, "particles", p)
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "component_ids", cid)

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    @property
    def width(self) -> int:
        return self.particles.shape[1]


@dataclass(frozen=True)
class NodeState:
    """A node's cloud plus the per-particle caches the merge engines carry.

    log_k[n, k] is log f_{t,u}(x_prev^n, particle k), the ancestor-kernel
    matrix (None at t=1); log_s[k] is the cached predictive log-sum
    log(N^{-1} sum_n exp(log_k[n, k])), computed once per particle and reused
    by every pair evaluation above this node. The remaining fields are
    likelihood caches used by families whose g does not factorize across
    components (residuals and quadratic forms), None otherwise.
    """

    cloud: NodeCloud
    log_k: np.ndarray | None
    log_s: np.ndarray
    log_g: np.ndarray | None = None
    q_form: np.ndarray | None = None
    resid: np.ndarray | None = None


# ---------------------------------------------------------------------------
# model interfaces
# ---------------------------------------------------------------------------

class StateSpaceModel:
    """Transition/likelihood evaluators and samplers for one model.

    Log densities may be unnormalized (constants cancel in every use). The
    evaluators must be safe to call concurrently on shared read-only
    parameters. Subclasses may override the ``*_batch`` hooks with
    vectorized versions; the defaults loop over rows.
    """

    dim: int
    obs_dim: int

    def log_transition(self, x_prev: np.ndarray, x: np.ndarray) -> float:
        raise NotImplementedError

    def log_likelihood(self, x: np.ndarray, y: np.ndarray) -> float:
        raise NotImplementedError

    def sample_initial(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample_transition(self, x_prev: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample_observation(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    # vectorized hooks used by the bootstrap filter and the harness
    def sample_transition_batch(self, x_prev_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.stack([self.sample_transition(row, rng) for row in x_prev_rows])

    def log_likelihood_batch(self, x_rows: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.array([self.log_likelihood(row, y) for row in x_rows])

    def sample_initial_batch(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return np.stack([self.sample_initial(rng) for _ in range(count)])


class AuxiliaryFamily:
    """Node-indexed auxiliary targets (f_{t,u}, g_{t,u}) over one tree.

    At the root the auxiliary pair must equal the model's transition and
    likelihood up to additive constants (both benchmark families realize the
    constant as exactly zero). ``log_f_aux`` evaluates the node transition
    proxy given a full previous state vector; ``log_g_aux`` the node
    likelihood proxy against the node's observation slice.
    """

    tree = None  # DecompositionTree, set by concrete families

    def log_f_aux(self, node: int, x_prev: np.ndarray, z: np.ndarray) -> float:
        raise NotImplementedError

    def log_g_aux(self, node: int, z: np.ndarray, y_sub: np.ndarray) -> float:
        raise NotImplementedError

    def sample_f_aux_leaf(self, leaf: int, x_prev: np.ndarray, rng: np.random.Generator) -> float:
        raise NotImplementedError

    def log_f_aux_split(self, node: int, x_prev: np.ndarray, z: np.ndarray) -> tuple[float, float]:
        """Optional decoupling of log_f_aux into a past-dependent part and a
        within-time part (their sum equals log_f_aux)."""
        raise NotImplementedError("this family does not expose a split form")

    # initial-time marginal on a node (t=1 replaces transition kernels)
    def log_initial_aux(self, node: int, z: np.ndarray) -> float:
        raise NotImplementedError

    def sample_initial_aux_leaf(self, leaf: int, rng: np.random.Generator) -> float:
        raise NotImplementedError

    # ---- batch fallbacks (override for speed) ----
    def log_f_aux_batch(self, node: int, x_prev_rows: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.array([self.log_f_aux(node, row, z) for row in x_prev_rows])

    def log_g_aux_batch(self, node: int, z_rows: np.ndarray, y_sub: np.ndarray) -> np.ndarray:
        return np.array([self.log_g_aux(node, row, y_sub) for row in z_rows])

    def sample_f_aux_leaf_batch(self, leaf: int, x_prev_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.array([self.sample_f_aux_leaf(leaf, row, rng) for row in x_prev_rows])

    def step_engine(self, prev_root_particles, y_t: np.ndarray, n_particles: int, time: int):
        """Return the vectorized per-time-step merge engine for this family.

        Concrete families override; the engine contract is documented in
        :mod:`dacpf.filtering`.
        """
        raise NotImplementedError("no step engine registered for this family")
