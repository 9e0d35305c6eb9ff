"""Linear-Gaussian chain benchmark model.

The latent process is X_t = 0.5 A X_{t-1} + U_t with U_t ~ N(0, Sigma) and
X_1 ~ N(0, I); observations are Y_t = X_t + V_t with V_t ~ N(0, sigma_y2 I).
A and Sigma come from a directed Gaussian chain across components:

    x_t(1) | x_{t-1}            ~  N(0.5 x_{t-1}(1), 1/tau)
    x_t(i) | x_t(i-1), x_{t-1}  ~  N(lam/(tau+lam) x_t(i-1)
                                     + 0.5 tau/(tau+lam) x_{t-1}(i), 1/(tau+lam))

Writing M for the lower bidiagonal matrix with diagonal tau+lam and
subdiagonal -lam, and A1 = diag(tau+lam, tau, ..., tau), this means
A = M^{-1} A1 and Sigma^{-1} = M^T diag(tau, tau+lam, ..., tau+lam) M
divided by (tau+lam)^2, a tridiagonal precision. All evaluation and
simulation goes through M in O(d); dense matrices are only formed on demand
for the Kalman oracle and small-scale checks.

The chain factorizes each node's transition proxy into per-component squared
terms f1 (tied to the previous state, with a tau-only variant at global
component 0) and couplings ftilde(s1, s2) = exp(-0.5 lam^2/(tau+lam) s1^2
+ lam s1 s2) between adjacent current-state components. The coupling between
a node's first component and its predecessor belongs to the merge where the
two blocks join, together with the leftover previous-state cross term; this
makes the node proxies exactly multiplicative up the tree and yields
closed-form mixture weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import logsumexp

from .core import (
    AuxiliaryFamily,
    InvalidParams,
    NodeCloud,
    NodeState,
    PHASE_LEAF_ANCESTORS,
    PHASE_LEAF_PROPOSAL,
    RngStream,
    StateSpaceModel,
    log_mean_exp,
)
from .tree import DecompositionTree, build_chain_tree

__all__ = [
    "LgssmParams",
    "LgssmModel",
    "LgssmAux",
    "build_lgssm",
    "log_mixture_weight_lgssm",
    "simulate_lgssm",
]


@dataclass(frozen=True)
class LgssmParams:
    """Chain model parameters and the cached bidiagonal factors.

    Attributes beyond the four scalars are derived: m_diag/m_sub hold the
    bidiagonal M, a1_diag the diagonal A1, d_diag the inner weights of the
    precision, c_prec/b_mean the per-component coefficients of the f1 pieces
    (c = tau at component 0 else tau+lam; b = 0.5 at component 0 else
    0.5 tau/(tau+lam)), kappa = lam tau/(tau+lam) the previous-state cross
    coefficient and q_tilde = lam^2/(tau+lam) the ftilde curvature.
    """

    d: int
    tau: float = 1.0
    lam: float = 1.0
    sigma_y2: float = 0.25

    def __post_init__(self):
        if self.d < 1:
            raise InvalidParams("d must be >= 1")
        if not (self.tau > 0 and self.lam > 0 and self.sigma_y2 > 0):
            raise InvalidParams("tau, lam and sigma_y2 must be positive")
        d, tau, lam = self.d, self.tau, self.lam
        ts = tau + lam
        set_ = object.__setattr__
        set_(self, "m_diag", np.full(d, ts))
        set_(self, "m_sub", np.full(d - 1, -lam))
        set_(self, "a1_diag", np.concatenate([[ts], np.full(d - 1, tau)]))
        set_(self, "d_diag", np.concatenate([[tau], np.full(d - 1, ts)]))
        band = np.zeros((2, d))
        band[0] = ts
        band[1, :-1] = -lam
        set_(self, "_band", band)
        c = np.full(d, ts)
        c[0] = tau
        b = np.full(d, 0.5 * tau / ts)
        b[0] = 0.5
        set_(self, "c_prec", c)
        set_(self, "b_mean", b)
        set_(self, "kappa", lam * tau / ts)
        set_(self, "q_tilde", lam * lam / ts)
        set_(self, "_dense", {})

    # ---- O(d) linear algebra through M ----

    def apply_m(self, x: np.ndarray) -> np.ndarray:
        """M @ x along the last axis."""
        out = self.m_diag * x
        out[..., 1:] += self.m_sub * x[..., :-1]
        return out

    def solve_m(self, b: np.ndarray) -> np.ndarray:
        """M^{-1} b for b of shape (d,) or (d, k)."""
        return solve_banded((1, 0), self._band, b)

    def apply_half_a(self, x_rows: np.ndarray) -> np.ndarray:
        """0.5 A x for row-stacked states (…, d)."""
        v = self.a1_diag * np.asarray(x_rows, dtype=float)
        if v.ndim == 1:
            return 0.5 * self.solve_m(v)
        return 0.5 * self.solve_m(v.T).T

    # ---- dense views (oracle use only, O(d^2..3)) ----

    def dense_m(self) -> np.ndarray:
        if "m" not in self._dense:
            m = np.diag(self.m_diag) + np.diag(self.m_sub, -1)
            self._dense["m"] = m
        return self._dense["m"]

    def dense_a(self) -> np.ndarray:
        if "a" not in self._dense:
            self._dense["a"] = self.solve_m(np.diag(self.a1_diag))
        return self._dense["a"]

    def dense_prec(self) -> np.ndarray:
        if "prec" not in self._dense:
            m = self.dense_m()
            ts = self.tau + self.lam
            self._dense["prec"] = (m.T * self.d_diag) @ m / ts**2
        return self._dense["prec"]

    def dense_cov(self) -> np.ndarray:
        if "cov" not in self._dense:
            self._dense["cov"] = np.linalg.inv(self.dense_prec())
        return self._dense["cov"]


class LgssmModel(StateSpaceModel):
    """Evaluators and samplers for the chain model.

    Log densities are unnormalized; the additive constants are chosen so
    that the node proxies of :class:`LgssmAux` telescope to exactly these
    functions at the root (constant zero).
    """

    def __init__(self, params: LgssmParams):
        self.params = params
        self.dim = params.d
        self.obs_dim = params.d

    def log_transition(self, x_prev, x) -> float:
        p = self.params
        r = p.apply_m(np.asarray(x, dtype=float).copy())
        r -= 0.5 * p.a1_diag * np.asarray(x_prev, dtype=float)
        ts = p.tau + p.lam
        return float(-0.5 * np.dot(p.d_diag, r * r) / ts**2)

    def log_likelihood(self, x, y) -> float:
        r = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        return float(-0.5 * np.dot(r, r) / self.params.sigma_y2)

    def sample_initial(self, rng) -> np.ndarray:
        return rng.standard_normal(self.dim)

    def sample_initial_batch(self, count, rng) -> np.ndarray:
        return rng.standard_normal((count, self.dim))

    def _transition_noise(self, shape_rows, rng) -> np.ndarray:
        p = self.params
        ts = p.tau + p.lam
        xi = rng.standard_normal((shape_rows, p.d)) * (ts / np.sqrt(p.d_diag))
        return p.solve_m(xi.T).T

    def sample_transition(self, x_prev, rng) -> np.ndarray:
        p = self.params
        return p.apply_half_a(x_prev) + self._transition_noise(1, rng)[0]

    def sample_transition_batch(self, x_prev_rows, rng) -> np.ndarray:
        p = self.params
        rows = np.atleast_2d(np.asarray(x_prev_rows, dtype=float))
        return p.apply_half_a(rows) + self._transition_noise(rows.shape[0], rng)

    def sample_observation(self, x, rng) -> np.ndarray:
        s = np.sqrt(self.params.sigma_y2)
        return np.asarray(x, dtype=float) + s * rng.standard_normal(self.dim)

    def log_likelihood_batch(self, x_rows, y) -> np.ndarray:
        r = np.asarray(y, dtype=float)[None, :] - np.asarray(x_rows, dtype=float)
        return -0.5 * np.einsum("ij,ij->i", r, r) / self.params.sigma_y2


def simulate_lgssm(params: LgssmParams, t_max: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Exact forward simulation; returns (x, y) with shape (t_max, d)."""
    if t_max < 1:
        raise InvalidParams("t_max must be >= 1")
    model = LgssmModel(params)
    xs = np.empty((t_max, params.d))
    ys = np.empty((t_max, params.d))
    xs[0] = model.sample_initial(rng)
    for t in range(1, t_max):
        xs[t] = model.sample_transition(xs[t - 1], rng)
    for t in range(t_max):
        ys[t] = model.sample_observation(xs[t], rng)
    return xs, ys


class LgssmAux(AuxiliaryFamily):
    """Node-indexed transition and likelihood proxies on a chain tree.

    A node's f proxy multiplies the f1 squared term of every owned
    component, the previous-state cross term of every owned component except
    the node's first, and the ftilde coupling between adjacent owned
    components. The likelihood proxy factorizes per component, so its merge
    ratio is identically one.
    """

    def __init__(self, params: LgssmParams, tree: DecompositionTree):
        for u in range(tree.n_nodes):
            c = tree.comps[u]
            if c.size > 1 and np.any(np.diff(c) != 1):
                raise InvalidParams("chain proxies need contiguous component blocks")
        if tree.n_components != params.d:
            raise InvalidParams("tree size does not match d")
        self.params = params
        self.tree = tree

    # ---- scalar contract ----

    def log_f_aux(self, node, x_prev, z) -> float:
        p = self.params
        comps = self.tree.comps[node]
        z = np.asarray(z, dtype=float)
        xp = np.asarray(x_prev, dtype=float)[comps]
        c, b = p.c_prec[comps], p.b_mean[comps]
        val = -0.5 * np.sum(c * (z - b * xp) ** 2)
        if z.size > 1:
            zl = z[:-1]
            val -= 0.5 * p.kappa * np.sum(zl * xp[1:])
            val += np.sum(-0.5 * p.q_tilde * zl**2 + p.lam * zl * z[1:])
        return float(val)

    def log_f_aux_split(self, node, x_prev, z) -> tuple[float, float]:
        p = self.params
        comps = self.tree.comps[node]
        z = np.asarray(z, dtype=float)
        xp = np.asarray(x_prev, dtype=float)[comps]
        c, b = p.c_prec[comps], p.b_mean[comps]
        past = -0.5 * np.sum(c * (z - b * xp) ** 2)
        within = 0.0
        if z.size > 1:
            zl = z[:-1]
            past -= 0.5 * p.kappa * np.sum(zl * xp[1:])
            within = float(np.sum(-0.5 * p.q_tilde * zl**2 + p.lam * zl * z[1:]))
        return float(past), within

    def log_g_aux(self, node, z, y_sub) -> float:
        r = np.asarray(y_sub, dtype=float) - np.asarray(z, dtype=float)
        return float(-0.5 * np.dot(r, r) / self.params.sigma_y2)

    def sample_f_aux_leaf(self, leaf, x_prev, rng) -> float:
        p = self.params
        i = int(self.tree.comps[leaf][0])
        mean = p.b_mean[i] * float(np.asarray(x_prev)[i])
        return float(rng.normal(mean, 1.0 / np.sqrt(p.c_prec[i])))

    def log_initial_aux(self, node, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(-0.5 * np.dot(z, z))

    def sample_initial_aux_leaf(self, leaf, rng) -> float:
        return float(rng.standard_normal())

    def log_f_tilde(self, s1, s2):
        """Coupling between adjacent current-state components (log scale)."""
        p = self.params
        return -0.5 * p.q_tilde * np.square(s1) + p.lam * np.asarray(s1) * np.asarray(s2)

    # ---- vectorized paths ----

    def log_f_aux_batch(self, node, x_prev_rows, z) -> np.ndarray:
        p = self.params
        comps = self.tree.comps[node]
        z = np.asarray(z, dtype=float)
        xp = np.asarray(x_prev_rows, dtype=float)[:, comps]
        c, b = p.c_prec[comps], p.b_mean[comps]
        val = -0.5 * np.sum(c * (z[None, :] - b * xp) ** 2, axis=1)
        if z.size > 1:
            zl = z[:-1]
            val -= 0.5 * p.kappa * (xp[:, 1:] @ zl)
            val += np.sum(-0.5 * p.q_tilde * zl**2 + p.lam * zl * z[1:])
        return val

    def log_g_aux_batch(self, node, z_rows, y_sub) -> np.ndarray:
        r = np.asarray(y_sub, dtype=float)[None, :] - np.asarray(z_rows, dtype=float)
        return -0.5 * np.einsum("ij,ij->i", r, r) / self.params.sigma_y2

    def sample_f_aux_leaf_batch(self, leaf, x_prev_rows, rng) -> np.ndarray:
        p = self.params
        i = int(self.tree.comps[leaf][0])
        mean = p.b_mean[i] * np.asarray(x_prev_rows, dtype=float)[:, i]
        return mean + rng.standard_normal(mean.shape[0]) / np.sqrt(p.c_prec[i])

    def _log_f1_matrix(self, node, prev, z_rows) -> np.ndarray:
        """(N_prev, M) matrix of f1 plus within-node cross terms (no ftilde).

        Row n, column m holds the previous-state-dependent part of
        log f_{t,u}(prev[n], z_rows[m]).
        """
        p = self.params
        comps = self.tree.comps[node]
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        pr = np.asarray(prev, dtype=float)[:, comps]
        c, b = p.c_prec[comps], p.b_mean[comps]
        t_z = -0.5 * (z * z) @ c
        t_p = -0.5 * (pr * pr) @ (c * b * b)
        out = (pr * (c * b)) @ z.T
        out += t_z[None, :]
        out += t_p[:, None]
        if comps.size > 1:
            out += (pr[:, 1:] * (-0.5 * p.kappa)) @ z[:, :-1].T
        return out

    def _log_f_tilde_within(self, node, z_rows) -> np.ndarray:
        """(M,) sum of ftilde couplings between adjacent owned components."""
        p = self.params
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        if z.shape[1] < 2:
            return np.zeros(z.shape[0])
        zl = z[:, :-1]
        return np.sum(-0.5 * p.q_tilde * zl**2 + p.lam * zl * z[:, 1:], axis=1)

    def log_f_matrix(self, node, prev, z_rows) -> np.ndarray:
        """(N_prev, M) full log f proxy matrix (f1 + cross + ftilde)."""
        return self._log_f1_matrix(node, prev, z_rows) + self._log_f_tilde_within(node, z_rows)[None, :]

    def step_engine(self, prev_root_particles, y_t, n_particles, time):
        return LgssmStepEngine(self, prev_root_particles, y_t, n_particles, time)


def build_lgssm(d: int, tau: float = 1.0, lam: float = 1.0,
                sigma_y2: float = 0.25) -> tuple[LgssmModel, LgssmAux]:
    """Construct the chain model and its node proxies on the chain tree."""
    params = LgssmParams(d=d, tau=tau, lam=lam, sigma_y2=sigma_y2)
    return LgssmModel(params), LgssmAux(params, build_chain_tree(d))


def log_mixture_weight_lgssm(aux: LgssmAux, node: int, z_left, z_right, prev_root) -> float:
    """Closed-form merge weight of the chain proxies.

    Equals the ftilde coupling between the joining components plus the log
    ratio of plain particle sums of the f1 pieces over the merged versus the
    two child blocks. Differs from the generic evaluation by exactly +log N
    (the generic path carries the 1/N predictive normalization, which is
    constant in all arguments). At t=1 (prev_root None) the weight is zero
    because both the likelihood proxy and the initial law factorize.
    """
    if prev_root is None:
        return 0.0
    tree = aux.tree
    l, r = int(tree.left[node]), int(tree.right[node])
    if l < 0:
        raise InvalidParams("mixture weights are defined at internal nodes")
    prev = np.atleast_2d(np.asarray(prev_root, dtype=float))
    zl = np.asarray(z_left, dtype=float)
    zr = np.asarray(z_right, dtype=float)
    a = aux._log_f1_matrix(l, prev, zl[None, :])[:, 0]
    b = aux._log_f1_matrix(r, prev, zr[None, :])[:, 0]
    jr1 = int(tree.comps[r][0])
    cj = -0.5 * aux.params.kappa * zl[-1] * prev[:, jr1]
    join = float(aux.log_f_tilde(zl[-1], zr[0]))
    return join + float(logsumexp(a + b + cj) - logsumexp(a) - logsumexp(b))


# ---------------------------------------------------------------------------
# per-time-step merge engine
# ---------------------------------------------------------------------------

class LgssmStepEngine:
    """Vectorized one-step engine for the chain model.

    Holds the previous root particles (ancestors) and the current
    observation; builds leaf states and per-node merge contexts. log_k
    matrices follow the (ancestor, particle) orientation.
    """

    def __init__(self, aux: LgssmAux, prev, y_t, n_particles: int, time: int):
        self.aux = aux
        self.params = aux.params
        self.tree = aux.tree
        self.y = np.asarray(y_t, dtype=float)
        self.n = int(n_particles)
        self.time = int(time)
        if prev is None:
            self.prev = None
            self.n_prev = 0
        else:
            self.prev = np.atleast_2d(np.asarray(prev, dtype=float))
            self.n_prev = self.prev.shape[0]
            # kernel mean of each component under each ancestor
            self._kmeans = self.params.b_mean[None, :] * self.prev

    def leaf_state(self, leaf: int, stream: RngStream) -> NodeState:
        p = self.params
        i = int(self.tree.comps[leaf][0])
        g_prop = stream.split(PHASE_LEAF_PROPOSAL).generator()
        if self.prev is None:
            z = g_prop.standard_normal(self.n)
            log_k, log_s = None, np.zeros(self.n)
        else:
            g_anc = stream.split(PHASE_LEAF_ANCESTORS).generator()
            anc = g_anc.integers(self.n_prev, size=self.n)
            sd = 1.0 / np.sqrt(p.c_prec[i])
            z = self._kmeans[anc, i] + sd * g_prop.standard_normal(self.n)
            diff = z[None, :] - self._kmeans[:, i][:, None]
            log_k = -0.5 * p.c_prec[i] * diff * diff
            log_s = log_mean_exp(log_k, axis=0)
        lg = -0.5 * (self.y[i] - z) ** 2 / p.sigma_y2
        cloud = NodeCloud(node=leaf, time=self.time, particles=z[:, None],
                          log_weights=lg, component_ids=self.tree.comps[leaf])
        return NodeState(cloud=cloud, log_k=log_k, log_s=log_s)

    def merge_context(self, node: int, left: NodeState, right: NodeState):
        return _LgssmMergeContext(self, node, left, right)

    # ---- value-based evaluators (audit and tempering) ----

    def log_predictive(self, node: int, z_rows) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        if self.prev is None:
            return -0.5 * np.einsum("ij,ij->i", z, z)
        return log_mean_exp(self.aux.log_f_matrix(node, self.prev, z), axis=0)

    def log_g_values(self, node: int, z_rows) -> np.ndarray:
        y_sub = self.y[self.tree.comps[node]]
        return self.aux.log_g_aux_batch(node, np.atleast_2d(z_rows), y_sub)

    def refresh_state(self, node: int, cloud: NodeCloud) -> NodeState:
        if self.prev is None:
            return NodeState(cloud=cloud, log_k=None, log_s=np.zeros(cloud.n))
        log_k = self.aux.log_f_matrix(node, self.prev, cloud.particles)
        return NodeState(cloud=cloud, log_k=log_k, log_s=log_mean_exp(log_k, axis=0))


class _LgssmMergeContext:
    """Pair-weight evaluations for one internal node, sharing the shifted
    exponential tables between block, matrix and gather paths."""

    def __init__(self, eng: LgssmStepEngine, node: int, left: NodeState, right: NodeState):
        self.eng = eng
        self.node = node
        self.left = left
        self.right = right
        self.n = left.cloud.n
        self._arange = np.arange(self.n)
        self._t1 = eng.prev is None
        if not self._t1:
            p = eng.params
            self._lastv = left.cloud.particles[:, -1]
            self._firstv = right.cloud.particles[:, 0]
            jr1 = int(right.cloud.component_ids[0])
            cross = np.outer(eng.prev[:, jr1], -0.5 * p.kappa * self._lastv)
            self._cl = left.log_k + cross
            self._mx = self._cl.max(axis=0)
            self._el = np.exp(self._cl - self._mx[None, :])
            self._mr = right.log_k.max(axis=0)
            self._er = np.exp(right.log_k - self._mr[None, :])

    def _join(self, il, ir) -> np.ndarray:
        p = self.eng.params
        s1 = self._lastv[il]
        return -0.5 * p.q_tilde * s1 * s1 + p.lam * s1 * self._firstv[ir]

    def log_mixture(self, il, ir) -> np.ndarray:
        if self._t1:
            return np.zeros(len(il))
        a = self._el if il is self._arange or np.array_equal(il, self._arange) \
            else self._el[:, il]
        b = self._er[:, ir]
        dot = np.einsum("nk,nk->k", a, b)
        with np.errstate(divide="ignore"):
            s_pair = np.log(dot) + self._mx[il] + self._mr[ir] - np.log(self.eng.n_prev)
        return s_pair + self._join(il, ir) - self.left.log_s[il] - self.right.log_s[ir]

    def log_mixture_matrix(self) -> np.ndarray:
        if self._t1:
            return np.zeros((self.n, self.n))
        p = self.eng.params
        s = self._el.T @ self._er
        with np.errstate(divide="ignore"):
            out = np.log(s)
        out += self._mx[:, None] + self._mr[None, :] - np.log(self.eng.n_prev)
        out += -0.5 * p.q_tilde * (self._lastv**2)[:, None] + p.lam * np.outer(self._lastv, self._firstv)
        out -= self.left.log_s[:, None] + self.right.log_s[None, :]
        return out

    def merged_state(self, il, ir, log_weights) -> NodeState:
        cloud = NodeCloud(
            node=self.node,
            time=self.left.cloud.time,
            particles=np.hstack([self.left.cloud.particles[il], self.right.cloud.particles[ir]]),
            log_weights=np.asarray(log_weights, dtype=float),
            component_ids=np.concatenate([self.left.cloud.component_ids, self.right.cloud.component_ids]),
        )
        if self._t1:
            return NodeState(cloud=cloud, log_k=None, log_s=np.zeros(cloud.n))
        log_k = self._cl[:, il] + self.right.log_k[:, ir]
        log_k += self._join(il, ir)[None, :]
        return NodeState(cloud=cloud, log_k=log_k, log_s=log_mean_exp(log_k, axis=0))

    # ---- tempering hooks ----

    def log_target_children(self, z_rows) -> np.ndarray:
        """Log product of the two child targets at row-stacked merged values."""
        wl = self.left.cloud.width
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        zl, zr = z[:, :wl], z[:, wl:]
        eng, tree = self.eng, self.eng.tree
        l, r = int(tree.left[self.node]), int(tree.right[self.node])
        return (eng.log_g_values(l, zl) + eng.log_predictive(l, zl)
                + eng.log_g_values(r, zr) + eng.log_predictive(r, zr))

    def log_target_node(self, z_rows) -> np.ndarray:
        """Log merged-node target at row-stacked merged values.

        The mixture weight at a value is node minus children, so the
        alpha-tempered density interpolates the two on the log scale.
        """
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        return self.eng.log_g_values(self.node, z) + self.eng.log_predictive(self.node, z)

    def refresh(self, cloud: NodeCloud) -> NodeState:
        return self.eng.refresh_state(self.node, cloud)
