"""Lattice random-walk model with spatially correlated Student-t noise.

The latent field follows X_t = X_{t-1} + sigma_x W_t componentwise on a
rows x cols grid (X_1 ~ N(0, sigma_x2 I)); the observation is Y_t = X_t + V_t
with V_t multivariate Student-t with nu degrees of freedom and precision-like
matrix P, where P[u, v] = tau^D(u, v) for grid distance D(u, v) <= r_y and
zero beyond. On the 4-neighbour lattice the graph distance is the Manhattan
distance between grid coordinates.

Because P's entries depend only on pairwise distances, the matrix restricted
to any subset of vertices is a principal submatrix of the full P, so every
restricted quadratic form is positive definite whenever P is. Evaluation of
the t log density only needs quadratic forms, which stay well defined for an
indefinite P; opting in via allow_indefinite keeps evaluation running and
counts every particle whose t argument 1 + Q/nu falls to zero or below
(their proxy weight is -inf).

The transition factorizes per vertex, so node transition proxies multiply
exactly and the merge weight reduces to the likelihood-proxy ratio times a
ratio of plain particle sums. Likelihood proxies use the restricted t
density on each node's vertex set.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky_banded, solve_banded
from scipy.special import logsumexp

from .core import (
    AuxiliaryFamily,
    InvalidParams,
    NodeCloud,
    NodeState,
    NotPositiveDefinite,
    PHASE_LEAF_ANCESTORS,
    PHASE_LEAF_PROPOSAL,
    RngStream,
    StateSpaceModel,
    log_mean_exp,
)
from .tree import DecompositionTree, build_lattice_tree

__all__ = [
    "SpatialParams",
    "SpatialModel",
    "SpatialAux",
    "build_spatial",
    "log_mixture_weight_spatial",
    "simulate_spatial",
]


def _grid_distances(rows: int, cols: int) -> np.ndarray:
    r = np.arange(rows * cols) // cols
    c = np.arange(rows * cols) % cols
    return np.abs(r[:, None] - r[None, :]) + np.abs(c[:, None] - c[None, :])


@dataclass(frozen=True)
class SpatialParams:
    """Grid shape, noise parameters and the derived precision matrix.

    The observation-noise precision P (attribute obs_prec) is dense of size
    d x d with the banded sparsity induced by the distance cutoff. Its
    banded Cholesky factor is built once for sampling; with allow_indefinite
    the factorization is skipped and sampling is unavailable.
    """

    rows: int
    cols: int
    sigma_x2: float = 1.0
    tau: float = -0.25
    r_y: int = 1
    nu: float = 10.0
    allow_indefinite: bool = False

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidParams("grid must have at least one row and column")
        if not (self.sigma_x2 > 0 and self.nu > 0):
            raise InvalidParams("sigma_x2 and nu must be positive")
        if self.r_y < 0:
            raise InvalidParams("r_y must be nonnegative")
        d = self.rows * self.cols
        dist = _grid_distances(self.rows, self.cols)
        prec = np.where(dist <= self.r_y, float(self.tau) ** dist, 0.0)
        set_ = object.__setattr__
        set_(self, "d", d)
        set_(self, "obs_prec", prec)
        nz = np.nonzero(prec)
        bw = int(np.max(np.abs(nz[0] - nz[1]))) if nz[0].size else 0
        ab = np.zeros((bw + 1, d))
        for k in range(bw + 1):
            ab[k, : d - k] = np.diagonal(prec, -k)
        try:
            cb = cholesky_banded(ab, lower=True)
        except np.linalg.LinAlgError as err:
            if not self.allow_indefinite:
                raise NotPositiveDefinite(
                    "observation-noise precision is not positive definite "
                    f"(tau={self.tau}, r_y={self.r_y}); pass allow_indefinite=True "
                    "to evaluate quadratic forms anyway"
                ) from err
            cb = None
        set_(self, "_chol_banded", cb)
        set_(self, "_bw", bw)

    def sample_obs_noise(self, rng) -> np.ndarray:
        """One draw of the Student-t noise vector (needs a PD precision)."""
        if self._chol_banded is None:
            raise NotPositiveDefinite("cannot sample noise from an indefinite precision")
        bw, d = self._bw, self.d
        # solve L^T z = xi with the lower banded factor rearranged to upper form
        ub = np.zeros((bw + 1, d))
        for m in range(bw + 1):
            ub[bw - m, m:] = self._chol_banded[m, : d - m]
        z = solve_banded((0, bw), ub, rng.standard_normal(d))
        w = rng.chisquare(self.nu)
        return z / np.sqrt(w / self.nu)


class SpatialModel(StateSpaceModel):
    def __init__(self, params: SpatialParams):
        self.params = params
        self.dim = params.d
        self.obs_dim = params.d

    def log_transition(self, x_prev, x) -> float:
        r = np.asarray(x, dtype=float) - np.asarray(x_prev, dtype=float)
        return float(-0.5 * np.dot(r, r) / self.params.sigma_x2)

    def log_likelihood(self, x, y) -> float:
        p = self.params
        r = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        q = float(r @ p.obs_prec @ r)
        return float(-0.5 * (p.nu + p.d) * np.log1p(q / p.nu))

    def sample_initial(self, rng) -> np.ndarray:
        return np.sqrt(self.params.sigma_x2) * rng.standard_normal(self.dim)

    def sample_initial_batch(self, count, rng) -> np.ndarray:
        return np.sqrt(self.params.sigma_x2) * rng.standard_normal((count, self.dim))

    def sample_transition(self, x_prev, rng) -> np.ndarray:
        s = np.sqrt(self.params.sigma_x2)
        return np.asarray(x_prev, dtype=float) + s * rng.standard_normal(self.dim)

    def sample_transition_batch(self, x_prev_rows, rng) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(x_prev_rows, dtype=float))
        s = np.sqrt(self.params.sigma_x2)
        return rows + s * rng.standard_normal(rows.shape)

    def sample_observation(self, x, rng) -> np.ndarray:
        return np.asarray(x, dtype=float) + self.params.sample_obs_noise(rng)

    def log_likelihood_batch(self, x_rows, y) -> np.ndarray:
        p = self.params
        r = np.asarray(y, dtype=float)[None, :] - np.asarray(x_rows, dtype=float)
        q = np.einsum("ni,ij,nj->n", r, p.obs_prec, r)
        return -0.5 * (p.nu + p.d) * np.log1p(q / p.nu)


def simulate_spatial(params: SpatialParams, t_max: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Exact forward simulation; returns (x, y) with shape (t_max, d)."""
    if t_max < 1:
        raise InvalidParams("t_max must be >= 1")
    model = SpatialModel(params)
    xs = np.empty((t_max, params.d))
    ys = np.empty((t_max, params.d))
    xs[0] = model.sample_initial(rng)
    for t in range(1, t_max):
        xs[t] = model.sample_transition(xs[t - 1], rng)
    for t in range(t_max):
        ys[t] = model.sample_observation(xs[t], rng)
    return xs, ys


class SpatialAux(AuxiliaryFamily):
    """Node proxies on a lattice decomposition.

    Transition proxies are the exact per-vertex random-walk kernels, so they
    carry no coupling terms. Likelihood proxies restrict the t density to
    the node's vertex set; merging two blocks changes the quadratic form by
    twice the cross term through the precision block between the two vertex
    sets, which is the only part of the merge weight that does not come from
    particle sums.

    nonpositive_g_events counts particle evaluations whose t argument was
    not positive (possible only with an indefinite precision); those
    evaluations yield -inf.
    """

    def __init__(self, params: SpatialParams, tree: DecompositionTree):
        if tree.n_components != params.d:
            raise InvalidParams("tree size does not match the grid")
        self.params = params
        self.tree = tree
        self.nonpositive_g_events = 0
        p = params.obs_prec
        self._prec_sub = tuple(
            p[np.ix_(tree.comps[u], tree.comps[u])] for u in range(tree.n_nodes)
        )
        cross = []
        for u in range(tree.n_nodes):
            l, r = int(tree.left[u]), int(tree.right[u])
            if l < 0:
                cross.append(None)
            else:
                cross.append(p[np.ix_(tree.comps[l], tree.comps[r])])
        self._cross = tuple(cross)

    # ---- t density pieces ----

    def log_t_quad(self, q, width: int):
        """-(nu + width)/2 * log(1 + q/nu), counting nonpositive arguments."""
        nu = self.params.nu
        arg = 1.0 + np.asarray(q, dtype=float) / nu
        bad = arg <= 0.0
        nbad = int(np.count_nonzero(bad))
        if nbad:
            self.nonpositive_g_events += nbad
            arg = np.where(bad, 1.0, arg)
            out = -0.5 * (nu + width) * np.log(arg)
            return np.where(bad, -np.inf, out)
        return -0.5 * (nu + width) * np.log(arg)

    def quad_form(self, node, resid_rows) -> np.ndarray:
        r = np.atleast_2d(np.asarray(resid_rows, dtype=float))
        ps = self._prec_sub[node]
        return np.einsum("ni,ij,nj->n", r, ps, r)

    def cross_block(self, node) -> np.ndarray:
        c = self._cross[node]
        if c is None:
            raise InvalidParams("cross blocks exist at internal nodes only")
        return c

    # ---- scalar contract ----

    def log_f_aux(self, node, x_prev, z) -> float:
        comps = self.tree.comps[node]
        r = np.asarray(z, dtype=float) - np.asarray(x_prev, dtype=float)[comps]
        return float(-0.5 * np.dot(r, r) / self.params.sigma_x2)

    def log_g_aux(self, node, z, y_sub) -> float:
        r = np.asarray(y_sub, dtype=float) - np.asarray(z, dtype=float)
        q = self.quad_form(node, r[None, :])
        return float(self.log_t_quad(q, self.tree.comps[node].size)[0])

    def sample_f_aux_leaf(self, leaf, x_prev, rng) -> float:
        i = int(self.tree.comps[leaf][0])
        s = np.sqrt(self.params.sigma_x2)
        return float(np.asarray(x_prev)[i] + s * rng.standard_normal())

    def log_initial_aux(self, node, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(-0.5 * np.dot(z, z) / self.params.sigma_x2)

    def sample_initial_aux_leaf(self, leaf, rng) -> float:
        return float(np.sqrt(self.params.sigma_x2) * rng.standard_normal())

    # ---- vectorized paths ----

    def log_f_aux_batch(self, node, x_prev_rows, z) -> np.ndarray:
        comps = self.tree.comps[node]
        z = np.asarray(z, dtype=float)
        xp = np.asarray(x_prev_rows, dtype=float)[:, comps]
        r = z[None, :] - xp
        return -0.5 * np.einsum("ij,ij->i", r, r) / self.params.sigma_x2

    def log_g_aux_batch(self, node, z_rows, y_sub) -> np.ndarray:
        r = np.asarray(y_sub, dtype=float)[None, :] - np.atleast_2d(np.asarray(z_rows, dtype=float))
        q = self.quad_form(node, r)
        return self.log_t_quad(q, self.tree.comps[node].size)

    def sample_f_aux_leaf_batch(self, leaf, x_prev_rows, rng) -> np.ndarray:
        i = int(self.tree.comps[leaf][0])
        s = np.sqrt(self.params.sigma_x2)
        col = np.asarray(x_prev_rows, dtype=float)[:, i]
        return col + s * rng.standard_normal(col.shape[0])

    def log_f_matrix(self, node, prev, z_rows) -> np.ndarray:
        """(N_prev, M) random-walk kernel matrix over the node's vertices."""
        comps = self.tree.comps[node]
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        pr = np.asarray(prev, dtype=float)[:, comps]
        t_z = np.einsum("mj,mj->m", z, z)
        t_p = np.einsum("nj,nj->n", pr, pr)
        out = pr @ z.T
        out *= 2.0
        out -= t_z[None, :]
        out -= t_p[:, None]
        out *= 0.5 / self.params.sigma_x2
        return out

    def step_engine(self, prev_root_particles, y_t, n_particles, time):
        return SpatialStepEngine(self, prev_root_particles, y_t, n_particles, time)


def build_spatial(rows: int, cols: int, sigma_x2: float = 1.0, tau: float = -0.25,
                  r_y: int = 1, nu: float = 10.0,
                  allow_indefinite: bool = False) -> tuple[SpatialModel, SpatialAux]:
    """Construct the lattice model and its node proxies on the lattice tree."""
    params = SpatialParams(rows=rows, cols=cols, sigma_x2=sigma_x2, tau=tau,
                           r_y=r_y, nu=nu, allow_indefinite=allow_indefinite)
    return SpatialModel(params), SpatialAux(params, build_lattice_tree(rows, cols))


def log_mixture_weight_spatial(aux: SpatialAux, node: int, z_left, z_right,
                               prev_root, y_t) -> float:
    """Closed-form merge weight: likelihood-proxy ratio plus the log ratio
    of plain particle sums of the factorized transition proxies. Matches the
    generic evaluation up to the constant +log N carried by the predictive
    normalization. The transition part vanishes at t=1 (prev_root None)."""
    tree = aux.tree
    l, r = int(tree.left[node]), int(tree.right[node])
    if l < 0:
        raise InvalidParams("mixture weights are defined at internal nodes")
    zl = np.asarray(z_left, dtype=float)
    zr = np.asarray(z_right, dtype=float)
    y = np.asarray(y_t, dtype=float)
    zu = np.concatenate([zl, zr])
    dg = (aux.log_g_aux(node, zu, y[tree.comps[node]])
          - aux.log_g_aux(l, zl, y[tree.comps[l]])
          - aux.log_g_aux(r, zr, y[tree.comps[r]]))
    if prev_root is None:
        return float(dg)
    prev = np.atleast_2d(np.asarray(prev_root, dtype=float))
    a = aux.log_f_matrix(l, prev, zl[None, :])[:, 0]
    b = aux.log_f_matrix(r, prev, zr[None, :])[:, 0]
    return float(dg + logsumexp(a + b) - logsumexp(a) - logsumexp(b))


# ---------------------------------------------------------------------------
# per-time-step merge engine
# ---------------------------------------------------------------------------

class SpatialStepEngine:
    """Vectorized one-step engine for the lattice model.

    Node states carry three extra caches: the residual rows y - z on the
    node's vertices, their quadratic form under the restricted precision,
    and the resulting log likelihood proxy. Merges update all three without
    touching full-dimensional quantities.
    """

    def __init__(self, aux: SpatialAux, prev, y_t, n_particles: int, time: int):
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

    def leaf_state(self, leaf: int, stream: RngStream) -> NodeState:
        p = self.params
        i = int(self.tree.comps[leaf][0])
        s = np.sqrt(p.sigma_x2)
        g_prop = stream.split(PHASE_LEAF_PROPOSAL).generator()
        if self.prev is None:
            z = s * g_prop.standard_normal(self.n)
            log_k, log_s = None, np.zeros(self.n)
        else:
            g_anc = stream.split(PHASE_LEAF_ANCESTORS).generator()
            anc = g_anc.integers(self.n_prev, size=self.n)
            z = self.prev[anc, i] + s * g_prop.standard_normal(self.n)
            diff = z[None, :] - self.prev[:, i][:, None]
            log_k = -0.5 * diff * diff / p.sigma_x2
            log_s = log_mean_exp(log_k, axis=0)
        resid = (self.y[i] - z)[:, None]
        # distance zero to itself, so the restricted precision of a single
        # vertex is always the unit diagonal entry
        q = resid[:, 0] ** 2 * self.aux._prec_sub[leaf][0, 0]
        log_g = self.aux.log_t_quad(q, 1)
        cloud = NodeCloud(node=leaf, time=self.time, particles=z[:, None],
                          log_weights=log_g.copy(), component_ids=self.tree.comps[leaf])
        return NodeState(cloud=cloud, log_k=log_k, log_s=log_s,
                         log_g=log_g, q_form=q, resid=resid)

    def merge_context(self, node: int, left: NodeState, right: NodeState):
        return _SpatialMergeContext(self, node, left, right)

    # ---- value-based evaluators (audit and tempering) ----

    def log_predictive(self, node: int, z_rows) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        if self.prev is None:
            return -0.5 * np.einsum("ij,ij->i", z, z) / self.params.sigma_x2
        return log_mean_exp(self.aux.log_f_matrix(node, self.prev, z), axis=0)

    def log_g_values(self, node: int, z_rows) -> np.ndarray:
        y_sub = self.y[self.tree.comps[node]]
        return self.aux.log_g_aux_batch(node, np.atleast_2d(z_rows), y_sub)

    def refresh_state(self, node: int, cloud: NodeCloud) -> NodeState:
        resid = self.y[self.tree.comps[node]][None, :] - cloud.particles
        q = self.aux.quad_form(node, resid)
        log_g = self.aux.log_t_quad(q, cloud.width)
        if self.prev is None:
            return NodeState(cloud=cloud, log_k=None, log_s=np.zeros(cloud.n),
                             log_g=log_g, q_form=q, resid=resid)
        log_k = self.aux.log_f_matrix(node, self.prev, cloud.particles)
        return NodeState(cloud=cloud, log_k=log_k, log_s=log_mean_exp(log_k, axis=0),
                         log_g=log_g, q_form=q, resid=resid)


class _SpatialMergeContext:
    """Pair-weight evaluations for one internal lattice node."""

    def __init__(self, eng: SpatialStepEngine, node: int, left: NodeState, right: NodeState):
        self.eng = eng
        self.node = node
        self.left = left
        self.right = right
        self.n = left.cloud.n
        self._arange = np.arange(self.n)
        self._t1 = eng.prev is None
        self._width = left.cloud.width + right.cloud.width
        # residual rows folded through the cross precision block, so each
        # pair's quadratic-form update is a plain row dot product
        self._rc = left.resid @ eng.aux.cross_block(node)
        if not self._t1:
            self._mx = left.log_k.max(axis=0)
            self._el = np.exp(left.log_k - self._mx[None, :])
            self._mr = right.log_k.max(axis=0)
            self._er = np.exp(right.log_k - self._mr[None, :])

    def _pair_quad(self, il, ir) -> np.ndarray:
        cross = np.einsum("pj,pj->p", self._rc[il], self.right.resid[ir])
        return self.left.q_form[il] + self.right.q_form[ir] + 2.0 * cross

    def _delta_g(self, il, ir, q_pair) -> np.ndarray:
        lg_u = self.eng.aux.log_t_quad(q_pair, self._width)
        return lg_u - self.left.log_g[il] - self.right.log_g[ir]

    def log_mixture(self, il, ir) -> np.ndarray:
        dg = self._delta_g(il, ir, self._pair_quad(il, ir))
        if self._t1:
            return dg
        a = self._el if il is self._arange or np.array_equal(il, self._arange) \
            else self._el[:, il]
        b = self._er[:, ir]
        dot = np.einsum("nk,nk->k", a, b)
        with np.errstate(divide="ignore"):
            s_pair = np.log(dot) + self._mx[il] + self._mr[ir] - np.log(self.eng.n_prev)
        return dg + s_pair - self.left.log_s[il] - self.right.log_s[ir]

    def log_mixture_matrix(self) -> np.ndarray:
        q_pair = (self.left.q_form[:, None] + self.right.q_form[None, :]
                  + 2.0 * self._rc @ self.right.resid.T)
        lg_u = self.eng.aux.log_t_quad(q_pair.ravel(), self._width).reshape(q_pair.shape)
        out = lg_u - self.left.log_g[:, None] - self.right.log_g[None, :]
        if self._t1:
            return out
        s = self._el.T @ self._er
        with np.errstate(divide="ignore"):
            out += np.log(s)
        out += self._mx[:, None] + self._mr[None, :] - np.log(self.eng.n_prev)
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
        q = self._pair_quad(il, ir)
        log_g = self.eng.aux.log_t_quad(q, self._width)
        resid = np.hstack([self.left.resid[il], self.right.resid[ir]])
        if self._t1:
            return NodeState(cloud=cloud, log_k=None, log_s=np.zeros(cloud.n),
                             log_g=log_g, q_form=q, resid=resid)
        log_k = self.left.log_k[:, il] + self.right.log_k[:, ir]
        return NodeState(cloud=cloud, log_k=log_k, log_s=log_mean_exp(log_k, axis=0),
                         log_g=log_g, q_form=q, resid=resid)

    # ---- tempering hooks ----

    def log_target_children(self, z_rows) -> np.ndarray:
        wl = self.left.cloud.width
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        zl, zr = z[:, :wl], z[:, wl:]
        eng, tree = self.eng, self.eng.tree
        l, r = int(tree.left[self.node]), int(tree.right[self.node])
        return (eng.log_g_values(l, zl) + eng.log_predictive(l, zl)
                + eng.log_g_values(r, zr) + eng.log_predictive(r, zr))

    def log_target_node(self, z_rows) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        return self.eng.log_g_values(self.node, z) + self.eng.log_predictive(self.node, z)

    def refresh(self, cloud: NodeCloud) -> NodeState:
        return self.eng.refresh_state(self.node, cloud)
