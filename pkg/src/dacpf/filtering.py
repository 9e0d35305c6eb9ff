"""Divide-and-conquer marginal particle filtering.

One filtering step works per time point: every leaf of the decomposition
tree proposes particles for its single component by picking a uniform
ancestor from the previous root cloud and pushing it through the node's
transition proxy (bootstrap choice, so the leaf weight reduces to the
likelihood proxy); internal nodes then merge their children bottom-up under
a pluggable strategy whose pair weights combine the carried child weights
with the mixture weight of the two blocks. The root cloud is returned with
equal weights.

Merging needs, for every candidate pair, the ratio of the merged block's
predictive sum over the previous cloud to the product of the children's
predictive sums. The per-child sums are cached per particle; the merged
sums are what the model-specific engines accelerate. A model-agnostic
engine built purely on the auxiliary-family contract is provided for
validation; it is quadratic in the particle count at merges and meant for
small runs only.

Optional tempering bridges a failed adaptive merge (permutation budget
exhausted below the ESS target) from the product of the child targets to
the merged target through a conditional-ESS-controlled temperature ladder
with random-walk rejuvenation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import (
    AllWeightsDegenerate,
    AuditFailed,
    AuxiliaryFamily,
    BisectionFailed,
    CapExceeded,
    InvalidParams,
    NodeCloud,
    NodeState,
    PHASE_LEAF_ANCESTORS,
    PHASE_LEAF_PROPOSAL,
    PHASE_MERGE_PERMUTATION,
    PHASE_MERGE_RESAMPLE,
    PHASE_ROOT_EQUALIZE,
    PHASE_TEMPER,
    RngStream,
    effective_sample_size,
    log_mean_exp,
    normalize_log_weights,
)
from .resampling import (
    MergeStrategy,
    add_permutation_block,
    build_identity_block,
    resample_pairs,
    select_adaptive,
    stratified_resample,
    theta_cap,
)
from .tree import DecompositionTree, bottom_up_levels

__all__ = [
    "DacConfig",
    "TemperingConfig",
    "TemperDiagnostics",
    "FilterState",
    "GenericStepEngine",
    "leaf_step",
    "log_mixture_weight",
    "dac_step",
    "temper_node",
    "unnormalized_root_weight_audit",
    "run_dac_filter",
]

_BISECT_TOL = 1e-4
_BISECT_MAX_ITER = 60


@dataclass(frozen=True)
class TemperingConfig:
    """Knobs of the tempering bridge.

    cess_threshold is the conditional-ESS level each temperature increment
    must keep (None means 0.9 N, resolved at run time; must lie in (0, N]).
    rw_step_scale multiplies the per-component standard deviation of the
    current cloud to give the random-walk proposal scales.
    """

    cess_threshold: float | None = None
    mcmc_steps_per_temperature: int = 2
    rw_step_scale: float = 1.0

    def __post_init__(self):
        if self.mcmc_steps_per_temperature < 1:
            raise InvalidParams("mcmc_steps_per_temperature must be positive")
        if self.cess_threshold is not None and not self.cess_threshold > 0:
            raise InvalidParams("cess_threshold must be positive")
        if not np.all(np.asarray(self.rw_step_scale) > 0):
            raise InvalidParams("rw_step_scale must be positive")


@dataclass(frozen=True)
class DacConfig:
    n_particles: int
    merge_strategy: MergeStrategy
    tempering: TemperingConfig | None = None
    proposal: str = "bootstrap"

    def __post_init__(self):
        if self.n_particles < 2:
            raise InvalidParams("need at least 2 particles")
        if self.proposal != "bootstrap":
            raise InvalidParams("only the bootstrap leaf proposal is implemented")


@dataclass(frozen=True)
class TemperDiagnostics:
    """What one tempering invocation did."""

    node: int
    alphas: tuple
    accept_rate: float
    resample_count: int


@dataclass(frozen=True)
class FilterState:
    """Output of one filtering step: the equal-weight root cloud plus
    per-node merge diagnostics (thetas holds (node, level, theta) rows,
    level counting merge levels from 1 just above the leaves)."""

    time: int
    root_cloud: NodeCloud
    thetas: tuple = ()
    temper: tuple = ()


# ---------------------------------------------------------------------------
# model-agnostic engine (contract path)
# ---------------------------------------------------------------------------

class GenericStepEngine:
    """Engine driven only by the scalar/batch ops of an AuxiliaryFamily.

    Merge evaluations are O(pairs x ancestors x width); use the
    model-specific engines for anything beyond validation scale.
    """

    def __init__(self, aux: AuxiliaryFamily, prev, y_t, n_particles: int, time: int):
        self.aux = aux
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

    def _kernel_matrix(self, node: int, z_rows: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z_rows)
        out = np.empty((self.n_prev, z.shape[0]))
        for m in range(z.shape[0]):
            out[:, m] = self.aux.log_f_aux_batch(node, self.prev, z[m])
        return out

    def leaf_state(self, leaf: int, stream: RngStream) -> NodeState:
        comps = self.tree.comps[leaf]
        g_prop = stream.split(PHASE_LEAF_PROPOSAL).generator()
        if self.prev is None:
            z = np.array([self.aux.sample_initial_aux_leaf(leaf, g_prop)
                          for _ in range(self.n)])
            log_k, log_s = None, np.zeros(self.n)
        else:
            g_anc = stream.split(PHASE_LEAF_ANCESTORS).generator()
            anc = g_anc.integers(self.n_prev, size=self.n)
            z = np.asarray(self.aux.sample_f_aux_leaf_batch(leaf, self.prev[anc], g_prop))
            log_k = self._kernel_matrix(leaf, z[:, None])
            log_s = log_mean_exp(log_k, axis=0)
        log_g = self.aux.log_g_aux_batch(leaf, z[:, None], self.y[comps])
        cloud = NodeCloud(node=leaf, time=self.time, particles=z[:, None],
                          log_weights=log_g.copy(), component_ids=comps)
        return NodeState(cloud=cloud, log_k=log_k, log_s=log_s, log_g=log_g)

    def merge_context(self, node: int, left: NodeState, right: NodeState):
        return _GenericMergeContext(self, node, left, right)

    def log_predictive(self, node: int, z_rows) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        if self.prev is None:
            return np.array([self.aux.log_initial_aux(node, z[m]) for m in range(z.shape[0])])
        return log_mean_exp(self._kernel_matrix(node, z), axis=0)

    def log_g_values(self, node: int, z_rows) -> np.ndarray:
        y_sub = self.y[self.tree.comps[node]]
        return self.aux.log_g_aux_batch(node, np.atleast_2d(z_rows), y_sub)

    def refresh_state(self, node: int, cloud: NodeCloud) -> NodeState:
        log_g = self.log_g_values(node, cloud.particles)
        if self.prev is None:
            return NodeState(cloud=cloud, log_k=None, log_s=np.zeros(cloud.n), log_g=log_g)
        log_k = self._kernel_matrix(node, cloud.particles)
        return NodeState(cloud=cloud, log_k=log_k, log_s=log_mean_exp(log_k, axis=0),
                         log_g=log_g)


class _GenericMergeContext:
    def __init__(self, eng: GenericStepEngine, node: int, left: NodeState, right: NodeState):
        self.eng = eng
        self.node = node
        self.left = left
        self.right = right
        self.n = left.cloud.n

    def _pair_values(self, il, ir) -> np.ndarray:
        return np.hstack([self.left.cloud.particles[il], self.right.cloud.particles[ir]])

    def log_mixture(self, il, ir) -> np.ndarray:
        eng, tree = self.eng, self.eng.tree
        l, r = int(tree.left[self.node]), int(tree.right[self.node])
        z = self._pair_values(il, ir)
        zl, zr = z[:, : self.left.cloud.width], z[:, self.left.cloud.width:]
        dg = eng.log_g_values(self.node, z) - self.left.log_g[il] - self.right.log_g[ir]
        return (dg + eng.log_predictive(self.node, z)
                - eng.log_predictive(l, zl) - eng.log_predictive(r, zr))

    def log_mixture_matrix(self) -> np.ndarray:
        il, ir = np.meshgrid(np.arange(self.n), np.arange(self.n), indexing="ij")
        return self.log_mixture(il.ravel(), ir.ravel()).reshape(self.n, self.n)

    def merged_state(self, il, ir, log_weights) -> NodeState:
        cloud = NodeCloud(
            node=self.node,
            time=self.left.cloud.time,
            particles=self._pair_values(il, ir),
            log_weights=np.asarray(log_weights, dtype=float),
            component_ids=np.concatenate([self.left.cloud.component_ids,
                                          self.right.cloud.component_ids]),
        )
        return self.eng.refresh_state(self.node, cloud)

    def log_target_children(self, z_rows) -> np.ndarray:
        eng, tree = self.eng, self.eng.tree
        l, r = int(tree.left[self.node]), int(tree.right[self.node])
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        zl, zr = z[:, : self.left.cloud.width], z[:, self.left.cloud.width:]
        return (eng.log_g_values(l, zl) + eng.log_predictive(l, zl)
                + eng.log_g_values(r, zr) + eng.log_predictive(r, zr))

    def log_target_node(self, z_rows) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z_rows, dtype=float))
        return self.eng.log_g_values(self.node, z) + self.eng.log_predictive(self.node, z)

    def refresh(self, cloud: NodeCloud) -> NodeState:
        return self.eng.refresh_state(self.node, cloud)


def _make_engine(aux: AuxiliaryFamily, prev, y_t, n: int, time: int):
    try:
        return aux.step_engine(prev, y_t, n, time)
    except NotImplementedError:
        return GenericStepEngine(aux, prev, y_t, n, time)


# ---------------------------------------------------------------------------
# contract-level operations
# ---------------------------------------------------------------------------

def _prev_rows(prev_root):
    if prev_root is None:
        return None
    if isinstance(prev_root, NodeCloud):
        return prev_root.particles
    return np.atleast_2d(np.asarray(prev_root, dtype=float))


def leaf_step(leaf: int, prev_root, y_t, aux: AuxiliaryFamily, stream: RngStream,
              n_particles: int | None = None) -> NodeCloud:
    """Propose one leaf's particles and weight them by the likelihood proxy.

    Each particle picks its own uniform ancestor from prev_root and draws
    from the leaf transition proxy; at the first time (prev_root None) it
    draws from the initial marginal instead. Weights are log g values.
    """
    prev = _prev_rows(prev_root)
    if n_particles is None:
        if prev is None:
            raise InvalidParams("n_particles is required at the first time step")
        n_particles = prev.shape[0]
    time = 1 if prev_root is None else (
        prev_root.time + 1 if isinstance(prev_root, NodeCloud) else 0
    )
    eng = GenericStepEngine(aux, prev, y_t, n_particles, time)
    return eng.leaf_state(int(leaf), stream).cloud


def log_mixture_weight(node: int, z_left, z_right, prev_root, y_t,
                       aux: AuxiliaryFamily) -> float:
    """Merge weight of one candidate pair, evaluated from the contract ops.

    Combines the likelihood-proxy ratio with the ratio of averaged
    predictive sums over the previous root particles; at the first time the
    initial node marginals stand in for the predictive sums.
    """
    tree = aux.tree
    l, r = int(tree.left[node]), int(tree.right[node])
    if l < 0:
        raise InvalidParams("mixture weights are defined at internal nodes")
    y = np.asarray(y_t, dtype=float)
    zl = np.asarray(z_left, dtype=float)
    zr = np.asarray(z_right, dtype=float)
    zu = np.concatenate([zl, zr])
    dg = (aux.log_g_aux(node, zu, y[tree.comps[node]])
          - aux.log_g_aux(l, zl, y[tree.comps[l]])
          - aux.log_g_aux(r, zr, y[tree.comps[r]]))
    prev = _prev_rows(prev_root)
    if prev is None:
        ratio = (aux.log_initial_aux(node, zu) - aux.log_initial_aux(l, zl)
                 - aux.log_initial_aux(r, zr))
        return float(dg + ratio)
    s_u = log_mean_exp(aux.log_f_aux_batch(node, prev, zu), axis=0)
    if s_u == -np.inf:
        raise AllWeightsDegenerate("merged predictive sum vanished for this pair")
    s_l = log_mean_exp(aux.log_f_aux_batch(l, prev, zl), axis=0)
    s_r = log_mean_exp(aux.log_f_aux_batch(r, prev, zr), axis=0)
    return float(dg + s_u - s_l - s_r)


def unnormalized_root_weight_audit(tree: DecompositionTree, aux: AuxiliaryFamily,
                                   prev_root, y_t, x_t) -> float:
    """Assert the telescoping identity behind the leaf and merge weights.

    Evaluated at a full-dimensional point x: the leaf log g terms plus all
    internal mixture weights must equal the root log g plus the root
    predictive sum minus the per-leaf predictive sums (the target density
    ratio against the product of leaf proposal masses). Raises AuditFailed
    beyond 1e-6; returns the accumulated total.
    """
    y = np.asarray(y_t, dtype=float)
    x = np.asarray(x_t, dtype=float)
    prev = _prev_rows(prev_root)
    total = 0.0
    for leaf in tree.leaves:
        c = tree.comps[leaf]
        total += aux.log_g_aux(leaf, x[c], y[c])
    for node in tree.internal_nodes():
        l, r = int(tree.left[node]), int(tree.right[node])
        total += log_mixture_weight(node, x[tree.comps[l]], x[tree.comps[r]],
                                    prev, y, aux)
    root = tree.root
    direct = aux.log_g_aux(root, x[tree.comps[root]], y[tree.comps[root]])
    if prev is None:
        direct += aux.log_initial_aux(root, x[tree.comps[root]])
        for leaf in tree.leaves:
            direct -= aux.log_initial_aux(leaf, x[tree.comps[leaf]])
    else:
        direct += log_mean_exp(aux.log_f_aux_batch(root, prev, x[tree.comps[root]]), axis=0)
        for leaf in tree.leaves:
            direct -= log_mean_exp(aux.log_f_aux_batch(leaf, prev, x[tree.comps[leaf]]), axis=0)
    if not np.isclose(total, direct, rtol=0.0, atol=1e-6):
        raise AuditFailed(
            f"telescoped weight {total:.12g} != direct evaluation {direct:.12g}"
        )
    return float(total)


# ---------------------------------------------------------------------------
# tempering
# ---------------------------------------------------------------------------

def _bisect_decreasing(fn, lo: float, hi: float) -> float:
    """Root of a decreasing function with fn(lo) >= 0 > fn(hi)."""
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        v = fn(mid)
        if not np.isfinite(v):
            raise BisectionFailed(f"non-finite objective at alpha={mid}")
        if v >= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= _BISECT_TOL:
            break
    return 0.5 * (lo + hi)


def temper_node(batch, ctx, ess_target: float, cfg: TemperingConfig,
                node_stream: RngStream, node: int) -> tuple[NodeState, TemperDiagnostics]:
    """Bridge from the child-product target to the merged target.

    The candidate pairs with weights pair x mixture^alpha are exact
    importance approximations of every intermediate target, so the first
    temperature is chosen by solving ESS(alpha) = ESS* on them (alpha = 0
    if even the plain pair weights fall short). After resampling down to N,
    temperatures advance by conditional-ESS bisection, reweighting,
    occasional resampling and componentwise random-walk rejuvenation until
    alpha = 1. The returned state is refreshed against the ancestors and
    equal-weighted.
    """
    n = batch.n
    lp = batch.log_pair_weights
    lm = batch.log_mixture_weights
    beta = cfg.cess_threshold if cfg.cess_threshold is not None else 0.9 * n
    if not 0.0 < beta <= n:
        raise InvalidParams(f"cess_threshold must lie in (0, N]; got {beta} for N={n}")
    gen = node_stream.split(PHASE_TEMPER).generator()

    def ess_at(alpha: float) -> float:
        return effective_sample_size(lp + alpha * lm)

    if ess_at(0.0) < ess_target:
        a1 = 0.0
    elif ess_at(1.0) >= ess_target:
        a1 = 1.0
    else:
        a1 = _bisect_decreasing(lambda a: ess_at(a) - ess_target, 0.0, 1.0)
    probs, _ = normalize_log_weights(lp + a1 * lm)
    sel = resample_pairs(batch.idx_left, probs, n, gen)
    state = ctx.merged_state(batch.idx_left[sel], batch.idx_right[sel], np.zeros(n))
    z = state.cloud.particles.copy()
    lm_vals = lm[sel].astype(float).copy()
    lw = np.zeros(n)

    alphas = [a1]
    accepted = 0
    proposed = 0
    resamples = 0
    log_beta = np.log(beta)
    alpha = a1
    while alpha < 1.0:
        p, _ = normalize_log_weights(lw)
        with np.errstate(divide="ignore"):
            log_p = np.log(p)

        def log_cess(a: float) -> float:
            e = (a - alpha) * lm_vals
            return float(np.log(n) + 2.0 * logsumexp(log_p + e) - logsumexp(log_p + 2.0 * e))

        if log_cess(1.0) >= log_beta:
            a_next = 1.0
        else:
            a_next = _bisect_decreasing(lambda a: log_cess(a) - log_beta, alpha, 1.0)
        lw = lw + (a_next - alpha) * lm_vals
        alpha = a_next
        alphas.append(alpha)

        if effective_sample_size(lw) < 0.5 * n:
            p, _ = normalize_log_weights(lw)
            sel2 = stratified_resample(p, n, gen)
            z = z[sel2]
            lm_vals = lm_vals[sel2]
            lw = np.zeros(n)
            resamples += 1

        children = ctx.log_target_children(z)
        node_v = ctx.log_target_node(z)
        tv = (1.0 - alpha) * children + alpha * node_v
        scales = np.asarray(cfg.rw_step_scale) * np.maximum(z.std(axis=0), 1e-8)
        for _ in range(cfg.mcmc_steps_per_temperature):
            for k in range(z.shape[1]):
                zp = z.copy()
                zp[:, k] += scales[k] * gen.standard_normal(n)
                children_p = ctx.log_target_children(zp)
                node_p = ctx.log_target_node(zp)
                tvp = (1.0 - alpha) * children_p + alpha * node_p
                acc = np.log(gen.random(n)) < tvp - tv
                z[acc, k] = zp[acc, k]
                tv[acc] = tvp[acc]
                children[acc] = children_p[acc]
                node_v[acc] = node_p[acc]
                accepted += int(np.count_nonzero(acc))
                proposed += n
        lm_vals = node_v - children

    if np.any(lw != lw[0]):
        p, _ = normalize_log_weights(lw)
        sel3 = stratified_resample(p, n, gen)
        z = z[sel3]
        resamples += 1
    cloud = NodeCloud(
        node=node, time=ctx.left.cloud.time, particles=z,
        log_weights=np.zeros(n),
        component_ids=np.concatenate([ctx.left.cloud.component_ids,
                                      ctx.right.cloud.component_ids]),
    )
    diag = TemperDiagnostics(
        node=node, alphas=tuple(alphas),
        accept_rate=accepted / proposed if proposed else 0.0,
        resample_count=resamples,
    )
    return ctx.refresh(cloud), diag


# ---------------------------------------------------------------------------
# the filtering step
# ---------------------------------------------------------------------------

def _merge_node(ctx, left: NodeState, right: NodeState, strategy: MergeStrategy,
                config: DacConfig, node_stream: RngStream, node: int):
    n = left.cloud.n
    g_res = node_stream.split(PHASE_MERGE_RESAMPLE).generator()
    kind = strategy.kind

    if kind == "full":
        if n > strategy.full_cap:
            raise CapExceeded(
                f"full merge needs {n * n} pair evaluations; cap is {strategy.full_cap}^2"
            )
        upd = left.cloud.log_weights[:, None] + right.cloud.log_weights[None, :]
        upd = upd + ctx.log_mixture_matrix()
        p, _ = normalize_log_weights(upd.ravel())
        sel = stratified_resample(p, n, g_res)
        il, ir = np.divmod(sel, n)
        return ctx.merged_state(il, ir, np.zeros(n)), None, None

    if kind == "linear":
        p, _ = normalize_log_weights(left.cloud.log_weights + right.cloud.log_weights)
        sel = stratified_resample(p, n, g_res)
        lm = ctx.log_mixture(sel, sel)
        return ctx.merged_state(sel, sel, lm), None, None

    g_perm = node_stream.split(PHASE_MERGE_PERMUTATION).generator()
    if kind == "lightweight":
        theta = strategy.theta if strategy.theta is not None else theta_cap(n)
        if theta > n:
            raise InvalidParams("theta cannot exceed the particle count")
        batch = build_identity_block(left.cloud, right.cloud, ctx)
        for _ in range(theta - 1):
            batch = add_permutation_block(batch, g_perm, ctx)
        p, _ = normalize_log_weights(batch.log_updated_weights)
        sel = resample_pairs(batch.idx_left, p, n, g_res)
        state = ctx.merged_state(batch.idx_left[sel], batch.idx_right[sel], np.zeros(n))
        return state, theta, None

    # adaptive
    target = strategy.ess_target if strategy.ess_target is not None else float(n)
    batch = select_adaptive(left.cloud, right.cloud, ctx, target, g_perm)
    ess = effective_sample_size(batch.log_updated_weights)
    if ess < target and config.tempering is not None and batch.theta >= theta_cap(n):
        state, diag = temper_node(batch, ctx, target, config.tempering, node_stream, node)
        return state, batch.theta, diag
    p, _ = normalize_log_weights(batch.log_updated_weights)
    sel = resample_pairs(batch.idx_left, p, n, g_res)
    state = ctx.merged_state(batch.idx_left[sel], batch.idx_right[sel], np.zeros(n))
    return state, batch.theta, None


def dac_step(prev: FilterState | None, y_t, model, aux: AuxiliaryFamily,
             tree: DecompositionTree, config: DacConfig, stream: RngStream) -> FilterState:
    """One filtering step over the whole tree.

    prev None means the first observation. The stream must be unique to
    this time step; nodes and phases split deterministic sub-streams from
    it, so any schedule over the nodes of a level yields identical output.
    """
    del model  # evaluation runs through the auxiliary family and its engine
    n = config.n_particles
    time = 1 if prev is None else prev.time + 1
    prev_parts = None if prev is None else prev.root_cloud.particles
    engine = _make_engine(aux, prev_parts, y_t, n, time)

    states: dict[int, NodeState] = {}
    for leaf in tree.leaves:
        states[int(leaf)] = engine.leaf_state(int(leaf), stream.split(int(leaf)))

    thetas = []
    tdiags = []
    levels = bottom_up_levels(tree)
    for height, nodes in enumerate(levels):
        if height == 0:
            continue
        for node in nodes:
            node = int(node)
            l, r = int(tree.left[node]), int(tree.right[node])
            ls = states.pop(l)
            rs = states.pop(r)
            ctx = engine.merge_context(node, ls, rs)
            node_stream = stream.split(node)
            state, theta, diag = _merge_node(ctx, ls, rs, config.merge_strategy,
                                             config, node_stream, node)
            states[node] = state
            if theta is not None:
                thetas.append((node, height, int(theta)))
            if diag is not None:
                tdiags.append(diag)

    cloud = states.pop(int(tree.root)).cloud
    lw = cloud.log_weights
    if np.any(lw != lw[0]):
        p, _ = normalize_log_weights(lw)
        g_eq = stream.split(int(tree.root)).split(PHASE_ROOT_EQUALIZE).generator()
        sel = stratified_resample(p, cloud.n, g_eq)
        cloud = NodeCloud(node=cloud.node, time=cloud.time,
                          particles=cloud.particles[sel],
                          log_weights=np.zeros(cloud.n),
                          component_ids=cloud.component_ids)
    return FilterState(time=time, root_cloud=cloud, thetas=tuple(thetas),
                       temper=tuple(tdiags))


def run_dac_filter(model, aux: AuxiliaryFamily, tree: DecompositionTree,
                   ys: np.ndarray, config: DacConfig,
                   stream: RngStream) -> list[FilterState]:
    """Filter a whole observation sequence; one FilterState per time."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    out = []
    state = None
    for t in range(ys.shape[0]):
        state = dac_step(state, ys[t], model, aux, tree, config, stream.split(t + 1))
        out.append(state)
    return out
