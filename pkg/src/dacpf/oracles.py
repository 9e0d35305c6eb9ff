"""Ground-truth references: exact Kalman filtering for the linear-Gaussian
chain and a standard bootstrap particle filter for any model.

Both run full-dimensional and dense, so they are deliberately small-scale
tools. The Kalman recursion is O(d^3) per step and refuses d > 2048.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import InvalidParams, NodeCloud, SingularInnovation, normalize_log_weights
from .lgssm import LgssmParams
from .resampling import stratified_resample

__all__ = [
    "KalmanState",
    "kalman_step",
    "kalman_filter",
    "bootstrap_pf_first_step",
    "bootstrap_pf_step",
    "run_bootstrap_pf",
]

_KALMAN_MAX_DIM = 2048
_KALMAN_WARN_DIM = 256


@dataclass(frozen=True)
class KalmanState:
    """Exact filtering mean and covariance; the covariance is kept symmetric."""

    mean: np.ndarray
    cov: np.ndarray

    def marginal_vars(self) -> np.ndarray:
        return np.diagonal(self.cov).copy()


def kalman_step(state: KalmanState | None, y_t, params: LgssmParams) -> KalmanState:
    """One predict/update sweep of the exact filter.

    state None means the first observation: the prior N(0, I) is updated by
    y directly. Transition matrix is 0.5 A with noise covariance Sigma;
    observations add isotropic noise sigma_y2 on the identity. The update
    uses the Joseph form, which stays positive semi-definite under roundoff.
    """
    d = params.d
    if d > _KALMAN_MAX_DIM:
        raise InvalidParams(f"dense Kalman recursion is limited to d <= {_KALMAN_MAX_DIM}")
    if d > _KALMAN_WARN_DIM:
        warnings.warn(
            f"dense Kalman step at d={d} costs O(d^3) per step", RuntimeWarning,
            stacklevel=2,
        )
    y = np.asarray(y_t, dtype=float)
    if y.shape != (d,):
        raise InvalidParams("observation dimension does not match the model")
    if state is None:
        m_pred = np.zeros(d)
        p_pred = np.eye(d)
    else:
        half_a = 0.5 * params.dense_a()
        m_pred = half_a @ state.mean
        p_pred = half_a @ state.cov @ half_a.T + params.dense_cov()
    s = p_pred + params.sigma_y2 * np.eye(d)
    try:
        s_fac = cho_factor(s, lower=True)
    except np.linalg.LinAlgError as err:
        raise SingularInnovation("innovation covariance is not positive definite") from err
    gain = cho_solve(s_fac, p_pred.T).T
    mean = m_pred + gain @ (y - m_pred)
    ik = np.eye(d) - gain
    cov = ik @ p_pred @ ik.T + params.sigma_y2 * (gain @ gain.T)
    cov = 0.5 * (cov + cov.T)
    return KalmanState(mean=mean, cov=cov)


def kalman_filter(params: LgssmParams, ys: np.ndarray) -> list[KalmanState]:
    """Filtering states for a whole observation sequence (t_max, d)."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    state = None
    out = []
    for t in range(ys.shape[0]):
        state = kalman_step(state, ys[t], params)
        out.append(state)
    return out


def _resampled_cloud(particles: np.ndarray, log_weights: np.ndarray,
                     time: int, rng) -> NodeCloud:
    n, d = particles.shape
    probs, _ = normalize_log_weights(log_weights)
    idx = stratified_resample(probs, n, rng)
    return NodeCloud(node=0, time=time, particles=particles[idx],
                     log_weights=np.zeros(n), component_ids=np.arange(d))


def bootstrap_pf_first_step(y_1, model, n_particles: int, rng) -> NodeCloud:
    """Initialize from the prior, weight by the likelihood, resample."""
    x = model.sample_initial_batch(n_particles, rng)
    lw = model.log_likelihood_batch(x, np.asarray(y_1, dtype=float))
    return _resampled_cloud(x, lw, 1, rng)


def bootstrap_pf_step(cloud: NodeCloud, y_t, model, rng) -> NodeCloud:
    """Propagate every particle through the transition, weight by the
    likelihood, stratified-resample back to equal weights."""
    if np.any(cloud.log_weights != cloud.log_weights[0]):
        raise InvalidParams("bootstrap step expects an equal-weight cloud")
    x = model.sample_transition_batch(cloud.particles, rng)
    lw = model.log_likelihood_batch(x, np.asarray(y_t, dtype=float))
    return _resampled_cloud(x, lw, cloud.time + 1, rng)


def run_bootstrap_pf(model, ys: np.ndarray, n_particles: int, rng) -> list[NodeCloud]:
    """Full filtering pass; returns the resampled cloud at every time."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    cloud = bootstrap_pf_first_step(ys[0], model, n_particles, rng)
    out = [cloud]
    for t in range(1, ys.shape[0]):
        cloud = bootstrap_pf_step(cloud, ys[t], model, rng)
        out.append(cloud)
    return out
