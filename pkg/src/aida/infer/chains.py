"""Exact forward-backward inference on linear-Gaussian chains.

The chain state is a window vector; transitions may carry singular process
noise (only the newest entry is driven) and an optional quadratic potential
on the outgoing state, which is how coefficient uncertainty enters the
state update. Unary evidence is supplied per node in information form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from ..dists import _cho_factor


def _sym(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


@dataclass
class GaussianChain:
    """Inputs of one smoothing pass over nodes 0..T.

    trans[t], trans_cov[t] define the step from node t to node t+1;
    corrections[t] (optional, PSD) is an extra zero-mean quadratic potential
    acting on node t before that step. obs_prec/obs_pm hold per-node unary
    potentials in information form (row 0 is usually zero; the prior covers
    node 0).
    """

    prior_mean: np.ndarray
    prior_cov: np.ndarray
    trans: np.ndarray
    trans_cov: np.ndarray
    obs_prec: np.ndarray
    obs_pm: np.ndarray
    corrections: np.ndarray | None = None
    scalar_obs: bool = False

    @property
    def n_steps(self) -> int:
        return self.trans.shape[0]

    @property
    def dim(self) -> int:
        return self.prior_mean.shape[0]


@dataclass
class ChainBelief:
    """Smoothed marginals and lag-one cross covariances.

    cross[t] = Cov(z_t, z_{t+1}) under the joint smoothed posterior.
    """

    means: np.ndarray
    covs: np.ndarray
    cross: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.cross.shape[0]


def _info_update(m, V, lam, eta):
    """Multiply belief N(m, V) by exp(-z'lam z/2 + eta'z); returns (m', V')."""
    if not lam.any() and not eta.any():
        return m, V
    d = m.shape[0]
    S = np.eye(d) + V @ lam
    V_new = _sym(np.linalg.solve(S, V))
    m_new = np.linalg.solve(S, m + V @ eta)
    return m_new, V_new


def _scalar_info_update(m, V, lam, eta):
    """Rank-one update for a potential on the first coordinate only."""
    if lam == 0.0 and eta == 0.0:
        return m, V
    v = V[:, 0]
    denom = 1.0 + lam * V[0, 0]
    m_new = m + v * ((eta - lam * m[0]) / denom)
    V_new = V - np.outer(v, v) * (lam / denom)
    return m_new, _sym(V_new)


def smooth_chain(chain: GaussianChain) -> ChainBelief:
    """Kalman filter plus RTS smoothing with per-node unary potentials."""
    T, d = chain.n_steps, chain.dim
    m_aug = np.empty((T + 1, d))
    V_aug = np.empty((T + 1, d, d))
    m_pred = np.empty((T + 1, d))
    P_pred = np.empty((T + 1, d, d))

    m, V = chain.prior_mean.copy(), _sym(chain.prior_cov)
    for t in range(T + 1):
        if t > 0:
            A = chain.trans[t - 1]
            m = A @ m
            V = _sym(A @ V @ A.T + chain.trans_cov[t - 1])
            m_pred[t], P_pred[t] = m, V
        if chain.scalar_obs:
            m, V = _scalar_info_update(m, V, chain.obs_prec[t, 0, 0], chain.obs_pm[t, 0])
        else:
            m, V = _info_update(m, V, chain.obs_prec[t], chain.obs_pm[t])
        if t < T and chain.corrections is not None:
            m, V = _info_update(m, V, chain.corrections[t], np.zeros(d))
        m_aug[t], V_aug[t] = m, V

    means = np.empty((T + 1, d))
    covs = np.empty((T + 1, d, d))
    cross = np.empty((T, d, d))
    means[T], covs[T] = m_aug[T], V_aug[T]
    for t in range(T - 1, -1, -1):
        A = chain.trans[t]
        cho = _cho_factor(P_pred[t + 1])
        G = sla.cho_solve(cho, A @ V_aug[t]).T
        means[t] = m_aug[t] + G @ (means[t + 1] - m_pred[t + 1])
        covs[t] = _sym(V_aug[t] + G @ (covs[t + 1] - P_pred[t + 1]) @ G.T)
        cross[t] = G @ covs[t + 1]
    return ChainBelief(means, covs, cross)


def gauss_entropy(cov: np.ndarray) -> float:
    cov = np.atleast_2d(cov)
    sign, logdet = np.linalg.slogdet(_sym(cov))
    d = cov.shape[0]
    return float(0.5 * (d * (1.0 + np.log(2 * np.pi)) + logdet))


def window_pair_cov(belief: ChainBelief, t: int) -> np.ndarray:
    """Joint covariance of (z_{t-1}, newest entry of z_t); nondegenerate
    parameterization of a window-shift transition's pair belief."""
    d = belief.means.shape[1]
    pair = np.empty((d + 1, d + 1))
    pair[:d, :d] = belief.covs[t - 1]
    pair[:d, d] = belief.cross[t - 1][:, 0]
    pair[d, :d] = belief.cross[t - 1][:, 0]
    pair[d, d] = belief.covs[t][0, 0]
    return pair


def full_pair_cov(belief: ChainBelief, t: int) -> np.ndarray:
    """Joint covariance of (z_{t-1}, z_t)."""
    d = belief.means.shape[1]
    pair = np.empty((2 * d, 2 * d))
    pair[:d, :d] = belief.covs[t - 1]
    pair[:d, d:] = belief.cross[t - 1]
    pair[d:, :d] = belief.cross[t - 1].T
    pair[d:, d:] = belief.covs[t]
    return pair


def _stacked_entropies(covs: np.ndarray) -> np.ndarray:
    d = covs.shape[-1]
    sign, logdet = np.linalg.slogdet(0.5 * (covs + np.swapaxes(covs, -1, -2)))
    return 0.5 * (d * (1.0 + np.log(2 * np.pi)) + logdet)


def stacked_pair_covs(belief: ChainBelief, window_shift: bool) -> np.ndarray:
    """All lag-one pair covariances, nondegenerate coordinates."""
    T, d = belief.n_steps, belief.means.shape[1]
    if window_shift:
        pairs = np.empty((T, d + 1, d + 1))
        pairs[:, :d, :d] = belief.covs[:-1]
        pairs[:, :d, d] = belief.cross[:, :, 0]
        pairs[:, d, :d] = belief.cross[:, :, 0]
        pairs[:, d, d] = belief.covs[1:, 0, 0]
    else:
        pairs = np.empty((T, 2 * d, 2 * d))
        pairs[:, :d, :d] = belief.covs[:-1]
        pairs[:, :d, d:] = belief.cross
        pairs[:, d:, :d] = np.swapaxes(belief.cross, -1, -2)
        pairs[:, d:, d:] = belief.covs[1:]
    return pairs


def chain_entropy(belief: ChainBelief, window_shift: bool) -> float:
    """Joint entropy of the chain posterior.

    Uses the clique/separator decomposition, with pairs reduced to their
    nondegenerate coordinates when the transition is a window shift.
    """
    T = belief.n_steps
    if T == 0:
        return gauss_entropy(belief.covs[0])
    total = _stacked_entropies(stacked_pair_covs(belief, window_shift)).sum()
    if T > 1:
        total -= _stacked_entropies(belief.covs[1:T]).sum()
    return float(total)


def gaussian_energy(mean, cov, prior_mean, prior_cov) -> float:
    """Cross entropy E_q[-ln N(z; prior_mean, prior_cov)] for q = N(mean, cov)."""
    prior_cov = np.atleast_2d(prior_cov)
    mean = np.atleast_1d(mean)
    cov = np.atleast_2d(cov)
    d = mean.shape[0]
    cho = _cho_factor(prior_cov)
    diff = mean - np.atleast_1d(prior_mean)
    maha = float(diff @ sla.cho_solve(cho, diff))
    tr = float(np.trace(sla.cho_solve(cho, cov)))
    _, logdet = np.linalg.slogdet(_sym(prior_cov))
    return 0.5 * (d * np.log(2 * np.pi) + logdet + maha + tr)


def transition_energy_full(belief: ChainBelief, t: int, A: np.ndarray, Q: np.ndarray) -> float:
    """E[-ln N(z_t; A z_{t-1}, Q)] under the smoothed pair belief."""
    d = A.shape[0]
    m_prev, m_cur = belief.means[t - 1], belief.means[t]
    V_prev, V_cur = belief.covs[t - 1], belief.covs[t]
    C = belief.cross[t - 1]
    diff = m_cur - A @ m_prev
    spread = V_cur + A @ V_prev @ A.T - A @ C - C.T @ A.T
    cho = _cho_factor(np.atleast_2d(Q))
    maha = float(diff @ sla.cho_solve(cho, diff))
    tr = float(np.trace(sla.cho_solve(cho, spread)))
    _, logdet = np.linalg.slogdet(_sym(np.atleast_2d(Q)))
    return 0.5 * (d * np.log(2 * np.pi) + logdet + maha + tr)


def ar_step_square_error(
    belief: ChainBelief, t: int, coef_mean: np.ndarray, coef_cov: np.ndarray
) -> float:
    """E[(z1_t - c' z_{t-1})^2] with the coefficient c integrated out."""
    m_prev = belief.means[t - 1]
    V_prev = belief.covs[t - 1]
    m1 = belief.means[t][0]
    v1 = belief.covs[t][0, 0]
    c1 = belief.cross[t - 1][:, 0]
    second_prev = V_prev + np.outer(m_prev, m_prev)
    coef_second = coef_cov + np.outer(coef_mean, coef_mean)
    val = (
        v1
        + m1 * m1
        - 2.0 * coef_mean @ (c1 + m_prev * m1)
        + float(np.sum(coef_second * second_prev))
    )
    return float(max(val, 0.0))


def ar_step_square_errors(
    belief: ChainBelief, coef_means: np.ndarray, coef_covs: np.ndarray
) -> np.ndarray:
    """Vectorized E[(z1_t - c_t' z_{t-1})^2] for t = 1..T.

    coef_means/coef_covs hold the per-step coefficient moments aligned so
    that row t belongs to the transition into node t (row 0 unused).
    """
    m_prev = belief.means[:-1]
    V_prev = belief.covs[:-1]
    m1 = belief.means[1:, 0]
    v1 = belief.covs[1:, 0, 0]
    c1 = belief.cross[:, :, 0]
    cm = coef_means[1:]
    second_prev = V_prev + m_prev[:, :, None] * m_prev[:, None, :]
    coef_second = coef_covs[1:] + cm[:, :, None] * cm[:, None, :]
    vals = (
        v1
        + m1 * m1
        - 2.0 * np.einsum("ti,ti->t", cm, c1 + m_prev * m1[:, None])
        + np.einsum("tij,tij->t", coef_second, second_prev)
    )
    return np.maximum(vals, 0.0)
