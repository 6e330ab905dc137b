"""Evidence scoring of AR models on a fully observed sample frame.

When a frame contains the modeled signal directly, the window states are
known and only the coefficients, the innovation precision, and (for the
first frame) the samples preceding the frame remain latent. The mean-field
stationary point is found by coordinate updates and scored by its free
energy, which approximates the negative log evidence of the model.

An order-zero model (no coefficients) is handled exactly: its free energy
equals the closed-form negative log marginal likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from ..dists import Gamma, Gaussian, gamma_kl, gaussian_kl
from .engine import LOG_2PI, InferenceError


@dataclass(frozen=True)
class ArObservationModel:
    """AR model of an observed signal: coefficient and precision priors.

    ``coef_prior`` is None for the order-zero (white) model.
    """

    coef_prior: Optional[Gaussian]
    precision_prior: Gamma

    @property
    def order(self) -> int:
        return 0 if self.coef_prior is None else self.coef_prior.dim


@dataclass
class ArObservedFit:
    """Mean-field fit of one observed frame under one AR model."""

    coefs: Optional[Gaussian]
    precision: Gamma
    prewindow: Optional[Gaussian]
    free_energy: float
    n_iterations: int


def _white_noise_fit(x: np.ndarray, model: ArObservationModel) -> ArObservedFit:
    W = x.shape[0]
    a0, b0 = model.precision_prior.shape, model.precision_prior.rate
    a, b = a0 + W / 2.0, b0 + 0.5 * float(x @ x)
    # exact: -ln integral of the likelihood against the precision prior
    neg_log_evidence = float(
        0.5 * W * LOG_2PI - a0 * np.log(b0) + gammaln(a0) + a * np.log(b) - gammaln(a)
    )
    return ArObservedFit(None, Gamma(a, b), None, neg_log_evidence, 0)


def fit_ar_observed(
    x,
    model: ArObservationModel,
    prewindow=None,
    max_iterations: int = 50,
    tolerance: float = 1e-9,
) -> ArObservedFit:
    """Score ``x`` under ``model``; ``prewindow`` holds the samples before
    the frame (newest first) when they are known from a preceding frame.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or not np.isfinite(x).all():
        raise InferenceError("frame must be a finite 1-D sample vector")
    if model.order == 0:
        return _white_noise_fit(x, model)
    W = x.shape[0]
    N = model.order
    if W <= N:
        raise InferenceError(f"frame of length {W} too short for order {N}")

    latent_pre = prewindow is None
    if latent_pre:
        pre_prior = Gaussian(np.zeros(N), np.eye(N))
        m_w, V_w = pre_prior.mean.copy(), pre_prior.cov.copy()
    else:
        pre = np.asarray(prewindow, dtype=float)
        if pre.shape != (N,):
            raise InferenceError("prewindow length must equal the model order")
        m_w, V_w = pre, np.zeros((N, N))

    # regressor r_t = (x[t-1], ..., x[t-N]); entries with negative index come
    # from the prewindow via the selector matrix of that step
    base_reg = np.zeros((W, N))
    selectors: list[Optional[np.ndarray]] = []
    for t in range(W):
        sel = np.zeros((N, N))
        for j in range(N):
            src = t - 1 - j
            if src >= 0:
                base_reg[t, j] = x[src]
            else:
                sel[j, -src - 1] = 1.0
        selectors.append(sel if sel.any() else None)

    def regressor_moments(m_w, V_w):
        means = base_reg.copy()
        outer_sum = np.zeros((N, N))
        xr_sum = np.zeros(N)
        for t in range(W):
            sel = selectors[t]
            if sel is not None:
                means[t] += sel @ m_w
                outer_sum += sel @ V_w @ sel.T
            outer_sum += np.outer(means[t], means[t])
            xr_sum += x[t] * means[t]
        return means, outer_sum, xr_sum

    q_zeta = model.coef_prior
    q_tau = Gamma(1.0, 1.0)
    prior_prec = model.coef_prior.precision
    prior_pm = model.coef_prior.precision_mean
    pre_prec = np.linalg.inv(pre_prior.cov) if latent_pre else None

    prev_f = np.inf
    f = np.inf
    it = 0
    for it in range(1, max_iterations + 1):
        _, outer_sum, xr_sum = regressor_moments(m_w, V_w)
        tau = q_tau.mean
        q_zeta = Gaussian.from_info(prior_prec + tau * outer_sum, prior_pm + tau * xr_sum)
        zm = q_zeta.mean
        z2 = q_zeta.cov + np.outer(zm, zm)

        if latent_pre:
            lam = np.zeros((N, N))
            eta = np.zeros(N)
            for t in range(W):
                sel = selectors[t]
                if sel is None:
                    continue
                lam += tau * sel.T @ z2 @ sel
                eta += tau * sel.T @ (zm * x[t] - z2 @ base_reg[t])
            post = Gaussian.from_info(pre_prec + lam, eta)
            m_w, V_w = post.mean, post.cov

        _, outer_sum, xr_sum = regressor_moments(m_w, V_w)
        sq_sum = float(x @ x) - 2.0 * float(zm @ xr_sum) + float(np.sum(z2 * outer_sum))
        sq_sum = max(sq_sum, 0.0)
        q_tau = Gamma(
            model.precision_prior.shape + W / 2.0, model.precision_prior.rate + 0.5 * sq_sum
        )

        f = 0.5 * W * (LOG_2PI - q_tau.mean_log) + 0.5 * q_tau.mean * sq_sum
        f += gaussian_kl(q_zeta, model.coef_prior)
        f += gamma_kl(q_tau, model.precision_prior)
        if latent_pre:
            f += gaussian_kl(Gaussian(m_w, V_w), pre_prior)
        if not np.isfinite(f):
            raise InferenceError("free energy became non-finite", iteration=it)
        if abs(prev_f - f) < tolerance:
            break
        prev_f = f

    pre_post = Gaussian(m_w, V_w) if latent_pre else None
    return ArObservedFit(q_zeta, q_tau, pre_post, float(f), it)
