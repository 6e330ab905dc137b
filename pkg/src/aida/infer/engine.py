"""Hybrid inference for the coupled speech/noise model of one frame.

Both latent sources follow AR dynamics over window states; the speech
coefficients may drift as a Gaussian random walk. The observation ties the
two newest entries together additively, which makes the graph loopy: the
additive node is handled by Gaussian message passing with cavity division,
all remaining factors by variational updates with the chains kept joint.

Iteration sweep: noise chain, speech chain, coefficient path, precisions.
The Bethe free energy of the current belief set is recorded per sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..armodels import companion
from ..dists import Gamma, Gaussian, gamma_kl, gaussian_kl
from .chains import (
    ChainBelief,
    GaussianChain,
    ar_step_square_error,
    ar_step_square_errors,
    chain_entropy,
    gauss_entropy,
    gaussian_energy,
    smooth_chain,
    transition_energy_full,
)

LOG_2PI = float(np.log(2.0 * np.pi))


class InferenceError(RuntimeError):
    """Inference aborted; carries the sweep index where it happened."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


def _default_state_prior(dim: int) -> Gaussian:
    return Gaussian(np.zeros(dim), np.eye(dim))


@dataclass(frozen=True)
class CoupledModelSpec:
    """Model structure and priors for one frame of coupled inference."""

    speech_order: int
    noise_order: int
    prior_speech_coefs: Gaussian
    prior_speech_precision: Gamma
    prior_noise_coefs: Gaussian
    prior_noise_precision: Gamma
    coef_walk_var: float
    frame_len: int
    prior_speech_state: Optional[Gaussian] = None
    prior_noise_state: Optional[Gaussian] = None

    def __post_init__(self):
        if not self.speech_order >= self.noise_order >= 1:
            raise ValueError("orders must satisfy speech_order >= noise_order >= 1")
        if self.coef_walk_var < 0:
            raise ValueError("coefficient walk variance must be nonnegative")
        if self.prior_speech_coefs.dim != self.speech_order:
            raise ValueError("speech coefficient prior has wrong dimension")
        if self.prior_noise_coefs.dim != self.noise_order:
            raise ValueError("noise coefficient prior has wrong dimension")
        if self.prior_speech_state is None:
            object.__setattr__(self, "prior_speech_state", _default_state_prior(self.speech_order))
        if self.prior_noise_state is None:
            object.__setattr__(self, "prior_noise_state", _default_state_prior(self.noise_order))
        if self.prior_speech_state.dim != self.speech_order:
            raise ValueError("speech state prior has wrong dimension")
        if self.prior_noise_state.dim != self.noise_order:
            raise ValueError("noise state prior has wrong dimension")

    @property
    def static_speech_coefs(self) -> bool:
        return self.coef_walk_var == 0.0


@dataclass(frozen=True)
class VmpSchedule:
    """Iteration controls.

    param_init selects the starting point of the precision factors:
    "neutral" starts them at unit mean, which is robust under vague
    high-mean priors; "prior" starts at the prior and keeps sweeps
    monotone when the priors are informative.
    """

    max_iterations: int = 25
    bfe_tolerance: float = 1e-6
    damping: float = 0.0
    param_init: str = "neutral"
    noise_chain_first: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("need at least one iteration")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if not self.bfe_tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.param_init not in ("neutral", "prior"):
            raise ValueError("param_init must be 'neutral' or 'prior'")


@dataclass
class Posteriors:
    """Variational marginals of one frame plus the free-energy trace."""

    speech_states: list[Gaussian]
    noise_states: list[Gaussian]
    speech_coefs: list[Gaussian]
    speech_precision: Gamma
    noise_coefs: Gaussian
    noise_precision: Gamma
    bfe_trace: np.ndarray
    _speech_belief: ChainBelief = field(repr=False, default=None)
    _noise_belief: ChainBelief = field(repr=False, default=None)
    _coef_belief: Optional[ChainBelief] = field(repr=False, default=None)
    _messages: tuple = field(repr=False, default=None)

    @property
    def speech_means(self) -> np.ndarray:
        """Posterior mean of the newest speech sample per step (length W)."""
        return self._speech_belief.means[1:, 0].copy()

    @property
    def noise_means(self) -> np.ndarray:
        return self._noise_belief.means[1:, 0].copy()

    @property
    def bfe(self) -> float:
        return float(self.bfe_trace[-1])


def vmp_message_ar(target, *, q_out=None, q_in=None, q_coefs=None, q_precision=None, pair=None):
    """Variational message from an AR transition factor toward one edge.

    The factor relates an outgoing window ``out`` to an incoming window
    ``in`` through coefficients and an innovation precision on the newest
    entry. ``pair`` may supply joint second moments
    ``(mean_in, cov_in, mean_out1, var_out1, cross_in_out1)`` when the state
    pair is kept joint; otherwise the factorized moments of q_out/q_in are
    used. Messages toward state edges are Gaussian (improper, information
    form), toward the coefficients Gaussian, toward the precision Gamma.
    """

    def pair_moments():
        if pair is not None:
            return pair
        m_in, V_in = q_in.mean, q_in.cov
        m1, v1 = q_out.mean[0], q_out.cov[0, 0]
        return m_in, V_in, m1, v1, np.zeros(m_in.shape[0])

    if target == "precision":
        m_in, V_in, m1, v1, cross = pair_moments()
        cm, cv = q_coefs.mean, q_coefs.cov
        second_in = V_in + np.outer(m_in, m_in)
        sq = (
            v1
            + m1 * m1
            - 2.0 * cm @ (cross + m_in * m1)
            + float(np.sum((cv + np.outer(cm, cm)) * second_in))
        )
        return Gamma(1.5, 0.5 * max(sq, 1e-300))
    if target == "coefficients":
        m_in, V_in, m1, v1, cross = pair_moments()
        g = q_precision.mean
        lam = g * (V_in + np.outer(m_in, m_in))
        eta = g * (cross + m_in * m1)
        return Gaussian.from_info(lam, eta)
    if target == "out":
        d = q_in.dim
        g = q_precision.mean
        lam = np.zeros((d, d))
        lam[0, 0] = g
        eta = np.zeros(d)
        eta[0] = g * float(q_coefs.mean @ q_in.mean)
        return Gaussian.from_info(lam, eta)
    if target == "in":
        g = q_precision.mean
        cm, cv = q_coefs.mean, q_coefs.cov
        lam = g * (cv + np.outer(cm, cm))
        eta = g * cm * q_out.mean[0]
        return Gaussian.from_info(lam, eta)
    raise ValueError(f"unknown target edge {target!r}")


def _scalar_obs_potentials(n_steps, dim, lam, eta):
    obs_prec = np.zeros((n_steps + 1, dim, dim))
    obs_pm = np.zeros((n_steps + 1, dim))
    obs_prec[1:, 0, 0] = lam
    obs_pm[1:, 0] = eta
    return obs_prec, obs_pm


class _FrameState:
    """Mutable belief set threaded through the iteration sweeps."""

    def __init__(self, x: np.ndarray, spec: CoupledModelSpec, param_init: str = "neutral"):
        W = x.shape[0]
        self.x = x
        self.spec = spec
        self.W = W
        # the neutral start avoids the degenerate fixed point where a vague
        # high-mean precision prior freezes a chain before it has seen any
        # evidence; priors still enter through the free energy
        if param_init == "prior":
            self.q_gamma = spec.prior_speech_precision
            self.q_tau = spec.prior_noise_precision
        else:
            self.q_gamma = Gamma(1.0, 1.0)
            self.q_tau = Gamma(1.0, 1.0)
        self.coef_means = np.tile(spec.prior_speech_coefs.mean, (W + 1, 1))
        self.coef_covs = np.tile(spec.prior_speech_coefs.cov, (W + 1, 1, 1))
        self.q_zeta = spec.prior_noise_coefs
        self.lam_to_speech = np.zeros(W)
        self.eta_to_speech = np.zeros(W)
        self.lam_to_noise = np.zeros(W)
        self.eta_to_noise = np.zeros(W)
        self.speech_belief: ChainBelief | None = None
        self.noise_belief: ChainBelief | None = None
        self.coef_belief: ChainBelief | None = None

    # -- chain updates -------------------------------------------------

    def smooth_speech(self):
        spec, W, M = self.spec, self.W, self.spec.speech_order
        g = self.q_gamma.mean
        trans = np.empty((W, M, M))
        corrections = np.empty((W, M, M))
        for t in range(W):
            trans[t] = companion(self.coef_means[t + 1]).matrix
            corrections[t] = g * self.coef_covs[t + 1]
        trans_cov = np.zeros((W, M, M))
        trans_cov[:, 0, 0] = 1.0 / g
        obs_prec, obs_pm = _scalar_obs_potentials(W, M, self.lam_to_speech, self.eta_to_speech)
        chain = GaussianChain(
            spec.prior_speech_state.mean,
            spec.prior_speech_state.cov,
            trans,
            trans_cov,
            obs_prec,
            obs_pm,
            corrections=corrections,
            scalar_obs=True,
        )
        self.speech_belief = smooth_chain(chain)

    def smooth_noise(self):
        spec, W, N = self.spec, self.W, self.spec.noise_order
        tau = self.q_tau.mean
        A = companion(self.q_zeta.mean).matrix
        trans = np.tile(A, (W, 1, 1))
        corrections = np.tile(tau * self.q_zeta.cov, (W, 1, 1))
        trans_cov = np.zeros((W, N, N))
        trans_cov[:, 0, 0] = 1.0 / tau
        obs_prec, obs_pm = _scalar_obs_potentials(W, N, self.lam_to_noise, self.eta_to_noise)
        chain = GaussianChain(
            spec.prior_noise_state.mean,
            spec.prior_noise_state.cov,
            trans,
            trans_cov,
            obs_prec,
            obs_pm,
            corrections=corrections,
            scalar_obs=True,
        )
        self.noise_belief = smooth_chain(chain)

    # -- additive observation node messages ------------------------------

    def _messages_from(self, belief: ChainBelief, lam_own, eta_own):
        v = belief.covs[1:, 0, 0]
        m = belief.means[1:, 0]
        lam_marg = 1.0 / np.maximum(v, 1e-300)
        eta_marg = m * lam_marg
        lam_cav = np.maximum(lam_marg - lam_own, 0.0)
        eta_cav = np.where(lam_cav > 1e-12, eta_marg - eta_own, 0.0)
        lam_cav = np.where(lam_cav > 1e-12, lam_cav, 0.0)
        lam_msg = lam_cav
        eta_msg = lam_cav * self.x - eta_cav
        return lam_msg, eta_msg

    def update_messages_to_noise(self, damping: float):
        lam, eta = self._messages_from(self.speech_belief, self.lam_to_speech, self.eta_to_speech)
        self.lam_to_noise = damping * self.lam_to_noise + (1 - damping) * lam
        self.eta_to_noise = damping * self.eta_to_noise + (1 - damping) * eta

    def update_messages_to_speech(self, damping: float):
        lam, eta = self._messages_from(self.noise_belief, self.lam_to_noise, self.eta_to_noise)
        self.lam_to_speech = damping * self.lam_to_speech + (1 - damping) * lam
        self.eta_to_speech = damping * self.eta_to_speech + (1 - damping) * eta

    # -- parameter updates ----------------------------------------------

    def update_speech_coefs(self):
        spec, W, M = self.spec, self.W, self.spec.speech_order
        g = self.q_gamma.mean
        belief = self.speech_belief
        m_prev = belief.means[:-1]
        second = belief.covs[:-1] + m_prev[:, :, None] * m_prev[:, None, :]
        lams = np.zeros((W + 1, M, M))
        etas = np.zeros((W + 1, M))
        lams[1:] = g * second
        etas[1:] = g * (belief.cross[:, :, 0] + m_prev * belief.means[1:, 0][:, None])
        if spec.static_speech_coefs:
            prec = spec.prior_speech_coefs.precision + lams.sum(axis=0)
            pm = spec.prior_speech_coefs.precision_mean + etas.sum(axis=0)
            post = Gaussian.from_info(prec, pm)
            self.coef_means = np.tile(post.mean, (W + 1, 1))
            self.coef_covs = np.tile(post.cov, (W + 1, 1, 1))
            self.coef_belief = None
            return
        chain = GaussianChain(
            spec.prior_speech_coefs.mean,
            spec.prior_speech_coefs.cov,
            np.tile(np.eye(M), (W, 1, 1)),
            np.tile(spec.coef_walk_var * np.eye(M), (W, 1, 1)),
            lams,
            etas,
        )
        self.coef_belief = smooth_chain(chain)
        self.coef_means = self.coef_belief.means
        self.coef_covs = self.coef_belief.covs

    def update_speech_precision(self):
        spec, W = self.spec, self.W
        sq = ar_step_square_errors(self.speech_belief, self.coef_means, self.coef_covs)
        rate = spec.prior_speech_precision.rate + 0.5 * sq.sum()
        self.q_gamma = Gamma(spec.prior_speech_precision.shape + W / 2.0, rate)

    def update_noise_coefs(self):
        spec, W = self.spec, self.W
        tau = self.q_tau.mean
        belief = self.noise_belief
        m_prev = belief.means[:-1]
        second = belief.covs[:-1] + m_prev[:, :, None] * m_prev[:, None, :]
        prec = spec.prior_noise_coefs.precision + tau * second.sum(0)
        pm = spec.prior_noise_coefs.precision_mean + tau * (
            belief.cross[:, :, 0] + m_prev * belief.means[1:, 0][:, None]
        ).sum(0)
        self.q_zeta = Gaussian.from_info(prec, pm)

    def update_noise_precision(self):
        spec, W = self.spec, self.W
        zm, zc = self.q_zeta.mean, self.q_zeta.cov
        sq = ar_step_square_errors(
            self.noise_belief,
            np.tile(zm, (W + 1, 1)),
            np.tile(zc, (W + 1, 1, 1)),
        )
        rate = spec.prior_noise_precision.rate + 0.5 * sq.sum()
        self.q_tau = Gamma(spec.prior_noise_precision.shape + W / 2.0, rate)

    # -- free energy ------------------------------------------------------

    def free_energy(self) -> float:
        spec, W = self.spec, self.W
        sb, nb = self.speech_belief, self.noise_belief
        g_mean = self.q_gamma.mean
        g_logmean = self.q_gamma.mean_log
        tau_mean = self.q_tau.mean
        tau_logmean = self.q_tau.mean_log

        f = gaussian_energy(
            sb.means[0], sb.covs[0], spec.prior_speech_state.mean, spec.prior_speech_state.cov
        )
        sq_s = ar_step_square_errors(sb, self.coef_means, self.coef_covs)
        f += 0.5 * (W * (LOG_2PI - g_logmean) + g_mean * sq_s.sum())
        f -= chain_entropy(sb, window_shift=True)

        f += gaussian_energy(
            nb.means[0], nb.covs[0], spec.prior_noise_state.mean, spec.prior_noise_state.cov
        )
        zm, zc = self.q_zeta.mean, self.q_zeta.cov
        sq_n = ar_step_square_errors(nb, np.tile(zm, (W + 1, 1)), np.tile(zc, (W + 1, 1, 1)))
        f += 0.5 * (W * (LOG_2PI - tau_logmean) + tau_mean * sq_n.sum())
        f -= chain_entropy(nb, window_shift=True)

        if spec.static_speech_coefs:
            q_theta = Gaussian(self.coef_means[0], self.coef_covs[0])
            f += gaussian_kl(q_theta, spec.prior_speech_coefs)
        else:
            cb = self.coef_belief
            M = spec.speech_order
            f += gaussian_energy(
                cb.means[0], cb.covs[0], spec.prior_speech_coefs.mean, spec.prior_speech_coefs.cov
            )
            w_var = spec.coef_walk_var
            diffs = cb.means[1:] - cb.means[:-1]
            spread_tr = (
                np.trace(cb.covs[1:], axis1=1, axis2=2)
                + np.trace(cb.covs[:-1], axis1=1, axis2=2)
                - 2.0 * np.trace(cb.cross, axis1=1, axis2=2)
            )
            f += 0.5 * (
                W * M * np.log(2 * np.pi * w_var)
                + ((diffs**2).sum() + spread_tr.sum()) / w_var
            )
            f -= chain_entropy(cb, window_shift=False)

        f += gamma_kl(self.q_gamma, spec.prior_speech_precision)
        f += gaussian_kl(self.q_zeta, spec.prior_noise_coefs)
        f += gamma_kl(self.q_tau, spec.prior_noise_precision)

        # additive-node overlap: both scalar marginals enter once and the
        # node belief (product of the two cavities on the constraint line)
        # is subtracted; all three coincide at a message fixed point
        lam_s = 1.0 / np.maximum(sb.covs[1:, 0, 0], 1e-300)
        lam_n = 1.0 / np.maximum(nb.covs[1:, 0, 0], 1e-300)
        cav_s = np.maximum(lam_s - self.lam_to_speech, 0.0)
        cav_n = np.maximum(lam_n - self.lam_to_noise, 0.0)
        lam_node = np.maximum(cav_s + cav_n, 1e-300)
        ent_const = 0.5 * (1.0 + LOG_2PI)
        f += float(
            np.sum(ent_const - 0.5 * np.log(lam_s))
            + np.sum(ent_const - 0.5 * np.log(lam_n))
            - np.sum(ent_const - 0.5 * np.log(lam_node))
        )
        return float(f)


def infer_frame(x, spec: CoupledModelSpec, schedule: VmpSchedule | None = None) -> Posteriors:
    """Run the iterative sweep on one frame and return the belief set.

    Deterministic given (x, spec, schedule). Raises
    :class:`InferenceError` when the free energy turns non-finite or the
    frame is too short for the model orders.
    """
    schedule = schedule or VmpSchedule()
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InferenceError("frame must be a 1-D sample vector")
    if not np.isfinite(x).all():
        raise InferenceError("frame contains non-finite samples")
    W = x.shape[0]
    if W < max(spec.speech_order, spec.noise_order) + 1:
        raise InferenceError(
            f"frame of length {W} is too short for orders "
            f"({spec.speech_order}, {spec.noise_order})"
        )

    state = _FrameState(x, spec, schedule.param_init)
    # message warm-up: propagate evidence once around the additive node so
    # the recorded sweeps start from an equilibrated message state
    if schedule.noise_chain_first:
        state.smooth_speech()
        state.update_messages_to_noise(0.0)
        state.smooth_noise()
        state.update_messages_to_speech(0.0)
        state.smooth_speech()
    else:
        state.smooth_noise()
        state.update_messages_to_speech(0.0)
        state.smooth_speech()
        state.update_messages_to_noise(0.0)
        state.smooth_noise()
    trace = []
    for it in range(schedule.max_iterations):
        if schedule.noise_chain_first:
            state.update_messages_to_noise(schedule.damping)
            state.smooth_noise()
            state.update_messages_to_speech(schedule.damping)
            state.smooth_speech()
        else:
            state.update_messages_to_speech(schedule.damping)
            state.smooth_speech()
            state.update_messages_to_noise(schedule.damping)
            state.smooth_noise()
        state.update_speech_coefs()
        state.update_speech_precision()
        state.update_noise_coefs()
        state.update_noise_precision()
        f = state.free_energy()
        if not np.isfinite(f):
            raise InferenceError("free energy became non-finite", iteration=it)
        trace.append(f)
        if it > 0 and abs(trace[-1] - trace[-2]) < schedule.bfe_tolerance:
            break

    sb, nb = state.speech_belief, state.noise_belief
    speech_states = [Gaussian(sb.means[t], sb.covs[t]) for t in range(W + 1)]
    noise_states = [Gaussian(nb.means[t], nb.covs[t]) for t in range(W + 1)]
    if spec.static_speech_coefs:
        shared = Gaussian(state.coef_means[0], state.coef_covs[0])
        speech_coefs = [shared] * (W + 1)
    else:
        speech_coefs = [
            Gaussian(state.coef_means[t], state.coef_covs[t]) for t in range(W + 1)
        ]
    return Posteriors(
        speech_states=speech_states,
        noise_states=noise_states,
        speech_coefs=speech_coefs,
        speech_precision=state.q_gamma,
        noise_coefs=state.q_zeta,
        noise_precision=state.q_tau,
        bfe_trace=np.asarray(trace),
        _speech_belief=sb,
        _noise_belief=nb,
        _coef_belief=state.coef_belief,
        _messages=(
            state.lam_to_speech.copy(),
            state.eta_to_speech.copy(),
            state.lam_to_noise.copy(),
            state.eta_to_noise.copy(),
        ),
    )


def bethe_free_energy(post: Posteriors, spec: CoupledModelSpec, x) -> float:
    """Free energy of an existing belief set under ``spec`` for frame ``x``.

    Matches the last trace entry when evaluated on the producing spec.
    """
    x = np.asarray(x, dtype=float)
    state = _FrameState(x, spec)
    state.speech_belief = post._speech_belief
    state.noise_belief = post._noise_belief
    state.coef_belief = post._coef_belief
    if post._messages is not None:
        (
            state.lam_to_speech,
            state.eta_to_speech,
            state.lam_to_noise,
            state.eta_to_noise,
        ) = post._messages
    state.coef_means = np.stack([g.mean for g in post.speech_coefs])
    state.coef_covs = np.stack([g.cov for g in post.speech_coefs])
    state.q_gamma = post.speech_precision
    state.q_zeta = post.noise_coefs
    state.q_tau = post.noise_precision
    return state.free_energy()


def continue_spec(
    spec: CoupledModelSpec, post: Posteriors, carry_noise_params: bool = False
) -> CoupledModelSpec:
    """Priors for the next frame: sequential updating of the static blocks.

    Speech coefficient and precision posteriors become the next priors and
    state chains restart from the last smoothed windows. Noise parameters
    are re-drawn from their context priors unless ``carry_noise_params``.
    """
    kwargs = dict(
        prior_speech_coefs=post.speech_coefs[-1],
        prior_speech_precision=post.speech_precision,
        prior_speech_state=post.speech_states[-1],
        prior_noise_state=post.noise_states[-1],
    )
    if carry_noise_params:
        kwargs.update(
            prior_noise_coefs=post.noise_coefs,
            prior_noise_precision=post.noise_precision,
        )
    return replace(spec, **kwargs)
