"""Acoustic context classification by approximate Bayesian model comparison.

A bank of candidate noise models is scored per frame; each model's free
energy acts as its negative log evidence and is combined with a forward
message from the Dirichlet-smoothed context chain. Two scoring regimes are
supported: frames that contain the noise signal directly are scored by the
observed-signal AR fit, frames that mix speech and noise run the coupled
engine once per clamped model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .armodels import ArParams
from .dists import Categorical, DirichletCols, Gamma, Gaussian
from .infer import (
    ArObservationModel,
    CoupledModelSpec,
    InferenceError,
    VmpSchedule,
    fit_ar_observed,
    infer_frame,
)

TransitionPosterior = DirichletCols

# prior widths for bank entries built from known context processes; tuned
# once against the classification gate and then frozen
CONTEXT_COEF_VAR = 0.01
CONTEXT_PRECISION_SHAPE = 100.0   # relative sd 10% around the context precision
WEAK_COEF_VAR = 1.0
WEAK_PRECISION = Gamma(1.0, 1.0)


class ContextClassificationError(RuntimeError):
    """Every model in the bank failed to score the frame."""


@dataclass(frozen=True)
class ContextModel:
    """One bank entry: priors of the noise channel under this context."""

    name: str
    coef_prior: Optional[Gaussian]
    precision_prior: Gamma
    is_context: bool = True

    @property
    def order(self) -> int:
        return 0 if self.coef_prior is None else self.coef_prior.dim

    @property
    def observation_model(self) -> ArObservationModel:
        return ArObservationModel(self.coef_prior, self.precision_prior)


@dataclass(frozen=True)
class ContextBank:
    models: tuple[ContextModel, ...]

    def __post_init__(self):
        if len(self.models) < 1:
            raise ValueError("bank must contain at least one model")

    @property
    def n(self) -> int:
        return len(self.models)

    @property
    def context_flags(self) -> np.ndarray:
        return np.array([m.is_context for m in self.models])

    def uniform_belief(self) -> Categorical:
        return Categorical(np.full(self.n, 1.0 / self.n))

    def flat_transition(self) -> TransitionPosterior:
        return DirichletCols(np.ones((self.n, self.n)))


def bank_from_processes(
    processes: tuple[ArParams, ...],
    include_extras: bool = True,
    coef_var: float = CONTEXT_COEF_VAR,
    precision_shape: float = CONTEXT_PRECISION_SHAPE,
) -> ContextBank:
    """Informative bank entries centered on known context processes, plus
    the weakly informative fifth-order and white catch-all models."""
    models = []
    for i, p in enumerate(processes):
        models.append(
            ContextModel(
                name=f"context-{i + 1} (ar{p.order})",
                coef_prior=Gaussian(p.coefficients, coef_var * np.eye(p.order)),
                precision_prior=Gamma(precision_shape, precision_shape / p.precision),
            )
        )
    if include_extras:
        models.append(
            ContextModel(
                name="catch-all ar5",
                coef_prior=Gaussian(np.zeros(5), WEAK_COEF_VAR * np.eye(5)),
                precision_prior=WEAK_PRECISION,
                is_context=False,
            )
        )
        models.append(
            ContextModel(
                name="catch-all white",
                coef_prior=None,
                precision_prior=WEAK_PRECISION,
                is_context=False,
            )
        )
    return ContextBank(tuple(models))


@dataclass
class ContextBelief:
    posterior: Categorical
    bfe_scores: np.ndarray
    failed: np.ndarray

    @property
    def map_index(self) -> int:
        return map_context(self.posterior)


def forward_message(prev_belief: Categorical, trans: TransitionPosterior) -> Categorical:
    """Predictive context distribution through the mean transition matrix."""
    if prev_belief.n != trans.n:
        raise ValueError("belief and transition posterior sizes differ")
    probs = trans.mean_matrix() @ prev_belief.probs
    total = probs.sum()
    if not total > 0:
        raise ValueError("forward message has zero mass")
    return Categorical(probs / total)


def map_context(belief: Categorical) -> int:
    """Index of the most probable entry; ties resolve to the lowest index."""
    return int(np.argmax(belief.probs))


def update_transition(
    trans: TransitionPosterior, belief_cur: Categorical, belief_prev: Categorical
) -> TransitionPosterior:
    """Conjugate count accumulation with soft responsibilities."""
    return DirichletCols(trans.alphas + np.outer(belief_cur.probs, belief_prev.probs))


def classify_frame(
    frame: np.ndarray,
    bank: ContextBank,
    prev_belief: Categorical,
    trans: TransitionPosterior,
    scorer: Callable[[np.ndarray, int], float],
) -> ContextBelief:
    """Combine the forward message with per-model evidence approximations.

    ``scorer(frame, model_index)`` must return the model's free energy; a
    model whose scorer raises :class:`InferenceError` is flagged and drops
    out of the posterior. Scores may spread over thousands of nats; all
    combination happens in the log domain.
    """
    fwd = forward_message(prev_belief, trans)
    scores = np.full(bank.n, np.inf)
    failed = np.zeros(bank.n, dtype=bool)
    for i in range(bank.n):
        try:
            scores[i] = float(scorer(frame, i))
        except InferenceError:
            failed[i] = True
    if failed.all():
        raise ContextClassificationError("all bank models failed on this frame")
    with np.errstate(divide="ignore"):
        log_post = np.log(fwd.probs) - scores
    log_post[failed] = -np.inf
    log_post -= logsumexp(log_post[~failed])
    probs = np.exp(log_post)
    probs[failed] = 0.0
    probs /= probs.sum()
    return ContextBelief(Categorical(probs), scores, failed)


def noise_only_scorer(bank: ContextBank, prev_tail: Optional[np.ndarray] = None):
    """Scorer for frames that contain the noise signal directly.

    ``prev_tail`` holds the samples preceding the frame (oldest last); when
    present each model conditions on its own order's slice, which carries
    the noise state across frames.
    """

    def score(frame: np.ndarray, index: int) -> float:
        model = bank.models[index]
        pre = None
        if prev_tail is not None and model.order > 0:
            if prev_tail.size < model.order:
                raise InferenceError("carried tail shorter than the model order")
            pre = prev_tail[-model.order :][::-1].copy()
        return fit_ar_observed(frame, model.observation_model, prewindow=pre).free_energy

    return score


@dataclass
class CoupledCarry:
    """Speech-side continuation plus per-model noise windows."""

    speech_spec: CoupledModelSpec
    noise_states: list[Optional[Gaussian]]


def coupled_scorer(
    bank: ContextBank,
    base_spec: CoupledModelSpec,
    carry: Optional[CoupledCarry] = None,
    schedule: VmpSchedule | None = None,
    posteriors_out: Optional[list] = None,
):
    """Scorer that runs the coupled engine once per clamped bank model.

    Bank entries of order zero cannot drive the coupled engine and are
    rejected at scorer construction. When ``posteriors_out`` is given it is
    filled with the per-model posteriors (None for failed models).
    """
    if any(m.order == 0 for m in bank.models):
        raise ValueError("coupled scoring requires AR models of order >= 1")
    if posteriors_out is not None:
        posteriors_out.clear()
        posteriors_out.extend([None] * bank.n)

    def score(frame: np.ndarray, index: int) -> float:
        model = bank.models[index]
        spec = carry.speech_spec if carry is not None else base_spec
        kwargs = dict(
            noise_order=model.order,
            prior_noise_coefs=model.coef_prior,
            prior_noise_precision=model.precision_prior,
            prior_noise_state=None,
        )
        if carry is not None and carry.noise_states[index] is not None:
            kwargs["prior_noise_state"] = carry.noise_states[index]
        spec = replace(spec, **kwargs)
        post = infer_frame(frame, spec, schedule)
        if posteriors_out is not None:
            posteriors_out[index] = post
        return post.bfe

    return score
