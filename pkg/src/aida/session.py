"""Full processing loop of one listening session.

Each frame is classified against the context bank, separated under the
winning model, and rendered to the output signal with that context's
current gains. Binary appraisals grow the context's preference dataset and
trigger a new gain proposal. Every state mutation is appended to a JSON
lines event log; replaying a log reconstructs the session exactly because
all randomness is derived from the session seed and event order.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .agent import (
    CandidateGrid,
    GoalPrior,
    efe_field,
    scheduled_kernel_update,
    select_proposal,
)
from .armodels import DEFAULT_CONTEXT_PROCESSES, ArParams, simulate_tvar
from .context import (
    ContextBank,
    CoupledCarry,
    bank_from_processes,
    classify_frame,
    coupled_scorer,
    map_context,
    noise_only_scorer,
    update_transition,
)
from .dists import Categorical, Gamma, Gaussian, derive_rng
from .gpc import AppraisalDataset, KernelParams
from .infer import CoupledModelSpec, InferenceError, VmpSchedule, continue_spec, infer_frame

EVENT_SCHEMA_VERSION = 1
ENVIRONMENTS = ("synthetic", "table1")

SYNTHETIC_PROCESSES = (
    ArParams(np.array([1.3576, -0.9216]), 1.0 / 0.3),  # narrowband hum
    ArParams(np.array([0.3]), 1.0),                    # broadband rumble
)


def segment_index(t: int, window: int) -> int:
    """Segment counter: samples 1..window map to segment 1."""
    if t < 1 or window < 1:
        raise ValueError("sample index and window must be positive")
    return -(-t // window)


def ha_output(speech_means, noise_means, gains) -> np.ndarray:
    """Weighted recombination of the separated sources."""
    speech_means = np.asarray(speech_means, dtype=float)
    noise_means = np.asarray(noise_means, dtype=float)
    if speech_means.shape != noise_means.shape:
        raise ValueError("source estimates must have equal length")
    return gains[0] * speech_means + gains[1] * noise_means


@dataclass(frozen=True)
class SessionConfig:
    environment: str = "synthetic"
    seed: int = 0
    frame_len: int = 100
    goal_p: float = 0.8
    grid_bounds: tuple = ((0.0, 1.0), (0.0, 1.0))
    grid_resolution: tuple = (21, 21)
    initial_gains: tuple = (1.0, 1.0)
    hyper_period: int = 5
    max_iterations: int = 10
    sample_rate: int = 8000

    def __post_init__(self):
        if self.environment not in ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.environment!r}")

    @property
    def grid(self) -> CandidateGrid:
        return CandidateGrid(self.grid_bounds, self.grid_resolution)

    @property
    def goal(self) -> GoalPrior:
        return GoalPrior(self.goal_p)


class Environment:
    """Deterministic frame generator for one session."""

    def __init__(self, config: SessionConfig):
        self.config = config
        self.rng = derive_rng(config.seed, 101)
        self.coupled = config.environment == "synthetic"
        if self.coupled:
            self.processes = SYNTHETIC_PROCESSES
            self.stay_prob = 0.94
        else:
            self.processes = DEFAULT_CONTEXT_PROCESSES
            self.stay_prob = 0.9
        self.n_contexts = len(self.processes)
        self.label = int(self.rng.integers(self.n_contexts))
        self.max_order = max(p.order for p in self.processes)
        self.noise_history = self.rng.standard_normal(self.max_order)
        if self.coupled:
            self.speech_coefs = None
            self.speech_state = None

    def _advance_label(self):
        if self.rng.random() > self.stay_prob:
            others = [i for i in range(self.n_contexts) if i != self.label]
            self.label = int(self.rng.choice(others))

    def _noise_frame(self) -> np.ndarray:
        params = self.processes[self.label]
        sd = 1.0 / np.sqrt(params.precision)
        out = np.empty(self.config.frame_len)
        hist = self.noise_history
        for t in range(self.config.frame_len):
            new = params.coefficients @ hist[: params.order] + sd * self.rng.standard_normal()
            out[t] = new
            hist[1:] = hist[:-1]
            hist[0] = new
        return out

    def _speech_frame(self) -> np.ndarray:
        # time-varying filter continued across frames; restarted from the
        # walk prior whenever the coefficient path goes unstable
        order, walk_sd, inno_sd = 4, np.sqrt(1e-3), 1.0 / np.sqrt(4.0)
        if self.speech_coefs is None:
            traj = simulate_tvar(order, 1e-3, 4.0, self.config.frame_len, self.rng)
            self.speech_coefs = traj.coefs[-1]
            self.speech_state = traj.states[-1]
            return traj.signal
        out = np.empty(self.config.frame_len)
        coefs, state = self.speech_coefs, self.speech_state
        from .armodels import STABILITY_MARGIN, spectral_radius

        for t in range(self.config.frame_len):
            for _ in range(100):
                cand = coefs + walk_sd * self.rng.standard_normal(order)
                if spectral_radius(cand) < STABILITY_MARGIN:
                    coefs = cand
                    break
            else:
                coefs = np.zeros(order)
            new = coefs @ state + inno_sd * self.rng.standard_normal()
            state = np.concatenate([[new], state[:-1]])
            out[t] = new
        self.speech_coefs, self.speech_state = coefs, state
        return out

    def next_frame(self) -> tuple[np.ndarray, int]:
        self._advance_label()
        noise = self._noise_frame()
        if self.coupled:
            return self._speech_frame() + noise, self.label
        return noise, self.label


@dataclass
class ContextAgentState:
    gains: np.ndarray
    dataset: AppraisalDataset
    params: KernelParams
    appraisal_count: int = 0


@dataclass
class FrameResult:
    frame_index: int
    belief: np.ndarray
    bfe_scores: np.ndarray
    map_index: int
    x: np.ndarray
    speech_means: np.ndarray
    noise_means: np.ndarray
    output: np.ndarray
    gains: np.ndarray
    true_label: Optional[int] = None
    degraded: bool = False


class EventLog:
    """Append-only JSON lines log with gapless sequence numbers."""

    def __init__(self, path: Optional[Path]):
        self.path = Path(path) if path is not None else None
        self.seq = 0
        self._fh = open(self.path, "a", encoding="utf-8") if self.path else None

    def append(self, kind: str, payload: dict, durable: bool = False) -> dict:
        self.seq += 1
        event = {
            "seq": self.seq,
            "kind": kind,
            "ts": time.time(),
            "schema_version": EVENT_SCHEMA_VERSION,
            "payload": payload,
        }
        if self._fh is not None:
            self._fh.write(json.dumps(event) + "\n")
            self._fh.flush()
            if durable:
                os.fsync(self._fh.fileno())
        return event

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class SessionError(RuntimeError):
    pass


class Session:
    """Single-writer session state; all mutations go through
    :meth:`process_next_frame` and :meth:`handle_appraisal`."""

    def __init__(self, config: SessionConfig, log_path: Optional[Path] = None):
        self.config = config
        self.env = Environment(config)
        if config.environment == "synthetic":
            self.bank = bank_from_processes(SYNTHETIC_PROCESSES, include_extras=False)
        else:
            self.bank = bank_from_processes(DEFAULT_CONTEXT_PROCESSES, include_extras=True)
        self.belief: Categorical = self.bank.uniform_belief()
        self.trans = self.bank.flat_transition()
        self.contexts = [
            ContextAgentState(
                gains=np.asarray(config.initial_gains, dtype=float),
                dataset=AppraisalDataset.empty(2),
                params=KernelParams(0.5, 0.5),
            )
            for _ in range(self.bank.n)
        ]
        self.frame_index = 0
        self.last_result: Optional[FrameResult] = None
        self.prev_tail: Optional[np.ndarray] = None
        self.speech_spec = self._fresh_speech_spec()
        self.noise_carries: list = [None] * self.bank.n
        self.proposal_counter = 0
        self.log = EventLog(log_path)
        self.log.append("session_created", {"config": asdict(config)})

    def _fresh_speech_spec(self) -> CoupledModelSpec:
        # speech order must cover the largest bank model so every clamped
        # separation spec stays valid
        order = max(4, max(m.order for m in self.bank.models))
        return CoupledModelSpec(
            speech_order=order,
            noise_order=1,
            prior_speech_coefs=Gaussian(np.zeros(order), np.eye(order)),
            prior_speech_precision=Gamma(1.0, 1.0),
            prior_noise_coefs=Gaussian(np.zeros(1), np.eye(1)),
            prior_noise_precision=Gamma(1.0, 1.0),
            coef_walk_var=1e-3,
            frame_len=self.config.frame_len,
        )

    @property
    def map_index(self) -> Optional[int]:
        return self.last_result.map_index if self.last_result else None

    def _schedule(self) -> VmpSchedule:
        return VmpSchedule(max_iterations=self.config.max_iterations, bfe_tolerance=1e-5)

    def process_next_frame(self) -> FrameResult:
        x, true_label = self.env.next_frame()
        self.frame_index += 1
        prev_map = self.last_result.map_index if self.last_result else None
        degraded = False
        if self.env.coupled:
            posteriors: list = []
            scorer = coupled_scorer(
                self.bank,
                self.speech_spec,
                carry=CoupledCarry(self.speech_spec, self.noise_carries),
                schedule=self._schedule(),
                posteriors_out=posteriors,
            )
        else:
            scorer = noise_only_scorer(self.bank, self.prev_tail)
            posteriors = []
        try:
            ctx_belief = classify_frame(x, self.bank, self.belief, self.trans, scorer)
        except Exception:
            # keep the previous belief and gains; mark the frame degraded
            degraded = True
            gains = self._current_gains()
            zeros = np.zeros_like(x)
            result = FrameResult(
                self.frame_index,
                self.belief.probs.copy(),
                np.full(self.bank.n, np.nan),
                map_context(self.belief),
                x,
                zeros,
                zeros,
                zeros,
                gains,
                true_label,
                degraded=True,
            )
            self.last_result = result
            self.log.append("frame_processed", {"k": self.frame_index, "degraded": True})
            return result

        new_map = ctx_belief.map_index
        if self.env.coupled and posteriors[new_map] is not None:
            post = posteriors[new_map]
            for i, p in enumerate(posteriors):
                if p is not None:
                    self.noise_carries[i] = p.noise_states[-1]
            self.speech_spec = continue_spec(
                replace(
                    self.speech_spec,
                    noise_order=self.bank.models[new_map].order,
                    prior_noise_coefs=self.bank.models[new_map].coef_prior,
                    prior_noise_precision=self.bank.models[new_map].precision_prior,
                    prior_noise_state=None,
                ),
                post,
            )
        else:
            model = self.bank.models[new_map]
            order = max(model.order, 1)
            spec = replace(
                self.speech_spec,
                noise_order=order,
                prior_noise_coefs=model.coef_prior or Gaussian(np.zeros(order), np.eye(order)),
                prior_noise_precision=model.precision_prior,
                prior_noise_state=None,
            )
            try:
                post = infer_frame(x, spec, self._schedule())
            except InferenceError:
                post = None
                degraded = True

        gains = self.contexts[new_map].gains
        if post is not None:
            speech_means = post.speech_means
            noise_means = post.noise_means
        else:
            speech_means = np.zeros_like(x)
            noise_means = x.copy()
        output = ha_output(speech_means, noise_means, gains)

        self.trans = update_transition(self.trans, ctx_belief.posterior, self.belief)
        self.belief = ctx_belief.posterior
        self.prev_tail = x[-self.env.max_order :].copy() if x.size else None

        result = FrameResult(
            self.frame_index,
            ctx_belief.posterior.probs.copy(),
            ctx_belief.bfe_scores.copy(),
            new_map,
            x,
            speech_means,
            noise_means,
            output,
            gains.copy(),
            true_label,
            degraded,
        )
        self.last_result = result
        self.log.append(
            "frame_processed",
            {
                "k": self.frame_index,
                "map": new_map,
                "belief": result.belief.tolist(),
                "bfe": [None if not np.isfinite(v) else v for v in result.bfe_scores],
                "degraded": degraded,
            },
        )
        if prev_map is not None and prev_map != new_map:
            self.log.append(
                "context_switch", {"k": self.frame_index, "from": prev_map, "to": new_map}
            )
        return result

    def _current_gains(self) -> np.ndarray:
        idx = self.map_index if self.map_index is not None else 0
        return self.contexts[idx].gains.copy()

    def handle_appraisal(self, r: Optional[int]) -> Optional[np.ndarray]:
        """Record an appraisal for the active context and propose new gains.

        A missing appraisal only leaves a log entry. The appraisal is
        attributed to the gains active when it arrived, under the current
        MAP context.
        """
        if self.last_result is None:
            raise SessionError("no frame has been processed yet")
        if r is None:
            self.log.append("appraisal", {"r": None}, durable=True)
            return None
        if r not in (0, 1):
            raise ValueError("appraisal must be 0, 1, or missing")
        ctx_idx = self.last_result.map_index
        ctx = self.contexts[ctx_idx]
        ctx.dataset = ctx.dataset.appended(ctx.gains.copy(), int(r))
        ctx.appraisal_count += 1
        self.log.append(
            "appraisal",
            {"r": int(r), "context": ctx_idx, "gains": ctx.gains.tolist()},
            durable=True,
        )
        field = efe_field(ctx.dataset, ctx.params, self.config.grid, self.config.goal)
        self.proposal_counter += 1
        rng = derive_rng(self.config.seed, 202, self.proposal_counter)
        proposal = select_proposal(field, rng, ctx.dataset.n + 1)
        ctx.gains = proposal.copy()
        self.log.append(
            "proposal", {"context": ctx_idx, "gains": proposal.tolist()}
        )
        if ctx.appraisal_count % self.config.hyper_period == 0:
            new_params = scheduled_kernel_update(ctx.dataset, ctx.params)
            if new_params != ctx.params:
                ctx.params = new_params
                self.log.append(
                    "hyperparam_update",
                    {"context": ctx_idx, "sigma": new_params.sigma, "length": new_params.length},
                )
        return proposal

    def efe_snapshot(self, resolution: int) -> dict:
        """Field of the MAP context's classifier on an on-demand grid."""
        idx = self.map_index if self.map_index is not None else 0
        ctx = self.contexts[idx]
        grid = CandidateGrid(self.config.grid_bounds, (resolution, resolution))
        field = efe_field(ctx.dataset, ctx.params, grid, self.config.goal)
        return {
            "resolution": resolution,
            "bounds": [list(b) for b in self.config.grid_bounds],
            "efe": field.efe.tolist(),
            "utility_drive": field.utility_drive.tolist(),
            "info_gain": field.info_gain.tolist(),
            "gains": ctx.gains.tolist(),
            "context": idx,
        }

    def snapshot(self) -> dict:
        """Plain-value state image used for replay equality checks."""
        return {
            "frame_index": self.frame_index,
            "belief": self.belief.probs.tolist(),
            "trans_alphas": self.trans.alphas.tolist(),
            "map_index": self.map_index,
            "proposal_counter": self.proposal_counter,
            "contexts": [
                {
                    "gains": c.gains.tolist(),
                    "queries": c.dataset.queries.tolist(),
                    "responses": c.dataset.responses.tolist(),
                    "sigma": c.params.sigma,
                    "length": c.params.length,
                    "appraisals": c.appraisal_count,
                }
                for c in self.contexts
            ],
            "last_output": self.last_result.output.tolist() if self.last_result else None,
        }

    def close(self):
        self.log.close()


def replay_session(log_path) -> Session:
    """Rebuild a session by replaying its command events.

    Only the commands (creation, frame advances, appraisals) drive state;
    derived events are regenerated because the pipeline is deterministic
    in the session seed.
    """
    events = []
    with open(log_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                events.append(json.loads(line))
    if not events or events[0]["kind"] != "session_created":
        raise SessionError("log does not start with a session_created event")
    seqs = [e["seq"] for e in events]
    if seqs != list(range(1, len(events) + 1)):
        raise SessionError("event log sequence numbers are not gapless")
    cfg_payload = dict(events[0]["payload"]["config"])
    cfg_payload["grid_bounds"] = tuple(tuple(b) for b in cfg_payload["grid_bounds"])
    cfg_payload["grid_resolution"] = tuple(cfg_payload["grid_resolution"])
    cfg_payload["initial_gains"] = tuple(cfg_payload["initial_gains"])
    config = SessionConfig(**cfg_payload)
    session = Session(config, log_path=None)
    for event in events[1:]:
        kind = event["kind"]
        if kind == "frame_processed":
            session.process_next_frame()
        elif kind == "appraisal":
            session.handle_appraisal(event["payload"]["r"])
    return session
