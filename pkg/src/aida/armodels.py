"""Autoregressive and time-varying autoregressive signal models.

Provides companion-matrix utilities, stability checks, data generation for
the verification experiments, and a flat binary dataset format.

Dataset file layout (``aida-dataset-v1``):
  * 4-byte little-endian uint32: byte length of the JSON header
  * UTF-8 JSON header: ``{"schema": ..., "meta": {...}, "arrays": [{"name",
    "offset", "count", "shape"}]}`` with offsets relative to the end of the
    header
  * concatenated little-endian float64 arrays
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dists import DegenerateDistributionError

STABILITY_MARGIN = 0.999
DATASET_SCHEMA = "aida-dataset-v1"


@dataclass(frozen=True)
class CompanionMatrix:
    """Transition matrix realizing an AR recursion plus a one-step shift."""

    coefficients: np.ndarray
    matrix: np.ndarray = field(init=False)

    def __post_init__(self):
        coeffs = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
        if coeffs.ndim != 1 or coeffs.size < 1:
            raise ValueError("coefficient vector must be nonempty")
        object.__setattr__(self, "coefficients", coeffs)
        m = coeffs.size
        mat = np.zeros((m, m))
        mat[0, :] = coeffs
        if m > 1:
            mat[1:, :-1] = np.eye(m - 1)
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    @property
    def order(self) -> int:
        return self.coefficients.size


def companion(coeffs) -> CompanionMatrix:
    """Companion matrix whose first row is the coefficient vector."""
    return CompanionMatrix(coeffs)


def spectral_radius(coeffs) -> float:
    return float(np.abs(np.linalg.eigvals(companion(coeffs).matrix)).max())


def is_stable(coeffs) -> bool:
    """True iff every companion eigenvalue has modulus strictly below 1."""
    return spectral_radius(coeffs) < 1.0


@dataclass(frozen=True)
class ArParams:
    """Stationary AR process: coefficients and innovation precision."""

    coefficients: np.ndarray
    precision: float

    def __post_init__(self):
        coeffs = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
        if coeffs.size < 1:
            raise ValueError("AR order must be at least 1")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coefficients", coeffs)
        if not self.precision > 0:
            raise DegenerateDistributionError("innovation precision must be positive")

    @property
    def order(self) -> int:
        return self.coefficients.size


@dataclass(frozen=True)
class TvarTrajectory:
    """Sampled path of a time-varying AR model.

    ``coefs[t]`` and ``states[t]`` hold the coefficient vector and the state
    window (newest sample first) at step ``t``; row 0 is the initial draw.
    """

    coefs: np.ndarray
    states: np.ndarray
    walk_var: float
    innovation_precision: float

    @property
    def signal(self) -> np.ndarray:
        """Scalar output path, one sample per transition."""
        return self.states[1:, 0].copy()


class UnstableProcessError(RuntimeError):
    def __init__(self, attempts: int):
        super().__init__(f"no stable trajectory found in {attempts} attempts")
        self.attempts = attempts


def simulate_ar(
    params: ArParams,
    n_steps: int,
    init: np.ndarray,
    rng: np.random.Generator,
    allow_unstable: bool = False,
) -> np.ndarray:
    """Sample ``n_steps`` outputs of the AR process started from window ``init``.

    Noise enters only the newest sample of each window, with variance
    ``1 / precision``. ``init`` is ordered newest first.
    """
    if not params.precision > 0:
        raise DegenerateDistributionError("precision must be positive")
    if not allow_unstable and not is_stable(params.coefficients):
        raise UnstableProcessError(1)
    window = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    if window.size != params.order:
        raise ValueError("init window length must equal the AR order")
    sd = 1.0 / np.sqrt(params.precision)
    out = np.empty(n_steps)
    for t in range(n_steps):
        new = params.coefficients @ window + sd * rng.standard_normal()
        out[t] = new
        window[1:] = window[:-1]
        window[0] = new
    return out


def simulate_tvar(
    order: int,
    walk_var: float,
    innovation_precision: float,
    n_steps: int,
    rng: np.random.Generator,
    max_attempts: int = 100,
) -> TvarTrajectory:
    """Sample a TVAR path; coefficient paths that go unstable are resampled.

    The coefficients follow a Gaussian random walk with per-coordinate
    variance ``walk_var`` started from N(0, walk_var * I); the state window
    shifts by one step with innovation variance ``1 / innovation_precision``
    on the newest entry. A path is rejected if any step's companion matrix
    has spectral radius at or above the stability margin.
    """
    if walk_var < 0:
        raise ValueError("walk variance must be nonnegative")
    if not innovation_precision > 0:
        raise DegenerateDistributionError("innovation precision must be positive")
    walk_sd = np.sqrt(walk_var)
    inno_sd = 1.0 / np.sqrt(innovation_precision)
    for _ in range(max_attempts):
        coefs = np.empty((n_steps + 1, order))
        states = np.empty((n_steps + 1, order))
        coefs[0] = walk_sd * rng.standard_normal(order)
        states[0] = rng.standard_normal(order)
        ok = spectral_radius(coefs[0]) < STABILITY_MARGIN
        for t in range(1, n_steps + 1):
            if not ok:
                break
            coefs[t] = coefs[t - 1] + walk_sd * rng.standard_normal(order)
            if spectral_radius(coefs[t]) >= STABILITY_MARGIN:
                ok = False
                break
            new = coefs[t] @ states[t - 1] + inno_sd * rng.standard_normal()
            states[t, 1:] = states[t - 1, :-1]
            states[t, 0] = new
        if ok:
            return TvarTrajectory(coefs, states, walk_var, innovation_precision)
    raise UnstableProcessError(max_attempts)


def generate_context_dataset(
    processes: list[ArParams],
    n_frames: int,
    frame_len: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous signal whose per-frame AR parameters follow a sampled
    Markov context chain.

    The transition matrix is drawn column-wise from Dir(1, ..., 1) and the
    initial context uniformly. Returns (frames, labels, transition_matrix)
    where ``frames`` has shape (n_frames, frame_len) and labels are
    zero-based context indices.
    """
    n_contexts = len(processes)
    if n_contexts < 1:
        raise ValueError("need at least one context process")
    trans = np.column_stack([rng.dirichlet(np.ones(n_contexts)) for _ in range(n_contexts)])
    max_order = max(p.order for p in processes)
    history = rng.standard_normal(max_order)  # newest first
    label = int(rng.integers(n_contexts))
    frames = np.empty((n_frames, frame_len))
    labels = np.empty(n_frames, dtype=int)
    for k in range(n_frames):
        params = processes[label]
        sd = 1.0 / np.sqrt(params.precision)
        for t in range(frame_len):
            new = params.coefficients @ history[: params.order] + sd * rng.standard_normal()
            frames[k, t] = new
            history[1:] = history[:-1]
            history[0] = new
        labels[k] = label
        label = int(rng.choice(n_contexts, p=trans[:, label]))
    return frames, labels, trans


# AR parameter sets of the four reference noise environments used by the
# context-classification experiment; precisions are inverse variances.
DEFAULT_CONTEXT_PROCESSES: tuple[ArParams, ...] = (
    ArParams(np.array([-0.308]), 1.0 / 1.0),
    ArParams(np.array([0.722, -0.673]), 1.0 / 2.0),
    ArParams(np.array([-0.081, 0.079, -0.362]), 1.0 / 0.5),
    ArParams(np.array([-1.433, -0.174, 0.757, 0.466]), 1.0 / 1.0),
)


def save_dataset(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a dataset file: JSON header plus little-endian float64 arrays."""
    entries = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        entries.append(
            {"name": name, "offset": offset, "count": int(arr.size), "shape": list(arr.shape)}
        )
        blobs.append(arr.tobytes(order="C"))
        offset += arr.size * 8
    header = json.dumps({"schema": DATASET_SCHEMA, "meta": meta, "arrays": entries}).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_dataset(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a dataset file written by :func:`save_dataset`."""
    raw = Path(path).read_bytes()
    (header_len,) = struct.unpack_from("<I", raw, 0)
    header = json.loads(raw[4 : 4 + header_len].decode())
    if header.get("schema") != DATASET_SCHEMA:
        raise ValueError(f"unknown dataset schema: {header.get('schema')!r}")
    base = 4 + header_len
    arrays = {}
    for entry in header["arrays"]:
        start = base + entry["offset"]
        flat = np.frombuffer(raw, dtype="<f8", count=entry["count"], offset=start)
        arrays[entry["name"]] = flat.reshape(entry["shape"]).copy()
    return header["meta"], arrays
