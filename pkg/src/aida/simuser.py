"""Simulated hearing-aid client emitting binary appraisals of gain settings.

The positive-appraisal probability peaks at 1 exactly at the preferred
gain pair and decays with the weighted squared distance from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class UserPrefs:
    """Preferred gain pair and the diagonal distance weighting."""

    optimum: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        opt = np.atleast_1d(np.asarray(self.optimum, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if opt.shape != w.shape:
            raise ValueError("optimum and weights must have matching shapes")
        if (w <= 0).any():
            raise ValueError("weights must be positive")
        opt.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "optimum", opt)
        object.__setattr__(self, "weights", w)

    @staticmethod
    def from_config(cfg: dict) -> "UserPrefs":
        return UserPrefs(
            np.asarray(cfg.get("u_star", (0.8, 0.2)), dtype=float),
            np.full(2, float(cfg.get("lambda_diag", DEFAULT_WEIGHT))),
        )


# the distance weighting that yields a visibly peaked preference surface
# over the unit gain box; the literal narrow value remains selectable
DEFAULT_WEIGHT = 250.0
LITERAL_WEIGHT = 0.004

DEFAULT_PREFS = UserPrefs(np.array([0.8, 0.2]), np.array([DEFAULT_WEIGHT, DEFAULT_WEIGHT]))


def appraisal_prob(u, prefs: UserPrefs) -> float:
    """P(positive appraisal) = 2 / (1 + exp(q)) with q the weighted squared
    distance to the preferred gains; equals 1 exactly at the optimum."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    diff = u - prefs.optimum
    q = float(diff @ (prefs.weights * diff))
    return 2.0 / (1.0 + np.exp(q))


def sample_appraisal(u, prefs: UserPrefs, rng: np.random.Generator) -> int:
    return int(rng.random() < appraisal_prob(u, prefs))
