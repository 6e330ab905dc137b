"""Exponential-family distribution values used as message and marginal currency.

All entropies and log-densities are in nats. Instances are immutable value
types and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import linalg as sla
from scipy.special import digamma, gammaln

COV_JITTER = 1e-8
ABS_JITTER = 1e-12


class DimensionMismatchError(ValueError):
    """Operands have incompatible dimensions."""


class SingularPrecisionError(ValueError):
    """Combined precision is singular; the result is not a proper Gaussian."""


class DegenerateDistributionError(ValueError):
    """Distribution parameters are outside the valid domain."""


def jittered(cov: np.ndarray) -> np.ndarray:
    """Return a symmetrized copy of ``cov`` with stabilizing diagonal jitter."""
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    scale = max(float(np.trace(cov)) / d, ABS_JITTER) if d else ABS_JITTER
    return 0.5 * (cov + cov.T) + COV_JITTER * scale * np.eye(d)


def _chol(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor; jitter is added only if the clean factorization fails."""
    sym = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(jittered(sym))


def _cho_factor(mat: np.ndarray):
    sym = 0.5 * (mat + mat.T)
    try:
        return sla.cho_factor(sym)
    except np.linalg.LinAlgError:
        return sla.cho_factor(jittered(sym))


def _check_invertible(prec: np.ndarray):
    eigs = np.linalg.eigvalsh(0.5 * (prec + prec.T))
    if eigs.min() <= 1e-12 * max(eigs.max(), ABS_JITTER):
        raise SingularPrecisionError("precision matrix is singular")


class Gaussian:
    """Multivariate Gaussian in moment form with a precision-form accessor.

    Construct from ``mean``/``cov`` or via :meth:`from_info` with a
    (possibly singular) precision matrix; an all-zero precision represents
    the uninformative improper factor.
    """

    __slots__ = ("_mean", "_cov", "_precision", "_precision_mean")

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        d = mean.shape[0]
        if d < 1 or cov.shape != (d, d):
            raise DimensionMismatchError(f"mean has dim {d}, cov has shape {cov.shape}")
        scale = max(abs(float(np.trace(cov))), ABS_JITTER)
        if not np.allclose(cov, cov.T, atol=1e-10 * scale):
            raise DegenerateDistributionError("covariance is not symmetric")
        eigs = np.linalg.eigvalsh(0.5 * (cov + cov.T))
        if eigs.min() < -1e-10 * scale:
            raise DegenerateDistributionError(f"covariance has eigenvalue {eigs.min()}")
        self._mean = mean
        self._mean.flags.writeable = False
        self._cov = 0.5 * (cov + cov.T)
        self._cov.flags.writeable = False
        self._precision = None
        self._precision_mean = None

    @classmethod
    def from_info(cls, precision, precision_mean) -> "Gaussian":
        """Build from natural parameters (precision, precision-adjusted mean)."""
        precision = np.atleast_2d(np.asarray(precision, dtype=float))
        precision_mean = np.atleast_1d(np.asarray(precision_mean, dtype=float))
        d = precision_mean.shape[0]
        if precision.shape != (d, d):
            raise DimensionMismatchError("precision shape does not match precision_mean")
        self = object.__new__(cls)
        self._mean = None
        self._cov = None
        self._precision = 0.5 * (precision + precision.T)
        self._precision.flags.writeable = False
        self._precision_mean = precision_mean
        self._precision_mean.flags.writeable = False
        return self

    @classmethod
    def uninformative(cls, dim: int) -> "Gaussian":
        """Improper flat factor: zero precision, identity element of multiply."""
        return cls.from_info(np.zeros((dim, dim)), np.zeros(dim))

    @property
    def dim(self) -> int:
        base = self._mean if self._mean is not None else self._precision_mean
        return base.shape[0]

    @property
    def is_proper(self) -> bool:
        if self._cov is not None:
            return True
        try:
            _check_invertible(self._precision)
        except SingularPrecisionError:
            return False
        return True

    def _solve_info(self):
        _check_invertible(self._precision)
        cho = _cho_factor(self._precision)
        cov = sla.cho_solve(cho, np.eye(self.dim))
        mean = sla.cho_solve(cho, self._precision_mean)
        return mean, 0.5 * (cov + cov.T)

    @property
    def mean(self) -> np.ndarray:
        if self._mean is None:
            mean, cov = self._solve_info()
            self._mean, self._cov = mean, cov
        return self._mean

    @property
    def cov(self) -> np.ndarray:
        if self._cov is None:
            self.mean
        return self._cov

    @property
    def precision(self) -> np.ndarray:
        if self._precision is None:
            cho = _cho_factor(self._cov)
            prec = sla.cho_solve(cho, np.eye(self.dim))
            self._precision = 0.5 * (prec + prec.T)
            self._precision_mean = self._precision @ self._mean
        return self._precision

    @property
    def precision_mean(self) -> np.ndarray:
        self.precision
        return self._precision_mean

    def __repr__(self):
        if self._mean is not None:
            return f"Gaussian(mean={self._mean!r})"
        return f"Gaussian(info, dim={self.dim})"


@dataclass(frozen=True)
class Gamma:
    """Gamma distribution with shape/rate parameters."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise DegenerateDistributionError(
                f"gamma requires shape > 0 and rate > 0, got ({self.shape}, {self.rate})"
            )

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def mean_log(self) -> float:
        """E[ln x]."""
        return float(digamma(self.shape) - np.log(self.rate))


@dataclass(frozen=True)
class Categorical:
    """Discrete distribution over L outcomes."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if probs.ndim != 1 or probs.shape[0] < 1:
            raise DegenerateDistributionError("probs must be a nonempty vector")
        if probs.min() < 0:
            raise DegenerateDistributionError("probs must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise DegenerateDistributionError(f"probs sum to {probs.sum()}, not 1")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def n(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class DirichletCols:
    """Column-wise Dirichlet over an L-by-L transition matrix.

    Column j holds the concentration parameters for column j of the matrix.
    """

    alphas: np.ndarray

    def __post_init__(self):
        alphas = np.atleast_2d(np.asarray(self.alphas, dtype=float))
        if alphas.ndim != 2 or alphas.shape[0] != alphas.shape[1]:
            raise DegenerateDistributionError("alphas must be a square matrix")
        if alphas.min() <= 0:
            raise DegenerateDistributionError("all concentration parameters must be > 0")
        alphas.flags.writeable = False
        object.__setattr__(self, "alphas", alphas)

    @property
    def n(self) -> int:
        return self.alphas.shape[0]

    def mean_matrix(self) -> np.ndarray:
        """Column-stochastic expectation of the transition matrix."""
        return self.alphas / self.alphas.sum(axis=0, keepdims=True)


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise DegenerateDistributionError(f"p must lie in [0, 1], got {self.p}")


Distribution = Union[Gaussian, Gamma, Categorical, DirichletCols, Bernoulli]


def _log_partition(g: Gaussian):
    """(precision, precision_mean, kappa) of exp(-x'Lx/2 + h'x - kappa)."""
    if g._cov is not None:
        prec = g.precision
        h = g.precision_mean
        sign, logdet = np.linalg.slogdet(0.5 * (g.cov + g.cov.T))
        kappa = 0.5 * (h @ g.mean + g.dim * np.log(2 * np.pi) + logdet)
        return prec, h, kappa
    prec, h = g._precision, g._precision_mean
    if not prec.any() and not h.any():
        return prec, h, 0.0
    try:
        _check_invertible(prec)
        cho = _cho_factor(prec)
        mean = sla.cho_solve(cho, h)
        logdet_prec = 2.0 * np.log(np.diag(cho[0])).sum()
        kappa = 0.5 * (h @ mean + g.dim * np.log(2 * np.pi) - logdet_prec)
    except SingularPrecisionError:
        # improper but nonzero-precision factor: enters unnormalized
        kappa = 0.0
    return prec, h, kappa


def gaussian_multiply(a: Gaussian, b: Gaussian) -> tuple[Gaussian, float]:
    """Normalized product of two Gaussian factors and its log normalization.

    The second element is ``log(integral of the unnormalized pointwise
    product)`` where each proper input enters as a normalized density and an
    uninformative input enters as the constant 1.
    """
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimensions {a.dim} and {b.dim} differ")
    prec_a, h_a, kap_a = _log_partition(a)
    prec_b, h_b, kap_b = _log_partition(b)
    prec = prec_a + prec_b
    h = h_a + h_b
    _check_invertible(prec)
    cho = _cho_factor(prec)
    mean = sla.cho_solve(cho, h)
    cov = sla.cho_solve(cho, np.eye(a.dim))
    logdet_prec = 2.0 * np.log(np.diag(cho[0])).sum()
    log_scale = 0.5 * (h @ mean + a.dim * np.log(2 * np.pi) - logdet_prec) - kap_a - kap_b
    return Gaussian(mean, 0.5 * (cov + cov.T)), float(log_scale)


def entropy(dist: Distribution) -> float:
    """Differential or discrete entropy in nats."""
    if isinstance(dist, Gaussian):
        cov = dist.cov
        eigs = np.linalg.eigvalsh(cov)
        if eigs.min() <= 0:
            raise DegenerateDistributionError("covariance is not positive-definite")
        sign, logdet = np.linalg.slogdet(cov)
        return float(0.5 * (dist.dim * (1.0 + np.log(2 * np.pi)) + logdet))
    if isinstance(dist, Gamma):
        a, b = dist.shape, dist.rate
        return float(a - np.log(b) + gammaln(a) + (1.0 - a) * digamma(a))
    if isinstance(dist, Categorical):
        p = dist.probs
        nz = p[p > 0]
        return float(-(nz * np.log(nz)).sum())
    raise TypeError(f"entropy not defined for {type(dist).__name__}")


def sample(dist: Distribution, rng: np.random.Generator):
    """Reproducible draw from ``dist`` using the supplied generator."""
    if isinstance(dist, Gaussian):
        z = rng.standard_normal(dist.dim)
        return dist.mean + _chol(dist.cov) @ z
    if isinstance(dist, Gamma):
        return float(rng.gamma(dist.shape, 1.0 / dist.rate))
    if isinstance(dist, Categorical):
        return int(rng.choice(dist.n, p=dist.probs / dist.probs.sum()))
    if isinstance(dist, Bernoulli):
        return int(rng.random() < dist.p)
    if isinstance(dist, DirichletCols):
        cols = [rng.dirichlet(dist.alphas[:, j]) for j in range(dist.n)]
        return np.column_stack(cols)
    raise TypeError(f"sample not defined for {type(dist).__name__}")


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Deterministic substream generator for (seed, path) tuples."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


def gamma_kl(q: Gamma, p: Gamma) -> float:
    """KL(q || p) between Gamma distributions in nats."""
    a1, b1, a2, b2 = q.shape, q.rate, p.shape, p.rate
    return float(
        (a1 - a2) * digamma(a1)
        - gammaln(a1)
        + gammaln(a2)
        + a2 * (np.log(b1) - np.log(b2))
        + a1 * (b2 - b1) / b1
    )


def gaussian_kl(q: Gaussian, p: Gaussian) -> float:
    """KL(q || p) between proper Gaussians of equal dimension, in nats."""
    if q.dim != p.dim:
        raise DimensionMismatchError("dimensions differ")
    cho = _cho_factor(p.cov)
    diff = p.mean - q.mean
    tr = np.trace(sla.cho_solve(cho, q.cov))
    maha = diff @ sla.cho_solve(cho, diff)
    _, logdet_p = np.linalg.slogdet(p.cov)
    _, logdet_q = np.linalg.slogdet(q.cov)
    return float(0.5 * (tr + maha - q.dim + logdet_p - logdet_q))
