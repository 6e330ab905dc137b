"""Gaussian process classifier over gain proposals, fitted by a Laplace
approximation with probit likelihood.

One independent classifier is kept per acoustic context; this module is
the per-context machinery: squared-exponential Gram matrices, the Newton
mode search, latent predictive moments, class probabilities, and evidence
based hyperparameter updates on a bounded domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import log_ndtr, ndtr

GRAM_JITTER = 1e-8
HYPER_BOX = (0.1, 1.0)
NEWTON_RESIDUAL = 1e-8
NEWTON_MAX_STEPS = 100


class LaplaceFitError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel: output scale and length scale, both
    constrained to the stability box."""

    sigma: float = 0.5
    length: float = 0.5

    def __post_init__(self):
        lo, hi = HYPER_BOX
        if not (lo <= self.sigma <= hi and lo <= self.length <= hi):
            raise ValueError(f"kernel parameters must lie in [{lo}, {hi}]")


@dataclass(frozen=True)
class AppraisalDataset:
    """Past gain queries with their binary appraisals."""

    queries: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.queries, dtype=float))
        r = np.atleast_1d(np.asarray(self.responses))
        if q.shape[0] != r.shape[0]:
            raise ValueError("queries and responses must have equal length")
        if r.size and not np.isin(r, (0, 1)).all():
            raise ValueError("responses must be binary")
        q.flags.writeable = False
        r = r.astype(int)
        r.flags.writeable = False
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "responses", r)

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def has_both_classes(self) -> bool:
        return self.n > 0 and 0 < self.responses.sum() < self.n

    def appended(self, query, response: int) -> "AppraisalDataset":
        q = np.vstack([self.queries, np.atleast_2d(query)]) if self.n else np.atleast_2d(query)
        r = np.concatenate([self.responses, [int(response)]])
        return AppraisalDataset(q, r)

    @staticmethod
    def empty(dim: int = 2) -> "AppraisalDataset":
        return AppraisalDataset(np.empty((0, dim)), np.empty(0, dtype=int))


def kernel_matrix(points, params: KernelParams) -> np.ndarray:
    """Gram matrix with diagonal jitter so factorizations stay stable."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sq = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    gram = params.sigma**2 * np.exp(-sq / (2.0 * params.length**2))
    return gram + GRAM_JITTER * np.eye(pts.shape[0])


def kernel_vec(points, query, params: KernelParams) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    q = np.asarray(query, dtype=float)
    sq = ((pts - q[None, :]) ** 2).sum(-1)
    return params.sigma**2 * np.exp(-sq / (2.0 * params.length**2))


def _probit_terms(signed: np.ndarray):
    """log Phi, first and second likelihood derivatives for z = y * v."""
    log_phi = log_ndtr(signed)
    ratio = np.exp(-0.5 * signed**2 - 0.5 * np.log(2 * np.pi) - log_phi)
    hess = ratio * (signed + ratio)
    return log_phi, ratio, hess


@dataclass
class LaplacePosterior:
    """Mode of the latent posterior with the Hessian pieces for prediction."""

    mode: np.ndarray
    grad: np.ndarray
    site_precisions: np.ndarray
    gram: np.ndarray
    chol_b: np.ndarray
    log_marginal: float
    n_steps: int


def laplace_fit(data: AppraisalDataset, params: KernelParams) -> LaplacePosterior:
    """Newton search for the latent mode with a backtracking line search.

    Terminates when the self-consistency residual of the mode equation
    drops below the fixed threshold; raises :class:`LaplaceFitError` when
    the step budget is exhausted.
    """
    if data.n < 1:
        raise ValueError("need at least one appraisal")
    y = 2.0 * data.responses - 1.0
    K = kernel_matrix(data.queries, params)
    n = data.n
    v = np.zeros(n)
    a = np.zeros(n)

    def objective(a_vec, v_vec):
        return float(log_ndtr(y * v_vec).sum() - 0.5 * a_vec @ v_vec)

    obj = objective(a, v)
    last_residual = np.inf
    for step in range(1, NEWTON_MAX_STEPS + 1):
        _, ratio, hess = _probit_terms(y * v)
        grad = y * ratio
        residual = np.abs(v - K @ grad).max()
        last_residual = residual
        if residual <= NEWTON_RESIDUAL:
            sqrt_w = np.sqrt(hess)
            B = np.eye(n) + sqrt_w[:, None] * K * sqrt_w[None, :]
            L = cholesky(B, lower=True)
            log_marginal = float(
                -0.5 * a @ v + log_ndtr(y * v).sum() - np.log(np.diag(L)).sum()
            )
            return LaplacePosterior(v, grad, hess, K, L, log_marginal, step - 1)
        sqrt_w = np.sqrt(hess)
        B = np.eye(n) + sqrt_w[:, None] * K * sqrt_w[None, :]
        L = cholesky(B, lower=True)
        b = hess * v + grad
        rhs = sqrt_w * (K @ b)
        a_new = b - sqrt_w * cho_solve((L, True), rhs)
        # backtracking line search on the penalized log likelihood
        direction = a_new - a
        scale = 1.0
        for _ in range(30):
            a_try = a + scale * direction
            v_try = K @ a_try
            if objective(a_try, v_try) > obj - 1e-12:
                break
            scale *= 0.5
        a = a + scale * direction
        v = K @ a
        obj = objective(a, v)
    raise LaplaceFitError("Newton did not converge", last_residual)


def predict(
    post: Optional[LaplacePosterior], data: AppraisalDataset, params: KernelParams, query
) -> tuple[float, float]:
    """Latent predictive mean and variance at one query point.

    With no appraisals yet the prior predictive (0, sigma^2) is returned.
    """
    if data.n == 0 or post is None:
        return 0.0, params.sigma**2
    k_vec = kernel_vec(data.queries, query, params)
    k_self = params.sigma**2 + GRAM_JITTER
    mu = float(k_vec @ post.grad)
    sqrt_w = np.sqrt(post.site_precisions)
    half = solve_triangular(post.chol_b, sqrt_w * k_vec, lower=True)
    var = float(k_self - half @ half)
    return mu, max(var, 0.0)


def predict_batch(
    post: Optional[LaplacePosterior], data: AppraisalDataset, params: KernelParams, points
) -> tuple[np.ndarray, np.ndarray]:
    """Latent predictive moments at many query points at once."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if data.n == 0 or post is None:
        return np.zeros(pts.shape[0]), np.full(pts.shape[0], params.sigma**2)
    sq = ((data.queries[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    k_cross = params.sigma**2 * np.exp(-sq / (2.0 * params.length**2))
    mu = k_cross.T @ post.grad
    sqrt_w = np.sqrt(post.site_precisions)
    half = solve_triangular(post.chol_b, sqrt_w[:, None] * k_cross, lower=True)
    var = params.sigma**2 + GRAM_JITTER - (half**2).sum(0)
    return mu, np.maximum(var, 0.0)


def class_prob(mu: float, var: float) -> float:
    """Probability of a positive appraisal with the latent integrated out."""
    if var < 0:
        raise ValueError("variance must be nonnegative")
    return float(ndtr(mu / np.sqrt(var + 1.0)))


def log_evidence(data: AppraisalDataset, params: KernelParams) -> float:
    """Laplace approximation to the log marginal likelihood."""
    return laplace_fit(data, params).log_marginal


def optimize_hyperparams(
    data: AppraisalDataset,
    current: KernelParams,
    grad_tol: float = 1e-5,
    max_iterations: int = 60,
) -> KernelParams:
    """Evidence ascent over log(sigma), log(length) projected onto the box.

    Returns ``current`` unchanged when the dataset holds a single class
    only, where the evidence degenerates. Conjugate directions with
    finite-difference gradients keep the routine deterministic.
    """
    if not data.has_both_classes:
        return current
    lo, hi = np.log(HYPER_BOX[0]), np.log(HYPER_BOX[1])

    def score(z) -> float:
        try:
            return log_evidence(data, KernelParams(*np.exp(z)))
        except (LaplaceFitError, np.linalg.LinAlgError):
            return -np.inf

    def fd_grad(z):
        h = 1e-5
        g = np.zeros(2)
        for i in range(2):
            zp, zm = z.copy(), z.copy()
            zp[i] = min(zp[i] + h, hi)
            zm[i] = max(zm[i] - h, lo)
            denom = zp[i] - zm[i]
            g[i] = (score(zp) - score(zm)) / denom if denom > 0 else 0.0
        return g

    def projected(z, g):
        pg = g.copy()
        pg[(z <= lo + 1e-12) & (g < 0)] = 0.0
        pg[(z >= hi - 1e-12) & (g > 0)] = 0.0
        return pg

    z = np.log([current.sigma, current.length])
    cur_val = score(z)
    grad = fd_grad(z)
    prev_pg = None
    direction = None
    step0 = 0.5
    for _ in range(max_iterations):
        pg = projected(z, grad)
        if np.abs(pg).max() <= grad_tol:
            break
        if direction is None or prev_pg is None or direction @ pg <= 0:
            direction = pg.copy()
        else:
            beta = max(0.0, pg @ (pg - prev_pg) / max(prev_pg @ prev_pg, 1e-30))
            direction = pg + beta * direction
            if direction @ pg <= 0:
                direction = pg.copy()

        def backtrack(d):
            step = step0
            for _ in range(45):
                z_try = np.clip(z + step * d, lo, hi)
                if np.abs(z_try - z).max() > 0 and score(z_try) > cur_val + 1e-13:
                    return z_try, step
                step *= 0.5
            return None, None

        z_try, used = backtrack(direction)
        if z_try is None and not np.array_equal(direction, pg):
            direction = pg.copy()
            z_try, used = backtrack(direction)
        if z_try is None:
            break
        step0 = min(max(used * 2.0, 1e-6), 1.0)
        prev_pg = pg
        z = z_try
        cur_val = score(z)
        grad = fd_grad(z)
    sigma, length = np.clip(np.exp(z), HYPER_BOX[0], HYPER_BOX[1])
    return KernelParams(float(sigma), float(length))
