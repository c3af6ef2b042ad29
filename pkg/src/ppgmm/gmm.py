"""
Gaussian mixture model arithmetic for EM.

The M-step is split into per-node sufficient statistics
(:func:`local_updates`) and their aggregation (:func:`global_update`), so
every distributed protocol only differs in how the sums are formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import DegenerateDenominator, EmptyComponent, NotPositiveDefinite

#: covariance eigenvalue floor, relative to the mean per-feature data variance
REG_SCALE = 1e-6
#: a component dies when its total responsibility drops below this fraction of n
EMPTY_FRACTION = 1e-8

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GmmParams:
    """Mixture weights ``beta`` (c,), means ``mu`` (c, d), covariances ``sigma`` (c, d, d)."""

    beta: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        self.mu = np.asarray(self.mu, dtype=float).reshape(self.beta.size, -1)
        d = self.mu.shape[1]
        self.sigma = np.asarray(self.sigma, dtype=float).reshape(self.beta.size, d, d)

    @property
    def c(self):
        return self.beta.size

    @property
    def d(self):
        return self.mu.shape[1]

    def copy(self):
        return GmmParams(self.beta.copy(), self.mu.copy(), self.sigma.copy())

    def check(self, tol=1e-12):
        """Raise ``ValueError`` unless the weights and covariances are valid."""
        if np.any(self.beta < 0) or abs(self.beta.sum() - 1.0) > tol:
            raise ValueError("mixture weights must be non-negative and sum to one")
        for j, S in enumerate(self.sigma):
            if np.max(np.abs(S - S.T)) > tol * max(1.0, np.max(np.abs(S))):
                raise ValueError(f"covariance {j} is not symmetric")
            if np.linalg.eigvalsh(S)[0] <= 0:
                raise NotPositiveDefinite(f"covariance {j} is not positive definite")
        return self

    def to_dict(self):
        return {
            "c": self.c,
            "d": self.d,
            "beta": self.beta.tolist(),
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, obj):
        params = cls(obj["beta"], obj["mu"], obj["sigma"])
        if params.c != obj["c"] or params.d != obj["d"]:
            raise ValueError("declared shape does not match the arrays")
        return params


@dataclass
class LocalUpdates:
    """One node's statistics: ``a`` (c,), ``b`` (c, d), ``C`` (c, d, d), over ``count`` points."""

    a: np.ndarray
    b: np.ndarray
    C: np.ndarray
    count: int = 1

    def __add__(self, other):
        return LocalUpdates(self.a + other.a, self.b + other.b, self.C + other.C,
                            self.count + other.count)

    @property
    def c(self):
        return self.a.size

    @property
    def d(self):
        return self.b.shape[1]

    def to_vector(self):
        """Stack as ``[a, b.ravel(), C.ravel()]`` of length c(1 + d + d^2)."""
        return np.concatenate([self.a, self.b.ravel(), self.C.ravel()])

    @classmethod
    def from_vector(cls, vec, c, d, count=1):
        vec = np.asarray(vec, dtype=float)
        if vec.shape[-1] != stacked_size(c, d):
            raise ValueError("vector length does not match c(1 + d + d^2)")
        a = vec[..., :c]
        b = vec[..., c:c + c * d].reshape(vec.shape[:-1] + (c, d))
        C = vec[..., c + c * d:].reshape(vec.shape[:-1] + (c, d, d))
        return cls(a, b, C, count)


@dataclass
class GlobalSums:
    """Network-wide sums of the local statistics over ``n`` points."""

    a: np.ndarray
    b: np.ndarray
    C: np.ndarray
    n: int

    @classmethod
    def from_updates(cls, updates):
        updates = list(updates)
        total = updates[0]
        for u in updates[1:]:
            total = total + u
        return cls(total.a, total.b, total.C, total.count)


def stacked_size(c, d):
    return c * (1 + d + d * d)


def regularization(points):
    """Covariance floor: REG_SCALE times the mean per-feature variance."""
    points = np.asarray(points, dtype=float)
    if points.shape[0] < 2:
        return REG_SCALE
    return REG_SCALE * float(np.mean(np.var(points, axis=0)))


def _cholesky(sigma):
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def gaussian_logpdf(points, mu, sigma):
    """Log density of N(mu, sigma) at each row of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mu = np.asarray(mu, dtype=float).reshape(-1)
    L = _cholesky(np.asarray(sigma, dtype=float).reshape(mu.size, mu.size))
    z = solve_triangular(L, (points - mu).T, lower=True)
    with np.errstate(over="ignore"):  # far outliers get -inf, handled by the E-step
        maha = np.sum(z * z, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (mu.size * _LOG_2PI + logdet + maha)


def gaussian_pdf(x, mu, sigma):
    """Density of N(mu, sigma) at a single point ``x``."""
    return float(np.exp(gaussian_logpdf(np.reshape(x, (1, -1)), mu, sigma)[0]))


def _weighted_logpdf(points, params):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty((points.shape[0], params.c))
    with np.errstate(divide="ignore"):
        logbeta = np.log(params.beta)
    for j in range(params.c):
        out[:, j] = gaussian_logpdf(points, params.mu[j], params.sigma[j]) + logbeta[j]
    return out


def e_step(points, params):
    """Responsibilities P(x_i | component j), shape (points, c).

    Rows are normalised with log-sum-exp, so far outliers do not underflow.
    """
    logp = _weighted_logpdf(points, params)
    norm = logsumexp(logp, axis=1, keepdims=True)
    if not np.all(np.isfinite(norm)):
        bad = int(np.flatnonzero(~np.isfinite(norm[:, 0]))[0])
        raise DegenerateDenominator(f"row {bad} has no positive density under any component")
    return np.exp(logp - norm)


def log_likelihood(points, params):
    """Sum over points of log sum_j beta_j N(x | mu_j, sigma_j), in nats."""
    return float(np.sum(logsumexp(_weighted_logpdf(points, params), axis=1)))


def local_updates(points, resp, mu):
    """Per-node statistics a, b, C for a batch of local points.

    ``mu`` must be the means of the same iteration that produced ``resp``;
    the scatter ``C`` is centred on these (old) means.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    resp = np.atleast_2d(np.asarray(resp, dtype=float))
    mu = np.asarray(mu, dtype=float)
    if resp.shape[0] != points.shape[0]:
        raise ValueError("responsibility rows do not align with the points")
    a = resp.sum(axis=0)
    b = resp.T @ points
    diff = points[None, :, :] - mu[:, None, :]          # (c, p, d)
    C = np.einsum("pj,jpk,jpl->jkl", resp, diff, diff)
    return LocalUpdates(a, b, C, points.shape[0])


def floor_covariance(sigma, reg):
    """Raise every eigenvalue of ``sigma`` below ``reg`` up to ``reg``.

    Well-conditioned matrices are returned unchanged, which keeps EM's
    monotone likelihood; only collapsing components are touched.
    """
    if reg <= 0:
        return sigma
    w, V = np.linalg.eigh(sigma)
    if w[0] >= reg:
        return sigma
    out = (V * np.maximum(w, reg)) @ V.T
    return 0.5 * (out + out.T)


def global_update(sums, reg=0.0):
    """Parameters from network sums: beta = a/n, mu = b/a, sigma = C/a.

    Each covariance is then floored at ``reg`` (see :func:`floor_covariance`).

    Raises
    ------
    EmptyComponent
        If some component's mass is below ``EMPTY_FRACTION * n``.
    """
    a = np.asarray(sums.a, dtype=float)
    floor = EMPTY_FRACTION * sums.n
    for j, aj in enumerate(a):
        if not aj > floor:
            raise EmptyComponent(j, float(aj))
    beta = a / sums.n
    mu = sums.b / a[:, None]
    sigma = sums.C / a[:, None, None]
    sigma = 0.5 * (sigma + np.swapaxes(sigma, 1, 2))
    sigma = np.stack([floor_covariance(S, reg) for S in sigma])
    return GmmParams(beta, mu, sigma)


def em_step(points, params, reg=0.0):
    """One centralized E-step followed by the M-step on pooled data."""
    resp = e_step(points, params)
    upd = local_updates(points, resp, params.mu)
    return global_update(GlobalSums(upd.a, upd.b, upd.C, upd.count), reg)


def init_params(points, c, seed=None, reg=None):
    """Uniform weights, ``c`` distinct data points as means, pooled covariance as every sigma."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < c:
        raise ValueError(f"need at least {c} points")
    rng = np.random.default_rng(seed)
    uniq = np.unique(points, axis=0)
    if uniq.shape[0] < c:
        raise ValueError(f"need at least {c} distinct points")
    # sample among distinct rows so the means are guaranteed distinct
    pick = np.sort(rng.choice(uniq.shape[0], size=c, replace=False))
    mu = uniq[pick]
    if reg is None:
        reg = regularization(points)
    d = points.shape[1]
    cov = np.cov(points, rowvar=False, bias=False).reshape(d, d) if points.shape[0] > 1 else np.zeros((d, d))
    sigma = np.repeat((cov + reg * np.eye(d))[None], c, axis=0)
    return GmmParams(np.full(c, 1.0 / c), mu, sigma)


@dataclass
class EmResult:
    params: list
    loglik: list


def centralized_em(points, c, iters, init=None, seed=None, reg=None):
    """Plain EM on pooled data: the output-correctness reference.

    Returns an :class:`EmResult` whose ``params`` and ``loglik`` have
    ``iters + 1`` entries, the first being the initialisation.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if reg is None:
        reg = regularization(points)
    params = init if init is not None else init_params(points, c, seed, reg)
    if params.c != c:
        raise ValueError("initialisation has the wrong number of components")
    trajectory = [params]
    trace = [log_likelihood(points, params)]
    for _ in range(iters):
        params = em_step(points, params, reg)
        trajectory.append(params)
        trace.append(log_likelihood(points, params))
    return EmResult(trajectory, trace)
