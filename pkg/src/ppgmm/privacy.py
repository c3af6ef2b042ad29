"""
Mutual-information leakage measurement.

:func:`ksg_mi` is the Kraskov-Stoegbauer-Grassberger k-nearest-neighbour
estimator (first variant, max-norm neighbourhoods). :func:`monte_carlo_leakage`
simulates many independent draws of the scalar private-data model, forms the
features a given adversary learns about a target node under each protocol,
and measures how much they tell about the target's datum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from ._rng import rng_for
from .adversary import EAVESDROPPER, PASSIVE, honest_nodes, ring_attack, secure_sum_exposure
from .data import synthetic_private_data
from .errors import InsufficientSamples
from .graph import find_hamiltonian_cycle
from .protocols import FEDERATED, QUANTITIES, SECURE_SUM, SUBSPACE, secure_sum

DEFAULT_K = 3
JITTER = 1e-10
MIN_SAMPLES = 50


@dataclass
class MiEstimate:
    value: float
    k: int
    sample_count: int
    stderr: float


@dataclass
class NmiEstimate:
    """``value`` is clamped to [0, 1]; ``raw`` is the unclamped ratio."""

    value: float
    raw: float
    stderr: float
    mi: MiEstimate
    self_mi: MiEstimate


def _as_samples(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be a vector or an N x p matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _jitter(shape, seed):
    # one stream per column: identical columns get identical jitter,
    # which is what makes the self-information normaliser cancel exactly
    n, p = shape
    return np.stack([rng_for(seed, "jitter", j).uniform(0.0, JITTER, n) for j in range(p)], axis=1)


def _ksg_terms(x, y, k):
    z = np.hstack([x, y])
    dist, _ = cKDTree(z).query(z, k=k + 1, p=np.inf)
    eps = np.nextafter(dist[:, -1], 0.0)  # strict inequality
    nx = cKDTree(x).query_ball_point(x, eps, p=np.inf, return_length=True) - 1
    ny = cKDTree(y).query_ball_point(y, eps, p=np.inf, return_length=True) - 1
    return digamma(nx + 1) + digamma(ny + 1)


def ksg_mi(x, y, k=DEFAULT_K, seed=0, jitter=True):
    """KSG estimate of I(X; Y) in nats.

    Parameters
    ----------
    x, y : array_like
        N x p and N x q samples (vectors are single columns).
    k : int
        Neighbour count.
    seed : int
        Seed of the 1e-10 tie-breaking jitter added to both inputs.

    Returns
    -------
    MiEstimate
        ``stderr`` is the standard error of the mean over the per-sample
        digamma terms. The value is reported raw and may be slightly
        negative.

    Raises
    ------
    InsufficientSamples
        Fewer than ``max(2k + 2, 50)`` samples.
    """
    x, y = _as_samples(x, "x"), _as_samples(y, "y")
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("x and y need the same number of samples")
    if k < 1:
        raise ValueError("k must be positive")
    if n < max(2 * k + 2, MIN_SAMPLES):
        raise InsufficientSamples(f"{n} samples, need at least {max(2 * k + 2, MIN_SAMPLES)}")
    if jitter:
        x, y = x + _jitter(x.shape, seed), y + _jitter(y.shape, seed)
    terms = _ksg_terms(x, y, k)
    value = digamma(k) + digamma(n) - terms.mean()
    return MiEstimate(float(value), k, n, float(terms.std(ddof=1) / np.sqrt(n)))


def normalized_mi(x, y, k=DEFAULT_K, seed=0):
    """``ksg_mi(x, y) / ksg_mi(x, x)`` with shared jitter, clamped to [0, 1]."""
    x = _as_samples(x, "x")
    num = ksg_mi(x, y, k, seed)
    den = ksg_mi(x, x, k, seed)
    if den.value <= 0:
        raise ValueError("self-information estimate is not positive")
    raw = num.value / den.value
    return NmiEstimate(float(min(max(raw, 0.0), 1.0)), raw, num.stderr / den.value, num, den)


def gaussian_mi(rho):
    """Closed-form I(X; Y) of a bivariate Gaussian with correlation ``rho``."""
    return -0.5 * np.log1p(-rho * rho)


def correlated_gaussian(rho, n, seed=None):
    rng = rng_for(seed, "gaussian-pair", repr(float(rho)), n)
    x = rng.standard_normal(n)
    y = rho * x + np.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
    return x, y


@dataclass
class LeakageResult:
    protocol: str
    adversary: str
    corrupt: tuple
    target: int
    trials: int
    k: int
    nmi: np.ndarray
    stderr: np.ndarray
    feature_dims: list


@dataclass
class _Stats:
    a: np.ndarray
    b: np.ndarray
    C: np.ndarray


def _round_stats(x, resp, mu):
    # scalar data: a = r, b = r x, C = r (x - mu)^2, shapes (trials, n, c)
    diff = x[..., None] - mu[:, None, :]
    return _Stats(resp, resp * x[..., None], resp * diff * diff)


def _reconstructed(a, b):
    # b / a at each trial's largest-a component: the datum itself for one point
    j = np.argmax(a, axis=1)[:, None]
    return np.take_along_axis(b, j, axis=1) / np.take_along_axis(a, j, axis=1)


def _secure_sum_features(stats, cycle, idx, corrupt, target, adversary, mask_scale, rng, raw):
    if adversary == EAVESDROPPER:
        seen, total_known, mask_known, corrupt = list(range(len(cycle))), True, False, set()
    else:
        seen, total_known, mask_known = secure_sum_exposure(cycle, corrupt)
    cols, pinned = [], {}
    for name in QUANTITIES:
        q = getattr(stats, name)
        values = [q[:, idx[v]] for v in cycle]
        mask = rng.normal(0.0, mask_scale, size=values[0].shape)
        total, relayed = secure_sum(values, cycle, mask)
        own = {v: q[:, idx[v]] for v in corrupt}
        exact, segments = ring_attack(cycle, {k: relayed[k] for k in seen}, own,
                                      total if total_known else None, mask if mask_known else None)
        if target in exact:
            pinned[name] = exact[target]
            cols.append((name, exact[target]))
        else:
            cols += [(name, val) for nodes, val in segments if target in nodes]
    if not raw and "a" in pinned and "b" in pinned:
        return [("x", _reconstructed(pinned["a"], pinned["b"]))]
    return cols


def _features(protocol, stats, graph, idx, corrupt, target, adversary, cycle, mask_scale, rng, raw):
    if protocol == FEDERATED:
        if adversary == PASSIVE and not corrupt:
            return []
        a, b = stats.a[:, idx[target]], stats.b[:, idx[target]]
        return [("a", a), ("b", b)] if raw else [("x", _reconstructed(a, b))]
    if protocol == SECURE_SUM:
        return _secure_sum_features(stats, cycle, idx, corrupt, target, adversary, mask_scale,
                                    rng, raw)
    if protocol == SUBSPACE:
        keep = [idx[v] for v in honest_nodes(graph, corrupt if adversary == PASSIVE else ())]
        return [(name, getattr(stats, name)[:, keep].sum(axis=1)) for name in QUANTITIES]
    raise ValueError(f"unknown protocol {protocol!r}")


def _reduce(cols, normalize):
    """Stack feature columns, dropping those fixed by the responsibility normalisation."""
    parts = []
    for name, val in cols:
        if name == "a" and normalize == "components":
            val = val[:, :-1]  # the a-columns of a node set sum to its size
        parts.append(val)
    if not parts:
        return None
    F = np.hstack(parts)
    keep = np.ptp(F, axis=0) > 0
    return F[:, keep] if keep.any() else None


def monte_carlo_leakage(protocol, graph, corrupt, target, trials=10_000, em_iters=10, seed=0,
                        c=1, k=DEFAULT_K, adversary=PASSIVE, normalize="components",
                        mask_scale=1e3, raw=False, return_features=False):
    """Normalised MI between a target's datum and the adversary's features, per EM iteration.

    Every trial draws a scalar datum per node from N(0, 1) and, per EM
    iteration, fresh uniform responsibilities normalised per node across
    components (or per component across nodes). Means start at zero and
    follow the global update mu = sum(b) / sum(a). The adversary's
    features at each iteration are

    * federated: the target's own (a, b), seen by the server;
    * secure_sum: the target's values where the ring attack pins them
      down, otherwise the sums over its honest ring segment;
    * subspace: the sums of (a, b, C) over the honest nodes.

    Where the adversary holds the target's exact (a, b), the feature is
    the reconstructed datum b / a rather than the raw pair (``raw=False``).
    Both carry the same information, but k-NN estimates lose much of a
    near-deterministic dependence once spread over several dimensions.

    Trials are pooled as samples of one KSG estimate per iteration.

    Raises
    ------
    InsufficientSamples
        Via the estimator when ``trials`` is too small.
    HonestSubgraphDisconnected
        Subspace protocol whose honest nodes are not connected.
    """
    corrupt = {int(v) for v in corrupt}
    if target in corrupt:
        raise ValueError("the target node must be honest")
    if target not in graph.nodes:
        raise ValueError(f"unknown target node {target}")
    if adversary not in (PASSIVE, EAVESDROPPER):
        raise ValueError(f"unknown adversary {adversary!r}")
    if trials < max(2 * k + 2, MIN_SAMPLES):
        raise InsufficientSamples(f"{trials} trials, need at least {max(2 * k + 2, MIN_SAMPLES)}")
    idx = graph.index()
    if protocol == SUBSPACE and adversary == PASSIVE:
        honest_nodes(graph, corrupt)  # fail before simulating
    cycle = find_hamiltonian_cycle(graph) if protocol == SECURE_SUM else None
    x, _ = synthetic_private_data(graph.n, c, seed, trials, normalize)
    mu = np.zeros((trials, c))
    nmi, se, dims, feats = [], [], [], []
    for t in range(em_iters):
        _, resp = synthetic_private_data(graph.n, c, rng_for(seed, "resp", t).integers(2**63),
                                         trials, normalize)
        stats = _round_stats(x, resp, mu)
        cols = _features(protocol, stats, graph, idx, corrupt, target, adversary, cycle,
                         mask_scale, rng_for(seed, "masks", t), raw)
        F = _reduce(cols, normalize)
        if F is None:
            nmi.append(0.0)
            se.append(0.0)
            dims.append(0)
        else:
            est = normalized_mi(x[:, idx[target]], F, k, seed=rng_for(seed, "jitter", t).integers(2**63))
            nmi.append(est.value)
            se.append(est.stderr)
            dims.append(F.shape[1])
        if return_features:
            feats.append(F)
        mu = stats.b.sum(axis=1) / stats.a.sum(axis=1)
    res = LeakageResult(protocol, adversary, tuple(sorted(corrupt)), target, trials, k,
                        np.asarray(nmi), np.asarray(se), dims)
    return (res, feats, x) if return_features else res
