"""
PDMM average consensus with subspace-perturbed dual initialisation.

Dual storage convention: for edge ``l = (i, j)`` with ``i < j`` (the
``l``-th entry of ``graph.edges``) slot ``l`` holds lambda_{i|j} and slot
``l + m`` holds lambda_{j|i}. Node ``i`` reads lambda_{j|i} in its primal
update; lambda_{i|j} is refreshed whenever ``i`` broadcasts a new primal
value, and every endpoint of an edge can track both of its duals once the
initial values have been exchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import rng_for
from .errors import MaxItersExceeded
from .graph import is_connected, sign
from .transcript import Transcript

SYNCHRONOUS = "synchronous"
ASYNCHRONOUS = "asynchronous"

#: PDMM step constant; fastest of a coarse grid on n=80 geometric graphs
DEFAULT_RHO = 0.1


@dataclass
class ConsensusProblem:
    """Average ``s`` (one row per node, ordered like ``graph.nodes``) over ``graph``."""

    graph: object
    s: np.ndarray
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.shape[0] != self.graph.n:
            raise ValueError("need one input row per node")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        self.s = s
        self._build()

    @property
    def q(self):
        return self.s.shape[1]

    def _build(self):
        g = self.graph
        idx = g.index()
        m, n = g.m, g.n
        src = np.empty(2 * m, dtype=int)
        dst = np.empty(2 * m, dtype=int)
        for l, (i, j) in enumerate(g.edges):
            src[l], dst[l] = idx[i], idx[j]
            src[l + m], dst[l + m] = idx[j], idx[i]
        labels = np.asarray(g.nodes)
        # B_{src|dst} for every directed slot
        self.slot_sign = np.array([sign(labels[a], labels[b]) for a, b in zip(src, dst)], dtype=float)
        self.src, self.dst = src, dst
        self.reverse = np.concatenate([np.arange(m, 2 * m), np.arange(m)])
        self.degree = np.bincount(src, minlength=n).astype(float)
        self.adjacency = np.zeros((n, n))
        self.adjacency[src, dst] = 1.0
        # node dst reads slot k with coefficient -B_{dst|src} = B_{src|dst}
        self.dual_read = np.zeros((n, 2 * m))
        self.dual_read[dst, np.arange(2 * m)] = self.slot_sign
        self.out_slots = [np.flatnonzero(src == a) for a in range(n)]
        self.receivers = [g.neighbors(v) for v in g.nodes]

    def target(self):
        """True average, replicated on every node."""
        return np.broadcast_to(self.s.mean(axis=0), self.s.shape)


@dataclass
class ConsensusState:
    y: np.ndarray
    lam: np.ndarray
    t: int = 0

    def copy(self):
        return ConsensusState(self.y.copy(), self.lam.copy(), self.t)


@dataclass
class ConsensusResult:
    y: np.ndarray
    iterations: int
    residual: float
    transcript: Transcript
    state: ConsensusState
    duals: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


def init_duals(graph, q, sigma_lambda, seed=None, rng=None):
    """Random initial duals and the encrypted messages that distribute them.

    Every entry of every lambda_{i|j} is i.i.d. N(0, sigma_lambda^2); node
    ``i`` sends lambda_{i|j} to ``j`` over an encrypted channel.

    Returns
    -------
    lam : ndarray, shape (2m, q)
    transcript : Transcript
    """
    if sigma_lambda < 0:
        raise ValueError("sigma_lambda must be non-negative")
    m = graph.m
    if sigma_lambda == 0:
        lam = np.zeros((2 * m, q))
    else:
        rng = rng if rng is not None else rng_for(seed, "duals")
        lam = rng.normal(0.0, sigma_lambda, size=(2 * m, q))
    senders = [i for i, _ in graph.edges] + [j for _, j in graph.edges]
    receivers = [(j,) for _, j in graph.edges] + [(i,) for i, _ in graph.edges]
    tr = Transcript()
    tr.record("dual_init", 0, senders, receivers, lam, encrypted=True)
    return lam, tr


def pdmm_primal_update(state, i, problem):
    """New primal value of node label ``i``.

    y_i = (s_i + sum_j (rho * y_j - B_{i|j} * lambda_{j|i})) / (1 + rho * d_i)
    """
    k = problem.graph.index()[i]
    return _primal_row(state, k, problem)


def _primal_row(state, k, problem):
    rho = problem.rho
    acc = problem.s[k] + rho * (problem.adjacency[k] @ state.y) + problem.dual_read[k] @ state.lam
    return acc / (1.0 + rho * problem.degree[k])


def pdmm_dual_update(state, i, j, y_i_new, problem):
    """lambda_{i|j} after node ``i`` broadcasts ``y_i_new``, as computed by ``j``.

    lambda_{i|j} = lambda_{j|i} + rho * B_{i|j} * (y_i_new - y_j)
    """
    idx = problem.graph.index()
    yj = state.y[idx[j]]
    slot = _slot(problem, idx[i], idx[j])
    return state.lam[problem.reverse[slot]] + problem.rho * sign(i, j) * (np.asarray(y_i_new) - yj)


def _slot(problem, a, b):
    hits = np.flatnonzero((problem.src == a) & (problem.dst == b))
    if hits.size != 1:
        raise ValueError("nodes are not adjacent")
    return int(hits[0])


def _sync_round(state, problem):
    rho = problem.rho
    y_new = (problem.s + rho * (problem.adjacency @ state.y) + problem.dual_read @ state.lam)
    y_new /= (1.0 + rho * problem.degree)[:, None]
    lam_new = state.lam[problem.reverse] + rho * problem.slot_sign[:, None] * (
        y_new[problem.src] - state.y[problem.dst])
    return ConsensusState(y_new, lam_new, state.t + 1)


def _async_tick(state, k, problem):
    y_k = _primal_row(state, k, problem)
    slots = problem.out_slots[k]
    state.lam[slots] = state.lam[problem.reverse[slots]] + problem.rho * problem.slot_sign[slots, None] * (
        y_k[None, :] - state.y[problem.dst[slots]])
    state.y[k] = y_k
    state.t += 1
    return y_k


def _initial_state(problem, lam, y_init):
    if y_init == "zero":
        y0 = np.zeros_like(problem.s)
    elif y_init == "input":
        y0 = problem.s.copy()
    else:
        raise ValueError(f"unknown y_init {y_init!r}")
    return ConsensusState(y0, lam.copy(), 0)


def run_consensus(problem, mode=SYNCHRONOUS, sigma_lambda=0.0, tol=1e-8, max_iters=100_000,
                  seed=None, stop="oracle", y_init="zero", keep_duals=False, record=True,
                  lam0=None, stream=()):
    """Run PDMM until the nodes agree on the average of ``problem.s``.

    Parameters
    ----------
    problem : ConsensusProblem
    mode : {"synchronous", "asynchronous"}
        Synchronous rounds update every node and then every dual.
        Asynchronous ticks activate one uniformly random node, which updates
        its primal value and broadcasts it; its neighbours refresh the duals.
    sigma_lambda : float
        Standard deviation of the initial duals (the privacy knob).
    tol : float
        Stopping tolerance. With ``stop="oracle"`` the simulator compares
        ``||y - mean||_2`` (all nodes, all coordinates) against ``tol``;
        ``stop="delta"`` instead uses the change of ``y`` over one round
        (or one sweep of ``n`` ticks), which real nodes could evaluate.
    max_iters : int
        Round (synchronous) or tick (asynchronous) budget.
    y_init : {"zero", "input"}
        Initial primal values. ``"zero"`` is public knowledge and needs no
        messages; ``"input"`` starts from the private inputs and therefore
        records their (unencrypted) broadcast.
    keep_duals : bool
        Store the dual vector after every round (synchronous only).
    lam0 : ndarray, optional
        Explicit initial duals instead of drawing them.
    stream : tuple
        Extra labels for the random sub-streams, so repeated runs under one
        master ``seed`` (e.g. one per EM iteration) draw fresh duals.

    Raises
    ------
    MaxItersExceeded
        With the last residual attached.
    """
    g = problem.graph
    if not is_connected(g):
        raise ValueError("consensus requires a connected graph")
    if mode not in (SYNCHRONOUS, ASYNCHRONOUS):
        raise ValueError(f"unknown mode {mode!r}")
    if lam0 is None:
        lam0, transcript = init_duals(g, problem.q, sigma_lambda, rng=rng_for(seed, "duals", *stream))
    else:
        transcript = Transcript()
        senders = [i for i, _ in g.edges] + [j for _, j in g.edges]
        receivers = [(j,) for _, j in g.edges] + [(i,) for i, _ in g.edges]
        transcript.record("dual_init", 0, senders, receivers, lam0, encrypted=True)
    if not record:
        transcript = Transcript()
    state = _initial_state(problem, lam0, y_init)
    nodes = np.asarray(g.nodes)
    if y_init == "input" and record:
        transcript.record("primal_broadcast", 0, nodes, problem.receivers, state.y)

    target = problem.target()

    def residual(prev):
        if stop == "oracle":
            return float(np.linalg.norm(state.y - target))
        return float(np.linalg.norm(state.y - prev)) if prev is not None else np.inf

    duals = [state.lam.copy()] if keep_duals else []
    res = residual(None)
    residuals = [res]
    if stop == "oracle" and res <= tol:
        return ConsensusResult(state.y.copy(), 0, res, transcript, state, duals, residuals)

    if mode == SYNCHRONOUS:
        while state.t < max_iters:
            prev = state.y
            state = _sync_round(state, problem)
            if record:
                transcript.record("primal_broadcast", state.t, nodes, problem.receivers, state.y)
            if keep_duals:
                duals.append(state.lam.copy())
            res = residual(prev)
            residuals.append(res)
            if res <= tol:
                return ConsensusResult(state.y.copy(), state.t, res, transcript, state, duals, residuals)
    else:
        rng = rng_for(seed, "activation", *stream)
        n = g.n
        prev = state.y.copy()
        while state.t < max_iters:
            k = int(rng.integers(n))
            y_k = _async_tick(state, k, problem)
            if record:
                transcript.record("primal_broadcast", state.t, [nodes[k]], [problem.receivers[k]], y_k[None])
            if stop == "oracle":
                res = residual(None)
            elif state.t % n == 0:
                res = residual(prev)
                prev = state.y.copy()
            else:
                continue
            residuals.append(res)
            if res <= tol:
                return ConsensusResult(state.y.copy(), state.t, res, transcript, state, duals, residuals)
    raise MaxItersExceeded(state.t, res)


def replay(problem, transcript, mode=SYNCHRONOUS):
    """Recompute every recorded primal broadcast from the recorded dual inits.

    Returns the list of recomputed payload blocks, one per recorded
    ``primal_broadcast`` block, for bitwise comparison with the originals.
    """
    g = problem.graph
    idx = g.index()
    init = transcript.blocks("dual_init")
    if len(init) != 1:
        raise ValueError("transcript must hold exactly one dual_init block")
    lam = init[0].payloads
    blocks = transcript.blocks("primal_broadcast")
    y_init = "input" if blocks and blocks[0].rounds[0] == 0 else "zero"
    state = _initial_state(problem, lam, y_init)
    out = []
    for b in blocks:
        if b.rounds[0] == 0:
            out.append(state.y.copy())
            continue
        if mode == SYNCHRONOUS:
            state = _sync_round(state, problem)
            out.append(state.y[[idx[v] for v in b.senders]].copy())
        else:
            out.append(_async_tick(state, idx[int(b.senders[0])], problem)[None].copy())
    return out


# --- subspace diagnostics -------------------------------------------------

def estimate_convergent_subspace(graph, rho=DEFAULT_RHO, probes=None, seed=0, tol=1e-13,
                                 max_iters=20_000, rank_tol=1e-9):
    """Orthonormal basis of the dual subspace H in which PDMM duals converge.

    Runs noiseless synchronous PDMM (lambda^(0) = 0) on random inputs and
    orthogonalises the collected dual iterates together with the
    differences of even-indexed iterates. This is an empirical estimate.

    Returns
    -------
    ndarray, shape (2m, r)
    """
    probes = probes if probes is not None else graph.n
    s = rng_for(seed, "subspace-probe").normal(size=(graph.n, probes))
    prob = ConsensusProblem(graph, s, rho)
    res = run_consensus(prob, SYNCHRONOUS, 0.0, tol=tol * max(1.0, np.linalg.norm(s)),
                        max_iters=max_iters, keep_duals=True, record=False)
    lams = res.duals
    cols = [lam for lam in lams]
    cols += [lams[t] - lams[t - 2] for t in range(2, len(lams), 2)]
    M = np.concatenate(cols, axis=1)
    U, sv, _ = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(sv > rank_tol * sv[0]))
    return U[:, :rank]


def subspace_diagnostics(duals, basis):
    """Split a dual trajectory into its H and H-orthogonal components.

    Parameters
    ----------
    duals : list of ndarray, each (2m, q)
        Dual vectors per synchronous round, starting with lambda^(0).
    basis : ndarray, shape (2m, r)
        Orthonormal basis of H, e.g. from :func:`estimate_convergent_subspace`.

    Returns
    -------
    dict
        ``convergent`` and ``orthogonal`` norms per round, and
        ``convergent_step2`` = ||P_H lam^(t) - P_H lam^(t-2)|| for t >= 2.
        ``estimated`` flags that H is an empirical estimate.
    """
    if len(duals) < 2:
        raise ValueError("need at least two rounds")
    proj = [basis @ (basis.T @ lam) for lam in duals]
    conv = [float(np.linalg.norm(p)) for p in proj]
    orth = [float(np.linalg.norm(lam - p)) for lam, p in zip(duals, proj)]
    step2 = [float(np.linalg.norm(proj[t] - proj[t - 2])) for t in range(2, len(proj))]
    return {"convergent": conv, "orthogonal": orth, "convergent_step2": step2,
            "rank": basis.shape[1], "estimated": True}
