"""
Distributed EM drivers.

All three protocols run the same local E-step and the same aggregation
rule; they differ only in how the network forms the sums of the local
statistics:

* ``federated`` uploads every node's statistics to a server;
* ``secure_sum`` passes masked running totals around a Hamiltonian cycle;
* ``subspace`` averages them with PDMM whose duals start with large noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gmm
from ._rng import rng_for
from .consensus import DEFAULT_RHO, SYNCHRONOUS, ConsensusProblem, run_consensus
from .errors import HonestSubgraphDisconnected
from .graph import find_hamiltonian_cycle, is_connected
from .transcript import SERVER, Transcript

FEDERATED = "federated"
SECURE_SUM = "secure_sum"
SUBSPACE = "subspace"
QUANTITIES = ("a", "b", "C")


@dataclass
class ConsensusOptions:
    mode: str = SYNCHRONOUS
    rho: float = DEFAULT_RHO
    tol: float = 1e-8
    max_iters: int = 100_000
    stop: str = "oracle"
    y_init: str = "zero"


@dataclass
class ProtocolRun:
    """Everything a protocol run produced.

    ``params`` and ``loglik`` hold T + 1 entries (initialisation first).
    ``local[t][k]`` is node ``nodes[k]``'s :class:`~ppgmm.gmm.LocalUpdates`
    at EM iteration ``t``: simulator ground truth, not part of any view.
    """

    protocol: str
    nodes: tuple
    node_data: list
    params: list
    loglik: list
    transcript: Transcript
    local: list = field(default_factory=list)
    cycle: list | None = None
    masks: list = field(default_factory=list)
    consensus_iters: list = field(default_factory=list)
    node_spread: list = field(default_factory=list)
    reg: float = 0.0
    graph: object = None

    @property
    def iterations(self):
        return len(self.params) - 1

    def pooled(self):
        return np.vstack(self.node_data)


def _prepare(node_data, c, init, seed, reg):
    node_data = [np.atleast_2d(np.asarray(x, dtype=float)) for x in node_data]
    if any(x.shape[0] == 0 for x in node_data):
        raise ValueError("every node needs at least one point")
    pooled = np.vstack(node_data)
    if reg is None:
        reg = gmm.regularization(pooled)
    if init is None:
        init = gmm.init_params(pooled, c, rng_for(seed, "init").integers(2**32), reg)
    if init.c != c:
        raise ValueError("initialisation has the wrong number of components")
    return node_data, pooled, init, reg


def _local_round(node_data, params_per_node):
    out = []
    for x, theta in zip(node_data, params_per_node):
        resp = gmm.e_step(x, theta)
        out.append(gmm.local_updates(x, resp, theta.mu))
    return out


def params_vector(params):
    """Flatten parameters as (beta, mu, sigma), the broadcast payload layout."""
    return np.concatenate([params.beta, params.mu.ravel(), params.sigma.ravel()])


def params_from_vector(vec, c, d):
    vec = np.asarray(vec, dtype=float)
    return gmm.GmmParams(vec[:c].copy(), vec[c:c + c * d].reshape(c, d).copy(),
                         vec[c + c * d:].reshape(c, d, d).copy())


def run_federated_em(node_data, c, T, init=None, seed=None, reg=None):
    """Federated EM: nodes upload (a, b, C); the server aggregates and broadcasts.

    Node labels are ``1..len(node_data)``; the server is label 0. The
    server first broadcasts the initial parameters ("init_params"), then
    after every aggregation the new ones ("global_params").
    """
    node_data, pooled, params, reg = _prepare(node_data, c, init, seed, reg)
    nodes = tuple(range(1, len(node_data) + 1))
    tr = Transcript()
    tr.send("init_params", 0, SERVER, nodes, params_vector(params), em_iter=0)
    trajectory, trace, local = [params], [gmm.log_likelihood(pooled, params)], []
    for t in range(T):
        upd = _local_round(node_data, [params] * len(nodes))
        local.append(upd)
        tr.record("local_update", t, nodes, [(SERVER,)] * len(nodes),
                  np.stack([u.to_vector() for u in upd]), em_iter=t)
        params = gmm.global_update(gmm.GlobalSums.from_updates(upd), reg)
        tr.send("global_params", t, SERVER, nodes, params_vector(params), em_iter=t)
        trajectory.append(params)
        trace.append(gmm.log_likelihood(pooled, params))
    return ProtocolRun(FEDERATED, nodes, node_data, trajectory, trace, tr, local, reg=reg)


def secure_sum(values, cycle, mask, transcript=None, round=0, em_iter=None, tag=None,
               encrypted=False):
    """Ring summation with an additive mask.

    ``values[k]`` belongs to node ``cycle[k]``. The first node sends its
    value plus ``mask`` to the second, each node adds its own value and
    forwards, the last node returns the total to the first, which removes
    the mask and broadcasts the sum.

    Returns
    -------
    total : ndarray
    relayed : list of ndarray
        The ``len(cycle)`` ring messages in sending order.
    """
    running = np.asarray(values[0], dtype=float) + mask
    relayed = [running]
    for v in values[1:]:
        running = running + v
        relayed.append(running)
    total = running - mask
    if transcript is not None:
        n = len(cycle)
        receivers = [(cycle[(k + 1) % n],) for k in range(n)]
        transcript.record("ring_relay", round, cycle, receivers,
                          np.stack([np.ravel(r) for r in relayed]), encrypted, em_iter, tag)
        others = tuple(v for v in sorted(cycle) if v != cycle[0])
        transcript.send("sum_broadcast", round, cycle[0], others, np.ravel(total),
                        em_iter=em_iter, tag=tag)
    return total, relayed


def run_secure_sum_em(graph, node_data, c, T, init=None, seed=None, reg=None,
                      mask_scale=None, encrypt_relays=False, cycle=None):
    """EM whose sums are formed by masked summation around a Hamiltonian cycle.

    ``node_data[k]`` belongs to ``graph.nodes[k]``. Masks are Gaussian with
    standard deviation ``mask_scale`` (default: 1e3 times the pooled data's
    standard deviation, at least 1e3), fresh per quantity and iteration.

    Raises
    ------
    NotFound
        If the graph has no Hamiltonian cycle.
    """
    if len(node_data) != graph.n:
        raise ValueError("need one dataset per graph node")
    if cycle is None:
        cycle = find_hamiltonian_cycle(graph)
    node_data, pooled, params, reg = _prepare(node_data, c, init, seed, reg)
    if mask_scale is None:
        mask_scale = 1e3 * max(1.0, float(np.sqrt(np.mean(np.var(pooled, axis=0)))))
    idx = graph.index()
    order = [idx[v] for v in cycle]
    rng = rng_for(seed, "masks")
    tr = Transcript()
    trajectory, trace, local, masks = [params], [gmm.log_likelihood(pooled, params)], [], []
    for t in range(T):
        upd = _local_round(node_data, [params] * graph.n)
        local.append(upd)
        totals, drawn = {}, {}
        for name in QUANTITIES:
            vals = [getattr(upd[k], name) for k in order]
            r = rng.normal(0.0, mask_scale, size=vals[0].shape)
            drawn[name] = r
            totals[name], _ = secure_sum(vals, cycle, r, tr, round=t, em_iter=t, tag=name,
                                         encrypted=encrypt_relays)
        masks.append(drawn)
        n_points = int(round(float(totals["a"].sum())))
        params = gmm.global_update(gmm.GlobalSums(totals["a"], totals["b"], totals["C"], n_points), reg)
        trajectory.append(params)
        trace.append(gmm.log_likelihood(pooled, params))
    return ProtocolRun(SECURE_SUM, graph.nodes, node_data, trajectory, trace, tr, local,
                       cycle=list(cycle), masks=masks, reg=reg, graph=graph)


def run_subspace_em(graph, node_data, c, T, init=None, sigma_lambda=1e2, consensus=None,
                    seed=None, reg=None):
    """EM whose averages are computed by subspace-perturbed PDMM.

    Per EM iteration every node stacks its (a, b, C) into one vector, one
    consensus run averages the stacks, and each node turns its own copy of
    the averages into parameters. Nodes therefore hold slightly different
    parameters (within the consensus tolerance); the trajectory reports
    the lowest-labelled node's and ``node_spread`` the largest deviation.
    """
    if len(node_data) != graph.n:
        raise ValueError("need one dataset per graph node")
    if not is_connected(graph):
        raise HonestSubgraphDisconnected("the network is disconnected")
    opts = consensus or ConsensusOptions()
    node_data, pooled, params, reg = _prepare(node_data, c, init, seed, reg)
    d = params.d
    per_node = [params] * graph.n
    tr = Transcript()
    trajectory, trace, local, iters, spread = [params], [gmm.log_likelihood(pooled, params)], [], [], []
    for t in range(T):
        upd = _local_round(node_data, per_node)
        local.append(upd)
        problem = ConsensusProblem(graph, np.stack([u.to_vector() for u in upd]), opts.rho)
        res = run_consensus(problem, opts.mode, sigma_lambda, tol=opts.tol, max_iters=opts.max_iters,
                            seed=seed, stop=opts.stop, y_init=opts.y_init, stream=(t,))
        tr.absorb(res.transcript, em_iter=t)
        iters.append(res.iterations)
        per_node = []
        for row in res.y:
            avg = gmm.LocalUpdates.from_vector(row, c, d)
            sums = gmm.GlobalSums(avg.a, avg.b, avg.C, float(avg.a.sum()))
            per_node.append(gmm.global_update(sums, reg))
        ref = params_vector(per_node[0])
        spread.append(max(float(np.max(np.abs(params_vector(p) - ref))) for p in per_node))
        trajectory.append(per_node[0])
        trace.append(gmm.log_likelihood(pooled, per_node[0]))
    return ProtocolRun(SUBSPACE, graph.nodes, node_data, trajectory, trace, tr, local,
                       consensus_iters=iters, node_spread=spread, reg=reg, graph=graph)
