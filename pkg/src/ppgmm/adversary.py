"""
Adversary views and reconstruction attacks.

A view is the set of payloads an adversary can see, each with its
provenance: a transcript message, or internal state of a corrupt node
(local data, local updates, the ring mask). The simulator's ground truth
is kept on the run object and never copied into a view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gmm
from .errors import HonestSubgraphDisconnected, Unrecoverable
from .gmm import LocalUpdates
from .graph import is_connected, remove_nodes
from .protocols import FEDERATED, QUANTITIES, SECURE_SUM, params_from_vector
from .transcript import SERVER

PASSIVE = "passive"
EAVESDROPPER = "eavesdropper"

#: aᵢⱼ at or below this is treated as zero by the federated attack
RECOVERY_THRESHOLD = 1e-12


@dataclass(frozen=True)
class Observation:
    """One observed payload.

    ``source`` is ``"message"`` (then ``seq`` is the transcript index) or a
    kind of node state, ``"local_data"``, ``"local_update"`` or ``"mask"``
    (then ``sender`` is the node holding it).
    """

    source: str
    kind: str
    sender: int
    receivers: tuple
    em_iter: int | None
    tag: str | None
    seq: int
    payload: np.ndarray = field(compare=False, repr=False)

    @property
    def key(self):
        return (self.source, self.seq, self.kind, self.sender, self.em_iter, self.tag)


@dataclass
class AdversaryView:
    kind: str
    corrupt: frozenset
    observations: list
    protocol: str | None = None
    c: int | None = None
    d: int | None = None

    def __len__(self):
        return len(self.observations)

    def keys(self):
        return {o.key for o in self.observations}

    def issubset(self, other):
        return self.keys() <= other.keys()

    def select(self, source=None, kind=None, em_iter=None, tag=None):
        return [o for o in self.observations
                if (source is None or o.source == source)
                and (kind is None or o.kind == kind)
                and (em_iter is None or o.em_iter == em_iter)
                and (tag is None or o.tag == tag)]

    def em_iters(self):
        return sorted({o.em_iter for o in self.observations if o.em_iter is not None})


def _dims(run):
    p = run.params[0]
    return p.c, p.d


def _message_observations(transcript, keep):
    """Observations for every message for which ``keep(block, k)`` holds."""
    out = []
    for offset, b in transcript.indexed_blocks():
        for k in range(len(b.senders)):
            if keep(b, k):
                out.append(Observation("message", b.kind, int(b.senders[k]), b.receivers[k],
                                       b.em_iter, b.tag, offset + k, b.payloads[k]))
    return out


def passive_view(run, corrupt):
    """What a coalition of honest-but-curious ``corrupt`` nodes jointly sees.

    Every message sent or received by a corrupt node, the corrupt nodes'
    data and per-iteration local updates, and, in a secure-sum run whose
    initiator is corrupt, the ring masks. Label 0 is the federated server.
    """
    corrupt = frozenset(int(v) for v in corrupt)
    unknown = corrupt - set(run.nodes) - ({SERVER} if run.protocol == FEDERATED else set())
    if unknown:
        raise ValueError(f"unknown corrupt nodes {sorted(unknown)}")
    c, d = _dims(run)
    if not corrupt:
        return AdversaryView(PASSIVE, corrupt, [], run.protocol, c, d)

    def keep(b, k):
        return int(b.senders[k]) in corrupt or any(r in corrupt for r in b.receivers[k])

    obs = _message_observations(run.transcript, keep)
    for k, v in enumerate(run.nodes):
        if v not in corrupt:
            continue
        obs.append(Observation("local_data", "local_data", v, (), None, None, v, run.node_data[k]))
        for t, upd in enumerate(run.local):
            obs.append(Observation("local_update", "local_update", v, (), t, None, v,
                                   upd[k].to_vector()))
    if run.protocol == SECURE_SUM and run.cycle and run.cycle[0] in corrupt:
        for t, drawn in enumerate(run.masks):
            for name in QUANTITIES:
                obs.append(Observation("mask", "mask", run.cycle[0], (), t, name, run.cycle[0],
                                       np.ravel(drawn[name])))
    return AdversaryView(PASSIVE, corrupt, obs, run.protocol, c, d)


def eavesdrop_view(run):
    """Every unencrypted message of the run's transcript, and nothing else."""
    c, d = _dims(run)
    obs = _message_observations(run.transcript, lambda b, k: not b.encrypted)
    return AdversaryView(EAVESDROPPER, frozenset(), obs, run.protocol, c, d)


def _ulp_neighbourhood(x0, width):
    """All vectors within ``width`` floating-point steps of ``x0`` per coordinate, nearest first."""
    cols = []
    for v in x0:
        col, lo, hi = [v], v, v
        for _ in range(width):
            lo, hi = np.nextafter(lo, -np.inf), np.nextafter(hi, np.inf)
            col += [lo, hi]
        cols.append(np.array(col))
    grids = np.meshgrid(*cols, indexing="ij")
    steps = np.meshgrid(*[np.r_[0, np.repeat(np.arange(1, width + 1), 2)]] * len(x0), indexing="ij")
    cand = np.stack([g.ravel() for g in grids], axis=1)
    order = np.argsort(np.max(np.stack([s.ravel() for s in steps], axis=1), axis=1), kind="stable")
    return cand[order]


def _consistent(x, uploads, params_at):
    point = x[None]
    for t, vec in uploads:
        theta = params_at[t]
        upd = gmm.local_updates(point, gmm.e_step(point, theta), theta.mu)
        if not np.array_equal(upd.to_vector(), vec):
            return False
    return True


def _public_params(view):
    """EM iteration -> the parameters every node used in it, as broadcast by the server."""
    out = {}
    for o in view.select("message", "init_params"):
        out[0] = params_from_vector(o.payload, view.c, view.d)
    for o in view.select("message", "global_params"):
        out[o.em_iter + 1] = params_from_vector(o.payload, view.c, view.d)
    return out


def reconstruct_federated(view, em_iter=None, refine=True, width=3):
    """Recover each uploading node's data as ``b_ij / a_ij``.

    Uses the component with the largest ``a_ij``. For a node holding one
    point this is the point up to a rounding step; for a batch it is the
    responsibility-weighted local mean of that component.

    With ``refine`` the quotient is snapped to the exact point: the
    adversary knows the broadcast parameters, so it recomputes the upload
    for every float vector within ``width`` steps of the quotient and keeps
    the nearest one reproducing all observed uploads of that node bit for
    bit. Batches have no such vector and keep the quotient.

    Parameters
    ----------
    view : AdversaryView
    em_iter : int, optional
        Iteration whose upload gives the quotient (default: the first
        observed one). Refinement always checks every observed iteration.

    Returns
    -------
    dict
        node label -> estimate of shape (d,)

    Raises
    ------
    Unrecoverable
        If every ``a_ij`` of some node is at or below 1e-12.
    """
    uploads = {}
    for o in view.select("message", "local_update"):
        uploads.setdefault(o.sender, []).append((o.em_iter, o.payload))
    params_at = _public_params(view) if refine else {}
    out = {}
    for node, seen in uploads.items():
        seen.sort(key=lambda tv: tv[0])
        pick = seen[0] if em_iter is None else next((tv for tv in seen if tv[0] == em_iter), None)
        if pick is None:
            continue
        upd = LocalUpdates.from_vector(pick[1], view.c, view.d)
        j = int(np.argmax(upd.a))
        if upd.a[j] <= RECOVERY_THRESHOLD:
            raise Unrecoverable(node)
        x0 = upd.b[j] / upd.a[j]
        checkable = [(t, v) for t, v in seen if t in params_at]
        if refine and checkable:
            # cheap pass on one iteration first, then the survivors against all
            first = checkable[:1]
            hits = [x for x in _ulp_neighbourhood(x0, width)
                    if _consistent(x, first, params_at)]
            hits = [x for x in hits if _consistent(x, checkable, params_at)]
            if hits:
                x0 = hits[0]
        out[node] = x0
    return out


def secure_sum_exposure(cycle, corrupt):
    """Which parts of one ring pass a passive coalition observes.

    Returns ``(positions, total_known, mask_known)``: the cycle positions
    ``k`` whose outgoing relay (sent by ``cycle[k]`` to ``cycle[k+1]``) is
    seen, whether the broadcast total is seen, and whether the mask is.
    """
    n = len(cycle)
    corrupt = set(corrupt)
    seen = [k for k in range(n) if cycle[k] in corrupt or cycle[(k + 1) % n] in corrupt]
    return seen, bool(corrupt), cycle[0] in corrupt


def ring_attack(cycle, relays, own, total=None, mask=None):
    """Pin down ring inputs from observed running totals.

    The relay sent by position ``k`` is ``mask + sum(values[:k + 1])``.
    Two observed relays bracket a stretch of the ring whose value sum is
    their difference; the total closes the ring, and the mask anchors the
    start. Subtracting the known (``own``) values of corrupt nodes leaves
    the honest part of each stretch.

    Parameters
    ----------
    cycle : sequence of int
    relays : dict
        position -> observed relay value
    own : dict
        node -> known value (corrupt nodes)
    total, mask : array, optional

    Returns
    -------
    exact : dict
        honest node -> value, for stretches with a single honest node
    segments : list of (tuple, array)
        honest nodes and their summed value, for longer stretches

    All arithmetic is elementwise, so values may carry leading axes
    (e.g. Monte Carlo trials).
    """
    n = len(cycle)
    anchors = dict(relays)
    if mask is not None:
        anchors[-1] = mask
    if total is not None:
        # position -1 (the bare mask) and n - 1 (mask + total) are the same ring point
        if -1 in anchors and n - 1 not in anchors:
            anchors[n - 1] = anchors[-1] + total
        elif n - 1 in anchors and -1 not in anchors:
            anchors[-1] = anchors[n - 1] - total
        anchors.pop(-1, None)

    stretches = []
    pos = sorted(anchors)
    for a, b in zip(pos, pos[1:]):
        stretches.append((list(range(a + 1, b + 1)), anchors[b] - anchors[a]))
    if total is not None:
        if pos:
            first, last = pos[0], pos[-1]
            span = [k % n for k in range(last + 1, first + n + 1)]
            stretches.append((span, anchors[first] + total - anchors[last]))
        else:
            stretches.append((list(range(n)), total))

    exact, segments = {}, []
    for span, value in stretches:
        honest = []
        for k in span:
            v = cycle[k]
            if v in own:
                value = value - own[v]
            else:
                honest.append(v)
        if len(honest) == 1:
            exact[honest[0]] = value
        elif honest:
            segments.append((tuple(honest), value))
    return exact, segments


@dataclass
class SecureSumRecovery:
    """Per ``(em_iter, quantity)``: exact honest values and honest segment sums."""

    exact: dict
    segments: dict

    def value(self, node, em_iter, tag):
        return self.exact[(em_iter, tag)][node]

    def segment_of(self, node, em_iter, tag):
        for nodes, value in self.segments.get((em_iter, tag), []):
            if node in nodes:
                return nodes, value
        return None


def _quantity_shape(tag, c, d):
    return {"a": (c,), "b": (c, d), "C": (c, d, d)}[tag]


def reconstruct_secure_sum(view, cycle, corrupt=None):
    """Run :func:`ring_attack` on every ring pass found in ``view``.

    Relays and totals are taken from the view's messages, corrupt values
    from its local-update states and the mask from the initiator's state
    when present. ``corrupt`` defaults to the view's coalition.
    """
    corrupt = set(view.corrupt if corrupt is None else corrupt)
    pos = {v: k for k, v in enumerate(cycle)}
    own_updates = {}
    for o in view.select("local_update"):
        if o.sender in corrupt:
            own_updates[(o.em_iter, o.sender)] = LocalUpdates.from_vector(o.payload, view.c, view.d)
    passes = {}
    for o in view.select("message", "ring_relay"):
        passes.setdefault((o.em_iter, o.tag), {})[pos[o.sender]] = o.payload
    totals = {(o.em_iter, o.tag): o.payload for o in view.select("message", "sum_broadcast")}
    masks = {(o.em_iter, o.tag): o.payload for o in view.select("mask")}

    exact, segments = {}, {}
    for key in sorted(set(passes) | set(totals), key=lambda kv: (kv[0], str(kv[1]))):
        t, tag = key
        own = {v: np.ravel(getattr(u, tag)) for (tt, v), u in own_updates.items() if tt == t}
        ex, seg = ring_attack(cycle, passes.get(key, {}), own, totals.get(key), masks.get(key))
        shape = _quantity_shape(tag, view.c, view.d)
        exact[key] = {v: np.reshape(x, shape) for v, x in ex.items()}
        segments[key] = [(nodes, np.reshape(x, shape)) for nodes, x in seg]
    return SecureSumRecovery(exact, segments)


def honest_nodes(graph, corrupt):
    """Honest node labels, after checking the honest subgraph is connected.

    Raises
    ------
    HonestSubgraphDisconnected
    """
    corrupt = set(corrupt)
    if corrupt >= set(graph.nodes):
        raise HonestSubgraphDisconnected("no honest nodes left")
    sub = remove_nodes(graph, corrupt)
    if not is_connected(sub):
        raise HonestSubgraphDisconnected(
            f"removing {sorted(corrupt)} disconnects the honest nodes {list(sub.nodes)}")
    return sub.nodes


def subspace_honest_sums(run, corrupt):
    """Per EM iteration, the honest nodes' summed (a, b, C).

    This is what the subspace protocol is allowed to reveal about honest
    inputs when the honest subgraph is connected, so it serves as the
    adversary's knowledge for leakage measurement.
    """
    honest = set(honest_nodes(run.graph, corrupt))
    keep = [k for k, v in enumerate(run.nodes) if v in honest]
    out = []
    for upd in run.local:
        total = upd[keep[0]]
        for k in keep[1:]:
            total = total + upd[k]
        out.append(total)
    return out
