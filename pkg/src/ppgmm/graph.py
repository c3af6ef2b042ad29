"""
Undirected network topologies.

Nodes carry 1-based integer labels. Removing nodes keeps the original
labels, so a graph's node set need not be ``1..n``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

from .errors import NotFound, PPGMMError


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph.

    Parameters
    ----------
    nodes : tuple of int
        Sorted node labels.
    edges : tuple of (int, int)
        Sorted list of unordered edges stored as ``(i, j)`` with ``i < j``.
        The position of an edge in this tuple is its index ``l``.
    positions : ndarray, optional
        Node coordinates (rows follow ``nodes``) for geometric graphs.
    """

    nodes: tuple
    edges: tuple
    positions: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        nodes = tuple(sorted(int(v) for v in self.nodes))
        if len(set(nodes)) != len(nodes):
            raise ValueError("duplicate node labels")
        known = set(nodes)
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if i not in known or j not in known:
                raise ValueError(f"edge ({i}, {j}) references an unknown node")
            canon.add((min(i, j), max(i, j)))
        if len(canon) != len(self.edges):
            raise ValueError("duplicate edges")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        nbrs = {v: [] for v in nodes}
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        object.__setattr__(self, "_nbrs", {v: tuple(sorted(ns)) for v, ns in nbrs.items()})

    @classmethod
    def from_edges(cls, n, edges):
        """Graph on nodes ``1..n`` with the given edges."""
        return cls(tuple(range(1, n + 1)), tuple(edges))

    @property
    def n(self):
        return len(self.nodes)

    @property
    def m(self):
        return len(self.edges)

    def neighbors(self, i):
        return self._nbrs[i]

    def degree(self, i):
        return len(self._nbrs[i])

    def index(self):
        """Map node label -> row position in ``nodes``."""
        return {v: k for k, v in enumerate(self.nodes)}

    def has_edge(self, i, j):
        return j in self._nbrs.get(i, ())


def fig1_graph():
    """The five-node example network with Hamiltonian cycle 1-2-3-4-5-1."""
    return Graph.from_edges(5, [(1, 2), (1, 3), (2, 3), (2, 4), (3, 4), (1, 5), (4, 5)])


def connectivity_radius(n):
    """Radius sqrt(2 ln n / n), connected with probability at least 1 - 1/n**2."""
    return math.sqrt(2.0 * math.log(n) / n)


def random_geometric_graph(n, radius, seed=None):
    """Nodes uniform in the unit square, linked when within ``radius``.

    The result may be disconnected; callers check with :func:`is_connected`.
    A zero radius is accepted and links only coincident points.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    if radius < 0:
        raise ValueError("radius must be non-negative")
    rng = np.random.default_rng(seed)
    pos = rng.uniform(size=(n, 2))
    close = pdist(pos) <= radius
    iu, ju = np.triu_indices(n, k=1)
    edges = [(int(i) + 1, int(j) + 1) for i, j in zip(iu[close], ju[close])]
    return Graph(tuple(range(1, n + 1)), tuple(edges), positions=pos)


def is_connected(g):
    """Breadth-first reachability from the lowest label."""
    if g.n == 0:
        return False
    start = g.nodes[0]
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in g.neighbors(v):
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == g.n


def remove_nodes(g, removed):
    """Induced subgraph on the remaining nodes (labels are kept)."""
    removed = set(removed)
    unknown = removed - set(g.nodes)
    if unknown:
        raise ValueError(f"unknown nodes {sorted(unknown)}")
    keep = tuple(v for v in g.nodes if v not in removed)
    if not keep:
        raise PPGMMError("cannot remove every node")
    edges = tuple((i, j) for i, j in g.edges if i not in removed and j not in removed)
    pos = None
    if g.positions is not None:
        idx = g.index()
        pos = g.positions[[idx[v] for v in keep]]
    return Graph(keep, edges, positions=pos)


def sign(i, j):
    """B_{i|j}: +1 if i > j, -1 if i < j."""
    if i == j:
        raise ValueError("no sign for a self-pair")
    return 1 if i > j else -1


def edge_signs(g):
    """Signed entries of every directed edge, keyed by ``(i, j)`` meaning B_{i|j}."""
    out = {}
    for i, j in g.edges:
        out[(i, j)] = sign(i, j)
        out[(j, i)] = sign(j, i)
    return out


def signed_incidence(g):
    """The m x n matrix with row l holding B_{i|j} at column i and B_{j|i} at column j."""
    idx = g.index()
    B = np.zeros((g.m, g.n))
    for l, (i, j) in enumerate(g.edges):
        B[l, idx[i]] = sign(i, j)
        B[l, idx[j]] = sign(j, i)
    return B


def find_hamiltonian_cycle(g, budget=20_000):
    """Lowest-label Hamiltonian cycle by backtracking.

    Neighbors are tried in ascending label order, so the first cycle found
    is the lexicographically smallest one starting at the lowest label.
    If that search expands more than ``budget`` nodes, it restarts with
    neighbors ordered by fewest unvisited neighbors (ties by label). Both
    orders are deterministic; the second finds cycles on dense geometric
    graphs quickly. The returned list does not repeat the start node.

    Raises
    ------
    NotFound
        If the graph has no Hamiltonian cycle.
    """
    if g.n < 3:
        raise ValueError("a Hamiltonian cycle needs at least three nodes")
    if any(g.degree(v) < 2 for v in g.nodes) or not is_connected(g):
        raise NotFound("graph has a node of degree < 2 or is disconnected")
    try:
        return _backtrack(g, ordered=False, budget=budget)
    except _BudgetSpent:
        return _backtrack(g, ordered=True, budget=None)


class _BudgetSpent(Exception):
    pass


def _backtrack(g, ordered, budget):
    start = g.nodes[0]
    path = [start]
    on_path = {start}
    spent = 0

    def pruned(cur):
        # every unvisited node must keep two usable endpoints, and the
        # unvisited part must stay reachable from the current endpoint
        free = [v for v in g.nodes if v not in on_path]
        for v in free:
            usable = sum(1 for w in g.neighbors(v) if w not in on_path or w in (cur, start))
            if usable < 2:
                return True
        seen = {cur}
        queue = deque([cur])
        while queue:
            v = queue.popleft()
            for w in g.neighbors(v):
                if w not in seen and (w not in on_path or w == start):
                    seen.add(w)
                    queue.append(w)
        return any(v not in seen for v in free) or start not in seen

    def candidates(cur):
        cand = [w for w in g.neighbors(cur) if w not in on_path]
        if ordered:
            cand.sort(key=lambda w: (sum(1 for u in g.neighbors(w) if u not in on_path), w))
        return cand

    def extend(cur):
        nonlocal spent
        if len(path) == g.n:
            return g.has_edge(cur, start)
        for w in candidates(cur):
            spent += 1
            if budget is not None and spent > budget:
                raise _BudgetSpent
            path.append(w)
            on_path.add(w)
            if (len(path) == g.n or not pruned(w)) and extend(w):
                return True
            path.pop()
            on_path.discard(w)
        return False

    if not extend(start):
        raise NotFound("graph has no Hamiltonian cycle")
    return list(path)


def is_hamiltonian_cycle(g, cycle):
    if sorted(cycle) != list(g.nodes):
        return False
    return all(g.has_edge(a, b) for a, b in zip(cycle, cycle[1:] + cycle[:1]))


def write_edgelist(g, path, comments=()):
    """Write ``"n m"`` followed by one ``"i j"`` line per edge.

    ``comments`` become leading ``#`` lines, which :func:`read_edgelist` skips.
    """
    if g.nodes != tuple(range(1, g.n + 1)):
        raise ValueError("edge-list format requires nodes labelled 1..n")
    lines = [f"# {c}" for c in comments] + [f"{g.n} {g.m}"] + [f"{i} {j}" for i, j in g.edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_edgelist(path):
    rows = [ln.split() for ln in Path(path).read_text(encoding="utf-8").splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or len(rows[0]) != 2:
        raise ValueError(f"{path}: missing 'n m' header")
    n, m = int(rows[0][0]), int(rows[0][1])
    edges = [(int(a), int(b)) for a, b in rows[1:]]
    if len(edges) != m:
        raise ValueError(f"{path}: header declares {m} edges, found {len(edges)}")
    return Graph.from_edges(n, edges)
