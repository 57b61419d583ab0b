"""Exact minimum s-t cut on small undirected networks.

Dinic's algorithm: breadth-first level graphs plus blocking flows found by
depth-first search, i.e. shortest augmenting paths first. Undirected edges
are a pair of opposing residual arcs sharing one capacity.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

EPS = 1e-12


@dataclass
class FlowNetwork:
    """Undirected capacitated network. ``arcs[i] = (u, v, capacity)``."""

    n: int
    source: int
    sink: int
    arcs: list[tuple[int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.source == self.sink:
            raise ValueError("source and sink must differ")
        for s in (self.source, self.sink):
            if not 0 <= s < self.n:
                raise ValueError(f"terminal {s} out of range for {self.n} nodes")

    def add_arc(self, u: int, v: int, capacity: float) -> int:
        if capacity < 0:
            raise ValueError("capacities must be non-negative")
        self.arcs.append((u, v, float(capacity)))
        return len(self.arcs) - 1


@dataclass
class CutResult:
    cut_value: float
    cut_edges: set[int]
    source_side: set[int]
    flow_value: float = 0.0


def min_cut(net: FlowNetwork) -> CutResult:
    """Minimum s-t cut of ``net``.

    ``source_side`` is the set of nodes reachable from the source in the final
    residual network (the cut closest to the source). ``cut_edges`` are indices
    into ``net.arcs``.
    """
    n, s, t = net.n, net.source, net.sink
    # residual arc 2*e runs u->v, 2*e+1 runs v->u; both start at the full capacity
    head: list[int] = []
    res: list[float] = []
    adj: list[list[int]] = [[] for _ in range(n)]
    for e, (u, v, c) in enumerate(net.arcs):
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"arc {e} references a node outside 0..{n - 1}")
        head += [v, u]
        res += [c, c]
        adj[u].append(2 * e)
        adj[v].append(2 * e + 1)

    scale = max((c for _, _, c in net.arcs), default=0.0)
    eps = EPS * max(scale, 1.0)
    flow = 0.0
    while True:
        level = [-1] * n
        level[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for a in adj[u]:
                v = head[a]
                if level[v] < 0 and res[a] > eps:
                    level[v] = level[u] + 1
                    q.append(v)
        if level[t] < 0:
            break
        it = [0] * n
        while True:
            pushed = _augment(s, t, adj, head, res, level, it, eps)
            if pushed <= 0:
                break
            flow += pushed

    seen = [False] * n
    seen[s] = True
    q = deque([s])
    while q:
        u = q.popleft()
        for a in adj[u]:
            v = head[a]
            if not seen[v] and res[a] > eps:
                seen[v] = True
                q.append(v)
    source_side = {i for i in range(n) if seen[i]}
    cut_edges = {e for e, (u, v, _) in enumerate(net.arcs) if seen[u] != seen[v]}
    value = float(sum(net.arcs[e][2] for e in cut_edges))
    return CutResult(value, cut_edges, source_side, flow)


def _augment(s, t, adj, head, res, level, it, eps) -> float:
    """Find one blocking-flow path in the level graph and push along it."""
    stack = [s]
    path: list[int] = []
    while stack:
        u = stack[-1]
        if u == t:
            pushed = min(res[a] for a in path)
            for a in path:
                res[a] -= pushed
                res[a ^ 1] += pushed
            return pushed
        arcs = adj[u]
        advanced = False
        while it[u] < len(arcs):
            a = arcs[it[u]]
            v = head[a]
            if res[a] > eps and level[v] == level[u] + 1:
                stack.append(v)
                path.append(a)
                advanced = True
                break
            it[u] += 1
        if not advanced:
            # dead end: retire u from this phase
            level[u] = -1
            stack.pop()
            if path:
                path.pop()
                it[stack[-1]] += 1
    return 0.0


def max_flow_value(net: FlowNetwork) -> float:
    return min_cut(net).flow_value
