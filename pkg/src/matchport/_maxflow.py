"""Dinic max-flow on small dense bipartite graphs.

Used by the bottleneck audits to answer feasibility questions of the form
"can all mass travel through the allowed pairs".  Capacities are either
plain ints (masses scaled by a common denominator, exact arithmetic) or
floats (with a saturation tolerance).  The blocking-flow search is
iterative, so deep level graphs cannot hit the recursion limit.
"""

from __future__ import annotations

__all__ = ["Dinic", "bipartite_feasible"]


class Dinic:
    def __init__(self, n: int):
        self.n = n
        self.adj: list[list[int]] = [[] for _ in range(n)]
        self.to: list[int] = []
        self.cap: list = []

    def add_edge(self, u: int, v: int, cap) -> int:
        e = len(self.to)
        self.adj[u].append(e)
        self.to.append(v)
        self.cap.append(cap)
        self.adj[v].append(e + 1)
        self.to.append(u)
        self.cap.append(cap * 0)
        return e

    def _levels(self, s: int, t: int, tol):
        level = [-1] * self.n
        level[s] = 0
        queue = [s]
        for v in queue:
            for e in self.adj[v]:
                w = self.to[e]
                if level[w] < 0 and self.cap[e] > tol:
                    level[w] = level[v] + 1
                    queue.append(w)
        return level if level[t] >= 0 else None

    def _blocking(self, s: int, t: int, level, it, tol):
        sent = self.cap[0] * 0
        path: list[int] = []
        v = s
        while True:
            if v == t:
                bottleneck = min(self.cap[e] for e in path)
                for e in path:
                    self.cap[e] -= bottleneck
                    self.cap[e ^ 1] += bottleneck
                sent += bottleneck
                # retreat to the first saturated edge on the path
                keep = 0
                while keep < len(path) and self.cap[path[keep]] > tol:
                    keep += 1
                del path[keep:]
                v = s if not path else self.to[path[-1]]
                continue
            advanced = False
            while it[v] < len(self.adj[v]):
                e = self.adj[v][it[v]]
                w = self.to[e]
                if self.cap[e] > tol and level[w] == level[v] + 1:
                    path.append(e)
                    v = w
                    advanced = True
                    break
                it[v] += 1
            if advanced:
                continue
            if v == s:
                return sent
            level[v] = -1
            e = path.pop()
            v = self.to[e ^ 1]
            it[v] += 1

    def max_flow(self, s: int, t: int, tol=0):
        flow = self.cap[0] * 0 if self.cap else 0
        while True:
            level = self._levels(s, t, tol)
            if level is None:
                return flow
            it = [0] * self.n
            flow += self._blocking(s, t, level, it, tol)


def bipartite_feasible(a, b, allowed, tol=0) -> bool:
    """Can supplies ``a`` reach demands ``b`` through ``allowed`` pairs?

    ``allowed`` is an (m, n) boolean mask; middle arcs are uncapacitated.
    With int masses the answer is exact (tol = 0); with floats the flow
    must reach the total up to ``tol``.
    """
    m, n = len(a), len(b)
    total = sum(a)
    net = Dinic(m + n + 2)
    s, t = m + n, m + n + 1
    big = total + (1 if tol == 0 else tol)
    for i in range(m):
        net.add_edge(s, i, a[i])
    for j in range(n):
        net.add_edge(m + j, t, b[j])
    for i in range(m):
        row = allowed[i]
        for j in range(n):
            if row[j]:
                net.add_edge(i, m + j, big)
    inner_tol = 0 if tol == 0 else tol * 1e-3
    return net.max_flow(s, t, inner_tol) >= total - tol
