"""Min-cost circulation and the Hungarian method."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

COST_TOL = 1e-12


class FlowError(ValueError):
    pass


@dataclass
class FlowNetwork:
    """Directed network; ``supply[v]`` is required outflow minus inflow
    (all zero for a pure circulation)."""

    n_nodes: int
    tails: list = field(default_factory=list)
    heads: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    cap: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    supply: Optional[list] = None

    def add_edge(self, u: int, v: int, cost: float, cap: int, lower: int = 0) -> int:
        self.tails.append(u)
        self.heads.append(v)
        self.lower.append(int(lower))
        self.cap.append(int(cap))
        self.costs.append(float(cost))
        return len(self.tails) - 1

    def add_node(self) -> int:
        self.n_nodes += 1
        if self.supply is not None:
            self.supply.append(0)
        return self.n_nodes - 1

    @property
    def n_edges(self) -> int:
        return len(self.tails)

    def validate(self):
        if self.n_nodes < 0:
            raise FlowError("negative node count")
        m = self.n_edges
        if not (len(self.heads) == len(self.lower) == len(self.cap) == len(self.costs) == m):
            raise FlowError("edge arrays have different lengths")
        for e in range(m):
            u, v = self.tails[e], self.heads[e]
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                raise FlowError(f"edge {e} has an endpoint outside the network")
            if self.lower[e] > self.cap[e] or self.lower[e] < 0:
                raise FlowError(f"edge {e} needs 0 <= lower <= capacity")
            if not math.isfinite(self.costs[e]):
                raise FlowError(f"edge {e} has a non-finite cost")
        if self.supply is not None and len(self.supply) != self.n_nodes:
            raise FlowError("supply must list every node")


@dataclass
class FlowSolution:
    flow: np.ndarray
    total_cost: float
    feasible: bool


class _Residual:
    """Adjacency-list residual graph; arc a and a^1 are mutual reverses."""

    def __init__(self, n: int):
        self.n = n
        self.adj: list[list[int]] = [[] for _ in range(n)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cost: list[float] = []

    def add(self, u: int, v: int, cap: int, cost: float) -> int:
        a = len(self.to)
        self.to += [v, u]
        self.cap += [cap, 0]
        self.cost += [cost, -cost]
        self.adj[u].append(a)
        self.adj[v].append(a + 1)
        return a

    def successive_shortest_paths(self, s: int, t: int, need: int) -> int:
        n = self.n
        # relative, so rescaled costs make the same choices
        tol = COST_TOL * max((abs(c) for c in self.cost), default=0.0)
        pot = [0.0] * n
        sent = 0
        while sent < need:
            dist = [math.inf] * n
            prev = [-1] * n
            dist[s] = 0.0
            heap = [(0.0, s)]
            while heap:
                d, u = heapq.heappop(heap)
                if d > dist[u]:
                    continue
                pu = pot[u]
                for a in self.adj[u]:
                    if self.cap[a] <= 0:
                        continue
                    v = self.to[a]
                    rc = self.cost[a] + pu - pot[v]
                    if rc < 0:
                        # round-off only; potentials keep reduced costs >= 0
                        rc = 0.0
                    nd = d + rc
                    if nd < dist[v] - tol:
                        dist[v] = nd
                        prev[v] = a
                        heapq.heappush(heap, (nd, v))
            if dist[t] == math.inf:
                break
            dt = dist[t]
            for v in range(n):
                pot[v] += min(dist[v], dt)
            push = need - sent
            v = t
            while v != s:
                a = prev[v]
                push = min(push, self.cap[a])
                v = self.to[a ^ 1]
            v = t
            while v != s:
                a = prev[v]
                self.cap[a] -= push
                self.cap[a ^ 1] += push
                v = self.to[a ^ 1]
            sent += push
        return sent


def min_cost_circulation(net: FlowNetwork) -> FlowSolution:
    """Minimum-cost integral flow meeting every lower bound, capacity and
    node supply.

    Lower bounds are shifted into node supplies and negative-cost arcs are
    pre-saturated (replaced by their positive reverse), so the remaining
    problem has nonnegative costs and is solved by successive shortest
    paths with Dijkstra potentials.
    """
    net.validate()
    n, m = net.n_nodes, net.n_edges
    excess = [0] * n
    if net.supply is not None:
        excess = [int(s) for s in net.supply]
    base = np.array(net.lower, dtype=np.int64)
    saturated = np.zeros(m, dtype=bool)
    for e in range(m):
        u, v, lo = net.tails[e], net.heads[e], net.lower[e]
        excess[u] -= lo
        excess[v] += lo
        if net.costs[e] < 0:
            extra = net.cap[e] - lo
            excess[u] -= extra
            excess[v] += extra
            saturated[e] = True
    res = _Residual(n + 2)
    s, t = n, n + 1
    arcs = []
    for e in range(m):
        u, v = net.tails[e], net.heads[e]
        room = net.cap[e] - net.lower[e]
        if saturated[e]:
            arcs.append(res.add(v, u, room, -net.costs[e]))
        else:
            arcs.append(res.add(u, v, room, net.costs[e]))
    need = 0
    for v in range(n):
        if excess[v] > 0:
            res.add(s, v, excess[v], 0.0)
            need += excess[v]
        elif excess[v] < 0:
            res.add(v, t, -excess[v], 0.0)
    if sum(excess) != 0:
        return FlowSolution(np.zeros(m, dtype=np.int64), math.inf, False)
    sent = res.successive_shortest_paths(s, t, need)
    flow = base.copy()
    for e, a in enumerate(arcs):
        pushed = res.cap[a ^ 1]
        if saturated[e]:
            flow[e] = net.cap[e] - pushed
        else:
            flow[e] += pushed
    total = float(np.dot(flow, net.costs)) if m else 0.0
    return FlowSolution(flow, total, sent == need)


def residual_negative_cycle(net: FlowNetwork, flow, tol: float = COST_TOL) -> bool:
    """Bellman-Ford check for a negative cycle in the residual graph of
    ``flow``; an optimal circulation has none."""
    n = net.n_nodes
    arcs = []
    for e in range(net.n_edges):
        u, v, c = net.tails[e], net.heads[e], net.costs[e]
        if flow[e] < net.cap[e]:
            arcs.append((u, v, c))
        if flow[e] > net.lower[e]:
            arcs.append((v, u, -c))
    dist = [0.0] * n
    for _ in range(n):
        changed = False
        for u, v, c in arcs:
            if dist[u] + c < dist[v] - tol:
                dist[v] = dist[u] + c
                changed = True
        if not changed:
            return False
    return True


def check_flow(net: FlowNetwork, flow) -> bool:
    flow = np.asarray(flow)
    if np.any(flow < np.asarray(net.lower)) or np.any(flow > np.asarray(net.cap)):
        return False
    bal = np.zeros(net.n_nodes, dtype=np.int64)
    np.add.at(bal, np.asarray(net.tails, dtype=int), flow)
    np.subtract.at(bal, np.asarray(net.heads, dtype=int), flow)
    want = np.zeros(net.n_nodes, dtype=np.int64) if net.supply is None else np.asarray(net.supply)
    return bool(np.all(bal == want))


def _hungarian_core(c: np.ndarray) -> np.ndarray:
    """Shortest augmenting path Hungarian method for rows <= cols; returns
    the column of each row."""
    nr, nc = c.shape
    INF = math.inf
    u = np.zeros(nr + 1)
    v = np.zeros(nc + 1)
    p = np.zeros(nc + 1, dtype=int)  # p[j]: row (1-based) matched to column j
    way = np.zeros(nc + 1, dtype=int)
    for i in range(1, nr + 1):
        p[0] = i
        j0 = 0
        minv = np.full(nc + 1, INF)
        used = np.zeros(nc + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta, j1 = INF, 0
            for j in range(1, nc + 1):
                if not used[j]:
                    cur = c[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta, j1 = minv[j], j
            for j in range(nc + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    cols = np.full(nr, -1, dtype=int)
    for j in range(1, nc + 1):
        if p[j]:
            cols[p[j] - 1] = j - 1
    return cols


def hungarian(cost, tie_tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Minimum-cost injective row->column assignment.

    Among optimal assignments the lexicographically smallest one is
    returned: rows are fixed in order to the smallest column that still
    admits an optimal completion.
    """
    c = np.atleast_2d(np.asarray(cost, dtype=float))
    nr, nc = c.shape
    if nr > nc:
        raise FlowError("hungarian needs rows <= cols")
    if not np.all(np.isfinite(c)):
        raise FlowError("cost matrix must be finite")
    if nr == 0:
        return np.zeros(0, dtype=int), 0.0
    cols = _hungarian_core(c)
    best = float(c[np.arange(nr), cols].sum())
    tol = tie_tol * max(abs(best), float(np.abs(c).max()))
    fixed: list[int] = []
    prefix = 0.0
    for i in range(nr):
        free = [j for j in range(nc) if j not in fixed]
        for j in free:
            rest_rows = nr - i - 1
            if rest_rows == 0:
                total = prefix + c[i, j]
            else:
                rest_cols = [jj for jj in free if jj != j]
                sub = c[i + 1:][:, rest_cols]
                sc = _hungarian_core(sub)
                total = prefix + c[i, j] + float(sub[np.arange(rest_rows), sc].sum())
            if total <= best + tol:
                fixed.append(j)
                prefix += c[i, j]
                break
        else:  # pragma: no cover - the optimum always has a completion
            raise FlowError("tie-breaking lost the optimum")
    out = np.array(fixed, dtype=int)
    return out, float(c[np.arange(nr), out].sum())
