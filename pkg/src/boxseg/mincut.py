"""Exact binary energy minimization over a superpoint graph via max-flow.

The energy sum(unary_v(x_v)) + sum(w_uv * [x_u != x_v]) with nonnegative
pairwise weights is submodular, so the standard two-terminal construction
(source = foreground, sink = background) yields the global minimum. Max-flow
is Dinic's algorithm on an adjacency-list residual graph; the foreground side
is everything reachable from the source in the final residual network.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

FG = 1
BG = 0


@dataclass
class SuperpointGraph:
    """Undirected graph with per-node FG/BG energies and nonnegative edge weights."""

    e_fg: np.ndarray  # (n,) cost of labeling node foreground
    e_bg: np.ndarray  # (n,) cost of labeling node background
    edges: np.ndarray  # (m, 2) int node pairs, no self loops
    weights: np.ndarray  # (m,) nonnegative

    def __post_init__(self) -> None:
        self.e_fg = np.asarray(self.e_fg, dtype=np.float64).reshape(-1)
        self.e_bg = np.asarray(self.e_bg, dtype=np.float64).reshape(-1)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if self.e_fg.shape != self.e_bg.shape:
            raise ValueError("unary arrays must have equal length")
        if self.edges.shape[0] != self.weights.shape[0]:
            raise ValueError("edge/weight length mismatch")
        if not (np.all(np.isfinite(self.e_fg)) and np.all(np.isfinite(self.e_bg))):
            raise ValueError("unary energies must be finite")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("edge weights must be finite")
        if np.any(self.weights < 0):
            raise ValueError("negative edge weight")
        if self.edges.size and np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise ValueError("self loop in superpoint graph")

    @property
    def num_nodes(self) -> int:
        return int(self.e_fg.shape[0])


class _Dinic:
    def __init__(self, n: int):
        self.n = n
        self.head: list[int] = []  # arc target
        self.cap: list[float] = []  # residual capacity
        self.adj: list[list[int]] = [[] for _ in range(n)]

    def add_edge(self, u: int, v: int, cap_uv: float, cap_vu: float = 0.0) -> None:
        self.adj[u].append(len(self.head))
        self.head.append(v)
        self.cap.append(cap_uv)
        self.adj[v].append(len(self.head))
        self.head.append(u)
        self.cap.append(cap_vu)

    def _bfs(self, s: int, t: int) -> bool:
        self.level = [-1] * self.n
        self.level[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for a in self.adj[u]:
                v = self.head[a]
                if self.cap[a] > 0 and self.level[v] < 0:
                    self.level[v] = self.level[u] + 1
                    q.append(v)
        return self.level[t] >= 0

    def _dfs(self, u: int, t: int, f: float) -> float:
        if u == t:
            return f
        while self.it[u] < len(self.adj[u]):
            a = self.adj[u][self.it[u]]
            v = self.head[a]
            if self.cap[a] > 0 and self.level[v] == self.level[u] + 1:
                pushed = self._dfs(v, t, min(f, self.cap[a]))
                if pushed > 0:
                    self.cap[a] -= pushed
                    self.cap[a ^ 1] += pushed
                    return pushed
            self.it[u] += 1
        return 0.0

    def max_flow(self, s: int, t: int) -> float:
        flow = 0.0
        while self._bfs(s, t):
            self.it = [0] * self.n
            while True:
                pushed = self._dfs(s, t, float("inf"))
                if pushed <= 0:
                    break
                flow += pushed
        return flow

    def source_side(self, s: int) -> np.ndarray:
        seen = np.zeros(self.n, dtype=bool)
        seen[s] = True
        q = deque([s])
        while q:
            u = q.popleft()
            for a in self.adj[u]:
                v = self.head[a]
                if self.cap[a] > 0 and not seen[v]:
                    seen[v] = True
                    q.append(v)
        return seen


def min_cut(graph: SuperpointGraph) -> np.ndarray:
    """Globally optimal FG/BG assignment; returns (n,) array of FG/BG labels."""
    n = graph.num_nodes
    if n == 0:
        return np.zeros(0, dtype=np.int8)
    s, t = n, n + 1
    net = _Dinic(n + 2)
    # Shift per-node unaries so both terminal capacities are nonnegative; the
    # shift adds a constant to every assignment's energy and preserves argmin.
    base = np.minimum(graph.e_fg, graph.e_bg)
    for v in range(n):
        cap_s = float(graph.e_bg[v] - base[v])  # cut when v lands background
        cap_t = float(graph.e_fg[v] - base[v])  # cut when v lands foreground
        if cap_s > 0:
            net.add_edge(s, v, cap_s)
        if cap_t > 0:
            net.add_edge(v, t, cap_t)
    for (u, v), w in zip(graph.edges, graph.weights):
        if w > 0:
            net.add_edge(int(u), int(v), float(w), float(w))
    net.max_flow(s, t)
    reachable = net.source_side(s)[:n]
    labels = np.where(reachable, FG, BG).astype(np.int8)
    return labels


def cut_cost(graph: SuperpointGraph, labels: np.ndarray) -> float:
    """Energy of an assignment under the graph's unaries and Potts pairwise terms."""
    labels = np.asarray(labels).reshape(-1)
    unary = np.where(labels == FG, graph.e_fg, graph.e_bg).sum()
    if graph.edges.size:
        diff = labels[graph.edges[:, 0]] != labels[graph.edges[:, 1]]
        return float(unary + graph.weights[diff].sum())
    return float(unary)
