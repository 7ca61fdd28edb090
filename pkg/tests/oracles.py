"""Brute-force reference implementations of the node metrics.

Written without networkx: Floyd-Warshall distances with shortest-path
counting, BFS for clustering, and matrix powers or a dense
eigendecomposition for eigenvector centrality.
"""
from collections import deque
from itertools import combinations

import numpy as np

INF = float("inf")
SENTINEL = -10.0


class Oracle:
    def __init__(self, edges, policy: str):
        # Nodes that only ever had self-loops are still nodes
        self.nodes = sorted({u for u, _ in edges} | {v for _, v in edges})
        self.weights = {}
        for u, v in edges:
            if u != v:
                self.weights[(u, v)] = self.weights.get((u, v), 0) + 1
        self.policy = policy
        self.index = {v: i for i, v in enumerate(self.nodes)}
        self._dist = None
        self._count = None

    def _degree_weight(self, u, v):
        return 1 if self.policy == "unweighted" else self.weights[(u, v)]

    def _path_weight(self, u, v):
        return self.weights[(u, v)] if self.policy == "weighted" else 1

    def in_degree(self, v):
        return sum(self._degree_weight(a, b) for a, b in self.weights if b == v)

    def out_degree(self, v):
        return sum(self._degree_weight(a, b) for a, b in self.weights if a == v)

    def degree(self, v):
        return self.in_degree(v) + self.out_degree(v)

    def _paths(self):
        if self._dist is not None:
            return self._dist, self._count
        n = len(self.nodes)
        dist = [[INF] * n for _ in range(n)]
        for i in range(n):
            dist[i][i] = 0
        for (u, v) in self.weights:
            dist[self.index[u]][self.index[v]] = self._path_weight(u, v)
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    if dist[i][k] + dist[k][j] < dist[i][j]:
                        dist[i][j] = dist[i][k] + dist[k][j]

        # Shortest-path counts by increasing distance from each source
        count = [[0] * n for _ in range(n)]
        for s in range(n):
            count[s][s] = 1
            order = sorted((t for t in range(n) if dist[s][t] < INF and t != s), key=lambda t: dist[s][t])
            for t in order:
                total = 0
                for (u, v) in self.weights:
                    a, b = self.index[u], self.index[v]
                    if b == t and dist[s][a] + self._path_weight(u, v) == dist[s][t]:
                        total += count[s][a]
                count[s][t] = total
        self._dist, self._count = dist, count
        return dist, count

    def closeness(self, v):
        n = len(self.nodes)
        if n <= 1:
            return SENTINEL
        dist, _ = self._paths()
        i = self.index[v]
        reach = [dist[i][t] for t in range(n) if t != i and dist[i][t] < INF]
        if not reach:
            return SENTINEL
        r = len(reach)
        return (r / sum(reach)) * (r / (n - 1))

    def betweenness(self, v):
        n = len(self.nodes)
        if n < 3:
            return 0.0
        dist, count = self._paths()
        m = self.index[v]
        total = 0.0
        for s in range(n):
            for t in range(n):
                if s == t or m in (s, t) or dist[s][t] == INF:
                    continue
                if dist[s][m] + dist[m][t] == dist[s][t]:
                    total += count[s][m] * count[m][t] / count[s][t]
        return total / ((n - 1) * (n - 2))

    def _adjacency(self):
        n = len(self.nodes)
        a = np.zeros((n, n))
        for (u, w), count in self.weights.items():
            a[self.index[u], self.index[w]] = count if self.policy == "weighted" else 1
        return a

    @property
    def acyclic(self):
        a = self._adjacency()
        return not np.linalg.matrix_power(a, len(self.nodes)).any()

    def eigenvector(self, v):
        """Limit of the normalised iteration x <- A^T x from all-ones, or None where no limit is certain.

        Acyclic: the last non-zero (A^T)^k 1, exact in integers. Otherwise the
        eigenvector of the dominant eigenvalue when it is real and simple with
        every other eigenvalue at most 0.9 of it in modulus.
        """
        a = self._adjacency()
        n = len(self.nodes)
        i = self.index[v]

        if self.acyclic:
            walks = [np.linalg.matrix_power(a.T, k) @ np.ones(n) for k in range(n + 1)]
            last = [w for w in walks if w.any()][-1]
            return float(last[i] / last.max())

        values, vectors = np.linalg.eig(a.T)
        order = np.argsort(-np.abs(values))
        rho = values[order[0]]
        second = abs(values[order[1]]) if n > 1 else 0.0
        if abs(rho.imag) > 1e-9 or rho.real <= 0 or second > 0.9 * rho.real:
            return None
        vec = np.real(vectors[:, order[0]])
        vec = vec / vec[np.argmax(np.abs(vec))]
        return float(vec[i])

    @property
    def eigen_tolerance(self):
        # The iteration stops at a 1e-8 step; the spectral limit lies within 1e-6 of it
        return 1e-9 if self.acyclic else 1e-6

    def _undirected(self):
        nb = {u: set() for u in self.nodes}
        for (u, w) in self.weights:
            nb[u].add(w)
            nb[w].add(u)
        return nb

    def clustering(self, v, d):
        nb = self._undirected()
        neighbours = sorted(nb[v])
        k = len(neighbours)
        if k < 2:
            return 0.0

        def bfs(src):
            seen = {src: 0}
            queue = deque([src])
            while queue:
                x = queue.popleft()
                for y in nb[x]:
                    if y != v and y not in seen:
                        seen[y] = seen[x] + 1
                        queue.append(y)
            return seen

        hits = 0
        for a, b in combinations(neighbours, 2):
            if bfs(a).get(b) == d:
                hits += 1
        return hits / (k * (k - 1) / 2)

    def vector(self, v):
        return (
            float(self.degree(v)),
            float(self.in_degree(v)),
            float(self.out_degree(v)),
            self.closeness(v),
            self.betweenness(v),
            self.eigenvector(v),
            self.clustering(v, 1),
            self.clustering(v, 2),
        )
