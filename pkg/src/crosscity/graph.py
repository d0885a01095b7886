"""Road-network topology: undirected binary adjacency plus neighbor lists."""

from __future__ import annotations

import numpy as np


class GraphError(ValueError):
    pass


class RoadGraph:
    """Undirected graph over nodes 0..n-1 with binary symmetric adjacency."""

    def __init__(self, n_nodes, edges):
        if n_nodes <= 0:
            raise GraphError("node count must be positive")
        self.n_nodes = int(n_nodes)
        adj = np.zeros((n_nodes, n_nodes), dtype=np.float64)
        dedup = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise GraphError(f"self-loop on node {u} rejected")
            if not (0 <= u < n_nodes and 0 <= v < n_nodes):
                raise GraphError(f"edge ({u},{v}) out of range for {n_nodes} nodes")
            dedup.add((min(u, v), max(u, v)))
        for u, v in dedup:
            adj[u, v] = 1.0
            adj[v, u] = 1.0
        self.edges = sorted(dedup)
        self.adjacency = adj
        self.neighbors = [sorted(np.flatnonzero(adj[i]).tolist()) for i in range(n_nodes)]

    def degree(self, v):
        return len(self.neighbors[v])

    def mean_aggregation_matrix(self):
        """Row-normalized adjacency; rows of isolated nodes stay all-zero."""
        deg = self.adjacency.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.where(deg > 0, self.adjacency / deg, 0.0)
        return m

    def permuted(self, perm):
        """Relabel node i as perm[i]; used by equivariance checks."""
        perm = np.asarray(perm)
        return RoadGraph(self.n_nodes, [(perm[u], perm[v]) for u, v in self.edges])


def load_graph(path_or_lines, n_nodes=None):
    """Parse an edge list: one "u,v" per line, '#' comments, blank lines ok.

    When n_nodes is omitted it is inferred as max id + 1.
    """
    if isinstance(path_or_lines, (str, bytes)) or hasattr(path_or_lines, "__fspath__"):
        with open(path_or_lines) as fh:
            lines = fh.readlines()
    else:
        lines = list(path_or_lines)
    edges = []
    max_id = -1
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise GraphError(f"line {ln}: expected 'u,v', got {raw.strip()!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise GraphError(f"line {ln}: non-integer node id in {raw.strip()!r}") from exc
        edges.append((u, v))
        max_id = max(max_id, u, v)
    if n_nodes is None:
        if max_id < 0:
            raise GraphError("empty edge list and no node count given")
        n_nodes = max_id + 1
    return RoadGraph(n_nodes, edges)


def save_graph(graph, path):
    with open(path, "w") as fh:
        fh.write("# edge list: u,v per line\n")
        for u, v in graph.edges:
            fh.write(f"{u},{v}\n")
