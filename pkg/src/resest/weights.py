"""Row-stochastic consensus weight matrices conforming to a sensor network.

Convention: W(i,j) weights data flowing j -> i, so the graph edge (j,i) must
exist; the neighbor set N(i) of the averaging step includes i itself (each
sensor reuses its own posterior).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graphs import DiGraph, GraphError

ROW_SUM_TOL = 1e-12


@dataclass
class ConsensusMatrix:
    W: np.ndarray
    graph: DiGraph

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        m = self.graph.node_count
        if self.W.shape != (m, m):
            raise GraphError("weight matrix shape mismatch with graph")
        if np.any(self.W < 0):
            raise GraphError("weights must be non-negative")
        if np.max(np.abs(self.W.sum(axis=1) - 1.0)) > 1e-9:
            raise GraphError("rows must sum to 1")
        for i in range(m):
            for j in range(m):
                if i != j and self.W[i, j] != 0 and not self.graph.has_edge(j, i):
                    raise GraphError(f"W({i},{j}) nonzero without edge ({j},{i})")

    @property
    def m(self) -> int:
        return self.W.shape[0]

    def to_json_obj(self) -> list:
        return [[float(f"{x:.17g}") for x in row] for row in self.W]

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_obj(), f)
            f.write("\n")


def _in_neighbors(g: DiGraph) -> list[list[int]]:
    return g.predecessors()


def uniform_weights(g: DiGraph) -> ConsensusMatrix:
    """W(i,j) = 1/|N(i)| over in-neighbors j, self included."""
    m = g.node_count
    W = np.zeros((m, m))
    preds = _in_neighbors(g)
    for i in range(m):
        nbrs = sorted(set(preds[i]) | {i})
        for j in nbrs:
            W[i, j] = 1.0 / len(nbrs)
    return ConsensusMatrix(W, g)


def metropolis_hastings_weights(g: DiGraph) -> ConsensusMatrix:
    """Metropolis-Hastings weights on an undirected network:
    W(i,j) = 1/(max(d_i, d_j) + 1) for edges, diagonal absorbs the rest."""
    if g.directed:
        raise GraphError("Metropolis-Hastings weights require an undirected graph")
    m = g.node_count
    # symmetric edge set stores both directions, so out-degree = graph degree
    deg = [0] * m
    for (i, _) in g.edges:
        deg[i] += 1
    W = np.zeros((m, m))
    for (i, j) in g.edges:
        W[i, j] = 1.0 / (max(deg[i], deg[j]) + 1)
    for i in range(m):
        W[i, i] = 1.0 - W[i].sum()
    return ConsensusMatrix(W, g)


def random_stochastic_weights(g: DiGraph, seed: int) -> ConsensusMatrix:
    """Random positive values on the allowed positions, rows normalized."""
    rng = np.random.default_rng(seed)
    m = g.node_count
    W = np.zeros((m, m))
    preds = _in_neighbors(g)
    for i in range(m):
        nbrs = sorted(set(preds[i]) | {i})
        vals = rng.uniform(0.5, 1.5, size=len(nbrs))
        vals /= vals.sum()
        for j, v in zip(nbrs, vals):
            W[i, j] = v
    return ConsensusMatrix(W, g)


def make_weights(g: DiGraph, scheme: str, seed: int = 0) -> ConsensusMatrix:
    if scheme == "uniform":
        return uniform_weights(g)
    if scheme == "metropolis":
        return metropolis_hastings_weights(g)
    if scheme == "random":
        return random_stochastic_weights(g, seed)
    raise GraphError(f"unknown weight scheme: {scheme}")
