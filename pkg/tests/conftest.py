"""Shared fixtures and brute-force oracles for the test suite.

The oracles here are deliberately independent of the library's algorithms:
reachability closure for SCCs and exhaustive removal for connectivity. They
are guarded to small graphs / small cut sizes.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from resest.gain import design_gain_lmi
from resest.graphs import DiGraph, is_strongly_connected
from resest.observability import place_sensors
from resest.presets import chain_system_pattern, six_sensor_network
from resest.weights import random_stochastic_weights

ORACLE_MAX_NODES = 10
ORACLE_MAX_CUT = 3


def oracle_sccs(g: DiGraph) -> list[list[int]]:
    """SCCs via pairwise mutual-reachability closure (repeated BFS)."""
    assert g.node_count <= ORACLE_MAX_NODES
    n = g.node_count
    reach = np.zeros((n, n), dtype=bool)
    adj = g.successors()
    for s in range(n):
        stack = [s]
        seen = {s}
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        for v in seen:
            reach[s, v] = True
    comps = []
    assigned = set()
    for v in range(n):
        if v in assigned:
            continue
        comp = [w for w in range(n) if reach[v, w] and reach[w, v]]
        comps.append(sorted(comp))
        assigned.update(comp)
    return sorted(comps, key=lambda c: c[0])


def oracle_node_connectivity(g: DiGraph, max_cut: int = ORACLE_MAX_CUT):
    """Exhaustive node-removal connectivity, exact up to max_cut.

    Returns the exact value if <= max_cut, else None (meaning > max_cut).
    """
    n = g.node_count
    if not is_strongly_connected(g):
        return 0
    top = min(max_cut, n - 2)
    for size in range(1, top + 1):
        for subset in itertools.combinations(range(n), size):
            if not is_strongly_connected(g.remove_nodes(subset)):
                return size
    if top == n - 2:
        return n - 1  # no separating set exists; convention for K_n
    return None


def oracle_link_connectivity(g: DiGraph, max_cut: int = ORACLE_MAX_CUT):
    if not is_strongly_connected(g):
        return 0
    if g.directed:
        links = sorted(g.edges)
    else:
        links = sorted({(min(i, j), max(i, j)) for (i, j) in g.edges})
    for size in range(1, max_cut + 1):
        for subset in itertools.combinations(links, size):
            if not is_strongly_connected(g.remove_edges(subset)):
                return size
    return None


def random_connected_undirected(rng: np.random.Generator, n: int) -> DiGraph:
    """Random connected undirected graph via G(n, p) with retries."""
    while True:
        p = rng.uniform(0.25, 0.7)
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < p]
        g = DiGraph.from_edges(n, edges, directed=False)
        if g.edges and is_strongly_connected(g):
            return g


def random_digraph(rng: np.random.Generator, n: int, p: float = 0.3) -> DiGraph:
    edges = [(i, j) for i in range(n) for j in range(n)
             if i != j and rng.random() < p]
    return DiGraph.from_edges(n, edges, directed=True)


@pytest.fixture(scope="session")
def fig3_instance():
    """Designed fig3 instance shared across expensive tests."""
    pattern = chain_system_pattern()
    network = six_sensor_network()
    suite = place_sensors(pattern, 1)
    Wc = random_stochastic_weights(network, 3)
    A = pattern.random_realization(np.random.default_rng(1), rho_target=1.05)
    K, report = design_gain_lmi(Wc.W, A, suite)
    return {"pattern": pattern, "network": network, "suite": suite,
            "Wc": Wc, "A": A, "K": K, "report": report}
