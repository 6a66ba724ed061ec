"""Bundled example systems and networks used by the CLI and tests."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graphs import DiGraph
from .observability import SensorSuite, SparsityPattern


def three_connected_network() -> DiGraph:
    """Undirected 8-node cube graph: 3-node-connected and 3-link-connected."""
    edges = []
    for v in range(8):
        for bit in range(3):
            w = v ^ (1 << bit)
            if v < w:
                edges.append((v, w))
    return DiGraph.from_edges(8, edges, directed=False)


def equivalence_example_pattern() -> SparsityPattern:
    """System with a single parent SCC {0,1}; states 2 and 3 feed into it.

    Outputs on states 0 and 1 are observationally equivalent: either alone
    preserves observability, removing both destroys it.
    """
    off_diag = [(0, 1), (1, 0),   # 2-cycle, the parent SCC
                (0, 2), (2, 3)]   # chain 3 -> 2 -> 0 (A(i,j) != 0 means j -> i)
    return SparsityPattern.from_positions(4, off_diag)


def equivalence_example_suite() -> SensorSuite:
    """Two sensors measuring states 0 and 1 (the y1/y2 pair)."""
    return SensorSuite(4, [[0], [1]], [0, 0])


def chain_system_pattern() -> SparsityPattern:
    """7-state system: three 2-cycle parent SCCs {0,1}, {2,3}, {4,5} fed by
    the chain state 6."""
    off_diag = [(0, 1), (1, 0), (2, 3), (3, 2), (4, 5), (5, 4),
                (0, 6), (2, 6), (4, 6)]  # state 6 feeds each parent SCC
    return SparsityPattern.from_positions(7, off_diag)


def six_sensor_network() -> DiGraph:
    """Undirected 6-sensor network (a Moebius ladder, isomorphic to K_3,3):
    3-regular, 3-node-connected and 3-link-connected."""
    edges = [(0, 1), (1, 3), (2, 3), (2, 5), (4, 5), (0, 4),
             (0, 2), (1, 5), (3, 4)]
    return DiGraph.from_edges(6, edges, directed=False)


LINK_FAILURE_SET = [(0, 1), (1, 3), (2, 3)]


def replicated_pattern(reps: int = 10) -> SparsityPattern:
    """Block-diagonal replication of the 7-state chain system."""
    base = chain_system_pattern()
    nb = base.dimension
    positions = []
    for r in range(reps):
        off = r * nb
        positions.extend((i + off, j + off) for (i, j) in base.nonzeros)
    return SparsityPattern.from_positions(reps * nb, positions,
                                          ensure_diagonal=False)


def circulant_network(m: int, offsets=(1, 7, 23)) -> DiGraph:
    """Undirected circulant graph. The default long-range offsets give an
    expander-like 6-regular network whose consensus matrices mix fast,
    which keeps the unstable mode cluster of W(x)A small."""
    edges = []
    for v in range(m):
        for d in offsets:
            edges.append((v, (v + d) % m))
    return DiGraph.from_edges(m, edges, directed=False)


@dataclass
class Preset:
    name: str
    pattern: Optional[SparsityPattern] = None
    network: Optional[DiGraph] = None
    suite: Optional[SensorSuite] = None
    q: int = 1
    rho_target: float = 1.05
    horizon: int = 100
    runs: int = 1
    noise: float = 0.1
    seed: int = 7
    failure_links: list = field(default_factory=list)
    failure_nodes: list = field(default_factory=list)
    failure_time: Optional[int] = None
    lmi_guard: int = 100


def get_preset(name: str) -> Preset:
    if name == "fig2":
        return Preset("fig2",
                      pattern=equivalence_example_pattern(),
                      network=three_connected_network(),
                      suite=equivalence_example_suite(),
                      q=0)
    if name == "fig3-nominal":
        return Preset("fig3-nominal",
                      pattern=chain_system_pattern(),
                      network=six_sensor_network(),
                      q=1)
    if name == "fig6-linkfail":
        p = get_preset("fig3-nominal")
        p.name = "fig6-linkfail"
        p.failure_links = list(LINK_FAILURE_SET)
        p.failure_time = p.horizon // 2
        return p
    if name == "fig6-nodefail":
        p = get_preset("fig3-nominal")
        p.name = "fig6-nodefail"
        p.failure_nodes = [1]  # one sensor of a duplicated equivalence class
        p.failure_time = p.horizon // 2
        return p
    if name == "fig7-large":
        return Preset("fig7-large",
                      pattern=replicated_pattern(10),
                      network=circulant_network(60),
                      q=1,
                      lmi_guard=100)
    raise KeyError(f"unknown preset: {name}")


PRESET_NAMES = ["fig2", "fig3-nominal", "fig6-linkfail", "fig6-nodefail",
                "fig7-large"]


def realize_system(preset: Preset, seed: Optional[int] = None) -> np.ndarray:
    rng = np.random.default_rng(preset.seed if seed is None else seed)
    return preset.pattern.random_realization(rng, rho_target=preset.rho_target)
