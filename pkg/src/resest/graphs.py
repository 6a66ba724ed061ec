"""Directed graphs, SCC decomposition, and exact connectivity machinery.

Graphs are small (desk scale, up to a few hundred nodes), so connectivity is
computed exactly with unit-capacity max-flow over all relevant node pairs.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional

INF = float("inf")


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class DiGraph:
    """Directed graph over 0-based integer node ids.

    Undirected graphs are stored as symmetric edge sets with directed=False.
    Self-loops are never stored; self-influence lives in consensus weights.
    """

    node_count: int
    edges: frozenset[tuple[int, int]]
    directed: bool = True

    def __post_init__(self):
        if self.node_count < 0:
            raise GraphError("node_count must be non-negative")
        for (i, j) in self.edges:
            if i == j:
                raise GraphError(f"self-loop ({i},{j}) not allowed")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise GraphError(f"edge ({i},{j}) out of range")
        if not self.directed:
            for (i, j) in self.edges:
                if (j, i) not in self.edges:
                    raise GraphError("undirected graph requires symmetric edges")

    @staticmethod
    def from_edges(node_count: int, edges: Iterable[tuple[int, int]],
                   directed: bool = True) -> "DiGraph":
        es = set()
        for (i, j) in edges:
            es.add((int(i), int(j)))
            if not directed:
                es.add((int(j), int(i)))
        return DiGraph(node_count, frozenset(es), directed)

    def successors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for (i, j) in sorted(self.edges):
            adj[i].append(j)
        return adj

    def predecessors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for (i, j) in sorted(self.edges):
            adj[j].append(i)
        return adj

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self.edges

    def out_degree(self, i: int) -> int:
        return sum(1 for (a, _) in self.edges if a == i)

    def min_degree(self) -> int:
        """Minimum of min(in-degree, out-degree) over nodes."""
        if self.node_count == 0:
            return 0
        outd = [0] * self.node_count
        ind = [0] * self.node_count
        for (i, j) in self.edges:
            outd[i] += 1
            ind[j] += 1
        return min(min(o, d) for o, d in zip(outd, ind))

    def remove_edges(self, removed: Iterable[tuple[int, int]]) -> "DiGraph":
        rem = set()
        for (i, j) in removed:
            rem.add((i, j))
            if not self.directed:
                rem.add((j, i))
        return DiGraph(self.node_count, frozenset(self.edges - rem), self.directed)

    def remove_nodes(self, removed: Iterable[int]) -> "DiGraph":
        """Remove nodes and compact the remaining ids, preserving order."""
        rem = set(removed)
        keep = [v for v in range(self.node_count) if v not in rem]
        relabel = {v: idx for idx, v in enumerate(keep)}
        es = frozenset((relabel[i], relabel[j]) for (i, j) in self.edges
                       if i not in rem and j not in rem)
        return DiGraph(len(keep), es, self.directed)

    def add_edges(self, added: Iterable[tuple[int, int]]) -> "DiGraph":
        es = set(self.edges)
        for (i, j) in added:
            es.add((i, j))
            if not self.directed:
                es.add((j, i))
        return DiGraph(self.node_count, frozenset(es), self.directed)

    def to_json_obj(self) -> dict:
        return {
            "nodes": self.node_count,
            "directed": self.directed,
            "edges": sorted([list(e) for e in self.edges]),
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_obj(), f, indent=1)
            f.write("\n")

    @staticmethod
    def from_json_obj(obj: dict) -> "DiGraph":
        return DiGraph.from_edges(int(obj["nodes"]),
                                  [tuple(e) for e in obj["edges"]],
                                  bool(obj["directed"]))

    @staticmethod
    def load(path) -> "DiGraph":
        with open(path) as f:
            return DiGraph.from_json_obj(json.load(f))


@dataclass
class SccDecomposition:
    components: list[list[int]]
    condensation: list[tuple[int, int]]  # edges over component ids
    parent_flags: list[bool]

    @property
    def parent_components(self) -> list[list[int]]:
        return [c for c, p in zip(self.components, self.parent_flags) if p]


@dataclass
class ConnectivityReport:
    node_connectivity: Optional[int] = None
    link_connectivity: Optional[int] = None
    min_degree: Optional[int] = None
    algebraic_connectivity: Optional[float] = None
    certifying_node_cut: Optional[list[int]] = None
    certifying_link_cut: Optional[list[tuple[int, int]]] = None


def scc_decompose(g: DiGraph) -> SccDecomposition:
    """Iterative Tarjan SCC decomposition.

    Components are ordered by their smallest contained node id; node lists
    are sorted ascending.
    """
    n = g.node_count
    adj = g.successors()
    index = [-1] * n
    lowlink = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comp_of = [-1] * n
    comps: list[list[int]] = []
    counter = 0

    for root in range(n):
        if index[root] != -1:
            continue
        # explicit DFS stack of (node, iterator position)
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = lowlink[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while pi < len(adj[v]):
                w = adj[v][pi]
                pi += 1
                if index[w] == -1:
                    work[-1] = (v, pi)
                    work.append((w, 0))
                    advanced = True
                    break
                elif on_stack[w]:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                lowlink[u] = min(lowlink[u], lowlink[v])
            if lowlink[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))

    comps.sort(key=lambda c: c[0])
    for ci, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = ci

    cond = set()
    for (i, j) in g.edges:
        if comp_of[i] != comp_of[j]:
            cond.add((comp_of[i], comp_of[j]))
    has_out = [False] * len(comps)
    for (a, _) in cond:
        has_out[a] = True
    parent_flags = [not h for h in has_out]
    return SccDecomposition(comps, sorted(cond), parent_flags)


def is_strongly_connected(g: DiGraph) -> bool:
    if g.node_count == 0:
        return False
    return len(scc_decompose(g).components) == 1


def _bfs_reachable(adj: list[list[int]], src: int) -> set[int]:
    seen = {src}
    dq = deque([src])
    while dq:
        v = dq.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                dq.append(w)
    return seen


def reachable_from(g: DiGraph, src: int) -> set[int]:
    return _bfs_reachable(g.successors(), src)


class _FlowNet:
    """Unit/infinite capacity max-flow via BFS augmentation (Edmonds-Karp)."""

    def __init__(self, n: int):
        self.n = n
        self.head: list[list[int]] = [[] for _ in range(n)]  # indices into arrays
        self.to: list[int] = []
        self.cap: list[float] = []

    def add(self, u: int, v: int, c: float):
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(c)
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0.0)

    def max_flow(self, s: int, t: int, limit: float = INF) -> float:
        flow = 0.0
        while flow < limit:
            parent_arc = [-1] * self.n
            parent_arc[s] = -2
            dq = deque([s])
            while dq and parent_arc[t] == -1:
                v = dq.popleft()
                for ai in self.head[v]:
                    w = self.to[ai]
                    if parent_arc[w] == -1 and self.cap[ai] > 0:
                        parent_arc[w] = ai
                        dq.append(w)
            if parent_arc[t] == -1:
                break
            # trace path, find bottleneck
            aug = INF
            v = t
            while v != s:
                ai = parent_arc[v]
                aug = min(aug, self.cap[ai])
                v = self.to[ai ^ 1]
            v = t
            while v != s:
                ai = parent_arc[v]
                self.cap[ai] -= aug
                self.cap[ai ^ 1] += aug
                v = self.to[ai ^ 1]
            flow += aug
        return flow

    def min_cut_side(self, s: int) -> set[int]:
        seen = {s}
        dq = deque([s])
        while dq:
            v = dq.popleft()
            for ai in self.head[v]:
                w = self.to[ai]
                if w not in seen and self.cap[ai] > 0:
                    seen.add(w)
                    dq.append(w)
        return seen


def _node_cut_value(g: DiGraph, s: int, t: int,
                    limit: float = INF) -> tuple[float, list[int]]:
    """Size of the smallest node set separating s from t (s,t non-adjacent),
    plus a certifying cut. Node-split transform: v -> v_in (v), v_out (v+n)."""
    n = g.node_count
    net = _FlowNet(2 * n)
    for v in range(n):
        c = INF if v in (s, t) else 1.0
        net.add(v, v + n, c)
    for (i, j) in g.edges:
        net.add(i + n, j, INF)
    val = net.max_flow(s + n, t, limit)
    side = net.min_cut_side(s + n)
    cut = [v for v in range(n) if v in side and (v + n) not in side]
    return val, cut


def _link_cut_value(g: DiGraph, s: int, t: int,
                    limit: float = INF) -> tuple[float, list[tuple[int, int]]]:
    net = _FlowNet(g.node_count)
    arcs = []
    for (i, j) in sorted(g.edges):
        arcs.append(((i, j), len(net.to)))
        net.add(i, j, 1.0)
    val = net.max_flow(s, t, limit)
    side = net.min_cut_side(s)
    cut = [e for (e, ai) in arcs if e[0] in side and e[1] not in side]
    return val, cut


def node_connectivity(g: DiGraph) -> ConnectivityReport:
    """Exact node connectivity with a certifying node cut.

    Minimum over ordered non-adjacent pairs of the node-split max-flow;
    pairs adjacent in the (i,j) direction are skipped, and complete
    digraphs report n-1 with an arbitrary n-1 node cut certificate.
    """
    n = g.node_count
    rep = ConnectivityReport(min_degree=g.min_degree())
    if n <= 1 or not is_strongly_connected(g):
        rep.node_connectivity = 0
        rep.certifying_node_cut = []
        return rep
    best = None
    best_cut: list[int] = []
    for s in range(n):
        for t in range(n):
            if s == t or g.has_edge(s, t):
                continue
            limit = best if best is not None else INF
            val, cut = _node_cut_value(g, s, t, limit=INF)
            if best is None or val < best:
                best, best_cut = int(val), cut
            if best == 0:
                break
    if best is None:
        # complete digraph: every ordered pair adjacent
        best = n - 1
        best_cut = list(range(1, n))
    rep.node_connectivity = best
    rep.certifying_node_cut = sorted(best_cut)
    return rep


def link_connectivity(g: DiGraph) -> ConnectivityReport:
    """Exact link connectivity with a certifying link cut.

    For strongly connected graphs every global min edge cut separates node 0
    from some other node in one direction, so only 2(n-1) flows are needed.
    """
    n = g.node_count
    rep = ConnectivityReport(min_degree=g.min_degree())
    if n <= 1 or not is_strongly_connected(g):
        rep.link_connectivity = 0
        rep.certifying_link_cut = []
        return rep
    best = None
    best_cut: list[tuple[int, int]] = []
    for t in range(1, n):
        for (s_, t_) in ((0, t), (t, 0)):
            val, cut = _link_cut_value(g, s_, t_)
            if best is None or val < best:
                best, best_cut = int(val), cut
    rep.link_connectivity = best
    rep.certifying_link_cut = sorted(best_cut)
    return rep


def algebraic_connectivity(g: DiGraph) -> float:
    """Second smallest eigenvalue of the symmetric Laplacian L = D - W."""
    import numpy as np

    if g.directed:
        raise GraphError("algebraic connectivity defined for undirected graphs")
    n = g.node_count
    if n < 2:
        return 0.0
    W = np.zeros((n, n))
    for (i, j) in g.edges:
        W[i, j] = 1.0
    L = np.diag(W.sum(axis=1)) - W
    vals = np.linalg.eigvalsh(L)
    return float(np.sort(vals)[1])


def connectivity_report(g: DiGraph) -> ConnectivityReport:
    rep = node_connectivity(g)
    lrep = link_connectivity(g)
    rep.link_connectivity = lrep.link_connectivity
    rep.certifying_link_cut = lrep.certifying_link_cut
    if not g.directed:
        rep.algebraic_connectivity = algebraic_connectivity(g)
    return rep


def is_q_node_connected(g: DiGraph, q: int) -> tuple[bool, Optional[list[int]]]:
    """True iff the graph stays strongly connected after removal of any
    <= q nodes. On False, returns a violating node set of size <= q."""
    if q < 0:
        raise GraphError("q must be non-negative")
    if q >= g.node_count - 1:
        raise GraphError("q too large: removal would leave <= 1 node")
    if q == 0:
        if is_strongly_connected(g):
            return True, None
        return False, []
    rep = node_connectivity(g)
    if rep.node_connectivity > q:
        return True, None
    witness = rep.certifying_node_cut
    if not is_strongly_connected(g) :
        witness = []
    return False, witness


def is_q_link_connected(g: DiGraph, q: int) -> tuple[bool, Optional[list[tuple[int, int]]]]:
    if q < 0:
        raise GraphError("q must be non-negative")
    if q == 0:
        if is_strongly_connected(g):
            return True, None
        return False, []
    rep = link_connectivity(g)
    if rep.link_connectivity > q:
        return True, None
    witness = rep.certifying_link_cut
    if not is_strongly_connected(g):
        witness = []
    return False, witness


def _bridge_endpoints(g: DiGraph, s_side: set[int], t_side: set[int]) -> Optional[tuple[int, int]]:
    """Lowest-id absent edge from the source side to the sink side."""
    for a in sorted(s_side):
        for b in sorted(t_side):
            if a != b and not g.has_edge(a, b):
                return (a, b)
    return None


def augment_to_q_connected(g: DiGraph, q: int,
                           mode: Literal["node", "link"] = "link",
                           ) -> tuple[DiGraph, list[tuple[int, int]]]:
    """Greedy augmentation until the graph is q-{node,link}-connected.

    Repeatedly finds a certifying cut of size <= q and bridges across it with
    a bidirectional edge between the lowest-id eligible endpoints. Edge count
    strictly increases each round, so termination is guaranteed.
    """
    n = g.node_count
    if mode == "node":
        if q >= n - 1 or n < q + 2:
            raise GraphError("not enough nodes to reach target node connectivity")
    else:
        if n < 2:
            raise GraphError("need at least 2 nodes")
    check = is_q_node_connected if mode == "node" else is_q_link_connected
    added: list[tuple[int, int]] = []
    cur = g
    while True:
        ok, _ = check(cur, q)
        if ok:
            return cur, added
        # locate the tightest certifying cut and bridge it
        if not is_strongly_connected(cur):
            dec = scc_decompose(cur)
            # connect a parent component back to the rest
            src_side = set(dec.parent_components[0])
            dst_side = set(range(n)) - src_side
            pair = _bridge_endpoints(cur, src_side, dst_side) or _bridge_endpoints(cur, dst_side, src_side)
        else:
            if mode == "node":
                rep = node_connectivity(cur)
                cut = set(rep.certifying_node_cut)
                reduced = cur.remove_nodes(cut)
                keep = [v for v in range(n) if v not in cut]
                dec = scc_decompose(reduced)
                comp0 = {keep[v] for v in dec.components[0]}
                rest = set(keep) - comp0
                pair = _bridge_endpoints(cur, comp0, rest) or _bridge_endpoints(cur, rest, comp0)
            else:
                rep = link_connectivity(cur)
                cut = set(rep.certifying_link_cut)
                reduced = cur.remove_edges(cut)
                src = cut and sorted(cut)[0][0] or 0
                s_side = reachable_from(reduced, src)
                t_side = set(range(n)) - s_side
                if not t_side:
                    s_side, t_side = t_side, s_side
                pair = _bridge_endpoints(cur, s_side, t_side) or _bridge_endpoints(cur, t_side, s_side)
        if pair is None:
            raise GraphError("no eligible edge to add; target unreachable")
        cur = cur.add_edges([pair])
        added.append(pair)
        if not cur.directed:
            added.append((pair[1], pair[0]))
