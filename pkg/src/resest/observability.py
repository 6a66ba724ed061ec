"""Structural observability analysis and redundant sensor placement.

Structural claims are checked numerically by instantiating random weights on
the sparsity pattern (generic-property argument), with the Kalman rank test
as the independent oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graphs import DiGraph, is_strongly_connected, scc_decompose

RANK_TOL = 1e-8
DENSE_GUARD = 1000


class ObservabilityError(ValueError):
    pass


@dataclass(frozen=True)
class SparsityPattern:
    """Nonzero positions of an n-by-n system matrix."""

    dimension: int
    nonzeros: frozenset[tuple[int, int]]

    def __post_init__(self):
        n = self.dimension
        for (i, j) in self.nonzeros:
            if not (0 <= i < n and 0 <= j < n):
                raise ObservabilityError(f"position ({i},{j}) out of range")

    @staticmethod
    def from_positions(n: int, positions, ensure_diagonal: bool = True) -> "SparsityPattern":
        pos = {(int(i), int(j)) for (i, j) in positions}
        if ensure_diagonal:
            pos |= {(i, i) for i in range(n)}
        return SparsityPattern(n, frozenset(pos))

    def has_full_diagonal(self) -> bool:
        return all((i, i) in self.nonzeros for i in range(self.dimension))

    def random_realization(self, rng: np.random.Generator,
                           rho_target: Optional[float] = None) -> np.ndarray:
        """Random matrix on the pattern: magnitudes uniform in [0.5, 1.5],
        signs random; optionally rescaled to a target spectral radius."""
        n = self.dimension
        A = np.zeros((n, n))
        for (i, j) in sorted(self.nonzeros):
            A[i, j] = rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
        if rho_target is not None:
            rho = max(abs(np.linalg.eigvals(A)))
            if rho > 0:
                A *= rho_target / rho
        return A


@dataclass
class SensorSuite:
    """Ordered sensors, each measuring a list of state indices."""

    n: int
    measured_states: list[list[int]]
    classes: list[int]

    def __post_init__(self):
        if len(self.classes) != len(self.measured_states):
            raise ObservabilityError("classes and sensors length mismatch")
        for states in self.measured_states:
            for s in states:
                if not (0 <= s < self.n):
                    raise ObservabilityError(f"measured state {s} out of range")

    @property
    def m(self) -> int:
        return len(self.measured_states)

    def output_matrix(self, i: int) -> np.ndarray:
        """C_i: 0/1 selection rows for sensor i."""
        C = np.zeros((len(self.measured_states[i]), self.n))
        for r, s in enumerate(self.measured_states[i]):
            C[r, s] = 1.0
        return C

    def global_output_matrix(self) -> np.ndarray:
        return np.vstack([self.output_matrix(i) for i in range(self.m)])

    def selector_block(self, i: int) -> np.ndarray:
        """C_i^T C_i: diagonal 0/1 selector of sensor i's measured states."""
        Ci = self.output_matrix(i)
        return Ci.T @ Ci

    def measurement_operator(self) -> np.ndarray:
        """D_C = blockdiag[C_i^T C_i], an mn-by-mn matrix."""
        from scipy.linalg import block_diag
        return block_diag(*[self.selector_block(i) for i in range(self.m)])

    def remove_sensors(self, removed: Sequence[int]) -> "SensorSuite":
        rem = set(removed)
        keep = [i for i in range(self.m) if i not in rem]
        return SensorSuite(self.n,
                           [list(self.measured_states[i]) for i in keep],
                           [self.classes[i] for i in keep])

    def to_json_obj(self) -> dict:
        return {"m": self.m,
                "sensors": [{"id": i,
                             "measures": list(self.measured_states[i]),
                             "class": self.classes[i]}
                            for i in range(self.m)],
                "n": self.n}

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_obj(), f, indent=1)
            f.write("\n")

    @staticmethod
    def from_json_obj(obj: dict) -> "SensorSuite":
        sensors = sorted(obj["sensors"], key=lambda s: s["id"])
        return SensorSuite(int(obj["n"]),
                           [list(s["measures"]) for s in sensors],
                           [int(s["class"]) for s in sensors])

    @staticmethod
    def load(path) -> "SensorSuite":
        with open(path) as f:
            return SensorSuite.from_json_obj(json.load(f))


def system_digraph(a: SparsityPattern) -> DiGraph:
    """System digraph: edge j -> i for each nonzero A(i,j); diagonals omitted
    (self-cycles are implicit in the full-rank assumption)."""
    edges = [(j, i) for (i, j) in a.nonzeros if i != j]
    return DiGraph.from_edges(a.dimension, edges, directed=True)


def equivalence_classes(a: SparsityPattern) -> tuple[list[list[int]], list[int]]:
    """Partition of states into parent-SCC equivalence classes plus the
    non-parent states (where an output is never required)."""
    if not a.has_full_diagonal():
        raise ObservabilityError("pattern must have a full diagonal")
    dec = scc_decompose(system_digraph(a))
    classes = [comp for comp, p in zip(dec.components, dec.parent_flags) if p]
    non_essential = sorted(
        v for comp, p in zip(dec.components, dec.parent_flags) if not p for v in comp)
    return classes, non_essential


def place_sensors(a: SparsityPattern, q: int,
                  allow_duplicates: bool = True) -> SensorSuite:
    """q+1 single-state sensors per parent SCC, states taken ascending.

    Parent SCCs smaller than q+1 states are covered by duplicating
    measurements of the same state unless allow_duplicates is False.
    """
    if q < 0:
        raise ObservabilityError("q must be non-negative")
    classes, _ = equivalence_classes(a)
    measured: list[list[int]] = []
    class_ids: list[int] = []
    for cid, states in enumerate(classes):
        if len(states) < q + 1 and not allow_duplicates:
            raise ObservabilityError(
                f"parent SCC {cid} has {len(states)} states < q+1 = {q + 1}")
        for k in range(q + 1):
            measured.append([states[k % len(states)]])
            class_ids.append(cid)
    return SensorSuite(a.dimension, measured, class_ids)


def check_structural_observability(a: SparsityPattern, s: SensorSuite) -> bool:
    """Sufficient condition for full-rank systems: every state has a directed
    path to some measured state in the system digraph."""
    if not a.has_full_diagonal():
        raise ObservabilityError("pattern must have a full diagonal")
    g = system_digraph(a)
    measured = {st for states in s.measured_states for st in states}
    if not measured:
        return False
    # reverse BFS from measured set
    preds = g.predecessors()
    from collections import deque
    seen = set(measured)
    dq = deque(measured)
    while dq:
        v = dq.popleft()
        for w in preds[v]:
            if w not in seen:
                seen.add(w)
                dq.append(w)
    return len(seen) == a.dimension


def numeric_observability_rank(A: np.ndarray, C: np.ndarray) -> int:
    """Rank of the Kalman observability matrix [C; CA; ...; CA^(n-1)]."""
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or C.shape[1] != n:
        raise ObservabilityError("dimension mismatch")
    blocks = []
    Ck = C.copy()
    for _ in range(n):
        blocks.append(Ck)
        Ck = Ck @ A
    obs = np.vstack(blocks)
    sv = np.linalg.svd(obs, compute_uv=False)
    if sv.size == 0:
        return 0
    return int(np.sum(sv > RANK_TOL * sv[0]))


@dataclass
class DistributedObservabilityResult:
    observable: bool
    method: str  # "dense" or "structural"
    rank: Optional[int] = None
    dimension: Optional[int] = None


def distributed_observability_check(W: np.ndarray, A: np.ndarray, s: SensorSuite,
                                    network: Optional[DiGraph] = None,
                                    a_pattern: Optional[SparsityPattern] = None,
                                    dense_guard: int = DENSE_GUARD,
                                    ) -> DistributedObservabilityResult:
    """Observability of the pair (W kron A, D_C).

    Within the guard the dense Kalman rank is computed on the mn-dimensional
    pair. Above it, the structural proxy is used: strongly connected network,
    full-rank A, and parent-SCC output coverage.
    """
    W = np.asarray(W, dtype=float)
    A = np.asarray(A, dtype=float)
    m, n = W.shape[0], A.shape[0]
    if s.m != m or s.n != n:
        raise ObservabilityError("suite dimensions inconsistent with W, A")
    mn = m * n
    if mn <= dense_guard:
        M = np.kron(W, A)
        DC = s.measurement_operator()
        rank = numeric_observability_rank(M, DC)
        return DistributedObservabilityResult(rank == mn, "dense", rank, mn)
    if network is None or a_pattern is None:
        raise ObservabilityError(
            "dense guard exceeded: network and pattern required for structural proxy")
    sc = is_strongly_connected(network)
    full_rank = abs(np.linalg.slogdet(A)[0]) > 0
    covered = check_structural_observability(a_pattern, s)
    return DistributedObservabilityResult(bool(sc and full_rank and covered),
                                          "structural", None, mn)
