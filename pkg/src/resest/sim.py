"""Plant simulation, the single time-scale distributed estimator, and
failure injection.

Each plant step consumes exactly one communication round: every sensor
averages its neighbors' previous posteriors (consensus prediction) and then
applies its local innovation update. Failure events rewrite the network,
weights, suite, and gain before the step at which they fire.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .gain import (BlockDiagGain, SynthesisReport, assemble_closed_loop,
                   design_gain, spectral_radius, spectral_radius_sparse,
                   _ClosedLoopOperator, _effective_params)
from .graphs import DiGraph, is_strongly_connected
from .observability import SensorSuite
from .weights import ConsensusMatrix

DENSE_RHO_GUARD = 1000


class SimulationError(ValueError):
    pass


@dataclass
class LtiSystem:
    A: np.ndarray
    process_noise_cov: Optional[np.ndarray] = None
    measurement_noise_var: float = 0.1

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise SimulationError("A must be square")
        if np.any(np.diag(self.A) == 0):
            raise SimulationError("A must have nonzero diagonal entries")
        if self.process_noise_cov is None:
            self.process_noise_cov = 0.1 * np.eye(n)
        else:
            self.process_noise_cov = np.asarray(self.process_noise_cov, dtype=float)
        if self.measurement_noise_var < 0:
            raise SimulationError("measurement noise variance must be >= 0")

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass
class EstimatorState:
    priors: np.ndarray      # m x n, x_hat_i(k|k-1)
    posteriors: np.ndarray  # m x n, x_hat_i(k|k)
    k: int


@dataclass
class FailureEvent:
    time: int
    kind: Literal["remove-links", "remove-nodes"]
    targets: list


@dataclass
class FailureScenario:
    events: list[FailureEvent] = field(default_factory=list)
    policy: Literal["keep-gain", "redesign-gain"] = "redesign-gain"

    def to_json_obj(self) -> dict:
        return {"policy": self.policy,
                "events": [{"time": e.time, "kind": e.kind,
                            "targets": [list(t) if isinstance(t, (tuple, list)) else t
                                        for t in e.targets]}
                           for e in self.events]}


@dataclass
class SimTrace:
    mse: np.ndarray           # horizon x m, Monte-Carlo averaged
    states: np.ndarray        # horizon x n, true states of the last run
    errors: np.ndarray        # horizon x m, squared error norms of the last run
    communication_rounds: int
    metadata: dict

    def write_csv(self, path) -> None:
        horizon, m = self.mse.shape
        with open(path, "w") as f:
            f.write("k,sensor_id,mse\n")
            for k in range(horizon):
                for i in range(m):
                    f.write(f"{k + 1},{i},{self.mse[k, i]:.12g}\n")

    def write_metadata(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.metadata, f, indent=1, sort_keys=True)
            f.write("\n")


def step_plant(sys: LtiSystem, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """x(k+1) = A x(k) + nu, nu ~ N(0, process_noise_cov)."""
    x = np.asarray(x, dtype=float)
    if np.allclose(sys.process_noise_cov, 0):
        return sys.A @ x
    nu = rng.multivariate_normal(np.zeros(sys.n), sys.process_noise_cov,
                                 method="cholesky")
    return sys.A @ x + nu


def measure(sys: LtiSystem, s: SensorSuite, x: np.ndarray,
            rng: np.random.Generator) -> list[np.ndarray]:
    """y_i = C_i x + zeta_i, zeta_i ~ N(0, measurement_noise_var)."""
    ys = []
    std = np.sqrt(sys.measurement_noise_var)
    for i in range(s.m):
        Ci = s.output_matrix(i)
        y = Ci @ x
        if std > 0:
            y = y + std * rng.standard_normal(y.shape)
        ys.append(y)
    return ys


def estimator_step(prev: EstimatorState, W: np.ndarray, A: np.ndarray,
                   s: SensorSuite, K: BlockDiagGain,
                   ys: list[np.ndarray]) -> EstimatorState:
    """One consensus-prediction plus innovation-update round."""
    m, n = W.shape[0], A.shape[0]
    if prev.posteriors.shape != (m, n):
        raise SimulationError("estimator state dimension mismatch")
    propagated = prev.posteriors @ A.T        # A x_hat_j stacked
    priors = W @ propagated                   # consensus over in-neighbors
    posteriors = priors.copy()
    for i in range(m):
        Ci = s.output_matrix(i)
        resid = ys[i] - Ci @ priors[i]
        posteriors[i] = priors[i] + K.blocks[i] @ (Ci.T @ resid)
    return EstimatorState(priors, posteriors, prev.k + 1)


@dataclass
class StageArtifacts:
    """Network/weights/suite/gain in effect from a given step onward."""

    start_time: int
    network: DiGraph
    weights: np.ndarray
    suite: SensorSuite
    gain: BlockDiagGain
    sensor_ids: list[int]          # original sensor ids still alive
    rho: Optional[float] = None
    strongly_connected: bool = True
    redesign_report: Optional[SynthesisReport] = None


def _renormalize_rows(W: np.ndarray, mode: str) -> np.ndarray:
    """Restore row-stochasticity after entries were zeroed."""
    W = W.copy()
    for i in range(W.shape[0]):
        lost = 1.0 - W[i].sum()
        if abs(lost) < 1e-15:
            continue
        if mode == "diagonal":
            W[i, i] += lost
        elif mode == "uniform":
            nz = W[i] > 0
            if nz.any():
                W[i, nz] += lost / nz.sum()
            else:
                W[i, i] = 1.0
        else:
            raise SimulationError(f"unknown renormalization mode: {mode}")
    return W


def apply_failure(network: DiGraph, W: np.ndarray, s: SensorSuite,
                  K: BlockDiagGain, event: FailureEvent,
                  sensor_ids: Optional[list[int]] = None,
                  renormalize: str = "diagonal",
                  ) -> tuple[DiGraph, np.ndarray, SensorSuite, BlockDiagGain, list[int]]:
    """Remove links or sensor nodes and repair the surviving artifacts.

    Link removal zeroes the corresponding W entries and returns the lost row
    mass to the diagonal (or spreads it uniformly). Node removal deletes the
    sensor's W row/column, C_i block, and K_i block, compacting indices.
    A disconnecting event is applied anyway; the caller flags it.
    """
    if sensor_ids is None:
        sensor_ids = list(range(s.m))
    if event.kind == "remove-links":
        links = [tuple(t) for t in event.targets]
        g2 = network.remove_edges(links)
        W2 = W.copy()
        for (a, b) in links:
            # data flowed a -> b, weight W[b, a]; undirected loses both
            W2[b, a] = 0.0
            if not network.directed:
                W2[a, b] = 0.0
        W2 = _renormalize_rows(W2, renormalize)
        return g2, W2, s, K, list(sensor_ids)
    if event.kind == "remove-nodes":
        removed = sorted(int(t) for t in event.targets)
        if len(removed) >= s.m:
            raise SimulationError("node removal must leave at least one sensor")
        keep = [i for i in range(s.m) if i not in removed]
        g2 = network.remove_nodes(removed)
        W2 = W[np.ix_(keep, keep)]
        W2 = _renormalize_rows(W2, renormalize)
        s2 = s.remove_sensors(removed)
        K2 = BlockDiagGain([K.blocks[i] for i in keep])
        return g2, W2, s2, K2, [sensor_ids[i] for i in keep]
    raise SimulationError(f"unknown failure kind: {event.kind}")


def _stage_rho(W: np.ndarray, A: np.ndarray, s: SensorSuite,
               K: BlockDiagGain) -> float:
    mn = W.shape[0] * A.shape[0]
    if mn <= DENSE_RHO_GUARD:
        return assemble_closed_loop(W, A, s, K).spectral_radius
    cols = _effective_params(s)
    P = [K.blocks[i][:, cols[i]] for i in range(s.m)]
    op = _ClosedLoopOperator(W, A, cols, P)
    return spectral_radius_sparse(op.matvec, op.dim)


def build_stages(sys: LtiSystem, network: DiGraph, Wc: ConsensusMatrix,
                 s: SensorSuite, K: BlockDiagGain, scenario: FailureScenario,
                 renormalize: str = "diagonal", lmi_guard: int = 100,
                 ) -> list[StageArtifacts]:
    """Precompute the artifact stages induced by the failure scenario."""
    stages = [StageArtifacts(0, network, Wc.W.copy(), s, K,
                             list(range(s.m)),
                             rho=_stage_rho(Wc.W, sys.A, s, K),
                             strongly_connected=is_strongly_connected(network))]
    for event in sorted(scenario.events, key=lambda e: e.time):
        prev = stages[-1]
        g2, W2, s2, K2, ids2 = apply_failure(prev.network, prev.weights,
                                             prev.suite, prev.gain, event,
                                             prev.sensor_ids, renormalize)
        report = None
        if scenario.policy == "redesign-gain":
            K2, report = design_gain(W2, sys.A, s2, lmi_guard=lmi_guard)
        stage = StageArtifacts(event.time, g2, W2, s2, K2, ids2,
                               rho=_stage_rho(W2, sys.A, s2, K2),
                               strongly_connected=is_strongly_connected(g2),
                               redesign_report=report)
        stages.append(stage)
    return stages


def run_simulation(sys: LtiSystem, network: DiGraph, Wc: ConsensusMatrix,
                   s: SensorSuite, K: BlockDiagGain,
                   scenario: Optional[FailureScenario] = None,
                   horizon: int = 100, runs: int = 1, seed: int = 0,
                   renormalize: str = "diagonal", lmi_guard: int = 100,
                   ) -> SimTrace:
    """Monte-Carlo simulation of the distributed estimator.

    Deterministic for a fixed seed; failure stages (including any gain
    redesign) are computed once and shared across runs.
    """
    if scenario is None:
        scenario = FailureScenario()
    if horizon < 1 or runs < 1:
        raise SimulationError("horizon and runs must be >= 1")
    for e in scenario.events:
        if not (1 <= e.time <= horizon):
            raise SimulationError(f"event time {e.time} outside horizon")

    stages = build_stages(sys, network, Wc, s, K, scenario,
                          renormalize, lmi_guard)
    m0, n = s.m, sys.n
    sq_err_accum = np.zeros((horizon, m0))
    alive_mask = np.zeros((horizon, m0), dtype=bool)
    comm_rounds = 0
    states = np.zeros((horizon, n))
    last_errors = np.zeros((horizon, m0))

    master = np.random.SeedSequence(seed)
    run_seeds = master.spawn(runs)
    for r in range(runs):
        rng = np.random.default_rng(run_seeds[r])
        x = rng.standard_normal(n)
        est = EstimatorState(np.zeros((m0, n)),
                             rng.standard_normal((m0, n)), 0)
        comm_rounds = 0
        stage_idx = 0
        cur_ids = list(stages[0].sensor_ids)
        for k in range(1, horizon + 1):
            while (stage_idx + 1 < len(stages)
                   and stages[stage_idx + 1].start_time <= k):
                stage_idx += 1
                stg = stages[stage_idx]
                keep = [cur_ids.index(i) for i in stg.sensor_ids]
                est = EstimatorState(est.priors[keep], est.posteriors[keep], est.k)
                cur_ids = list(stg.sensor_ids)
            stg = stages[stage_idx]
            x = step_plant(sys, x, rng)
            ys = measure(sys, stg.suite, x, rng)
            est = estimator_step(est, stg.weights, sys.A, stg.suite,
                                 stg.gain, ys)
            comm_rounds += 1
            err = x[None, :] - est.posteriors
            sq = (err ** 2).sum(axis=1) / n
            for local_i, orig_i in enumerate(stg.sensor_ids):
                sq_err_accum[k - 1, orig_i] += sq[local_i]
                alive_mask[k - 1, orig_i] = True
                last_errors[k - 1, orig_i] = sq[local_i]
            states[k - 1] = x

    mse = np.full((horizon, m0), np.nan)
    np.divide(sq_err_accum, runs, out=mse, where=alive_mask)

    meta = {
        "seed": seed,
        "horizon": horizon,
        "runs": runs,
        "policy": scenario.policy,
        "scenario": scenario.to_json_obj(),
        "renormalize": renormalize,
        "mse_normalization": "per-state (divided by n)",
        "rho_pre": float(f"{stages[0].rho:.17g}"),
        "rho_post": float(f"{stages[-1].rho:.17g}"),
        "strongly_connected_post": bool(stages[-1].strongly_connected),
        "m": m0,
        "n": n,
    }
    return SimTrace(mse, states, last_errors, comm_rounds, meta)


def mse_series(trace: SimTrace) -> np.ndarray:
    """Per-sensor MSE time series (horizon x m)."""
    return trace.mse
