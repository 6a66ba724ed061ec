"""Simulation: plant/measurement statistics, the estimator step, failure
injection, and trace bookkeeping."""

import numpy as np
import pytest

from resest.gain import BlockDiagGain, assemble_closed_loop
from resest.graphs import DiGraph, is_strongly_connected
from resest.observability import SensorSuite
from resest.sim import (EstimatorState, FailureEvent, FailureScenario,
                        LtiSystem, SimulationError, _renormalize_rows,
                        apply_failure, estimator_step, measure, run_simulation,
                        step_plant)
from resest.weights import ConsensusMatrix, random_stochastic_weights


def _nominal_setup(fig3_instance, noise=0.1):
    f = fig3_instance
    sys = LtiSystem(f["A"], noise * np.eye(7), noise)
    return sys, f["network"], f["Wc"], f["suite"], f["K"]


# ---------------------------------------------------------------------------
# LtiSystem and primitive steps
# ---------------------------------------------------------------------------

def test_lti_system_rejects_zero_diagonal():
    with pytest.raises(SimulationError):
        LtiSystem(np.array([[1.0, 1.0], [0.0, 0.0]]))


def test_lti_system_default_noise_cov():
    sys = LtiSystem(np.eye(3))
    assert np.array_equal(sys.process_noise_cov, 0.1 * np.eye(3))
    assert sys.measurement_noise_var == 0.1


def test_step_plant_zero_noise_is_linear_map():
    sys = LtiSystem(np.diag([2.0, 3.0]), np.zeros((2, 2)), 0.0)
    x = np.array([1.0, -1.0])
    out = step_plant(sys, x, np.random.default_rng(0))
    assert np.array_equal(out, sys.A @ x)


def test_step_plant_noise_statistics():
    sys = LtiSystem(np.eye(2), 0.1 * np.eye(2), 0.0)
    rng = np.random.default_rng(0)
    samples = np.array([step_plant(sys, np.zeros(2), rng) for _ in range(20000)])
    assert np.allclose(samples.mean(axis=0), 0.0, atol=0.01)
    assert np.allclose(samples.var(axis=0), 0.1, atol=0.01)


def test_measure_zero_noise_and_statistics():
    sys = LtiSystem(np.eye(3), measurement_noise_var=0.0)
    s = SensorSuite(3, [[0], [2]], [0, 1])
    x = np.array([1.0, 2.0, 3.0])
    ys = measure(sys, s, x, np.random.default_rng(0))
    assert ys[0] == pytest.approx([1.0]) and ys[1] == pytest.approx([3.0])

    sys_n = LtiSystem(np.eye(3), measurement_noise_var=0.1)
    rng = np.random.default_rng(1)
    vals = np.array([measure(sys_n, s, x, rng)[0][0] for _ in range(20000)])
    assert vals.mean() == pytest.approx(1.0, abs=0.01)
    assert vals.var() == pytest.approx(0.1, abs=0.01)


def test_estimator_step_is_one_consensus_round():
    # priors must equal W (posteriors A^T): one averaging pass, no inner loop
    rng = np.random.default_rng(2)
    m, n = 3, 2
    W = random_stochastic_weights(
        DiGraph.from_edges(m, [(0, 1), (1, 2), (0, 2)], directed=False), 0).W
    A = rng.standard_normal((n, n))
    s = SensorSuite(n, [[0], [1], [0]], [0, 1, 0])
    K = BlockDiagGain([rng.standard_normal((n, n)) for _ in range(m)])
    prev = EstimatorState(np.zeros((m, n)), rng.standard_normal((m, n)), 4)
    ys = [rng.standard_normal(1) for _ in range(m)]
    nxt = estimator_step(prev, W, A, s, K, ys)
    assert nxt.k == 5
    assert np.allclose(nxt.priors, W @ (prev.posteriors @ A.T), atol=1e-13)
    for i in range(m):
        Ci = s.output_matrix(i)
        expected = nxt.priors[i] + K.blocks[i] @ (
            Ci.T @ (ys[i] - Ci @ nxt.priors[i]))
        assert np.allclose(nxt.posteriors[i], expected, atol=1e-13)


def test_error_dynamics_identity_small():
    # zero noise: stacked error follows e(k) = Ahat e(k-1) exactly
    rng = np.random.default_rng(3)
    m, n = 3, 2
    net = DiGraph.from_edges(m, [(0, 1), (1, 2), (0, 2)], directed=False)
    Wc = random_stochastic_weights(net, 0)
    A = rng.standard_normal((n, n))
    np.fill_diagonal(A, 1.0)
    sys = LtiSystem(A, np.zeros((n, n)), 0.0)
    s = SensorSuite(n, [[0], [1], [0]], [0, 1, 0])
    K = BlockDiagGain([0.1 * rng.standard_normal((n, n)) for _ in range(m)])
    A_hat = assemble_closed_loop(Wc.W, A, s, K).A_hat

    x = rng.standard_normal(n)
    est = EstimatorState(np.zeros((m, n)), rng.standard_normal((m, n)), 0)
    e = (x[None, :] - est.posteriors).ravel()
    for _ in range(30):
        x = step_plant(sys, x, rng)
        ys = measure(sys, s, x, rng)
        est = estimator_step(est, Wc.W, A, s, K, ys)
        e = A_hat @ e
        actual = (x[None, :] - est.posteriors).ravel()
        assert np.allclose(actual, e, atol=1e-9 * (1 + np.abs(e).max()))


# ---------------------------------------------------------------------------
# Failure injection
# ---------------------------------------------------------------------------

def test_renormalize_rows_modes():
    W = np.array([[0.5, 0.3, 0.0], [0.2, 0.5, 0.1], [0.0, 0.0, 1.0]])
    Wd = _renormalize_rows(W, "diagonal")
    assert np.allclose(Wd.sum(axis=1), 1.0)
    assert Wd[0, 0] == pytest.approx(0.7)
    Wu = _renormalize_rows(W, "uniform")
    assert np.allclose(Wu.sum(axis=1), 1.0)
    with pytest.raises(SimulationError):
        _renormalize_rows(W, "bogus")


def test_apply_failure_links(fig3_instance):
    f = fig3_instance
    ev = FailureEvent(10, "remove-links", [(0, 1), (1, 3)])
    g2, W2, s2, K2, ids = apply_failure(f["network"], f["Wc"].W, f["suite"],
                                        f["K"], ev)
    assert not g2.has_edge(0, 1) and not g2.has_edge(1, 0)
    assert W2[1, 0] == 0.0 and W2[0, 1] == 0.0
    assert W2[3, 1] == 0.0 and W2[1, 3] == 0.0
    assert np.allclose(W2.sum(axis=1), 1.0)
    assert s2 is f["suite"] and ids == list(range(6))
    # surviving entries untouched
    assert W2[2, 0] == f["Wc"].W[2, 0]


def test_apply_failure_nodes(fig3_instance):
    f = fig3_instance
    ev = FailureEvent(10, "remove-nodes", [1])
    g2, W2, s2, K2, ids = apply_failure(f["network"], f["Wc"].W, f["suite"],
                                        f["K"], ev)
    assert g2.node_count == 5
    assert W2.shape == (5, 5)
    assert np.allclose(W2.sum(axis=1), 1.0)
    assert s2.m == 5
    assert len(K2.blocks) == 5
    assert ids == [0, 2, 3, 4, 5]
    # the survivors keep their original gain blocks
    assert np.array_equal(K2.blocks[0], f["K"].blocks[0])
    assert np.array_equal(K2.blocks[1], f["K"].blocks[2])


def test_apply_failure_rejects_removing_all_sensors(fig3_instance):
    f = fig3_instance
    ev = FailureEvent(1, "remove-nodes", list(range(6)))
    with pytest.raises(SimulationError):
        apply_failure(f["network"], f["Wc"].W, f["suite"], f["K"], ev)


# ---------------------------------------------------------------------------
# End-to-end simulation traces
# ---------------------------------------------------------------------------

def test_communication_rounds_equal_horizon(fig3_instance):
    sys, net, Wc, s, K = _nominal_setup(fig3_instance)
    for horizon in (1, 17, 50):
        trace = run_simulation(sys, net, Wc, s, K, horizon=horizon, seed=0)
        assert trace.communication_rounds == horizon


def test_simulation_deterministic_in_seed(fig3_instance):
    sys, net, Wc, s, K = _nominal_setup(fig3_instance)
    t1 = run_simulation(sys, net, Wc, s, K, horizon=20, seed=9)
    t2 = run_simulation(sys, net, Wc, s, K, horizon=20, seed=9)
    t3 = run_simulation(sys, net, Wc, s, K, horizon=20, seed=10)
    assert np.array_equal(t1.mse, t2.mse)
    assert np.array_equal(t1.states, t2.states)
    assert not np.array_equal(t1.mse, t3.mse)


def test_simulation_mse_bounded_for_stable_loop(fig3_instance):
    sys, net, Wc, s, K = _nominal_setup(fig3_instance)
    trace = run_simulation(sys, net, Wc, s, K, horizon=100, runs=3, seed=1)
    assert np.isfinite(trace.mse).all()
    assert trace.mse[-10:].max() < 100.0
    assert trace.metadata["rho_pre"] < 1.0


def test_simulation_noise_floor_monotone(fig3_instance):
    # scaling both noises up cannot lower the steady-state error floor
    f = fig3_instance
    tails = []
    for noise in (0.02, 0.5):
        sys = LtiSystem(f["A"], noise * np.eye(7), noise)
        trace = run_simulation(sys, f["network"], f["Wc"], f["suite"], f["K"],
                               horizon=80, runs=20, seed=3)
        tails.append(trace.mse[-20:].mean())
    assert tails[0] < tails[1]


def test_simulation_link_failure_stage(fig3_instance):
    sys, net, Wc, s, K = _nominal_setup(fig3_instance)
    scen = FailureScenario([FailureEvent(25, "remove-links",
                                         [(0, 1), (1, 3), (2, 3)])],
                           policy="redesign-gain")
    trace = run_simulation(sys, net, Wc, s, K, scenario=scen, horizon=50,
                           seed=2)
    assert trace.communication_rounds == 50
    assert trace.metadata["rho_post"] < 1.0
    assert trace.metadata["strongly_connected_post"]
    assert np.isfinite(trace.mse).all()


def test_simulation_node_failure_marks_dead_sensor(fig3_instance):
    sys, net, Wc, s, K = _nominal_setup(fig3_instance)
    scen = FailureScenario([FailureEvent(20, "remove-nodes", [1])],
                           policy="redesign-gain")
    trace = run_simulation(sys, net, Wc, s, K, scenario=scen, horizon=40,
                           seed=4)
    # sensor 1 reports until the event, NaN afterwards
    assert np.isfinite(trace.mse[:19, 1]).all()
    assert np.isnan(trace.mse[19:, 1]).all()
    alive = [0, 2, 3, 4, 5]
    assert np.isfinite(trace.mse[:, alive]).all()
    assert trace.metadata["rho_post"] < 1.0


def test_simulation_keep_gain_policy(fig3_instance):
    sys, net, Wc, s, K = _nominal_setup(fig3_instance)
    scen = FailureScenario([FailureEvent(25, "remove-links", [(0, 1)])],
                           policy="keep-gain")
    trace = run_simulation(sys, net, Wc, s, K, scenario=scen, horizon=50,
                           seed=5)
    assert trace.metadata["policy"] == "keep-gain"
    assert np.isfinite(trace.mse).all()


def test_simulation_rejects_bad_event_time(fig3_instance):
    sys, net, Wc, s, K = _nominal_setup(fig3_instance)
    scen = FailureScenario([FailureEvent(200, "remove-links", [(0, 1)])])
    with pytest.raises(SimulationError):
        run_simulation(sys, net, Wc, s, K, scenario=scen, horizon=50)


def test_trace_csv_format(fig3_instance, tmp_path):
    sys, net, Wc, s, K = _nominal_setup(fig3_instance)
    trace = run_simulation(sys, net, Wc, s, K, horizon=5, seed=0)
    p = tmp_path / "trace.csv"
    trace.write_csv(p)
    lines = p.read_text().strip().split("\n")
    assert lines[0] == "k,sensor_id,mse"
    assert len(lines) == 1 + 5 * 6
    k, i, v = lines[1].split(",")
    assert (k, i) == ("1", "0")
    assert float(v) == pytest.approx(trace.mse[0, 0], rel=1e-11)
