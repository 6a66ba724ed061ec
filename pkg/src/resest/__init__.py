"""Resilient single time-scale distributed state estimation toolkit."""

from .graphs import (DiGraph, SccDecomposition, ConnectivityReport,
                     scc_decompose, is_strongly_connected, node_connectivity,
                     link_connectivity, algebraic_connectivity,
                     is_q_node_connected, is_q_link_connected,
                     augment_to_q_connected)
from .observability import (SparsityPattern, SensorSuite, system_digraph,
                            equivalence_classes, place_sensors,
                            check_structural_observability,
                            numeric_observability_rank,
                            distributed_observability_check)
from .weights import (ConsensusMatrix, uniform_weights,
                      metropolis_hastings_weights, random_stochastic_weights)
from .gain import (BlockDiagGain, ClosedLoop, assemble_closed_loop,
                   design_gain, design_gain_lmi, design_gain_spectral,
                   verify_schur, spectral_radius)
from .sim import (LtiSystem, EstimatorState, FailureEvent, FailureScenario,
                  SimTrace, step_plant, measure, estimator_step,
                  apply_failure, run_simulation)

__version__ = "0.1.0"
