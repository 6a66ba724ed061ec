"""Batch command-line front end for the design and simulation pipeline.

Exit codes: 0 success, 2 input error, 3 gain-synthesis failure,
4 inconsistent artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import gain as gain_mod
from . import graphs, observability, presets, sim, weights

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SYNTHESIS = 3
EXIT_INCONSISTENT = 4


class InputError(Exception):
    pass


@dataclass
class PipelineConfig:
    preset: Optional[str] = None
    pattern_file: Optional[str] = None
    network_file: Optional[str] = None
    q: int = 1
    rho_target: float = 1.05
    system_seed: int = 7
    weight_scheme: str = "random"
    weight_seed: int = 0
    gain_eps: Optional[float] = None
    gain_max_iter: int = 200
    lmi_guard: int = 100
    horizon: int = 100
    runs: int = 1
    sim_seed: int = 0
    process_noise: float = 0.1
    measurement_noise: float = 0.1
    failure_links: list = field(default_factory=list)
    failure_nodes: list = field(default_factory=list)
    failure_time: Optional[int] = None
    failure_policy: str = "redesign-gain"
    augment_mode: Optional[str] = None

    @staticmethod
    def from_file(path) -> "PipelineConfig":
        with open(path) as f:
            obj = json.load(f)
        known = {f_.name for f_ in PipelineConfig.__dataclass_fields__.values()}
        bad = set(obj) - known
        if bad:
            raise InputError(f"unknown config keys: {sorted(bad)}")
        return PipelineConfig(**obj)

    @staticmethod
    def from_preset(p: presets.Preset) -> "PipelineConfig":
        return PipelineConfig(preset=p.name, q=p.q, rho_target=p.rho_target,
                              system_seed=p.seed, horizon=p.horizon,
                              runs=p.runs, process_noise=p.noise,
                              measurement_noise=p.noise,
                              lmi_guard=p.lmi_guard,
                              failure_links=[list(e) for e in p.failure_links],
                              failure_nodes=list(p.failure_nodes),
                              failure_time=p.failure_time)


def _f17(x: float) -> float:
    return float(f"{x:.17g}")


def _matrix_json(M: np.ndarray) -> list:
    return [[_f17(v) for v in row] for row in M]


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


def _load_inputs(cfg: PipelineConfig):
    if cfg.preset:
        p = presets.get_preset(cfg.preset)
        pattern, network = p.pattern, p.network
    else:
        if not cfg.pattern_file or not cfg.network_file:
            raise InputError("need a preset or pattern_file + network_file")
        with open(cfg.pattern_file) as f:
            obj = json.load(f)
        pattern = observability.SparsityPattern.from_positions(
            int(obj["n"]), [tuple(e) for e in obj["nonzeros"]])
        network = graphs.DiGraph.load(cfg.network_file)
    return pattern, network


def _analyze_graph(g: graphs.DiGraph, q: Optional[int] = None) -> dict:
    dec = graphs.scc_decompose(g)
    rep = graphs.connectivity_report(g)
    out = {
        "nodes": g.node_count,
        "directed": g.directed,
        "strongly_connected": graphs.is_strongly_connected(g),
        "scc_count": len(dec.components),
        "sccs": dec.components,
        "parent_scc_count": len(dec.parent_components),
        "parent_sccs": dec.parent_components,
        "node_connectivity": rep.node_connectivity,
        "link_connectivity": rep.link_connectivity,
        "min_degree": rep.min_degree,
        "certifying_node_cut": rep.certifying_node_cut,
        "certifying_link_cut": [list(e) for e in rep.certifying_link_cut or []],
    }
    if rep.algebraic_connectivity is not None:
        out["algebraic_connectivity"] = _f17(rep.algebraic_connectivity)
    if q is not None:
        ok_n, wit_n = graphs.is_q_node_connected(g, q)
        ok_l, wit_l = graphs.is_q_link_connected(g, q)
        out["q"] = q
        out["q_node_connected"] = ok_n
        out["q_link_connected"] = ok_l
        if wit_n is not None:
            out["q_node_witness"] = wit_n
        if wit_l is not None:
            out["q_link_witness"] = [list(e) for e in wit_l]
    return out


def cmd_analyze(args) -> int:
    if args.preset:
        p = presets.get_preset(args.preset)
        report = {"preset": p.name,
                  "network": _analyze_graph(p.network, args.q)}
        if p.pattern is not None:
            sg = observability.system_digraph(p.pattern)
            dec = graphs.scc_decompose(sg)
            report["system"] = {
                "n": p.pattern.dimension,
                "scc_count": len(dec.components),
                "parent_scc_count": len(dec.parent_components),
                "parent_sccs": dec.parent_components,
            }
    else:
        g = graphs.DiGraph.load(args.graph)
        report = _analyze_graph(g, args.q)
    _emit(report, args.out, "analysis.json")
    return EXIT_OK


def _emit(obj, out: Optional[str], name: str) -> None:
    if out:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_json(outdir / name, obj)
    else:
        json.dump(obj, sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")


def cmd_place(args) -> int:
    cfg = _config_from_args(args)
    pattern, _ = _load_inputs(cfg)
    suite = observability.place_sensors(pattern, cfg.q)
    _emit(suite.to_json_obj(), args.out, "suite.json")
    return EXIT_OK


def cmd_augment(args) -> int:
    g = graphs.DiGraph.load(args.graph)
    g2, added = graphs.augment_to_q_connected(g, args.q, args.mode)
    obj = {"graph": g2.to_json_obj(), "added_edges": [list(e) for e in added]}
    _emit(obj, args.out, "augmented.json")
    return EXIT_OK


def cmd_weights(args) -> int:
    cfg = _config_from_args(args)
    _, network = _load_inputs(cfg)
    Wc = weights.make_weights(network, cfg.weight_scheme, cfg.weight_seed)
    _emit(Wc.to_json_obj(), args.out, "weights.json")
    return EXIT_OK


def _design(cfg: PipelineConfig, outdir: Path) -> dict:
    pattern, network = _load_inputs(cfg)
    rng = np.random.default_rng(cfg.system_seed)
    A = pattern.random_realization(rng, rho_target=cfg.rho_target)
    suite = observability.place_sensors(pattern, cfg.q)
    if suite.m != network.node_count:
        raise InputError(
            f"placement needs {suite.m} sensors but network has "
            f"{network.node_count} nodes")
    if cfg.augment_mode:
        network, added = graphs.augment_to_q_connected(network, cfg.q,
                                                       cfg.augment_mode)
    else:
        added = []
    Wc = weights.make_weights(network, cfg.weight_scheme, cfg.weight_seed)
    obs = observability.distributed_observability_check(
        Wc.W, A, suite, network=network, a_pattern=pattern)
    K, report = gain_mod.design_gain(Wc.W, A, suite, eps=cfg.gain_eps,
                                     max_iter=cfg.gain_max_iter,
                                     lmi_guard=cfg.lmi_guard,
                                     seed=cfg.system_seed)
    mn = suite.m * pattern.dimension
    if mn <= sim.DENSE_RHO_GUARD:
        rho = gain_mod.assemble_closed_loop(Wc.W, A, suite, K).spectral_radius
    else:
        rho = sim._stage_rho(Wc.W, A, suite, K)
    rho = float(rho)

    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / "system.json", {"A": _matrix_json(A),
                                         "rho_target": cfg.rho_target})
    network.save(outdir / "network.json")
    suite.save(outdir / "suite.json")
    Wc.save(outdir / "weights.json")
    K.save(outdir / "gain.json")
    design_report = {
        "config": asdict(cfg),
        "m": suite.m,
        "n": pattern.dimension,
        "parent_scc_count": len(observability.equivalence_classes(pattern)[0]),
        "structural_observability": observability.check_structural_observability(
            pattern, suite),
        "distributed_observability": {
            "observable": obs.observable, "method": obs.method,
            "rank": obs.rank, "dimension": obs.dimension},
        "augmented_edges": [list(e) for e in added],
        "rho": _f17(rho),
        "schur_stable": bool(rho < 1.0),
        "synthesis": report.to_json_obj(),
    }
    _write_json(outdir / "design_report.json", design_report)
    return design_report


def _config_from_args(args) -> PipelineConfig:
    if getattr(args, "config", None):
        cfg = PipelineConfig.from_file(args.config)
    elif getattr(args, "preset", None):
        cfg = PipelineConfig.from_preset(presets.get_preset(args.preset))
    else:
        raise InputError("need --config or --preset")
    if getattr(args, "seed", None) is not None:
        cfg.sim_seed = args.seed
    if getattr(args, "q", None) is not None and args.q >= 0:
        cfg.q = args.q
    return cfg


def cmd_design(args) -> int:
    cfg = _config_from_args(args)
    outdir = Path(args.out or "out")
    report = _design(cfg, outdir)
    if not report["schur_stable"]:
        return EXIT_SYNTHESIS
    return EXIT_OK


def _scenario_from_config(cfg: PipelineConfig) -> sim.FailureScenario:
    events = []
    if cfg.failure_time is not None:
        if cfg.failure_links:
            events.append(sim.FailureEvent(cfg.failure_time, "remove-links",
                                           [tuple(e) for e in cfg.failure_links]))
        if cfg.failure_nodes:
            events.append(sim.FailureEvent(cfg.failure_time, "remove-nodes",
                                           list(cfg.failure_nodes)))
    return sim.FailureScenario(events, cfg.failure_policy)


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    outdir = Path(args.out or "out")
    artifacts = Path(args.artifacts or outdir)
    required = ["system.json", "network.json", "suite.json", "weights.json",
                "gain.json"]
    missing = [f for f in required if not (artifacts / f).exists()]
    if missing:
        raise InputError(f"missing artifacts: {missing} (run design first)")
    with open(artifacts / "system.json") as f:
        A = np.array(json.load(f)["A"])
    network = graphs.DiGraph.load(artifacts / "network.json")
    suite = observability.SensorSuite.load(artifacts / "suite.json")
    with open(artifacts / "weights.json") as f:
        Wc = weights.ConsensusMatrix(np.array(json.load(f)), network)
    K = gain_mod.BlockDiagGain.load(artifacts / "gain.json")
    if suite.m != network.node_count or K.m != suite.m or K.n != A.shape[0] \
            or suite.n != A.shape[0]:
        print("error: artifact dimensions are inconsistent", file=sys.stderr)
        return EXIT_INCONSISTENT
    system = sim.LtiSystem(A, cfg.process_noise * np.eye(A.shape[0]),
                           cfg.measurement_noise)
    trace = sim.run_simulation(system, network, Wc, suite, K,
                               _scenario_from_config(cfg),
                               horizon=cfg.horizon, runs=cfg.runs,
                               seed=cfg.sim_seed, lmi_guard=cfg.lmi_guard)
    outdir.mkdir(parents=True, exist_ok=True)
    trace.write_csv(outdir / "trace.csv")
    trace.write_metadata(outdir / "trace_meta.json")
    return EXIT_OK


def _verify_preset(name: str, outdir: Path, seed: Optional[int]) -> list[tuple[str, bool]]:
    p = presets.get_preset(name)
    cfg = PipelineConfig.from_preset(p)
    if seed is not None:
        cfg.sim_seed = seed
    checks: list[tuple[str, bool]] = []

    if name == "fig2":
        rep = graphs.connectivity_report(p.network)
        checks.append(("node connectivity = 3", rep.node_connectivity == 3))
        checks.append(("link connectivity = 3", rep.link_connectivity == 3))
        rng = np.random.default_rng(cfg.system_seed)
        ok_either, ok_both = True, True
        for _ in range(10):
            A = p.pattern.random_realization(rng)
            C0 = p.suite.output_matrix(0)
            C1 = p.suite.output_matrix(1)
            n = p.pattern.dimension
            r0 = observability.numeric_observability_rank(A, C0)
            r1 = observability.numeric_observability_rank(A, C1)
            ok_either &= (r0 == n and r1 == n)
        classes, _ = observability.equivalence_classes(p.pattern)
        checks.append(("either equivalent output alone gives rank n", ok_either))
        checks.append(("single parent SCC", len(classes) == 1))
        return checks

    design_report = _design(cfg, outdir)
    checks.append(("structural observability",
                   design_report["structural_observability"]))
    checks.append(("distributed observability",
                   design_report["distributed_observability"]["observable"]))
    checks.append(("schur stable (rho < 1)", design_report["schur_stable"]))
    if name in ("fig3-nominal", "fig6-linkfail", "fig6-nodefail"):
        checks.append(("3 parent SCCs",
                       design_report["parent_scc_count"] == 3))
        checks.append(("6 sensors", design_report["m"] == 6))
    if name == "fig7-large":
        checks.append(("30 parent SCCs",
                       design_report["parent_scc_count"] == 30))
        checks.append(("60 sensors", design_report["m"] == 60))

    class Args:
        pass

    args = Args()
    args.config = None
    args.preset = name
    args.seed = cfg.sim_seed
    args.q = -1
    args.out = str(outdir)
    args.artifacts = str(outdir)
    rc = cmd_simulate(args)
    checks.append(("simulation completed", rc == EXIT_OK))
    if rc == EXIT_OK:
        with open(outdir / "trace_meta.json") as f:
            meta = json.load(f)
        mse = np.full((meta["horizon"], meta["m"]), np.nan)
        with open(outdir / "trace.csv") as f:
            next(f)
            for line in f:
                k, i, v = line.split(",")
                mse[int(k) - 1, int(i)] = float(v)
        tail = mse[-10:]
        bounded = bool(np.nanmax(tail) < 1e3)
        checks.append(("bounded MSE", bounded))
        checks.append(("post-failure rho < 1", meta["rho_post"] < 1.0))
        if name in ("fig6-linkfail", "fig6-nodefail"):
            checks.append(("post-failure network strongly connected",
                           meta["strongly_connected_post"]))
    return checks


def cmd_verify(args) -> int:
    name = args.preset
    if name not in presets.PRESET_NAMES:
        print(f"error: unknown preset {name!r}", file=sys.stderr)
        return EXIT_INPUT
    outdir = Path(args.out or f"verify-{name}")
    checks = _verify_preset(name, outdir, args.seed)
    all_ok = all(ok for _, ok in checks)
    width = max(len(label) for label, _ in checks)
    for label, ok in checks:
        print(f"{label:<{width}}  {'PASS' if ok else 'FAIL'}")
    print(f"{'overall':<{width}}  {'PASS' if all_ok else 'FAIL'}")
    return EXIT_OK if all_ok else EXIT_SYNTHESIS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="resest",
        description="Resilient distributed estimator design and simulation")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, preset=True):
        p.add_argument("--config", help="pipeline config JSON file")
        if preset:
            p.add_argument("--preset", choices=presets.PRESET_NAMES)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory")
        p.add_argument("--q", type=int, default=None)

    p = sub.add_parser("analyze", help="graph/system connectivity report")
    p.add_argument("--graph", help="graph JSON file")
    common(p)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("place", help="redundant sensor placement")
    common(p)
    p.set_defaults(fn=cmd_place)

    p = sub.add_parser("augment", help="augment a graph to q-connectivity")
    p.add_argument("--graph", required=True)
    p.add_argument("--mode", choices=["node", "link"], default="link")
    common(p)
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("weights", help="build a consensus weight matrix")
    common(p)
    p.set_defaults(fn=cmd_weights)

    p = sub.add_parser("gain", help="synthesize the estimator gain "
                                    "(alias of design)")
    common(p)
    p.set_defaults(fn=cmd_design)

    p = sub.add_parser("design", help="full design pipeline")
    common(p)
    p.set_defaults(fn=cmd_design)

    p = sub.add_parser("simulate", help="run the estimator simulation")
    p.add_argument("--artifacts", help="directory with design artifacts")
    common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("verify", help="run the checks for a bundled preset")
    p.add_argument("preset", help="preset name")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output directory")
    p.set_defaults(fn=cmd_verify)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (InputError, graphs.GraphError, observability.ObservabilityError,
            FileNotFoundError, json.JSONDecodeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except gain_mod.GainSynthesisError as e:
        print(f"synthesis failure: {e}", file=sys.stderr)
        return EXIT_SYNTHESIS
    except sim.SimulationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INCONSISTENT


if __name__ == "__main__":
    sys.exit(main())
