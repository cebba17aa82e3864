"""Command-line front end for the delay experiments.

Every subcommand takes the same option set. Values come from built-in
per-command defaults, then a ``--config`` JSON file, then explicit flags.
Exit status is 0 when every audit passes, 2 when an audit fails (a JSON
report naming the failed checks goes to stdout) and 1 for bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .fixed_delay import (
    DelayAssignment,
    augment_column,
    augment_row,
    closed_form_stationary,
    iterate_to_consensus,
)
from .graph_core import (
    ConvergenceError,
    DirectedGraph,
    GraphError,
    StochasticityError,
    additive_reversibilization,
    build_max_weight,
    complete_graph,
    cycle_graph,
    lazy,
    random_connected_graph,
    random_doubly_stochastic,
    random_row_stochastic,
    second_eigenvalue,
    stationary_distribution,
    stochastic_kind,
    tv_bound,
    tv_distance,
)
from .poincare import fit_quadratic, inverse_gap_experiment
from .push_sum import (
    FixedPushSumRun,
    PushSumRun,
    audit_ergodicity,
    run_push_sum,
)
from .random_delay import RandomDelayRun, run_to_consensus

PUSH_SUM_TOL = 1e-8
MASS_TOL = 1e-10

COMMON = {
    "seed": 0,
    "out": ".",
    "graph": None,
    "gen": "cycle",
    "n": 5,
    "edge_prob": 0.5,
    "directed": False,
    "protocol": "maxweight",
    "matrix": None,
    "delays": None,
    "B": 0,
    "trials": 1,
    "tol": 1e-10,
    "max_steps": 1_000_000,
    "x0": None,
    "push_sum": False,
}

DEFAULTS = {
    "augment": {"protocol": "matrix"},
    "spectrum": {"max_steps": 200},
    "fig2": {"gen": "random", "n": 15, "edge_prob": 0.3, "B": 10, "trials": 50},
    "fig3": {"gen": "random", "n": 5, "protocol": "random-row", "B": 5},
    "simulate": {"protocol": "random-row", "B": 3},
    "pushsum": {"protocol": "random-row", "B": 3, "tol": PUSH_SUM_TOL},
}


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (1); 2 is reserved for failed audits
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option values; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--graph", help="edge-list file")
    src.add_argument("--gen", choices=["cycle", "complete", "random"])
    p.add_argument("--n", type=int, help="node count for generated graphs")
    p.add_argument("--edge-prob", type=float, help="edge probability for --gen random")
    p.add_argument("--directed", action="store_const", const=True, help="directed generated graph")
    p.add_argument(
        "--protocol", choices=["maxweight", "matrix", "random-row", "random-column", "random-doubly"]
    )
    p.add_argument("--matrix", help="protocol matrix CSV (implies --protocol matrix)")
    p.add_argument("--delays", help="fixed delay file with lines 'sender receiver delay'")
    p.add_argument("--B", type=int, help="delay bound")
    p.add_argument("--trials", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--x0", help="comma-separated initial values (default 1..n)")
    p.add_argument(
        "--push-sum", action="store_const", const=True, help="column-stochastic augmentation"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="delay-consensus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "augment": "write the delay-augmented matrix and its index map",
        "spectrum": "eigenvalues, stationary vector and a TV bound table",
        "fig2": "worst inverse spectral gap against the delay bound",
        "fig3": "row-stochastic and Push-Sum runs under random delays",
        "simulate": "row-stochastic consensus with fixed or random delays",
        "pushsum": "Push-Sum with no, fixed or random delays",
    }
    for name, text in helps.items():
        _add_common(sub.add_parser(name, help=text))
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[args.command])
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(COMMON)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in COMMON:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if args.graph is not None:
        cfg["gen"] = None
    if cfg["matrix"] is not None:
        cfg["protocol"] = "matrix"
    if cfg["protocol"] == "matrix" and cfg["matrix"] is None:
        raise InputError("--protocol matrix needs --matrix")
    if cfg["B"] < 0 or cfg["n"] < 1 or cfg["trials"] < 1 or cfg["max_steps"] < 1:
        raise InputError("B must be >= 0; n, trials and max-steps must be >= 1")
    return cfg


# -- setup helpers -------------------------------------------------------------


def _rng(cfg, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg["seed"], stream])


def _graph(cfg, P=None) -> DirectedGraph:
    """Edge-list file if given, else the support of a matrix protocol, else a generator."""
    if cfg["graph"]:
        return io.read_edge_list(cfg["graph"])
    if P is not None:
        return DirectedGraph.from_protocol(P)
    n, gen = cfg["n"], cfg["gen"]
    if gen == "cycle":
        return cycle_graph(n, directed=cfg["directed"])
    if gen == "complete":
        return complete_graph(n)
    return random_connected_graph(n, cfg["edge_prob"], _rng(cfg, 1), directed=cfg["directed"])


def _protocol(cfg, graph: DirectedGraph | None) -> np.ndarray:
    kind = cfg["protocol"]
    if kind == "matrix":
        return io.read_matrix_csv(cfg["matrix"])
    if kind == "maxweight":
        return build_max_weight(graph)
    if kind == "random-doubly":
        return random_doubly_stochastic(graph, _rng(cfg, 2))
    if kind == "random-column":
        # column weights on this graph are row weights on the reversed graph
        return random_row_stochastic(graph.reversed(), _rng(cfg, 2)).T.copy()
    return random_row_stochastic(graph, _rng(cfg, 2))


def _setup(cfg) -> tuple[DirectedGraph, np.ndarray]:
    if cfg["protocol"] == "matrix":
        P = _protocol(cfg, None)
        return _graph(cfg, P), P
    graph = _graph(cfg)
    return graph, _protocol(cfg, graph)


def _delays(cfg, graph) -> DelayAssignment:
    if cfg["delays"] is None:
        return DelayAssignment()
    delays = io.read_delays(cfg["delays"])
    delays.check(graph)
    return delays


def _x0(cfg, n: int) -> np.ndarray:
    if cfg["x0"] is None:
        return np.arange(1, n + 1, dtype=float)
    x0 = np.array([io.parse_real(v) for v in str(cfg["x0"]).split(",")], dtype=float)
    if x0.shape != (n,):
        raise InputError(f"--x0 has {x0.size} values for {n} nodes")
    return x0


def _column_setup(cfg, graph, P):
    """Column-stochastic protocol and matching graph for Push-Sum."""
    kind = stochastic_kind(P)
    if kind in ("column", "doubly"):
        return graph, P
    if kind == "row":
        # a row-stochastic protocol is used transposed, on the reversed graph
        return graph.reversed(), P.T.copy()
    raise InputError("Push-Sum needs a row- or column-stochastic protocol")


def _out(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ------------------------------------------------------------------


def cmd_augment(cfg) -> tuple[dict, list[str]]:
    graph, P = _setup(cfg)
    delays = _delays(cfg, graph)
    out = _out(cfg)
    if cfg["push_sum"]:
        system = augment_column(P, delays, graph)
    else:
        system = augment_row(P, delays, graph)
    io.write_augmented(system, out)
    report = {"dim": system.dim, "compute_nodes": system.compute_count, "delay_nodes": system.b}
    if not cfg["push_sum"] and stochastic_kind(P) == "doubly":
        cf = closed_form_stationary(P, delays, graph)
        pi = cf.vector(system)
        payload = {
            "pi_compute": cf.pi_V,
            "normalizer": cf.normalizer,
            "pi_chain": {f"{s} {r}": v for (s, r), v in sorted(cf.pi_r.items())},
            "vector": [float(v) for v in pi],
        }
        io.write_json(payload, out / "stationary.json")
        report["stationary_residual"] = float(np.abs(pi @ system.matrix - pi).max())
    return report, []


def cmd_spectrum(cfg) -> tuple[dict, list[str]]:
    graph, P = _setup(cfg)
    delays = _delays(cfg, graph)
    M = augment_row(P, delays, graph).matrix if delays.delays else P
    out = _out(cfg)
    report = {"dim": M.shape[0], "lambda2": second_eigenvalue(M)}
    try:
        pi = stationary_distribution(M)
    except ConvergenceError as exc:
        report.update(mixing=False, reason=str(exc))
        io.write_json(report, out / "spectrum.json")
        return report, ["mixing"]
    U = additive_reversibilization(lazy(M), pi)
    lam_u = second_eigenvalue(U)
    report.update(lambda2_lazy_reversibilized=lam_u, stationary=[float(v) for v in pi])
    report["mixing"] = bool(lam_u < 1.0 - 1e-12)
    failures = []
    if not report["mixing"]:
        io.write_json(report, out / "spectrum.json")
        return report, ["mixing"]
    violations = 0
    with open(out / "tv_bound.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "node", "tv_squared", "bound"])
        Mt = np.eye(M.shape[0])
        for t in range(1, cfg["max_steps"] + 1):
            Mt = Mt @ M
            for i in range(M.shape[0]):
                d2 = tv_distance(Mt[i], pi) ** 2
                bound = tv_bound(lam_u, pi[i], t)
                violations += d2 > bound + 1e-15
                w.writerow([t, i, repr(float(d2)), repr(float(bound))])
    report["tv_bound_violations"] = int(violations)
    if violations:
        failures.append("tv_bound")
    io.write_json(report, out / "spectrum.json")
    return report, failures


def cmd_fig2(cfg) -> tuple[dict, list[str]]:
    graph, P = _setup(cfg)
    B_values = list(range(1, cfg["B"] + 1))
    if not B_values:
        raise InputError("fig2 needs --B >= 1")
    table = inverse_gap_experiment(graph, P, B_values, cfg["trials"], cfg["seed"])
    out = _out(cfg)
    with open(out / "fig2.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["B", "max_inverse_gap", "trials", "seed"])
        for B, v in table:
            w.writerow([B, repr(float(v)), cfg["trials"], cfg["seed"]])
    io.write_edge_list(graph, out / "fig2_graph.txt")
    vals = [v for _, v in table]
    a, rel = fit_quadratic(table)
    nondecreasing = all(b >= a_ - 1e-9 * a_ for a_, b in zip(vals, vals[1:]))
    report = {"fit_a": a, "fit_relative_residual": rel, "nondecreasing": nondecreasing}
    io.write_json(report, out / "fig2_fit.json")
    failures = []
    if not nondecreasing:
        failures.append("nondecreasing")
    if rel >= 0.5:
        failures.append("quadratic_fit")
    return report, failures


def _row_run(cfg, graph, P, x0, path) -> tuple[dict, list[str]]:
    run = RandomDelayRun(P, graph, cfg["B"], x0, cfg["seed"])
    result = run_to_consensus(run, cfg["tol"], cfg["max_steps"])
    run.write_trajectory_csv(path)
    audit = result.audit
    failures = [k for k in ("lemma1", "lemma2", "lemma3", "contraction", "convex") if not audit[k]]
    if audit["m1_row_error"] > 1e-8:
        failures.append("m1_row")
    return audit, failures


def _push_sum_audit(run, graph, B, tol, max_steps, exact_tol):
    result = run_push_sum(run, tol, max_steps)
    check, erg, env = audit_ergodicity(run, graph, B)
    audit = dict(result.audit)
    audit["ergodicity"] = {
        "window": erg.window,
        "c_max": erg.geometric_rate_estimate,
        "min_margin": min(erg.margins),
        "envelope_violations": env["violations"],
    }
    audit["diameter"] = {"D": check.D, "D_hat": check.D_hat, "bound": check.bound}
    avg = float(run.x0.mean())
    audit["average"] = avg
    failures = []
    if np.abs(result.estimates - avg).max() > exact_tol:
        failures.append("average")
    if run.mass_error >= MASS_TOL or run.weight_error >= MASS_TOL:
        failures.append("mass_conservation")
    if not erg.all_contracting:
        failures.append("ergodicity")
    if env["violations"]:
        failures.append("error_envelope")
    if not check.ok:
        failures.append("diameter_bound")
    return audit, failures


def cmd_fig3(cfg) -> tuple[dict, list[str]]:
    graph, P = _setup(cfg)
    x0 = _x0(cfg, graph.n)
    out = _out(cfg)
    row, row_fail = _row_run(cfg, graph, P, x0, out / "fig3_row.csv")
    cgraph, Pc = _column_setup(cfg, graph, P)
    run = PushSumRun(Pc, cgraph, cfg["B"], x0, cfg["seed"], keep_transitions=True)
    push, push_fail = _push_sum_audit(run, cgraph, cfg["B"], PUSH_SUM_TOL, cfg["max_steps"], 1e-6)
    run.write_trajectory_csv(out / "fig3_pushsum.csv")
    report = {"row": row, "push_sum": push}
    io.write_json(report, out / "fig3_audit.json")
    return report, [f"row.{f}" for f in row_fail] + [f"push_sum.{f}" for f in push_fail]


def cmd_simulate(cfg) -> tuple[dict, list[str]]:
    graph, P = _setup(cfg)
    x0 = _x0(cfg, graph.n)
    out = _out(cfg)
    if cfg["delays"] is None:
        audit, failures = _row_run(cfg, graph, P, x0, out / "trajectory.csv")
        io.write_json(audit, out / "audit.json")
        return audit, failures
    system = augment_row(P, _delays(cfg, graph), graph)
    traj = iterate_to_consensus(system, x0, cfg["tol"], cfg["max_steps"])
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "node", "value", "occupied"])
        for t, x in enumerate(traj):
            for node, v in enumerate(x):
                w.writerow([t, node, repr(float(v)), 1])
    pi = stationary_distribution(system.matrix)
    value = float(traj[-1][: graph.n].mean())
    predicted = float(pi @ traj[0])
    audit = {"consensus_value": value, "predicted_value": predicted, "steps": len(traj) - 1}
    io.write_json(audit, out / "audit.json")
    return audit, [] if abs(value - predicted) <= 1e-8 else ["stationary_limit"]


def cmd_pushsum(cfg) -> tuple[dict, list[str]]:
    graph, P = _setup(cfg)
    x0 = _x0(cfg, graph.n)
    out = _out(cfg)
    cgraph, Pc = _column_setup(cfg, graph, P)
    if cfg["delays"] is None:
        B = cfg["B"]
        run = PushSumRun(Pc, cgraph, B, x0, cfg["seed"], keep_transitions=True)
        exact_tol = 1e-6
    else:
        delays = _delays(cfg, cgraph)
        B = delays.B
        run = FixedPushSumRun(augment_column(Pc, delays, cgraph), x0, keep_transitions=True)
        exact_tol = 1e-8
    audit, failures = _push_sum_audit(run, cgraph, B, cfg["tol"], cfg["max_steps"], exact_tol)
    run.write_trajectory_csv(out / "trajectory.csv")
    io.write_json(audit, out / "audit.json")
    return audit, failures


COMMANDS = {
    "augment": cmd_augment,
    "spectrum": cmd_spectrum,
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "simulate": cmd_simulate,
    "pushsum": cmd_pushsum,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        report, failures = COMMANDS[args.command](cfg)
    except (InputError, GraphError, StochasticityError, ValueError, OSError) as exc:
        print(f"delay-consensus {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, RuntimeError) as exc:
        print(json.dumps({"command": args.command, "failed": ["convergence"], "detail": str(exc)}))
        return 2
    if failures:
        print(json.dumps({"command": args.command, "failed": failures, "report": report},
                         indent=2, sort_keys=True, default=float))
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
