"""Push-Sum averaging without delays, with fixed delays and with random delays."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .fixed_delay import AugmentedSystem
from .graph_core import (
    ROW_TOL,
    DirectedGraph,
    GraphError,
    StochasticityError,
    diameter,
    require_stochastic,
    respects_graph,
)
from .random_delay import (
    DelayChainLayout,
    Routing,
    check_pmf,
    sample_step,
    uniform_pmf,
)

WEIGHT_FLOOR = 1e-300


@dataclass
class PushSumState:
    s: np.ndarray
    w: np.ndarray
    t: int = 0

    def mass(self) -> tuple[float, float]:
        return float(self.s.sum()), float(self.w.sum())


def init(x0, b: int = 0) -> PushSumState:
    """Sums start at the initial values, weights at 1; the ``b`` delay nodes start empty."""
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1 or x0.size == 0:
        raise ValueError("x0 must be a nonempty vector")
    return PushSumState(
        np.concatenate([x0, np.zeros(b)]),
        np.concatenate([np.ones(x0.size), np.zeros(b)]),
    )


def _column_matrix(Phat) -> np.ndarray:
    M = Phat.matrix if isinstance(Phat, AugmentedSystem) else Phat
    try:
        return require_stochastic(M, "column")
    except StochasticityError as exc:
        raise StochasticityError(f"Push-Sum needs a column-stochastic matrix: {exc}") from None


def step_fixed(state: PushSumState, Phat) -> PushSumState:
    M = _column_matrix(Phat)
    return PushSumState(M @ state.s, M @ state.w, state.t + 1)


def step_random(state: PushSumState, transition: np.ndarray) -> PushSumState:
    return PushSumState(transition @ state.s, transition @ state.w, state.t + 1)


def estimate(state: PushSumState) -> np.ma.MaskedArray:
    """``s / w`` where the weight is positive, masked elsewhere."""
    live = state.w > WEIGHT_FLOOR
    out = np.zeros_like(state.s)
    np.divide(state.s, state.w, out=out, where=live)
    return np.ma.masked_array(out, mask=~live)


def build_transition_random(
    P: np.ndarray, lay: DelayChainLayout, routing: Routing
) -> np.ndarray:
    """Column-stochastic transition for one random-delay step.

    Sender ``j`` keeps ``P[j, j]``; its share ``P[i, j]`` for receiver ``i``
    either arrives directly or enters the head of the drawn chain. Chain
    tails hand their whole content to the receiver.
    """
    P = require_stochastic(P, "column")
    n = lay.graph.n
    T = np.zeros((lay.dim, lay.dim))
    T[np.arange(n), np.arange(n)] = np.diag(P)
    T[:n, :n] += P * routing.L
    T[:n, n:] = lay.J
    heads, senders = np.nonzero(routing.R)
    receivers = lay.edge_dst[heads // lay.per_edge]
    T[heads + n, senders] = P[receivers, senders]
    T[n:, n:] = lay.C
    return T


class _Tracker:
    """Push-Sum state history with running mass and weight error."""

    def __init__(self, x0, b: int, settle_steps: int, keep_transitions: bool):
        self.x0 = np.asarray(x0, dtype=float)
        self.n = self.x0.size
        self.state = init(self.x0, b)
        self.settle_steps = settle_steps
        self.keep_transitions = keep_transitions
        self.transitions: list[np.ndarray] = []
        self.states = [self.state]
        self.mass_error = 0.0
        self.weight_error = 0.0
        self.min_compute_weight = 1.0

    @property
    def t(self) -> int:
        return self.state.t

    def _advance(self, T: np.ndarray) -> np.ndarray:
        self.state = step_random(self.state, T)
        s, w = self.state.mass()
        self.mass_error = max(self.mass_error, abs(s - self.x0.sum()))
        self.weight_error = max(self.weight_error, abs(w - self.n))
        self.min_compute_weight = min(self.min_compute_weight, float(self.state.w[: self.n].min()))
        if self.keep_transitions:
            self.transitions.append(T)
        self.states.append(self.state)
        return T

    def compute_estimates(self) -> np.ndarray:
        return estimate(self.state)[: self.n].filled(np.nan)

    def write_trajectory_csv(self, path) -> None:
        write_states_csv(self.states, path)


class FixedPushSumRun(_Tracker):
    """Push-Sum on a fixed column-stochastic augmented matrix."""

    def __init__(self, system: AugmentedSystem, x0, keep_transitions: bool = False):
        self.matrix = _column_matrix(system)
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (system.compute_count,):
            raise ValueError(f"x0 must have length {system.compute_count}")
        B = max((k for _, k in system.index_map.values()), default=0)
        super().__init__(x0, system.b, 2 * B + 1, keep_transitions)

    def step(self) -> np.ndarray:
        return self._advance(self.matrix)


class PushSumRun(_Tracker):
    """Seeded Push-Sum run under random delays."""

    def __init__(
        self,
        P: np.ndarray,
        graph: DirectedGraph,
        B: int,
        x0,
        seed: int,
        pmf=None,
        keep_transitions: bool = False,
    ):
        self.P = require_stochastic(P, "column")
        if not respects_graph(self.P, graph):
            raise GraphError("protocol does not respect the graph")
        if not graph.is_strongly_connected():
            raise GraphError("Push-Sum needs a strongly connected graph")
        self.layout = DelayChainLayout(graph, B)
        self.pmf = uniform_pmf(B) if pmf is None else check_pmf(pmf, B)
        self.rng = np.random.default_rng(seed)
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (graph.n,):
            raise ValueError(f"x0 must have length {graph.n}")
        super().__init__(x0, self.layout.b, 2 * B + 1, keep_transitions)

    def step(self) -> np.ndarray:
        routing = sample_step(self.layout, self.rng, self.pmf)
        return self._advance(build_transition_random(self.P, self.layout, routing))


def write_states_csv(states, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t", "node", "s", "w", "estimate"])
        for st in states:
            est = estimate(st)
            for node in range(st.s.size):
                e = "" if est.mask[node] else repr(float(est.data[node]))
                out.writerow([st.t, node, repr(float(st.s[node])), repr(float(st.w[node])), e])


@dataclass
class PushSumResult:
    estimates: np.ndarray
    steps: int
    audit: dict = field(default_factory=dict)


def run_push_sum(run, tol: float = 1e-8, max_steps: int = 1_000_000) -> PushSumResult:
    """Iterate until compute estimates agree within ``tol`` for ``2B+1`` consecutive steps."""
    need = run.settle_steps
    streak = 0
    while streak < need:
        if run.t >= max_steps:
            est = run.compute_estimates()
            raise RuntimeError(
                f"Push-Sum did not settle in {max_steps} steps (spread={np.ptp(est):.3e})"
            )
        run.step()
        est = run.compute_estimates()
        streak = streak + 1 if np.isfinite(est).all() and np.ptp(est) < tol else 0
    est = run.compute_estimates()
    audit = {
        "mass_error_max": run.mass_error,
        "weight_error_max": run.weight_error,
        "min_compute_weight": run.min_compute_weight,
        "final_estimates": [float(v) for v in est],
        "steps": run.t,
    }
    return PushSumResult(est, run.t, audit)


@dataclass
class DiameterCheck:
    D: int
    D_hat: int
    bound: int

    @property
    def ok(self) -> bool:
        return self.D_hat <= self.bound


def diameter_bound_check(graph: DirectedGraph, B: int) -> DiameterCheck:
    """Diameter of ``graph`` and of its all-chains random-delay augmentation vs ``(B+1)D + B + 1``."""
    D = diameter(graph)
    D_hat = diameter(DelayChainLayout(graph, B).union_graph())
    return DiameterCheck(D, D_hat, (B + 1) * D + B + 1)


@dataclass
class ErgodicityReport:
    window: int
    c_values: list[float]
    margins: list[float]

    @property
    def geometric_rate_estimate(self) -> float:
        return max(self.c_values)

    @property
    def all_contracting(self) -> bool:
        # margin > 0 is the exact statement c < 1; c itself can round to 1.0
        return all(m > 0 for m in self.margins)


def ergodicity_audit(transitions, window: int, n: int | None = None) -> ErgodicityReport:
    """Improper ergodicity coefficient of each consecutive ``window``-long block.

    For the block ``T_r .. T_{r+window-1}`` the transposed forward product is
    ``F = (T_{r+window-1} ... T_r)^T`` and ``c(F) = 1 - max_s min_k F[k, s]``
    with ``s`` restricted to the first ``n`` (compute) columns.
    """
    transitions = list(transitions)
    if window < 1 or len(transitions) < window:
        raise ValueError(f"need at least {window} transitions, got {len(transitions)}")
    dim = transitions[0].shape[0]
    n = dim if n is None else n
    cs, margins = [], []
    for start in range(0, len(transitions) - window + 1, window):
        prod = np.eye(dim)
        for T in transitions[start : start + window]:
            prod = T @ prod
        F = prod.T
        margin = float(F[:, :n].min(axis=0).max())
        margins.append(margin)
        cs.append(1.0 - margin)
    return ErgodicityReport(window, cs, margins)


def error_envelope_check(
    run, report: ErgodicityReport, slack: float = 2.0
) -> dict:
    """Compare weighted estimate error against the block-contraction envelope.

    With ``M`` the product of transitions so far, ``|s_i - avg w_i|`` is at
    most ``tau(M^T) * ||x0 - avg||_1`` and ``tau`` is bounded by the product of
    block coefficients, hence by ``c_max**k`` after ``k`` complete blocks.
    """
    x0 = run.x0
    avg = x0.mean()
    scale = np.abs(x0 - avg).sum()
    c_max = report.geometric_rate_estimate
    worst = 0.0
    violations = 0
    for st in run.states:
        k = st.t // report.window
        err = float(np.abs(st.s[: run.n] - avg * st.w[: run.n]).max())
        env = slack * scale * c_max**k
        if err > env + ROW_TOL:
            violations += 1
        if env > 0:
            worst = max(worst, err / env)
    return {"violations": violations, "worst_ratio": worst, "c_max": c_max}


def write_audit_json(result: PushSumResult, path, ergodicity: ErgodicityReport | None = None):
    payload = dict(result.audit)
    if ergodicity is not None:
        payload["ergodicity"] = {
            "window": ergodicity.window,
            "c_max": ergodicity.geometric_rate_estimate,
        }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def audit_ergodicity(run, graph: DirectedGraph, B: int):
    """Ergodicity blocks and error envelope for a run kept with ``keep_transitions``.

    The block length is the delay-diameter bound ``(B+1)D + B + 1`` on the augmented
    diameter. The run is advanced if it has not yet produced one full block.
    """
    if not run.keep_transitions:
        raise ValueError("run was created without keep_transitions")
    check = diameter_bound_check(graph, B)
    while run.t < check.bound:
        run.step()
    report = ergodicity_audit(run.transitions, check.bound, n=run.n)
    return check, report, error_envelope_check(run, report)
