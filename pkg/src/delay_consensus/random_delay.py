"""Row-stochastic consensus under i.i.d. bounded random delays.

Every directed edge carries ``B`` parallel relay chains of lengths ``1..B``.
Each step every edge message is routed either directly (delay 0) or into
the head of one chain; a compute node averages whatever arrives, splitting
the protocol weight for a sender evenly among that sender's messages and
returning the weight of silent senders to its own value.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .graph_core import DirectedGraph, GraphError, require_stochastic, respects_graph

LEMMA_TOL = 1e-12
MONOTONE_TOL = 1e-12


@dataclass
class DelayChainLayout:
    """Index map for the ``B(B+1)/2`` delay nodes of each edge.

    Per edge the order is ``d_1^1, d_1^2, d_2^2, ..., d_1^B .. d_B^B``; edges
    follow ``graph.edges`` and all delay nodes come after the compute nodes.
    """

    graph: DirectedGraph
    B: int

    def __post_init__(self):
        if self.B < 0:
            raise ValueError("B must be nonnegative")
        n, B = self.graph.n, self.B
        self.per_edge = B * (B + 1) // 2
        self.b = self.graph.m * self.per_edge
        self.dim = n + self.b
        self.edge_src = np.array([s for s, _ in self.graph.edges], dtype=int)
        self.edge_dst = np.array([r for _, r in self.graph.edges], dtype=int)
        # heads[r, k-1] / tails[r, k-1] are absolute indices of chain k on edge r
        self.heads = np.zeros((self.graph.m, B), dtype=int)
        self.tails = np.zeros((self.graph.m, B), dtype=int)
        for r in range(self.graph.m):
            for k in range(1, B + 1):
                self.heads[r, k - 1] = self.index(r, k, 1)
                self.tails[r, k - 1] = self.index(r, k, k)
        C = np.zeros((self.b, self.b))
        for r in range(self.graph.m):
            for k in range(2, B + 1):
                for j in range(2, k + 1):
                    C[self.index(r, k, j) - n, self.index(r, k, j - 1) - n] = 1.0
        self.C = C
        J = np.zeros((n, self.b))
        for r in range(self.graph.m):
            J[self.edge_dst[r], self.tails[r] - n] = 1.0
        self.J = J

    def index(self, edge: int, k: int, j: int) -> int:
        """Absolute index of position ``j`` on the chain of length ``k`` of edge number ``edge``."""
        if not (1 <= j <= k <= self.B):
            raise IndexError(f"invalid chain position j={j}, k={k} for B={self.B}")
        return self.graph.n + edge * self.per_edge + k * (k - 1) // 2 + (j - 1)

    def label(self, idx: int) -> tuple[tuple[int, int], int, int] | None:
        """``(edge, chain length, position)`` of a delay node, ``None`` for compute nodes."""
        if idx < self.graph.n:
            return None
        off = idx - self.graph.n
        r, rem = divmod(off, self.per_edge)
        k = 1
        while rem >= k:
            rem -= k
            k += 1
        return self.graph.edges[r], k, rem + 1

    def union_graph(self) -> DirectedGraph:
        """Augmented graph with every direct edge and every chain present at once."""
        edges = list(self.graph.edges)
        for r, (s, d) in enumerate(self.graph.edges):
            for k in range(1, self.B + 1):
                prev = s
                for j in range(1, k + 1):
                    node = self.index(r, k, j)
                    edges.append((prev, node))
                    prev = node
                edges.append((prev, d))
        return DirectedGraph(self.dim, edges)


def layout(graph: DirectedGraph, B: int) -> DelayChainLayout:
    return DelayChainLayout(graph, B)


def uniform_pmf(B: int) -> np.ndarray:
    return np.full(B + 1, 1.0 / (B + 1))


def check_pmf(pmf, B: int) -> np.ndarray:
    pmf = np.asarray(pmf, dtype=float)
    if pmf.shape != (B + 1,) or (pmf < 0).any() or abs(pmf.sum() - 1) > 1e-12:
        raise ValueError(f"pmf must be a probability vector over 0..{B}")
    return pmf


@dataclass
class Routing:
    """Delay drawn for each edge this step, with the induced ``L`` and ``R`` indicators."""

    delays: np.ndarray
    L: np.ndarray
    R: np.ndarray


def routing_from_delays(lay: DelayChainLayout, delays) -> Routing:
    delays = np.asarray(delays, dtype=int)
    n = lay.graph.n
    L = np.zeros((n, n))
    R = np.zeros((lay.b, n))
    direct = delays == 0
    L[lay.edge_dst[direct], lay.edge_src[direct]] = 1.0
    chained = np.nonzero(~direct)[0]
    R[lay.heads[chained, delays[chained] - 1] - n, lay.edge_src[chained]] = 1.0
    return Routing(delays, L, R)


def sample_step(lay: DelayChainLayout, rng: np.random.Generator, pmf=None) -> Routing:
    """Draw one delay in ``0..B`` per edge, in edge order."""
    pmf = uniform_pmf(lay.B) if pmf is None else check_pmf(pmf, lay.B)
    delays = rng.choice(lay.B + 1, size=lay.graph.m, p=pmf)
    return routing_from_delays(lay, delays)


@dataclass
class TransitionSnapshot:
    L: np.ndarray
    R: np.ndarray
    J: np.ndarray
    C: np.ndarray
    Phat: np.ndarray
    n: int

    @property
    def top_left(self) -> np.ndarray:
        return self.Phat[: self.n, : self.n]

    @property
    def top_right(self) -> np.ndarray:
        return self.Phat[: self.n, self.n :]


def build_transition(
    P: np.ndarray, lay: DelayChainLayout, routing: Routing, phi_prev: np.ndarray
) -> TransitionSnapshot:
    """Transition matrix for one step given this step's routing and last step's occupancy.

    A message from ``j`` reaching ``i`` gets ``P[i, j] / (arrivals from j)``;
    the diagonal absorbs ``P[i, i]`` plus the weight of every silent sender.
    """
    n = lay.graph.n
    phi_prev = np.asarray(phi_prev)
    Phat = np.zeros((lay.dim, lay.dim))
    top = Phat[:n]
    L = routing.L
    for r in range(lay.graph.m):
        j, i = lay.edge_src[r], lay.edge_dst[r]
        arrived = lay.tails[r][phi_prev[lay.tails[r] - n] > 0]
        count = len(arrived) + L[i, j]
        if count == 0:
            continue
        if P[i, j] <= 0:
            raise GraphError(f"message on edge ({j}, {i}) but protocol weight P[{i}, {j}] is zero")
        share = P[i, j] / count
        top[i, arrived] = share
        if L[i, j]:
            top[i, j] = share
    used = top.sum(axis=1)
    top[np.arange(n), np.arange(n)] = 1.0 - used
    Phat[n:, :n] = routing.R
    Phat[n:, n:] = lay.C
    return TransitionSnapshot(L, routing.R, lay.J, lay.C, Phat, n)


def next_occupancy(lay: DelayChainLayout, routing: Routing, phi_prev: np.ndarray) -> np.ndarray:
    return routing.R.sum(axis=1) + lay.C @ phi_prev


@dataclass
class StepAudit:
    lemma1: bool
    lemma2: float
    lemma3_rows: float
    lemma3_nonneg: bool
    lemma3_diag: bool


class RandomDelayRun:
    """Mutable state of one seeded random-delay consensus run.

    Holds the augmented values, occupancy, the product blocks ``M1``/``M2`` and
    the recorded trajectory. One owner advances a run; separate runs are
    independent.
    """

    def __init__(
        self,
        P: np.ndarray,
        graph: DirectedGraph,
        B: int,
        x0,
        seed: int,
        pmf=None,
        track_products: bool = True,
        record: bool = True,
    ):
        P = require_stochastic(P, "row")
        if not respects_graph(P, graph):
            raise GraphError("protocol does not respect the graph")
        if not graph.is_strongly_connected():
            raise GraphError("random-delay consensus needs a strongly connected graph")
        self.P = P
        self.layout = DelayChainLayout(graph, B)
        self.pmf = uniform_pmf(B) if pmf is None else check_pmf(pmf, B)
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        n = graph.n
        self.x0 = np.asarray(x0, dtype=float)
        if self.x0.shape != (n,):
            raise ValueError(f"x0 must have length {n}")
        self.x = np.concatenate([self.x0, np.zeros(self.layout.b)])
        self.phi = np.zeros(self.layout.b)
        self.t = 0
        self.track_products = track_products
        self.M1 = np.eye(n)
        self.M2 = np.zeros((self.layout.b, n))
        self.audits: list[StepAudit] = []
        self.record = record
        self.values = [self.x.copy()] if record else []
        self.masks = [self.mask()] if record else []

    @property
    def n(self) -> int:
        return self.layout.graph.n

    def mask(self) -> np.ndarray:
        """Occupancy over all nodes: compute nodes always 1."""
        return np.concatenate([np.ones(self.n, dtype=bool), self.phi > 0])

    def spread(self) -> float:
        live = self.x[self.mask()]
        return float(live.max() - live.min())

    def step(self) -> TransitionSnapshot:
        routing = sample_step(self.layout, self.rng, self.pmf)
        snap = build_transition(self.P, self.layout, routing, self.phi)
        self.phi = next_occupancy(self.layout, routing, self.phi)
        self.x = snap.Phat @ self.x
        if self.track_products:
            n = self.n
            top_left, top_right = snap.Phat[:n, :n], snap.Phat[:n, n:]
            M1 = top_left @ self.M1 + top_right @ self.M2
            self.M2 = routing.R @ self.M1 + self.layout.C @ self.M2
            self.M1 = M1
            self.audits.append(self._audit())
        self.t += 1
        if self.record:
            self.values.append(self.x.copy())
            self.masks.append(self.mask())
        return snap

    def _audit(self) -> StepAudit:
        nonzero = np.any(self.M2 != 0, axis=1)
        occ = self.phi > 0
        m2_sums = self.M2.sum(axis=1)[occ]
        m1_sums = self.M1.sum(axis=1)
        return StepAudit(
            lemma1=bool(np.array_equal(nonzero, occ)),
            lemma2=float(np.abs(m2_sums - 1).max(initial=0.0)),
            lemma3_rows=float(np.abs(m1_sums - 1).max(initial=0.0)),
            lemma3_nonneg=bool((self.M1 >= 0).all()),
            lemma3_diag=bool((np.diag(self.M1) > 0).all()),
        )

    def lemma_summary(self) -> dict[str, bool]:
        a = self.audits
        return {
            "lemma1": all(s.lemma1 for s in a),
            "lemma2": all(s.lemma2 <= LEMMA_TOL for s in a),
            "lemma3": all(
                s.lemma3_rows <= LEMMA_TOL and s.lemma3_nonneg and s.lemma3_diag for s in a
            ),
        }

    def write_trajectory_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "node", "value", "occupied"])
            for t, (vals, mask) in enumerate(zip(self.values, self.masks)):
                for node, (v, occ) in enumerate(zip(vals, mask)):
                    w.writerow([t, node, repr(float(v)), int(occ)])


@dataclass
class ConsensusResult:
    value: float
    steps: int
    audit: dict = field(default_factory=dict)


class ConsensusNotReached(RuntimeError):
    def __init__(self, steps: int, spread: float):
        super().__init__(f"no consensus after {steps} steps (spread={spread:.3e})")
        self.steps = steps
        self.spread = spread


def run_to_consensus(
    run: RandomDelayRun, spread_tol: float = 1e-10, max_steps: int = 1_000_000
) -> ConsensusResult:
    """Step until the masked spread drops below ``spread_tol``; audit the limit."""
    while run.spread() >= spread_tol:
        if run.t >= max_steps:
            raise ConsensusNotReached(run.t, run.spread())
        run.step()
    n = run.n
    value = float(run.x[:n].mean())
    audit = {
        "consensus_value": value,
        "steps": run.t,
        "spread": run.spread(),
        "convex": bool(run.x0.min() - 1e-12 <= value <= run.x0.max() + 1e-12),
    }
    if run.track_products:
        audit["m1_row_error"] = float(abs(value - run.M1[0] @ run.x0))
        audit.update(run.lemma_summary())
    if run.record:
        audit["contraction"] = contraction_audit(run.values, run.masks, run.layout.B)["per_step_ok"]
    return ConsensusResult(value, run.t, audit)


def contraction_audit(values, masks, B: int, tol: float = MONOTONE_TOL) -> dict:
    """Check masked max non-increasing / masked min non-decreasing along a trajectory.

    ``tol`` absorbs last-bit rounding in convex combinations. Also reports
    the empirical number of ``2B+1``-step windows needed before both the
    masked max strictly drops and the masked min strictly rises.
    """
    hi = np.array([v[m].max() for v, m in zip(values, masks)])
    lo = np.array([v[m].min() for v, m in zip(values, masks)])
    scale = max(1.0, float(np.abs(hi).max(initial=0)), float(np.abs(lo).max(initial=0)))
    up = np.diff(hi) > tol * scale
    down = np.diff(lo) < -tol * scale
    W = 2 * B + 1
    windows_ok = all(
        hi[s + W] <= hi[s] + tol * scale and lo[s + W] >= lo[s] - tol * scale
        for s in range(0, len(hi) - W)
    )
    r_max = 0
    for s in range(0, len(hi), W):
        if hi[s] - lo[s] <= tol * scale:
            break
        r = 1
        while s + r * W < len(hi):
            e = s + r * W
            if hi[e] < hi[s] and lo[e] > lo[s]:
                break
            r += 1
        else:
            break
        r_max = max(r_max, r)
    return {
        "per_step_ok": bool(not up.any() and not down.any()),
        "max_increases": int(up.sum()),
        "min_decreases": int(down.sum()),
        "windows_ok": bool(windows_ok),
        "empirical_r": r_max,
    }


def write_audit_json(result: ConsensusResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(result.audit, fh, indent=2, sort_keys=True)
