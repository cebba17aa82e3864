"""Canonical paths, Poincare constants and the delayed second-eigenvalue bound."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .fixed_delay import DelayAssignment, augment_row, closed_form_stationary
from .graph_core import (
    DirectedGraph,
    GraphError,
    additive_reversibilization,
    lazy,
    require_stochastic,
    second_eigenvalue,
)

Path = tuple[int, ...]


def shortest_canonical_paths(graph: DirectedGraph) -> dict[tuple[int, int], Path]:
    """One BFS shortest path per ordered pair ``x != y``.

    Neighbours are expanded in increasing index order and the first
    discovery wins, so the path set is a deterministic function of the graph.
    """
    if not graph.is_strongly_connected():
        raise GraphError("canonical paths need a strongly connected graph")
    paths = {}
    for x in range(graph.n):
        parent = {x: None}
        queue = deque([x])
        while queue:
            v = queue.popleft()
            for w in graph.successors(v):
                if w not in parent:
                    parent[w] = v
                    queue.append(w)
        for y in range(graph.n):
            if y == x:
                continue
            path = [y]
            while path[-1] != x:
                path.append(parent[path[-1]])
            paths[(x, y)] = tuple(reversed(path))
    return paths


@dataclass
class PoincareReport:
    K: float
    bottleneck_edge: tuple[int, int] | None

    @property
    def lambda2_bound(self) -> float | None:
        """``1 - 1/K``; ``None`` when ``K == 0`` (single node) and the bound does not apply."""
        if self.K == 0:
            return None
        return 1.0 - 1.0 / self.K


def edge_loads(P: np.ndarray, pi: np.ndarray, paths: dict[tuple[int, int], Path]):
    """Per-edge value ``(1/(pi_v P[v, w])) sum_{paths through (v, w)} |path| pi_x pi_y``."""
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    flow: dict[tuple[int, int], float] = {}
    for (x, y), path in paths.items():
        length = len(path) - 1
        for v, w in zip(path[:-1], path[1:]):
            flow[(v, w)] = flow.get((v, w), 0.0) + length * pi[x] * pi[y]
    loads = {}
    for (v, w), f in flow.items():
        q = pi[v] * P[v, w]
        if q <= 0:
            raise ValueError(f"canonical path uses edge ({v}, {w}) with zero transition weight")
        loads[(v, w)] = f / q
    return loads


def poincare_constant(
    P: np.ndarray, pi: np.ndarray, paths: dict[tuple[int, int], Path]
) -> PoincareReport:
    """Poincare constant of the chain ``P`` for the given canonical paths.

    Path edges are Markov transitions ``v -> w`` weighted by ``P[v, w]``. Ties
    in the maximum go to the lexicographically smallest edge.
    """
    loads = edge_loads(P, pi, paths)
    if not loads:
        return PoincareReport(0.0, None)
    best = max(loads.values())
    # relative tie tolerance so rounding does not flip the reported edge
    edge = min(e for e, v in loads.items() if v >= best * (1 - 1e-12))
    return PoincareReport(float(best), edge)


@dataclass
class ZFactorInputs:
    p: float
    p_vw: float
    d_max: int
    c: float
    B: int


def z_factor(inp: ZFactorInputs) -> float:
    """Factor ``Z`` with ``K_delayed <= Z K`` for delays up to ``B``."""
    p, d, B = inp.p, inp.d_max, inp.B
    bracket = (
        p**2 * (2 * d**2 + 3 * d + 1) * B**3
        + p * (2 * p * d**2 + 2 * p * d + 8 * d + 6) * B**2
        + (8 * p * d + p + 8) * B
        + 8
    )
    return inp.p_vw / (4 * inp.c) * bracket


def corrected_z_factor(inp: ZFactorInputs) -> float:
    """``z_factor`` with leading factor ``1/(2c)`` in place of ``p_vw/(4c)``.

    Diagnostic only. Chain nodes of the delayed chain carry stationary mass
    ``p_vw pi_v / c`` and the lazy reversibilized chain moves along a chain
    edge with probability 1/4, which gives a per-edge normalization of
    ``4/c`` instead of ``2 p_vw / c``. ``z_factor`` itself can undershoot the
    true inverse gap (two nodes, ``B = 0``: ``Z K = 1`` against 2).
    """
    return z_factor(inp) * 2.0 / inp.p_vw


def z_factor_terms(inp: ZFactorInputs) -> dict[str, float]:
    """Per-case contributions to ``Z`` before simplification, worst case (all half-chains = B).

    Keys name the path case (``x->y``, ``x->y-`` ...). Their total exceeds
    :func:`z_factor` by exactly ``p_vw * 3 p B / (4 c)``: the collapsed
    polynomial carries ``p B`` where the per-case sum gives ``4 p B``.
    """
    p, d, B = inp.p, inp.d_max, inp.B
    lead = 2 * inp.p_vw / inp.c
    raw = {
        "x->y": B + 1,
        "x->y-": p * (3 * B**2 + 2 * B) / 8,
        "x->y+": p * d * (5 * B**2 + 6 * B) / 8,
        "x- ->y-": p**2 * d * B**3 / 8,
        "x- ->y": p * d * (3 * B**2 + 2 * B) / 8,
        "x- ->y+": p**2 * d**2 * (B**3 + B**2) / 4,
        "x+ ->y-": p**2 * B**3 / 8,
        "x+ ->y": p * (3 * B**2 + 2 * B) / 8,
        "x+ ->y+": p**2 * d * (B**3 + B**2) / 4,
    }
    return {k: lead * v for k, v in raw.items()}


def z_inputs(
    P: np.ndarray, report: PoincareReport, delays: DelayAssignment, graph: DirectedGraph
) -> ZFactorInputs:
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    off = P - np.diag(np.diag(P))
    cf = closed_form_stationary(P, delays, graph)
    v, w = report.bottleneck_edge
    return ZFactorInputs(
        p=float(off.max(initial=0.0)),
        p_vw=float(P[v, w]),
        d_max=int(graph.undirected_degrees().max(initial=0)),
        c=cf.normalizer / n,
        B=delays.B,
    )


def delayed_bound(
    P: np.ndarray,
    pi: np.ndarray,
    paths: dict[tuple[int, int], Path],
    delays: DelayAssignment,
    graph: DirectedGraph | None = None,
    z=z_factor,
) -> float:
    """Claimed upper bound ``Z K`` on the inverse spectral gap of ``U(lazy(P_delayed))``.

    ``z`` selects the factor; pass :func:`corrected_z_factor` for the diagnostic variant.
    """
    P = require_stochastic(P, "doubly")
    if graph is None:
        graph = DirectedGraph.from_protocol(P)
    report = poincare_constant(P, pi, paths)
    if report.bottleneck_edge is None:
        raise GraphError("single-node graph has no bottleneck edge")
    return z(z_inputs(P, report, delays, graph)) * report.K


def delayed_inverse_gap(P: np.ndarray, delays: DelayAssignment, graph: DirectedGraph) -> float:
    """``1/(1 - lambda2(U(lazy(P_delayed))))`` for doubly stochastic ``P``."""
    system = augment_row(P, delays, graph)
    cf = closed_form_stationary(P, delays, graph)
    pi = cf.vector(system)
    U = additive_reversibilization(lazy(system.matrix), pi)
    return 1.0 / (1.0 - second_eigenvalue(U))


def inverse_gap_experiment(
    graph: DirectedGraph,
    P: np.ndarray,
    B_values: list[int],
    trials: int,
    seed: int,
) -> list[tuple[int, float]]:
    """Worst inverse spectral gap over ``trials`` random delay draws for each ``B``.

    Trial ``k`` draws one uniform ``u`` in ``[0, 1)`` per edge, shared by all
    ``B``; the delay is ``floor(u (B+1))``, uniform on ``{0..B}``. Coupling the
    draws across ``B`` keeps the sampling noise of the maximum from masking
    the trend, and a row does not depend on which other ``B`` values were
    requested.
    """
    P = require_stochastic(P, "doubly")
    U = np.random.default_rng(seed).random((trials, graph.m))
    table = []
    for B in B_values:
        worst = 0.0
        for u in U if B > 0 else U[:1]:
            delays = DelayAssignment.from_uniforms(graph, u, B)
            worst = max(worst, delayed_inverse_gap(P, delays, graph))
        table.append((B, worst))
    return table


def fit_quadratic(table: list[tuple[int, float]]) -> tuple[float, float]:
    """Least-squares ``a`` for ``y ~ a B^2`` and the relative residual ``||y - aB^2|| / ||y||``."""
    B = np.array([b for b, _ in table], dtype=float)
    y = np.array([v for _, v in table], dtype=float)
    x = B**2
    a = float(x @ y / (x @ x))
    rel = float(np.linalg.norm(y - a * x) / np.linalg.norm(y))
    return a, rel
