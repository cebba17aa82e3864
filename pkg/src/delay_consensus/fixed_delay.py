"""Fixed per-edge delays modelled as chains of relay nodes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph_core import DirectedGraph, GraphError, require_stochastic, respects_graph


@dataclass
class DelayAssignment:
    """Integer delay ``b_r`` for each directed non-self-loop edge; missing edges default to 0."""

    delays: dict[tuple[int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (s, r), b in self.delays.items():
            b = int(b)
            if b < 0:
                raise ValueError(f"negative delay {b} on edge ({s}, {r})")
            clean[(int(s), int(r))] = b
        self.delays = clean

    @property
    def B(self) -> int:
        return max(self.delays.values(), default=0)

    def get(self, edge: tuple[int, int]) -> int:
        return self.delays.get(edge, 0)

    def total(self, graph: DirectedGraph) -> int:
        return sum(self.get(e) for e in graph.edges)

    def check(self, graph: DirectedGraph) -> None:
        for e in self.delays:
            if e[0] == e[1] or not graph.has_edge(*e):
                raise GraphError(f"delay given for edge {e} which is not in the graph")

    @classmethod
    def uniform_random(
        cls, graph: DirectedGraph, B: int, rng: np.random.Generator
    ) -> "DelayAssignment":
        """Delays drawn uniformly from ``{0..B}`` independently per edge (edge order)."""
        draws = rng.integers(0, B + 1, size=graph.m)
        return cls({e: int(b) for e, b in zip(graph.edges, draws)})

    @classmethod
    def from_uniforms(cls, graph: DirectedGraph, u, B: int) -> "DelayAssignment":
        """Delays ``floor(u_r (B+1))`` from one uniform ``u_r`` in ``[0, 1)`` per edge."""
        u = np.asarray(u, dtype=float)
        if u.shape != (graph.m,) or (u < 0).any() or (u >= 1).any():
            raise ValueError("need one value in [0, 1) per edge")
        draws = np.floor(u * (B + 1)).astype(int)
        return cls({e: int(b) for e, b in zip(graph.edges, draws)})


@dataclass
class AugmentedSystem:
    """Delay-augmented matrix plus the map from delay-node index to ``(edge, position)``.

    Positions run ``1..b_r`` from chain head (next to the sender) to tail.
    """

    matrix: np.ndarray
    index_map: dict[int, tuple[tuple[int, int], int]]
    compute_count: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def b(self) -> int:
        return self.dim - self.compute_count

    def chain(self, edge: tuple[int, int]) -> list[int]:
        nodes = [(k, idx) for idx, (e, k) in self.index_map.items() if e == edge]
        return [idx for _, idx in sorted(nodes)]

    def augmented_graph(self) -> DirectedGraph:
        """Communication graph of the augmented protocol (edge ``j -> i`` when ``matrix[i, j] > 0``)."""
        return DirectedGraph.from_protocol(self.matrix)

    def index_map_json(self) -> dict[str, dict]:
        return {
            str(idx): {"edge": [e[0], e[1]], "position": k}
            for idx, (e, k) in sorted(self.index_map.items())
        }


def _chain_layout(graph: DirectedGraph, delays: DelayAssignment):
    index_map = {}
    chains = {}
    nxt = graph.n
    for e in graph.edges:
        b = delays.get(e)
        if b == 0:
            continue
        chains[e] = list(range(nxt, nxt + b))
        for k in range(b):
            index_map[nxt + k] = (e, k + 1)
        nxt += b
    return nxt, chains, index_map


def _augment(P, delays, graph, sender_side_weight: bool) -> AugmentedSystem:
    delays.check(graph)
    if not respects_graph(P, graph):
        raise GraphError("protocol has weight on a pair that is not an edge of the graph")
    n = graph.n
    dim, chains, index_map = _chain_layout(graph, delays)
    Q = np.zeros((dim, dim))
    Q[:n, :n] = P
    for (i, j), nodes in chains.items():
        weight = P[j, i]
        Q[j, i] = 0.0
        head, tail = nodes[0], nodes[-1]
        if sender_side_weight:
            # column-stochastic: the sender's share enters the chain, the tail hands it over whole
            Q[head, i] = weight
            Q[j, tail] = 1.0
        else:
            # row-stochastic: the head copies the sender, the receiver weights the tail
            Q[head, i] = 1.0
            Q[j, tail] = weight
        for a, b in zip(nodes[:-1], nodes[1:]):
            Q[b, a] = 1.0
    return AugmentedSystem(Q, index_map, n)


def augment_row(P: np.ndarray, delays: DelayAssignment, graph: DirectedGraph) -> AugmentedSystem:
    """Row-stochastic protocol on the graph with each delayed edge replaced by a relay chain.

    For edge ``i -> j`` with delay ``b`` the receiver weight ``P[j, i]`` moves
    from column ``i`` to the chain tail; chain nodes copy their predecessor.
    """
    P = require_stochastic(P, "row")
    return _augment(P, delays, graph, sender_side_weight=False)


def augment_column(
    P: np.ndarray, delays: DelayAssignment, graph: DirectedGraph
) -> AugmentedSystem:
    """Column-stochastic counterpart of :func:`augment_row` (Push-Sum weights).

    The sender share ``P[j, i]`` is pushed into the chain head and delivered
    to ``j`` with weight 1 after ``b`` relays.
    """
    P = require_stochastic(P, "column")
    return _augment(P, delays, graph, sender_side_weight=True)


@dataclass
class StationaryClosedForm:
    pi_V: float
    pi_r: dict[tuple[int, int], float]
    normalizer: float

    def vector(self, system: AugmentedSystem) -> np.ndarray:
        """Expand to a full stationary vector in the index order of ``system``."""
        pi = np.full(system.dim, self.pi_V)
        for idx, (e, _) in system.index_map.items():
            pi[idx] = self.pi_r[e]
        return pi


def closed_form_stationary(
    P: np.ndarray, delays: DelayAssignment, graph: DirectedGraph
) -> StationaryClosedForm:
    """Exact stationary distribution of ``augment_row(P, ...)`` for doubly stochastic ``P``.

    Every compute node gets ``1/N`` and every node on the chain of edge
    ``i -> j`` gets ``P[j, i]/N`` with ``N = n + sum_r b_r P[j, i]``.
    """
    P = require_stochastic(P, "doubly")
    delays.check(graph)
    weights = {e: float(P[e[1], e[0]]) for e in graph.edges if delays.get(e) > 0}
    N = graph.n + sum(delays.get(e) * w for e, w in weights.items())
    return StationaryClosedForm(1.0 / N, {e: w / N for e, w in weights.items()}, N)


def rescale_for_average(x0: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Rescale ``x0_i -> x0_i / (n pi_i)`` so a row-stochastic consensus lands on the average of ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if (pi <= 0).any():
        raise ValueError("rescaling needs a strictly positive stationary distribution")
    return x0 / (len(x0) * pi)


def iterate_to_consensus(
    system: AugmentedSystem, x0, tol: float = 1e-10, max_steps: int = 1_000_000
) -> list[np.ndarray]:
    """Iterate ``x <- P_delayed x`` from ``[x0; 0]`` until all values agree within ``tol``.

    Returns the trajectory including the initial vector.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.compute_count,):
        raise ValueError(f"x0 must have length {system.compute_count}")
    x = np.concatenate([x0, np.zeros(system.b)])
    traj = [x]
    while np.ptp(x) >= tol:
        if len(traj) > max_steps:
            raise RuntimeError(f"no consensus after {max_steps} steps (spread={np.ptp(x):.3e})")
        x = system.matrix @ x
        traj.append(x)
    return traj
