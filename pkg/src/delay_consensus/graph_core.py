"""Directed graphs, stochastic matrices and Markov-chain transforms.

Convention used throughout the package: a row-stochastic protocol ``P``
drives ``x(t) = P x(t-1)``, so ``P[i, j]`` is the weight receiver ``i``
assigns to sender ``j`` and needs the directed edge ``(j, i)``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

ROW_TOL = 1e-12
EIG_DIM_CAP = 2000
POWER_TOL = 1e-12
POWER_MAX_ITER = 1_000_000


class GraphError(ValueError):
    """Raised for malformed or insufficiently connected graphs."""


class StochasticityError(ValueError):
    """Raised when a matrix does not have the required stochasticity."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver hits its cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


@dataclass
class DirectedGraph:
    """Directed graph on nodes ``0..n-1``.

    ``edges`` holds the non-self-loop edges ``(sender, receiver)`` in a fixed
    order; that order defines edge indices everywhere else.
    """

    n: int
    edges: list[tuple[int, int]] = field(default_factory=list)
    self_loops: set[int] = field(default_factory=set)

    def __post_init__(self):
        if self.n < 0:
            raise GraphError("node count must be nonnegative")
        clean = []
        seen = set()
        for s, r in self.edges:
            s, r = int(s), int(r)
            if not (0 <= s < self.n and 0 <= r < self.n):
                raise GraphError(f"edge ({s}, {r}) out of range for n={self.n}")
            if s == r:
                self.self_loops.add(s)
                continue
            if (s, r) in seen:
                raise GraphError(f"duplicate edge ({s}, {r})")
            seen.add((s, r))
            clean.append((s, r))
        self.edges = clean
        self._edge_set = seen
        self._succ: list[list[int]] = [[] for _ in range(self.n)]
        for s, r in clean:
            self._succ[s].append(r)
        for lst in self._succ:
            lst.sort()

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "DirectedGraph":
        return cls(n, list(edges))

    @classmethod
    def from_protocol(cls, P: np.ndarray, tol: float = 0.0) -> "DirectedGraph":
        """Communication graph of a consensus protocol: ``P[i, j] > 0`` gives edge ``j -> i``."""
        P = np.asarray(P, dtype=float)
        n = P.shape[0]
        edges = [(j, i) for j in range(n) for i in range(n) if i != j and P[i, j] > tol]
        g = cls(n, edges)
        g.self_loops = {i for i in range(n) if P[i, i] > tol}
        return g

    @classmethod
    def transition_graph(cls, P: np.ndarray, tol: float = 0.0) -> "DirectedGraph":
        """Markov-chain graph of ``P``: ``P[v, w] > 0`` gives edge ``v -> w``."""
        return cls.from_protocol(np.asarray(P).T, tol)

    @classmethod
    def undirected(cls, n: int, pairs: Iterable[tuple[int, int]]) -> "DirectedGraph":
        edges = []
        for a, b in pairs:
            edges.append((a, b))
            edges.append((b, a))
        return cls(n, edges)

    def reversed(self) -> "DirectedGraph":
        """Same nodes with every edge turned around (the graph of ``P.T``)."""
        g = DirectedGraph(self.n, [(r, s) for s, r in self.edges])
        g.self_loops = set(self.self_loops)
        return g

    @property
    def m(self) -> int:
        return len(self.edges)

    def has_edge(self, s: int, r: int) -> bool:
        return (s, r) in self._edge_set

    def successors(self, v: int) -> list[int]:
        return self._succ[v]

    def adjacency(self) -> np.ndarray:
        """0/1 matrix with ``A[r, s] = 1`` for edge ``s -> r`` (receiver-row convention)."""
        A = np.zeros((self.n, self.n))
        for s, r in self.edges:
            A[r, s] = 1.0
        return A

    def undirected_neighbors(self) -> list[set[int]]:
        nb: list[set[int]] = [set() for _ in range(self.n)]
        for s, r in self.edges:
            nb[s].add(r)
            nb[r].add(s)
        return nb

    def undirected_degrees(self) -> np.ndarray:
        return np.array([len(s) for s in self.undirected_neighbors()], dtype=int)

    def bfs_distances(self, source: int) -> np.ndarray:
        dist = np.full(self.n, -1, dtype=int)
        dist[source] = 0
        queue = deque([source])
        while queue:
            v = queue.popleft()
            for w in self._succ[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        return dist

    def is_strongly_connected(self) -> bool:
        if self.n <= 1:
            return True
        if (self.bfs_distances(0) < 0).any():
            return False
        rev = DirectedGraph(self.n, [(r, s) for s, r in self.edges])
        return not (rev.bfs_distances(0) < 0).any()

    def is_weakly_connected(self) -> bool:
        if self.n <= 1:
            return True
        nb = self.undirected_neighbors()
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in nb[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n


@dataclass
class SpectralReport:
    lambda2: float
    stationary: np.ndarray

    @property
    def gap(self) -> float:
        return 1.0 - self.lambda2


def require_stochastic(P: np.ndarray, kind: str = "row", tol: float = ROW_TOL) -> np.ndarray:
    """Validate ``P`` as a ``row``, ``column`` or ``doubly`` stochastic matrix and return it as floats."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise StochasticityError(f"expected a square matrix, got shape {P.shape}")
    if (P < 0).any():
        raise StochasticityError("matrix has negative entries")
    if kind in ("row", "doubly"):
        err = np.abs(P.sum(axis=1) - 1).max(initial=0.0)
        if err > tol:
            raise StochasticityError(f"rows do not sum to 1 (max error {err:.2e})")
    if kind in ("column", "doubly"):
        err = np.abs(P.sum(axis=0) - 1).max(initial=0.0)
        if err > tol:
            raise StochasticityError(f"columns do not sum to 1 (max error {err:.2e})")
    if kind not in ("row", "column", "doubly"):
        raise ValueError(f"unknown stochasticity kind {kind!r}")
    return P


def stochastic_kind(P: np.ndarray, tol: float = ROW_TOL) -> str:
    """Classify ``P`` as ``doubly``, ``row``, ``column`` or ``general``."""
    P = np.asarray(P, dtype=float)
    if (P < 0).any():
        return "general"
    rows = np.abs(P.sum(axis=1) - 1).max(initial=0.0) <= tol
    cols = np.abs(P.sum(axis=0) - 1).max(initial=0.0) <= tol
    if rows and cols:
        return "doubly"
    if rows:
        return "row"
    if cols:
        return "column"
    return "general"


def respects_graph(P: np.ndarray, graph: DirectedGraph) -> bool:
    """True when every off-diagonal nonzero ``P[i, j]`` has the edge ``j -> i``."""
    P = np.asarray(P)
    rows, cols = np.nonzero(P)
    return all(i == j or graph.has_edge(j, i) for i, j in zip(rows, cols))


def build_max_weight(graph: DirectedGraph) -> np.ndarray:
    """Max-weight doubly stochastic matrix ``I - (diag(deg) - A)/(max deg + 1)``.

    The graph is viewed as undirected; self-loops are rejected.
    """
    if graph.self_loops:
        raise GraphError("max-weight construction requires a graph without self-loops")
    if not graph.is_weakly_connected():
        raise GraphError("graph is disconnected")
    n = graph.n
    A = np.zeros((n, n))
    for v, nb in enumerate(graph.undirected_neighbors()):
        for w in nb:
            A[v, w] = 1.0
    deg = A.sum(axis=1)
    dmax = deg.max(initial=0.0)
    return np.eye(n) - (np.diag(deg) - A) / (dmax + 1)


def _sorted_eigenvalues(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.shape[0] > EIG_DIM_CAP:
        raise ValueError(
            f"dimension {P.shape[0]} exceeds dense eigensolve cap {EIG_DIM_CAP}; "
            "use power iteration instead"
        )
    ev = np.linalg.eigvals(P)
    # modulus descending, then real part descending; rounding keeps ties stable
    order = np.lexsort((-np.round(ev.real, 12), -np.round(np.abs(ev), 12)))
    return ev[order]


def second_eigenvalue(P: np.ndarray) -> float:
    """Modulus of the second-largest-in-modulus eigenvalue."""
    P = np.asarray(P, dtype=float)
    if P.shape[0] < 2:
        return 0.0
    return float(abs(_sorted_eigenvalues(P)[1]))


def stationary_distribution(
    P: np.ndarray, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER
) -> np.ndarray:
    """Stationary distribution ``pi`` with ``pi^T P = pi^T`` of an irreducible aperiodic chain.

    The unit-eigenvalue eigenvector of ``P^T`` seeds a power iteration on
    ``P^T`` which polishes it to residual ``tol``. Reducible chains (more
    than one unit eigenvalue) are rejected.
    """
    P = require_stochastic(P, "row")
    n = P.shape[0]
    if n == 1:
        return np.ones(1)
    ev, vecs = np.linalg.eig(P.T)
    unit = np.abs(ev - 1.0) < 1e-9
    if unit.sum() != 1:
        raise ConvergenceError(
            "chain is reducible: eigenvalue 1 has multiplicity %d" % unit.sum(), np.inf
        )
    pi = np.real(vecs[:, np.argmax(unit)])
    pi = np.abs(pi) / np.abs(pi).sum()
    PT = P.T
    residual = np.abs(PT @ pi - pi).max()
    it = 0
    while residual > tol:
        if it >= max_iter:
            raise ConvergenceError("power iteration did not converge", residual)
        pi = PT @ pi
        pi /= pi.sum()
        residual = np.abs(PT @ pi - pi).max()
        it += 1
    return pi


def power_stationary(
    P: np.ndarray, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER
) -> np.ndarray:
    """Plain power iteration on ``P^T`` from the uniform vector.

    Independent of the eigensolver; used as a cross-check oracle.
    """
    P = require_stochastic(P, "row")
    n = P.shape[0]
    pi = np.full(n, 1.0 / n)
    # iterate the lazy chain: same fixed point, no periodic oscillation
    Q = 0.5 * (np.eye(n) + P.T)
    for _ in range(max_iter):
        nxt = Q @ pi
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() <= tol * 1e-2 and np.abs(P.T @ nxt - nxt).max() <= tol:
            return nxt
        pi = nxt
    raise ConvergenceError("power iteration did not converge", float(np.abs(P.T @ pi - pi).max()))


def spectral_report(P: np.ndarray) -> SpectralReport:
    return SpectralReport(second_eigenvalue(P), stationary_distribution(P))


def lazy(P: np.ndarray) -> np.ndarray:
    P = require_stochastic(P, "row")
    return 0.5 * (np.eye(P.shape[0]) + P)


def time_reversal(P: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Time-reversed chain ``P~[i, j] = pi_j P[j, i] / pi_i``."""
    P = require_stochastic(P, "row")
    pi = np.asarray(pi, dtype=float)
    if (pi <= 0).any():
        raise ValueError("time reversal needs a strictly positive stationary distribution")
    R = (P.T * pi[None, :]) / pi[:, None]
    return R


def additive_reversibilization(P: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """``U(P) = (P + P~)/2``, reversible with respect to ``pi``."""
    return 0.5 * (np.asarray(P, dtype=float) + time_reversal(P, pi))


def detailed_balance_error(U: np.ndarray, pi: np.ndarray) -> float:
    flow = np.asarray(pi)[:, None] * np.asarray(U)
    return float(np.abs(flow - flow.T).max(initial=0.0))


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def tv_bound(U_lambda2: float, pi_i: float, t: int) -> float:
    """Upper bound ``lambda2(U)**t / (4 pi_i)`` on the squared TV distance after ``t`` steps."""
    if pi_i <= 0:
        raise ValueError("pi_i must be positive")
    if not 0.0 <= U_lambda2 < 1.0:
        raise ValueError("U_lambda2 must lie in [0, 1)")
    return U_lambda2**t / (4.0 * pi_i)


def diameter(graph: DirectedGraph) -> int:
    """Largest shortest directed path length over ordered node pairs."""
    if not graph.is_strongly_connected():
        raise GraphError("diameter requires a strongly connected graph")
    best = 0
    for v in range(graph.n):
        best = max(best, int(graph.bfs_distances(v).max(initial=0)))
    return best


# -- generators ---------------------------------------------------------------


def cycle_graph(n: int, directed: bool = False) -> DirectedGraph:
    if n <= 2:
        return complete_graph(n)
    pairs = [(i, (i + 1) % n) for i in range(n)]
    return DirectedGraph(n, pairs) if directed else DirectedGraph.undirected(n, pairs)


def complete_graph(n: int) -> DirectedGraph:
    return DirectedGraph(n, [(i, j) for i in range(n) for j in range(n) if i != j])


def random_connected_graph(
    n: int, p: float, rng: np.random.Generator, directed: bool = False, max_tries: int = 10_000
) -> DirectedGraph:
    """Erdos-Renyi graph conditioned on (strong) connectivity by rejection."""
    for _ in range(max_tries):
        if directed:
            mask = rng.random((n, n)) < p
            edges = [(i, j) for i in range(n) for j in range(n) if i != j and mask[i, j]]
            g = DirectedGraph(n, edges)
        else:
            pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
            g = DirectedGraph.undirected(n, pairs)
        if g.is_strongly_connected():
            return g
    raise GraphError(f"no connected sample after {max_tries} tries (n={n}, p={p})")


def random_row_stochastic(graph: DirectedGraph, rng: np.random.Generator) -> np.ndarray:
    """Uniform random weights on the graph support plus self-loops, rows normalized."""
    n = graph.n
    W = np.zeros((n, n))
    for s, r in graph.edges:
        W[r, s] = rng.uniform(0.05, 1.0)
    W[np.arange(n), np.arange(n)] = rng.uniform(0.05, 1.0, size=n)
    return W / W.sum(axis=1, keepdims=True)


def random_doubly_stochastic(graph: DirectedGraph, rng: np.random.Generator) -> np.ndarray:
    """Symmetric doubly stochastic matrix on an undirected graph.

    Random symmetric edge weights scaled so every row sum stays below 1; the
    slack goes to the diagonal. Exactly doubly stochastic by construction.
    """
    n = graph.n
    W = np.zeros((n, n))
    for v, nb in enumerate(graph.undirected_neighbors()):
        for w in nb:
            if v < w:
                W[v, w] = W[w, v] = rng.uniform(0.1, 1.0)
    scale = W.sum(axis=1).max(initial=0.0)
    if scale > 0:
        W = W / (scale * rng.uniform(1.05, 2.0))
    W[np.arange(n), np.arange(n)] = 1.0 - W.sum(axis=1)
    return W
