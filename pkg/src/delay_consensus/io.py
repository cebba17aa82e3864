"""Text formats for graphs, matrices, delay assignments and index maps."""

from __future__ import annotations

import csv
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .fixed_delay import AugmentedSystem, DelayAssignment
from .graph_core import DirectedGraph, GraphError


def _content_lines(path):
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                yield line


def read_edge_list(path) -> DirectedGraph:
    """First line ``n m``, then ``m`` lines ``sender receiver`` (0-based)."""
    lines = list(_content_lines(path))
    if not lines:
        raise GraphError(f"{path}: empty edge list")
    header = lines[0].split()
    if len(header) != 2:
        raise GraphError(f"{path}: header must be 'n m'")
    n, m = int(header[0]), int(header[1])
    body = lines[1:]
    if len(body) != m:
        raise GraphError(f"{path}: header says {m} edges, found {len(body)}")
    edges = []
    for line in body:
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"{path}: bad edge line {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return DirectedGraph(n, edges)


def write_edge_list(graph: DirectedGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{graph.n} {graph.m}\n")
        for s, r in graph.edges:
            fh.write(f"{s} {r}\n")


def parse_real(text: str) -> float:
    """Decimal or exact fraction such as ``1/6``."""
    return float(Fraction(text.strip()))


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[parse_real(c) for c in row] for row in csv.reader(fh) if row]
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValueError(f"{path}: expected a square matrix")
    return np.array(rows, dtype=float)


def write_matrix_csv(M: np.ndarray, path) -> None:
    # repr round-trips doubles exactly
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(M, dtype=float):
            out.writerow([repr(float(v)) for v in row])


def read_delays(path) -> DelayAssignment:
    """Lines ``sender receiver delay`` (0-based nodes)."""
    delays = {}
    for line in _content_lines(path):
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}: bad delay line {line!r}")
        s, r, b = (int(p) for p in parts)
        if (s, r) in delays:
            raise ValueError(f"{path}: edge ({s}, {r}) listed twice")
        delays[(s, r)] = b
    return DelayAssignment(delays)


def write_delays(delays: DelayAssignment, path) -> None:
    with open(path, "w") as fh:
        for (s, r), b in sorted(delays.delays.items()):
            fh.write(f"{s} {r} {b}\n")


def write_json(payload, path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_augmented(system: AugmentedSystem, out_dir, stem: str = "augmented") -> list[Path]:
    out_dir = Path(out_dir)
    matrix_path = out_dir / f"{stem}.csv"
    map_path = out_dir / f"{stem}_index_map.json"
    write_matrix_csv(system.matrix, matrix_path)
    write_json(system.index_map_json(), map_path)
    return [matrix_path, map_path]


def read_index_map(path) -> dict[int, tuple[tuple[int, int], int]]:
    with open(path) as fh:
        raw = json.load(fh)
    return {int(k): ((v["edge"][0], v["edge"][1]), int(v["position"])) for k, v in raw.items()}
