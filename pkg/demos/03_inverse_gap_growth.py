"""
Worst-case inverse spectral gap as the delay bound grows.

- 15-node random graph, max-weight protocol.
- For each B, 50 random delay draws; keeps the largest inverse gap.
- Fits a*B^2 and prints the relative residual.
The same table is produced by `delay-consensus fig2`.
"""
import numpy as np

from delay_consensus.graph_core import build_max_weight, random_connected_graph
from delay_consensus.poincare import fit_quadratic, inverse_gap_experiment

graph = random_connected_graph(15, 0.3, np.random.default_rng([0, 1]))
P = build_max_weight(graph)

table = inverse_gap_experiment(graph, P, list(range(1, 11)), trials=50, seed=0)
for B, v in table:
    print(f"B={B:2d}  max inverse gap {v:9.2f}  " + "#" * int(v / 20))

a, rel = fit_quadratic(table)
print(f"fit {a:.3f} * B^2, relative residual {rel:.2f}")
