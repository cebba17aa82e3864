"""
Row-stochastic consensus when every message takes a random delay.

- 5 nodes, delays uniform on {0..5}, start values 1..5.
- Every run reaches consensus, but the limit depends on the delay draws,
  so it is not the average.
- The product blocks M1/M2 are tracked and audited each step.
"""
import numpy as np

from delay_consensus.graph_core import random_connected_graph, random_row_stochastic
from delay_consensus.random_delay import RandomDelayRun, run_to_consensus

graph = random_connected_graph(5, 0.5, np.random.default_rng(3))
P = random_row_stochastic(graph, np.random.default_rng(4))
x0 = np.arange(1.0, 6.0)

for seed in range(5):
    run = RandomDelayRun(P, graph, 5, x0, seed=seed)
    res = run_to_consensus(run)
    a = res.audit
    checks = all(a[k] for k in ("lemma1", "lemma2", "lemma3", "contraction", "convex"))
    print(f"seed {seed}: limit {res.value:.6f} after {res.steps} steps, audits {'ok' if checks else 'FAILED'}")
