"""
Fixed delays as relay chains.

- Builds a 3-node protocol and delays the link 0 -> 1 by two steps.
- Shows the augmented 5x5 matrix with two relay nodes.
- Compares the closed-form stationary vector with a power iteration.
- Runs the delayed iteration and shows that rescaling the start values
  by the stationary weights recovers the plain average.
"""
from fractions import Fraction

import numpy as np

from delay_consensus.fixed_delay import (
    DelayAssignment,
    augment_row,
    closed_form_stationary,
    iterate_to_consensus,
    rescale_for_average,
)
from delay_consensus.graph_core import DirectedGraph, power_stationary

np.set_printoptions(precision=4, suppress=True)

# Step 1: protocol and delay
P = np.array([[2 / 3, 1 / 3, 0], [1 / 6, 1 / 3, 1 / 2], [1 / 6, 1 / 3, 1 / 2]])
graph = DirectedGraph.from_protocol(P)
delays = DelayAssignment({(0, 1): 2})

# Step 2: augmented matrix, one relay node per delay step
system = augment_row(P, delays, graph)
print("augmented matrix:")
print(system.matrix)
print("relay nodes:", system.index_map)

# Step 3: stationary vector, closed form against power iteration
cf = closed_form_stationary(P, delays, graph)
exact = [Fraction(v).limit_denominator(100) for v in cf.vector(system)]
print("closed form:", [str(v) for v in exact])
print("power iteration:", power_stationary(system.matrix))

# Step 4: the delayed limit is biased; rescaling removes the bias
x0 = np.array([1.0, 4.0, 7.0])
biased = iterate_to_consensus(system, x0, tol=1e-12)[-1][0]
fixed = iterate_to_consensus(system, rescale_for_average(x0, np.full(3, cf.pi_V)), tol=1e-12)[-1][0]
print(f"average {x0.mean():.4f}, delayed limit {biased:.4f}, rescaled limit {fixed:.4f}")
