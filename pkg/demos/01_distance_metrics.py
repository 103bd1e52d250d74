"""Tour of the five distance metrics.

Each metric answers "how far apart are these vectors" differently:
angular metrics (cosine, L2-normalized euclidean) ignore magnitude,
euclidean and chebyshev are absolute, and the standardized form rescales
every dimension by its variance across the whole dataset.
"""

import numpy as np

from bhakti import (
    as_vector,
    chebyshev_distance,
    compute_stats,
    cosine_distance,
    euclidean_distance,
    euclidean_l2_distance,
    standardized_euclidean_distance,
)

a = as_vector([1.0, 2.0, 3.0])
b = as_vector([2.0, 4.0, 6.0])  # same direction, twice the length
c = as_vector([3.0, 2.0, 1.0])

print("a =", list(a))
print("b =", list(b), "(a scaled by 2)")
print("c =", list(c), "\n")

# angular metrics treat a and b as identical
print(f"cosine(a, b)       = {cosine_distance(a, b):.6f}   <- scale-blind")
print(f"cosine(a, c)       = {cosine_distance(a, c):.6f}")
print(f"euclidean_l2(a, b) = {euclidean_l2_distance(a, b):.6f}")
print(f"euclidean_l2(a, c) = {euclidean_l2_distance(a, c):.6f}\n")

# absolute metrics see the magnitude gap
print(f"euclidean(a, b)    = {euclidean_distance(a, b):.6f}")
print(f"chebyshev(a, b)    = {chebyshev_distance(a, b):.6f}   (largest per-axis gap)\n")

# the identity linking the two angular metrics: |a^ - b^|^2 == 2 * cosine
link = euclidean_l2_distance(a, c) ** 2 - 2 * cosine_distance(a, c)
print(f"euclidean_l2(a, c)^2 - 2*cosine(a, c) = {link:.2e} (zero up to rounding)\n")

# standardized euclidean: a noisy dimension counts less
rng = np.random.default_rng(0)
dataset = [as_vector([x, y]) for x, y in zip(rng.normal(0, 0.1, 200), rng.normal(0, 10.0, 200))]
stats = compute_stats(dataset)
p, q = as_vector([0.0, 0.0]), as_vector([0.3, 0.3])
print("dataset variances:", [round(float(v), 3) for v in stats.variance])
print(f"euclidean(p, q)    = {euclidean_distance(p, q):.4f}")
print(f"standardized(p, q) = {standardized_euclidean_distance(p, q, stats):.4f}")
print("  -> the same 0.3 offset is huge on the tight axis, negligible on the loose one")
