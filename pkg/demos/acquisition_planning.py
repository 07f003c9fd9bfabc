"""Where to spend the high-fidelity budget: spectral k-means planning.

The M observation points are chosen by clustering the spectral embedding
and taking the member nearest each centroid.  On clustered data that
lands exactly one pick per cluster, which is what the propagation step
needs; a uniform random pick routinely doubles up and starves clusters.
"""

import numpy as np

from mfgl.acquisition import plan_acquisition, plan_from_json, plan_to_json
from mfgl.graph import build_graph, laplacian
from mfgl.spectral import low_spectrum

rng = np.random.default_rng(5)

# six tight clusters in 3-D, 40 points each
m = 6
centers = rng.uniform(-4.0, 4.0, size=(m, 3))
pts = np.vstack([c + rng.normal(scale=0.1, size=(40, 3)) for c in centers])
labels = np.repeat(np.arange(m), 40)
shuffle = rng.permutation(pts.shape[0])
pts, labels = pts[shuffle], labels[shuffle]

spec = low_spectrum(laplacian(build_graph(pts, knn_k=7), 0.5, 0.5), K=2 * m)
plan = plan_acquisition(spec, m, seed=0)

picked = labels[list(plan.selected_indices)]
print(f"planned picks cover clusters {sorted(picked.tolist())} "
      f"({len(set(picked.tolist()))} of {m} distinct)")

# how often does a uniform random choice miss a cluster?
misses = 0
trials = 1000
for t in range(trials):
    draw = rng.choice(pts.shape[0], size=m, replace=False)
    misses += len(set(labels[draw].tolist())) < m
print(f"uniform random picks miss at least one cluster "
      f"in {100 * misses / trials:.0f}% of {trials} trials")

# the spectral clustering recovers the true partition itself
agree = 0
for c in range(m):
    members = plan.cluster_assignment == c
    agree += np.bincount(labels[members]).max()
print(f"embedding k-means matches the true partition on "
      f"{100 * agree / pts.shape[0]:.1f}% of points")

# plans serialize losslessly; the permutation puts the picks first
rt = plan_from_json(plan_to_json(plan))
same = (
    rt.selected_indices == plan.selected_indices
    and rt.permutation == plan.permutation
    and np.array_equal(rt.centroids, plan.centroids)
)
print(f"JSON round trip preserves the plan: {same}")
print(f"permutation head: {plan.permutation[:m]} == picks {plan.selected_indices}")
