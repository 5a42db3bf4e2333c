"""How much does the sampling policy matter for one aggregation site?

Builds a root with eight neighbors of very different embedding norms and
compares the single-draw estimators under a uniform policy and under the
norm-proportional optimum.
"""

import numpy as np

from gnnbandit.estimators import (NeighborSnapshot, bias_and_variance_k1, constant_variance,
                                  effective_variance, min_variance, optimal_policy)

rng = np.random.default_rng(0)
K = 8
scales = np.geomspace(0.1, 10.0, K)
z = scales[:, None] * rng.standard_normal((K, 4))

uniform = NeighborSnapshot(z, np.full(K, 1 / K))
best = uniform.with_policy(optimal_policy(uniform))

print(f"{'policy':<10} {'eff. var':>10} {'unbiased var':>13} {'bias':>10} {'biased var':>11}")
for name, snap in (("uniform", uniform), ("optimal", best)):
    ve = effective_variance(snap)
    bias, var = bias_and_variance_k1(snap)
    print(f"{name:<10} {ve:10.3f} {ve - constant_variance(snap):13.3f} {bias:10.3f} {var:11.3f}")

print(f"\nclosed-form minimum of the unbiased variance: {min_variance(uniform):.3f}")
print("optimal policy:", np.round(best.policy, 3))
