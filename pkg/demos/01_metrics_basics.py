"""Per-sample metrics on hand-made inputs.

Run: python3 demos/01_metrics_basics.py
"""

import numpy as np

from cfeval import metrics as M

x, c = np.array([0.0, 0.0]), np.array([3.0, 4.0])
print(f"L1 {M.l1_distance(x, c):.1f}  L2 {M.l2_distance(x, c):.1f}  EN {M.en_distance(x, c):.1f}")

# IM1 compares how well the target-class autoencoder explains the
# counterfactual against the original-class autoencoder.
z = np.zeros(2)
print("IM1, target AE closer:", round(M.im1(z, [0.2, 0.0], [0.4, 0.0]), 6))

# IM2 is small when the target AE and a global AE agree on the counterfactual.
print("IM2, disagreeing AEs:", M.im2([1.0, 1.0], [0.1, 0.0], [0.0, 0.1]))

for p, q in (([0.2, 0.8], [0.2, 0.8]), ([1, 0], [0, 1]), ([0.5, 0.5], [0.25, 0.75])):
    print(f"JS{p} vs {q}: {M.js_divergence(p, q):.6f}")

rng = np.random.default_rng(0)
a = rng.standard_normal((2000, 3))
print(f"FID of a sample with itself {M.fid(a, a):.2e}, shifted by 1 per dim {M.fid(a, a + 1):.3f}")
