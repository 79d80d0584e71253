"""Verify every layer's analytic backward pass against central finite
differences, then spot-check the whole width-reduced network end to end.
"""

import numpy as np

from ccblock.gradcheck import check_model_loss_grads, run_layer_suite
from ccblock.model import build_model, reduced_spec

print("per-layer finite-difference checks (float64, h=1e-3):")
for name, err in sorted(run_layer_suite(seed=7).items()):
    print(f"  {name:18s} max relative error {err:.3e}")

print("\nend-to-end: loss gradient on sampled parameters of a "
      "width-reduced model (h=1e-5):")
model = build_model(reduced_spec(), seed=5, dtype=np.float64)
rng = np.random.default_rng(6)
x = rng.normal(size=(2, 3, 224, 224)) * 0.5
err = check_model_loss_grads(model, x, np.array([0, 2]), n_coords=8, seed=7)
print(f"  max relative error {err:.3e}")
