"""Convolution as one matrix multiply: unfold input patches with im2col,
hit them with the reshaped kernel, and compare against a naive
quadruple-loop convolution.
"""

import numpy as np

from ccblock.layers import Conv2D
from ccblock.tensor import im2col

x = np.arange(1, 10, dtype=np.float32).reshape(1, 3, 3)
print("3x3 input:")
print(x[0])
cols = im2col(x, 2, 2, stride=1, pad=0)
print("\nim2col with a 2x2 window: each column is one receptive field")
print(cols)

rng = np.random.default_rng(0)
batch = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
weight = rng.normal(size=(4, 3, 3, 3)).astype(np.float32) * 0.2
bias = rng.normal(size=4).astype(np.float32) * 0.1

conv = Conv2D(weight, bias, stride=1, pad=1)
fast = conv.forward(batch)

slow = np.zeros_like(fast)
padded = np.pad(batch, ((0, 0), (0, 0), (1, 1), (1, 1)))
for n in range(2):
    for o in range(4):
        for i in range(8):
            for j in range(8):
                window = padded[n, :, i:i + 3, j:j + 3]
                slow[n, o, i, j] = (window * weight[o]).sum() + bias[o]

print(f"\nGEMM path vs direct loops, max |diff|: {np.abs(fast - slow).max():.2e}")
assert np.allclose(fast, slow, atol=1e-4)
print("identical within float32 accumulation noise")
