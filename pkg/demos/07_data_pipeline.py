"""The ingestion path: scan class directories into a manifest, split it
27/73 per class, decode images into normalized tensors, and iterate
deterministic mini-batches.
"""

import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from ccblock.data import (
    ImageDataset,
    SplitSpec,
    iterate_batches,
    load_image,
    scan_class_directories,
    split_counts,
    stratified_split,
)

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    rng = np.random.default_rng(0)
    for label, count in (("covid", 10), ("pneumonia", 14), ("normal", 12)):
        (root / label).mkdir()
        for i in range(count):
            img = rng.integers(0, 256, size=(48, 64), dtype=np.uint8)
            Image.fromarray(img, mode="L").save(root / label / f"{i}.png")

    records = scan_class_directories(root)
    print(f"scanned {len(records)} images")

    assigned = stratified_split(records, SplitSpec(train_fraction=0.27, seed=0))
    for label, (n_train, n_test) in sorted(split_counts(assigned).items()):
        print(f"  {label}: train={n_train} test={n_test}")

    tensor = load_image(records[0].path)
    print(f"\ndecoded tensor shape {tensor.shape}, "
          f"range [{tensor.min():.2f}, {tensor.max():.2f}] after normalization")

    train = ImageDataset([r for r in assigned if r.split == "train"])
    print("\nbatches (batch_size=4, seed=0, epoch=0):")
    for x, y in iterate_batches(train, batch_size=4, seed=0, epoch=0):
        print(f"  inputs {x.shape}, labels {y.tolist()}")
