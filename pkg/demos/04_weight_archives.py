"""The CCW archive format end to end: write the 26 backbone tensors, read
them back bit-exactly, and import them into a model backbone-only,
leaving the freshly initialized CCBlock untouched.
"""

import tempfile
from pathlib import Path

import numpy as np

from ccblock.model import ModelSpec, build_model
from ccblock.weights import (
    apply_weights,
    load_archive,
    save_archive,
    synthetic_backbone_archive,
)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "backbone.ccw"
    archive = synthetic_backbone_archive(seed=1)
    save_archive(archive, path)
    print(f"wrote {path.stat().st_size:,} bytes, {len(archive)} entries")

    loaded = load_archive(path)
    identical = all(np.array_equal(loaded.get(n), a) for n, a in archive)
    print(f"round-trip bit-identical: {identical}")

    model = build_model(ModelSpec(num_classes=3), seed=0)
    cc_before = model.slot("ccblock.conv1.weight").copy()
    report = apply_weights(model, loaded, strictness="backbone-only")
    print(f"\nimport report ({len(report.loaded)} loaded, "
          f"{len(report.skipped)} skipped), first lines:")
    for line in report.lines()[:4]:
        print(f"  {line}")
    untouched = np.array_equal(model.slot("ccblock.conv1.weight"), cc_before)
    print(f"CCBlock parameters untouched: {untouched}")
