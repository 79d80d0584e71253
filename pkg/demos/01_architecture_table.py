"""Walk through the CCBlock architecture: the 19-row layer table, the
shape chain from 224x224x3 down to the class probabilities, and exact
parameter counts for both task variants.
"""

from ccblock.model import ModelSpec, build_model, count_params, summarize_text

for classes in (3, 2):
    model = build_model(ModelSpec(num_classes=classes), seed=0)
    print(f"=== {classes}-class model ===")
    print(summarize_text(model))

counts = count_params(build_model(ModelSpec(num_classes=3), seed=0))
print("3-class parameter census:")
print(f"  trainable: {counts.trainable:,}")
print(f"  frozen (batch-norm running stats): {counts.frozen:,}")
print(f"  total: {counts.total:,}")
