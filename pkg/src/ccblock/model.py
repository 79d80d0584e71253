"""Model assembly: VGG-16 convolutional backbone + CCBlock + classifier head.

The backbone follows the canonical 13-conv VGG-16 stage plan
(64,64 | 128,128 | 256,256,256 | 512,512,512 | 512,512,512) with 3x3/pad-1
convolutions and five 2x2 max pools. The CCBlock appends three 3x3 *valid*
convolutions (512, 256, 128 filters), each as conv -> ReLU -> BatchNorm,
shrinking 7x7 -> 5x5 -> 3x3 -> 1x1. A flatten and two dense layers
(128 -> 256 -> num_classes) finish with a softmax head.

Note: the 256-filter stage uses the canonical VGG-16 depth of 3
convolutions; summaries carry the same annotation.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .layers import BatchNorm2D, Conv2D, Dense, Flatten, MaxPool2x2, ReLU, softmax
from .tensor import ShapeError

CANONICAL_BACKBONE = ((64, 64), (128, 128), (256, 256, 256), (512, 512, 512),
                      (512, 512, 512))
CCBLOCK_FILTERS = (512, 256, 128)

SUMMARY_NOTE = "note: 256-filter stage uses the canonical VGG-16 depth (3 convolutions)"


@dataclass(frozen=True)
class ModelSpec:
    """Architecture knobs; defaults give the full-size model."""

    num_classes: int = 3
    input_size: int = 224
    input_channels: int = 3
    backbone_plan: tuple = CANONICAL_BACKBONE
    ccblock_filters: tuple = CCBLOCK_FILTERS
    hidden_units: int = 256
    relu_after_hidden: bool = True
    # CCBlock unit ordering: conv -> ReLU -> BatchNorm by default; flip to
    # conv -> BatchNorm -> ReLU with bn_before_relu
    bn_before_relu: bool = False

    def validate(self):
        if self.num_classes not in (2, 3):
            raise ValueError(f"num_classes must be 2 or 3, got {self.num_classes}")
        if len(self.backbone_plan) != 5:
            raise ValueError("backbone plan must have 5 stages")
        if len(self.ccblock_filters) != 3:
            raise ValueError("ccblock takes exactly 3 filter counts")


def reduced_spec(num_classes: int = 3) -> ModelSpec:
    """Width-reduced clone for end-to-end gradient checking."""
    return ModelSpec(
        num_classes=num_classes,
        backbone_plan=((8, 8), (8, 8), (16, 16, 16), (16, 16, 16), (16, 16, 16)),
        ccblock_filters=(16, 16, 8),
        hidden_units=16,
    )


@dataclass
class TableRow:
    """One summary row: a named group of runtime layers with its flags."""

    label: str
    kind: str
    feature: str
    size: str
    trainable: bool
    pretrained: bool
    layers: list = field(default_factory=list)


class Model:
    """Ordered layer list with named parameter slots and a softmax head."""

    def __init__(self, spec: ModelSpec, rows, input_shape, slots):
        self.spec = spec
        self.rows = rows
        self.input_shape = input_shape  # C x H x W
        self._slots = slots  # name -> (layer, attr)
        self._layers = [layer for row in rows for layer in row.layers]

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    def _check_input(self, x):
        if x.ndim != 4 or tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(
                f"model expects N x {'x'.join(map(str, self.input_shape))} input, "
                f"got {x.shape}"
            )

    def forward_logits(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._check_input(x)
        out = x
        for layer in self._layers:
            if isinstance(layer, BatchNorm2D):
                out = layer.forward(out, train=train)
            else:
                out = layer.forward(out)
        return out

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Class probabilities, rows summing to 1."""
        return softmax(self.forward_logits(x, train=train))

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        grad = dlogits
        for layer in reversed(self._layers):
            grad = layer.backward(grad)
        return grad

    def named_params(self):
        """(name, array) for every learnable parameter on a trainable layer."""
        for name, (layer, attr) in self._slots.items():
            if layer.trainable and attr in layer.params():
                yield name, getattr(layer, attr)

    def param_grads(self):
        """(name, gradient) matching named_params after a backward pass."""
        for name, (layer, attr) in self._slots.items():
            if layer.trainable and attr in layer.grads:
                yield name, layer.grads[attr]

    def all_slots(self):
        """Every persistent array: parameters plus batch-norm running stats."""
        for name, (layer, attr) in self._slots.items():
            yield name, getattr(layer, attr)

    def slot(self, name: str) -> np.ndarray:
        layer, attr = self._slots[name]
        return getattr(layer, attr)

    def set_slot(self, name: str, value: np.ndarray):
        layer, attr = self._slots[name]
        target = getattr(layer, attr)
        if target.shape != value.shape:
            raise ShapeError(
                f"slot {name} expects shape {target.shape}, got {value.shape}"
            )
        target[...] = value

    def has_slot(self, name: str) -> bool:
        return name in self._slots

    def backbone_slot_names(self):
        return [name for name in self._slots if name.startswith("backbone.")]

    def freeze_backbone(self):
        for row in self.rows:
            if row.pretrained:
                row.trainable = False
                for layer in row.layers:
                    if isinstance(layer, Conv2D):
                        layer.trainable = False

    def zero_params(self):
        """Zero every learnable parameter (diagnostic use)."""
        for _, arr in self.named_params():
            arr[...] = 0.0


def _he_normal(rng, shape, fan_in, dtype):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)


def _size3(c, h, w) -> str:
    return f"{h}x{w}x{c}"


def _build_rows(spec: ModelSpec, rng, dtype, include_backbone: bool,
                input_shape) -> tuple:
    """Construct table rows, runtime layers, and named slots in build order."""
    rows = []
    slots = {}
    shape = input_shape  # C x H x W

    rows.append(TableRow("input", "Image", "1", _size3(*shape), False, False))
    row_index = 0

    if include_backbone:
        channels = shape[0]
        for stage_num, stage in enumerate(spec.backbone_plan, start=1):
            conv_layers = []
            for conv_num, width in enumerate(stage, start=1):
                w = _he_normal(rng, (width, channels, 3, 3), channels * 9, dtype)
                b = np.zeros(width, dtype=dtype)
                conv = Conv2D(w, b, stride=1, pad=1)
                slots[f"backbone.conv{stage_num}_{conv_num}.weight"] = (conv, "weight")
                slots[f"backbone.conv{stage_num}_{conv_num}.bias"] = (conv, "bias")
                conv_layers += [conv, ReLU()]
                shape = conv.out_shape(shape)
                channels = width
            row_index += 1
            rows.append(TableRow(str(row_index), f"{len(stage)}xConvolution",
                                 str(channels), _size3(*shape), True, True,
                                 conv_layers))
            pool = MaxPool2x2()
            shape = pool.out_shape(shape)
            row_index += 1
            rows.append(TableRow(str(row_index), "Maxpooling", str(channels),
                                 _size3(*shape), False, False, [pool]))

    channels = shape[0]
    for block_num, width in enumerate(spec.ccblock_filters, start=1):
        w = _he_normal(rng, (width, channels, 3, 3), channels * 9, dtype)
        b = np.zeros(width, dtype=dtype)
        conv = Conv2D(w, b, stride=1, pad=0)
        slots[f"ccblock.conv{block_num}.weight"] = (conv, "weight")
        slots[f"ccblock.conv{block_num}.bias"] = (conv, "bias")
        shape = conv.out_shape(shape)
        channels = width
        bn = BatchNorm2D(width, dtype=dtype)
        slots[f"ccblock.bn{block_num}.gamma"] = (bn, "gamma")
        slots[f"ccblock.bn{block_num}.beta"] = (bn, "beta")
        slots[f"ccblock.bn{block_num}.running_mean"] = (bn, "running_mean")
        slots[f"ccblock.bn{block_num}.running_var"] = (bn, "running_var")
        conv_unit = [conv] if spec.bn_before_relu else [conv, ReLU()]
        bn_unit = [bn, ReLU()] if spec.bn_before_relu else [bn]
        row_index += 1
        rows.append(TableRow(str(row_index), "1xConvolution", str(width),
                             _size3(*shape), True, False, conv_unit))
        row_index += 1
        rows.append(TableRow(str(row_index), "BatchNorm", str(width),
                             _size3(*shape), True, False, bn_unit))

    flat = Flatten()
    features = flat.out_shape(shape)[0]
    row_index += 1
    rows.append(TableRow(str(row_index), "Flatten", str(features),
                         f"1x{features}", False, False, [flat]))

    w = _he_normal(rng, (spec.hidden_units, features), features, dtype)
    fc1 = Dense(w, np.zeros(spec.hidden_units, dtype=dtype))
    slots["head.fc1.weight"] = (fc1, "weight")
    slots["head.fc1.bias"] = (fc1, "bias")
    fc1_layers = [fc1] + ([ReLU()] if spec.relu_after_hidden else [])
    row_index += 1
    rows.append(TableRow(str(row_index), "FC", "-", f"1x{spec.hidden_units}",
                         True, False, fc1_layers))

    w = _he_normal(rng, (spec.num_classes, spec.hidden_units), spec.hidden_units,
                   dtype)
    fc2 = Dense(w, np.zeros(spec.num_classes, dtype=dtype))
    slots["head.fc2.weight"] = (fc2, "weight")
    slots["head.fc2.bias"] = (fc2, "bias")
    row_index += 1
    rows.append(TableRow(str(row_index), "FC+Softmax", "-",
                         f"1x{spec.num_classes}", True, False, [fc2]))

    return rows, slots


def build_model(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> Model:
    """Allocate the full model; backbone weights are He-initialized
    placeholders awaiting a pretrained import, new layers are He fan-in
    normal, batch norms start at gamma=1, beta=0, running stats (0, 1)."""
    spec.validate()
    rng = np.random.default_rng(seed)
    input_shape = (spec.input_channels, spec.input_size, spec.input_size)
    rows, slots = _build_rows(spec, rng, dtype, True, input_shape)
    return Model(spec, rows, input_shape, slots)


def build_head(spec: ModelSpec = None, seed: int = 0, in_channels: int = 512,
               spatial: int = 7, dtype=np.float32) -> Model:
    """CCBlock + classifier only, consuming backbone feature maps directly.

    Used for feature-space training and the overfit fixture.
    """
    spec = spec or ModelSpec()
    spec.validate()
    rng = np.random.default_rng(seed)
    input_shape = (in_channels, spatial, spatial)
    rows, slots = _build_rows(spec, rng, dtype, False, input_shape)
    return Model(spec, rows, input_shape, slots)


def two_class_spec() -> ModelSpec:
    return replace(ModelSpec(), num_classes=2)


@dataclass(frozen=True)
class ParamCounts:
    trainable: int
    frozen: int
    total: int


def count_params(model: Model) -> ParamCounts:
    """Exact parameter counts; batch-norm running stats count as frozen."""
    trainable = frozen = 0
    for name, (layer, attr) in model._slots.items():
        size = getattr(layer, attr).size
        if attr in layer.params() and layer.trainable:
            trainable += size
        else:
            frozen += size
    return ParamCounts(trainable, frozen, trainable + frozen)


def summary_rows(model: Model):
    """Machine-readable summary rows mirroring the architecture table."""
    return [
        (row.label, row.kind, row.feature, row.size,
         str(row.trainable), str(row.pretrained))
        for row in model.rows
    ]


def summarize_csv(model: Model) -> str:
    lines = ["row,layer,feature_map,size,trainable,pretrained"]
    lines += [",".join(row) for row in summary_rows(model)]
    return "\n".join(lines) + "\n"


def summarize_text(model: Model) -> str:
    headers = ("", "Layer", "Feature map", "Size", "Trainable", "Pre-Trained")
    rows = [headers] + summary_rows(model)
    widths = [max(len(r[i]) for r in rows) for i in range(6)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
             for row in rows]
    counts = count_params(model)
    lines.append("")
    lines.append(f"params: trainable={counts.trainable:,} "
                 f"frozen={counts.frozen:,} total={counts.total:,}")
    if model.spec.backbone_plan == CANONICAL_BACKBONE and len(model.rows) == 20:
        lines.append(SUMMARY_NOTE)
    return "\n".join(lines) + "\n"
