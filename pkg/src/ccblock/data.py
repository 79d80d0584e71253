"""Manifest-driven image ingestion: labels, stratified splitting, decoding,
and deterministic batch iteration.

Images are listed in a CSV manifest (header: path,label,split,source; the
last two columns optional). Loading decodes PNG/JPEG, replicates grayscale
to 3 channels, bilinear-resizes to 224x224, scales to [0,1], then applies
per-channel mean/std normalization.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .tensor import ShapeError

CLASS_NAMES = ("covid", "pneumonia", "normal")

# channel statistics the pretrained backbone was normalized with
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

TRAIN_FRACTION = 0.27


class ManifestError(ValueError):
    """Malformed manifest contents."""


class ImageDecodeError(ValueError):
    """Unreadable or corrupt image file."""


def class_names(num_classes: int):
    """Class order is fixed (covid, pneumonia, normal), truncated to
    (covid, normal) for the 2-class task."""
    if num_classes == 3:
        return CLASS_NAMES
    if num_classes == 2:
        return ("covid", "normal")
    raise ValueError(f"num_classes must be 2 or 3, got {num_classes}")


def label_index(label: str, num_classes: int) -> int:
    names = class_names(num_classes)
    if label not in names:
        raise ManifestError(f"label {label!r} not in {names}")
    return names.index(label)


@dataclass
class ManifestRecord:
    path: str
    label: str
    split: str = ""  # "", "train", or "test"
    source: str = ""


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = TRAIN_FRACTION
    per_class_train: dict = None  # label -> exact train count override
    seed: int = 0
    # keep records sharing a source tag in one split (use the source column
    # for patient/group ids); train fills greedily without splitting a
    # group, so its count is the largest achievable <= the target
    group_by_source: bool = False

    def validate(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )


@dataclass(frozen=True)
class ImageSpec:
    size: int = 224
    channels: int = 3
    mean: tuple = IMAGENET_MEAN
    std: tuple = IMAGENET_STD


def parse_manifest(csv_path, num_classes: int = 3):
    """Read and validate manifest records; labels must belong to the task."""
    records = []
    seen_paths = set()
    names = class_names(num_classes)
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "path" not in reader.fieldnames \
                or "label" not in reader.fieldnames:
            raise ManifestError(
                f"{csv_path}: manifest needs a header with path,label columns"
            )
        for line_num, row in enumerate(reader, start=2):
            path = (row.get("path") or "").strip()
            label = (row.get("label") or "").strip()
            split = (row.get("split") or "").strip()
            source = (row.get("source") or "").strip()
            if not path:
                raise ManifestError(f"{csv_path}:{line_num}: empty path")
            if label not in names:
                raise ManifestError(
                    f"{csv_path}:{line_num}: unknown label {label!r}, "
                    f"expected one of {names}"
                )
            if split not in ("", "train", "test"):
                raise ManifestError(
                    f"{csv_path}:{line_num}: split must be train or test, "
                    f"got {split!r}"
                )
            if path in seen_paths:
                raise ManifestError(f"{csv_path}:{line_num}: duplicate path {path!r}")
            seen_paths.add(path)
            records.append(ManifestRecord(path, label, split, source))
    return records


def write_manifest(records, csv_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "split", "source"])
        for rec in records:
            writer.writerow([rec.path, rec.label, rec.split, rec.source])


def scan_class_directories(root, num_classes: int = 3):
    """Build records from class-named subdirectories (covid/, pneumonia/,
    normal/) containing PNG or JPEG files."""
    root = Path(root)
    records = []
    for label in class_names(num_classes):
        class_dir = root / label
        if not class_dir.is_dir():
            continue
        for path in sorted(class_dir.iterdir()):
            if path.suffix.lower() in (".png", ".jpg", ".jpeg"):
                records.append(ManifestRecord(str(path), label, source=label))
    if not records:
        raise ManifestError(f"no class directories with images under {root}")
    return records


def stratified_split(records, spec: SplitSpec):
    """Assign train/test per class: floor(fraction*n) records (or the
    per-class override count) go to train via a seeded shuffle.

    Returns new records; deterministic per seed.
    """
    spec.validate()
    for rec in records:
        if rec.split:
            raise ManifestError(
                f"record {rec.path!r} already has split {rec.split!r}"
            )
    by_label = {}
    for idx, rec in enumerate(records):
        by_label.setdefault(rec.label, []).append(idx)

    overrides = spec.per_class_train or {}
    for label, count in overrides.items():
        have = len(by_label.get(label, []))
        if count > have:
            raise ValueError(
                f"train override for {label!r} is {count} but only {have} "
                f"records exist"
            )

    rng = np.random.default_rng(spec.seed)
    assigned = [None] * len(records)
    for label in sorted(by_label):
        indices = by_label[label]
        n_train = overrides.get(label, int(np.floor(spec.train_fraction * len(indices))))
        if spec.group_by_source:
            groups = {}
            for idx in indices:
                # empty source tags fall back to per-record singleton groups
                key = records[idx].source or f"\x00{records[idx].path}"
                groups.setdefault(key, []).append(idx)
            ordered = [groups[key] for key in sorted(groups)]
            rng.shuffle(ordered)
            train_indices = set()
            for group in ordered:
                if len(train_indices) + len(group) <= n_train:
                    train_indices.update(group)
        else:
            shuffled = np.array(indices)
            rng.shuffle(shuffled)
            train_indices = set(shuffled[:n_train].tolist())
        for idx in indices:
            rec = records[idx]
            split = "train" if idx in train_indices else "test"
            assigned[idx] = ManifestRecord(rec.path, rec.label, split, rec.source)
    return assigned


def split_counts(records):
    """{label: (train, test)} census of an assigned record list."""
    counts = {}
    for rec in records:
        train, test = counts.get(rec.label, (0, 0))
        if rec.split == "train":
            counts[rec.label] = (train + 1, test)
        else:
            counts[rec.label] = (train, test + 1)
    return counts


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Classic bilinear interpolation with half-pixel-centered sampling.

    image is H x W x C float; no antialiasing prefilter, so the math is
    exactly reproducible from the four neighboring pixels.
    """
    in_h, in_w = image.shape[:2]
    scale_y = in_h / out_h
    scale_x = in_w / out_w
    src_y = (np.arange(out_h) + 0.5) * scale_y - 0.5
    src_x = (np.arange(out_w) + 0.5) * scale_x - 0.5
    y0 = np.clip(np.floor(src_y).astype(np.int64), 0, in_h - 1)
    x0 = np.clip(np.floor(src_x).astype(np.int64), 0, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = np.clip(src_y - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(src_x - x0, 0.0, 1.0)[None, :, None]
    top = image[y0][:, x0] * (1 - wx) + image[y0][:, x1] * wx
    bottom = image[y1][:, x0] * (1 - wx) + image[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def load_image(path, spec: ImageSpec = ImageSpec()) -> np.ndarray:
    """Decode one image into a normalized C x size x size float32 tensor."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("RGB", "RGBA", "P", "CMYK", "YCbCr"):
                decoded = np.asarray(img.convert("RGB"), dtype=np.float32)
            else:
                # grayscale sources (L, I, I;16, F): replicate to 3 channels
                gray = np.asarray(img.convert("F"), dtype=np.float32)
                peak = 65535.0 if img.mode in ("I", "I;16") else 255.0
                decoded = np.repeat(gray[:, :, None], 3, axis=2) * (255.0 / peak)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageDecodeError(f"cannot decode image {path}: {exc}") from exc
    resized = bilinear_resize(decoded, spec.size, spec.size) / 255.0
    mean = np.asarray(spec.mean, dtype=np.float32)
    std = np.asarray(spec.std, dtype=np.float32)
    normalized = (resized - mean) / std
    return np.ascontiguousarray(normalized.transpose(2, 0, 1), dtype=np.float32)


def unnormalize(tensor: np.ndarray, spec: ImageSpec = ImageSpec()) -> np.ndarray:
    """Invert the mean/std normalization back to [0, 1] pixels."""
    mean = np.asarray(spec.mean, dtype=np.float32)[:, None, None]
    std = np.asarray(spec.std, dtype=np.float32)[:, None, None]
    return tensor * std + mean


class ArrayDataset:
    """In-memory (inputs, labels) pairs; inputs N x C x H x W."""

    def __init__(self, inputs: np.ndarray, labels: np.ndarray):
        if len(inputs) != len(labels):
            raise ValueError(
                f"{len(inputs)} inputs vs {len(labels)} labels"
            )
        self.inputs = inputs
        self.labels = np.asarray(labels)

    def __len__(self):
        return len(self.inputs)

    def fetch(self, indices):
        return self.inputs[indices], self.labels[indices]


class ImageDataset:
    """Lazily decoded manifest records for one task."""

    def __init__(self, records, num_classes: int = 3,
                 image_spec: ImageSpec = ImageSpec()):
        self.records = list(records)
        self.num_classes = num_classes
        self.image_spec = image_spec
        self.labels = np.array(
            [label_index(rec.label, num_classes) for rec in self.records]
        )

    def __len__(self):
        return len(self.records)

    def fetch(self, indices):
        batch = np.stack(
            [load_image(self.records[i].path, self.image_spec) for i in indices]
        )
        return batch, self.labels[indices]


def batch_indices(n: int, batch_size: int, seed: int, epoch: int):
    """Deterministic per-epoch batching: seeded shuffle (seed xor epoch),
    final partial batch included."""
    if n == 0:
        raise ValueError("cannot iterate an empty record list")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng(seed ^ epoch).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def iterate_batches(dataset, batch_size: int, seed: int, epoch: int):
    """Yield (inputs, labels) batches for one epoch."""
    for chunk in batch_indices(len(dataset), batch_size, seed, epoch):
        yield dataset.fetch(chunk)
