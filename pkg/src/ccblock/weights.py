"""CCW weight archives: a little-endian named-tensor container.

File layout (all integers little-endian):

    magic "CCBW" (4 bytes) | format version u32 | entry count u32
    per entry: name length u16, name bytes (UTF-8), dtype code u8 (0 = f32),
               ndim u8, each dim u32, raw f32 payload in row-major order

The format is deliberately dumb: fixed layout, no compression, no
alignment tricks, so any language can read or write it bit-exactly.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .model import CANONICAL_BACKBONE, Model
from .tensor import ShapeError

MAGIC = b"CCBW"
FORMAT_VERSION = 1
DTYPE_F32 = 0


class ArchiveFormatError(ValueError):
    """File is not a CCW archive or uses an unknown version."""


class ArchiveCorruptionError(ArchiveFormatError):
    """File parses as CCW but its payload is truncated or inconsistent."""


class WeightArchive:
    """Ordered, uniquely named f32 tensors."""

    def __init__(self):
        self._entries: dict[str, np.ndarray] = {}

    def add(self, name: str, array: np.ndarray) -> "WeightArchive":
        if name in self._entries:
            raise ValueError(f"duplicate archive entry name: {name!r}")
        if not name:
            raise ValueError("archive entry name must be non-empty")
        arr = np.ascontiguousarray(array, dtype="<f4")
        if arr.ndim < 1 or any(d < 1 for d in arr.shape):
            raise ShapeError(f"entry {name!r} has invalid shape {arr.shape}")
        self._entries[name] = arr
        return self

    def names(self):
        return list(self._entries)

    def get(self, name: str) -> np.ndarray:
        return self._entries[name]

    def __contains__(self, name):
        return name in self._entries

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries.items())


def save_archive(entries, path) -> None:
    """Write entries (a WeightArchive or iterable of (name, array)) to path."""
    if not isinstance(entries, WeightArchive):
        archive = WeightArchive()
        for name, arr in entries:
            archive.add(name, arr)
        entries = archive
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(entries))]
    for name, arr in entries:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f4", copy=False).tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(chunks))
    except OSError as exc:
        raise OSError(f"cannot write archive {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ArchiveCorruptionError(
                f"{self.path}: truncated archive (needed {n} bytes at offset "
                f"{self.pos}, file has {len(self.data)})"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out


def load_archive(path) -> WeightArchive:
    """Read a CCW file, validating magic, version, and payload lengths."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    magic = reader.take(4)
    if magic != MAGIC:
        raise ArchiveFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    version, count = struct.unpack("<II", reader.take(8))
    if version != FORMAT_VERSION:
        raise ArchiveFormatError(
            f"{path}: unknown format version {version}, this reader supports "
            f"{FORMAT_VERSION}"
        )
    archive = WeightArchive()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", reader.take(2))
        name = reader.take(name_len).decode("utf-8")
        dtype_code, ndim = struct.unpack("<BB", reader.take(2))
        if dtype_code != DTYPE_F32:
            raise ArchiveFormatError(
                f"{path}: entry {name!r} has unsupported dtype code {dtype_code}"
            )
        shape = struct.unpack(f"<{ndim}I", reader.take(4 * ndim))
        n_values = int(np.prod(shape)) if ndim else 1
        payload = reader.take(4 * n_values)
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
        if name in archive:
            raise ValueError(f"{path}: duplicate entry name {name!r}")
        archive.add(name, arr.copy())
    if reader.pos != len(reader.data):
        raise ArchiveCorruptionError(
            f"{path}: {len(reader.data) - reader.pos} trailing bytes after "
            f"{count} entries"
        )
    return archive


@dataclass
class ImportReport:
    loaded: list = field(default_factory=list)   # (name, shape tuple)
    skipped: list = field(default_factory=list)  # names

    def lines(self):
        out = [f"LOADED {name} {'x'.join(map(str, shape))}"
               for name, shape in self.loaded]
        out += [f"SKIPPED {name}" for name in self.skipped]
        return out

    def __str__(self):
        return "\n".join(self.lines())


def apply_weights(model: Model, archive: WeightArchive, name_map: dict = None,
                  strictness: str = "strict") -> ImportReport:
    """Copy archive entries into model parameter slots.

    strict: every model slot (parameters and batch-norm running stats) must
    receive exactly one entry. backbone-only: exactly the pretrained
    backbone conv slots must be matched; everything else in the archive is
    skipped and CCBlock/head parameters are left untouched.

    Validation happens before any mutation, so a failed import leaves the
    model unchanged.
    """
    if strictness not in ("strict", "backbone-only"):
        raise ValueError(f"unknown strictness {strictness!r}")
    required = set(
        model.backbone_slot_names() if strictness == "backbone-only"
        else (name for name, _ in model.all_slots())
    )

    assignments = []
    report = ImportReport()
    for entry_name, value in archive:
        slot = name_map.get(entry_name, entry_name) if name_map else entry_name
        if slot not in required:
            report.skipped.append(entry_name)
            continue
        target = model.slot(slot)
        if target.shape != value.shape:
            raise ShapeError(
                f"entry {entry_name!r}: shape mismatch, model slot {slot!r} "
                f"expects {'x'.join(map(str, target.shape))}, archive has "
                f"{'x'.join(map(str, value.shape))}"
            )
        assignments.append((slot, entry_name, value))

    matched = {slot for slot, _, _ in assignments}
    missing = sorted(required - matched)
    if missing:
        raise ValueError(
            f"{strictness} import is missing {len(missing)} required "
            f"entries: {', '.join(missing[:5])}"
            + ("..." if len(missing) > 5 else "")
        )
    for slot, entry_name, value in assignments:
        model.set_slot(slot, value)
        report.loaded.append((entry_name, tuple(value.shape)))
    return report


def backbone_entry_shapes() -> dict:
    """Canonical archive census: 26 entries (13 conv weights + 13 biases)."""
    shapes = {}
    channels = 3
    for stage_num, stage in enumerate(CANONICAL_BACKBONE, start=1):
        for conv_num, width in enumerate(stage, start=1):
            shapes[f"backbone.conv{stage_num}_{conv_num}.weight"] = \
                (width, channels, 3, 3)
            shapes[f"backbone.conv{stage_num}_{conv_num}.bias"] = (width,)
            channels = width
    return shapes


def synthetic_backbone_archive(seed: int = 0) -> WeightArchive:
    """Random stand-in for a pretrained backbone: right names, right shapes."""
    rng = np.random.default_rng(seed)
    archive = WeightArchive()
    for name, shape in backbone_entry_shapes().items():
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
        archive.add(name, rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape))
    return archive
