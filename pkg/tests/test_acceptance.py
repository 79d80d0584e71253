"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with its runtime. Run with `pytest tests/test_acceptance.py -v -s`.
"""

import shutil
import subprocess
import time
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from ccblock.cli import main as cli_main
from ccblock.data import (
    ArrayDataset,
    ManifestRecord,
    SplitSpec,
    split_counts,
    stratified_split,
)
from ccblock.evaluation import BinaryCounts, MetricSet, average_runs, metrics, \
    one_vs_rest
from ccblock.gradcheck import check_model_loss_grads, run_layer_suite
from ccblock.layers import BatchNorm2D, Conv2D, softmax
from ccblock.model import ModelSpec, build_head, build_model, reduced_spec, \
    summarize_csv
from ccblock.training import TrainConfig, train
from ccblock.weights import (
    ArchiveCorruptionError,
    ArchiveFormatError,
    WeightArchive,
    apply_weights,
    load_archive,
    save_archive,
)

FIXTURES = Path(__file__).parent / "fixtures"
REPO_ROOT = Path(__file__).parent.parent


class Criterion:
    """Context manager that prints one PASS/FAIL line per criterion."""

    def __init__(self, name: str, budget_seconds: float = None):
        self.name = name
        self.budget = budget_seconds

    def __enter__(self):
        self.started = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.started
        status = "PASS" if exc_type is None else "FAIL"
        print(f"[ACCEPTANCE] {self.name}: {status} ({elapsed:.2f}s)")
        if exc_type is None and self.budget is not None:
            assert elapsed < self.budget, (
                f"{self.name}: {elapsed:.2f}s exceeds budget {self.budget}s"
            )
        return False


def test_table2_conformance():
    with Criterion("Table-2 conformance (summary vs fixture)", budget_seconds=1.0):
        for classes, fixture in ((3, "summary_3class.csv"), (2, "summary_2class.csv")):
            model = build_model(ModelSpec(num_classes=classes), seed=0)
            assert summarize_csv(model) == (FIXTURES / fixture).read_text()


def test_gradient_suite():
    with Criterion("gradient suite (per-layer 1e-4, end-to-end 1e-3)",
                   budget_seconds=120.0):
        results = run_layer_suite(seed=7)
        for name, err in results.items():
            assert err <= 1e-4, f"{name}: {err:.3e}"
        model = build_model(reduced_spec(), seed=5, dtype=np.float64)
        rng = np.random.default_rng(6)
        x = rng.normal(size=(2, 3, 224, 224)) * 0.5
        err = check_model_loss_grads(model, x, np.array([0, 2]), n_coords=12, seed=7)
        assert err <= 1e-3, f"end-to-end: {err:.3e}"


def test_metric_pins():
    with Criterion("reference metric arithmetic pins (data-free)"):
        got = metrics(BinaryCounts(tp=223, tn=473, fp=5, fn=3)).rounded()
        assert got == MetricSet(98.67, 98.95, 98.86)

        table4 = [MetricSet(98.67, 98.54, 98.58), MetricSet(98.23, 98.54, 98.44),
                  MetricSet(98.67, 97.70, 98.01), MetricSet(98.66, 98.95, 98.86),
                  MetricSet(98.67, 98.74, 98.72)]
        assert average_runs(table4).average.rounded().accuracy == 98.52

        cm2 = np.array([[223, 3], [5, 473]])
        assert one_vs_rest(cm2, 0).total == 704 == 226 + 478
        cm3 = np.array([[221, 3, 2], [6, 625, 0], [4, 0, 474]])
        assert one_vs_rest(cm3, 0).total == 1335 == 226 + 631 + 478
        for positive in range(3):
            assert one_vs_rest(cm3, positive).total == cm3.sum()


def test_split_pin():
    with Criterion("stratified split pin + 100-seed determinism",
                   budget_seconds=10.0):
        records = []
        for label, n in (("covid", 310), ("pneumonia", 864), ("normal", 654)):
            records += [ManifestRecord(f"{label}/{i}.png", label) for i in range(n)]
        overrides = {"covid": 84, "pneumonia": 233, "normal": 176}
        assigned = stratified_split(records, SplitSpec(per_class_train=overrides,
                                                       seed=0))
        assert split_counts(assigned) == {"covid": (84, 226),
                                          "pneumonia": (233, 631),
                                          "normal": (176, 478)}
        for seed in range(100):
            spec = SplitSpec(per_class_train=overrides, seed=seed)
            first = stratified_split(records, spec)
            second = stratified_split(records, spec)
            assert first == second
            assert {r.path for r in first} == {r.path for r in records}
            assert split_counts(first) == {"covid": (84, 226),
                                           "pneumonia": (233, 631),
                                           "normal": (176, 478)}


def test_head_only_overfit():
    with Criterion("head-only overfit (30 samples -> 100% train acc)",
                   budget_seconds=300.0):
        rng = np.random.default_rng(2024)
        features = rng.normal(size=(30, 512, 7, 7)).astype(np.float32)
        labels = rng.integers(0, 3, size=30)
        model = build_head(ModelSpec(num_classes=3), seed=1)
        cfg = TrainConfig(learning_rate=0.01, momentum=0.9, batch_size=32,
                          epochs=40, seed=0)
        history = train(model, ArrayDataset(features, labels), None, cfg)
        assert cfg.epochs <= 300
        final = history.final()
        assert final.train_acc == 1.0, f"final accuracy {final.train_acc}"
        assert final.train_loss < 1e-2, f"final loss {final.train_loss}"
        assert final.train_loss < 0.01 * history.rows[0].train_loss


@pytest.fixture()
def tiny_image_tree(tmp_path):
    rng = np.random.default_rng(0)
    root = tmp_path / "images"
    for label in ("covid", "pneumonia", "normal"):
        d = root / label
        d.mkdir(parents=True)
        for i in range(4):
            Image.fromarray(rng.integers(0, 256, size=(32, 32), dtype=np.uint8),
                            mode="L").save(d / f"{i}.png")
    return root


def test_train_determinism(tiny_image_tree, tmp_path, capsys):
    with Criterion("bit-identical train invocations (history + checkpoint)"):
        manifest_dir = tmp_path / "m"
        assert cli_main(["manifest", "--scan", str(tiny_image_tree), "--out",
                         str(manifest_dir), "--split", "--train-fraction",
                         "0.5"]) == 0
        outputs = []
        for run in ("a", "b"):
            out_dir = tmp_path / run
            code = cli_main([
                "train", "--manifest", str(manifest_dir / "manifest.csv"),
                "--out", str(out_dir), "--arch", "reduced", "--epochs", "2",
                "--batch-size", "3", "--lr", "0.01", "--seed", "11",
            ])
            assert code == 0
            outputs.append(out_dir)
        capsys.readouterr()
        a, b = outputs
        assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()
        assert (a / "model.ccw").read_bytes() == (b / "model.ccw").read_bytes()
        assert (a / "split.csv").read_bytes() == (b / "split.csv").read_bytes()


def test_format_round_trip(tmp_path):
    with Criterion("CCW format: 100 round-trips + corruption rejection"):
        rng = np.random.default_rng(9)
        for case in range(100):
            archive = WeightArchive()
            for i in range(int(rng.integers(0, 6))):
                ndim = int(rng.integers(1, 5))
                shape = tuple(int(d) for d in rng.integers(1, 7, size=ndim))
                archive.add(f"tensor_{case}_{i}", rng.normal(size=shape))
            path = tmp_path / f"case{case}.ccw"
            save_archive(archive, path)
            loaded = load_archive(path)
            assert loaded.names() == archive.names()
            for name, arr in archive:
                np.testing.assert_array_equal(loaded.get(name), arr)
            second = tmp_path / "again.ccw"
            save_archive(loaded, second)
            assert second.read_bytes() == path.read_bytes()

        bad_magic = tmp_path / "bad.ccw"
        bad_magic.write_bytes(b"XXXX" + bytes(8))
        with pytest.raises(ArchiveFormatError):
            load_archive(bad_magic)

        truncated = tmp_path / "trunc.ccw"
        archive = WeightArchive().add("t", np.ones((4, 4), dtype=np.float32))
        save_archive(archive, truncated)
        truncated.write_bytes(truncated.read_bytes()[:-10])
        with pytest.raises(ArchiveCorruptionError):
            load_archive(truncated)


def test_full_model_forward():
    with Criterion("full-model forward (Table-2 shape chain, probs sum 1)",
                   budget_seconds=30.0):
        model = build_model(ModelSpec(num_classes=3), seed=0)
        rng = np.random.default_rng(1)
        out = rng.normal(size=(1, 3, 224, 224)).astype(np.float32) * 0.25
        for row in model.rows:
            for layer in row.layers:
                if isinstance(layer, BatchNorm2D):
                    out = layer.forward(out, train=False)
                else:
                    out = layer.forward(out)
            if out.ndim == 2:
                got = f"1x{out.shape[1]}"
            else:
                c, h, w = out.shape[1:]
                got = f"{h}x{w}x{c}"
            assert got == row.size, f"row {row.label}: {got} != {row.size}"
        probs = softmax(out)
        assert probs.shape == (1, 3)
        np.testing.assert_allclose(probs.sum(axis=1), [1.0], atol=1e-5)


EXPORTER_CLI = REPO_ROOT / "frontend" / "dist" / "cli.js"


def test_exporter_round_trip(tmp_path):
    """[SECONDARY] exporter: verify + 26/26 backbone import + conv1_1 probe."""
    node = shutil.which("node")
    if node is None or not EXPORTER_CLI.exists():
        pytest.skip("weight exporter not built (frontend/dist/cli.js missing)")
    with Criterion("exporter round-trip (verify, 26/26 import, conv probe)"):
        out_path = tmp_path / "vgg16.ccw"
        export = subprocess.run(
            [node, str(EXPORTER_CLI), "export", "--out", str(out_path),
             "--synthetic", "7"],
            capture_output=True, text=True, timeout=300,
        )
        assert export.returncode == 0, export.stderr
        verify = subprocess.run(
            [node, str(EXPORTER_CLI), "verify", str(out_path)],
            capture_output=True, text=True, timeout=300,
        )
        assert verify.returncode == 0, verify.stderr

        model = build_model(ModelSpec(num_classes=3), seed=0)
        report = apply_weights(model, load_archive(out_path),
                               strictness="backbone-only")
        assert len(report.loaded) == 26
        assert report.skipped == []

        probe = load_archive(Path(str(out_path) + ".probe.ccw"))
        pattern = probe.get("probe.input")
        expected = probe.get("probe.conv1_1")
        conv = Conv2D(model.slot("backbone.conv1_1.weight"),
                      model.slot("backbone.conv1_1.bias"), stride=1, pad=1)
        got = conv.forward(pattern[None, ...])[0]
        np.testing.assert_allclose(got, expected, atol=1e-4, rtol=1e-4)
