"""Command-line entry point.

Subcommands: manifest, summary, import-weights, train, eval, predict,
gradcheck, selftest. Flag defaults follow the reference recipe (learning
rate 0.001, momentum 0.9, batch 32, 30 epochs, 3 classes, 0.27 train
fraction). All artifacts go under --out; nothing is written implicitly.

Exit codes: 0 success, 1 contract failure (one-line reason on stderr),
2 usage errors.
"""

import argparse
import os
import sys
from pathlib import Path


def _set_thread_env(threads: int) -> None:
    # must run before numpy/BLAS load to take effect
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccblock",
        description="VGG-16 + CCBlock chest X-ray classifier toolkit",
    )
    parser.add_argument("--threads", type=int, default=0,
                        help="bound kernel thread pools (0 = library default)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(
            name, help=help_text,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )

    p = add("manifest", "scan class-named directories into a manifest CSV")
    p.add_argument("--scan", required=True, metavar="DIR",
                   help="directory containing covid/, pneumonia/, normal/")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--classes", type=int, default=3, choices=(2, 3),
                   help="number of output classes")
    p.add_argument("--split", action="store_true", default=False,
                   help="assign train/test splits in the output")
    p.add_argument("--train-fraction", type=float, default=0.27,
                   help="per-class fraction sent to train")
    p.add_argument("--train-counts", default="",
                   help="per-class train overrides, e.g. covid=84,normal=176")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed")

    p = add("summary", "print the architecture table")
    p.add_argument("--classes", type=int, default=3, choices=(2, 3),
                   help="number of output classes")
    p.add_argument("--format", default="text", choices=("text", "csv"),
                   help="rendering")
    p.add_argument("--seed", type=int, default=0, help="init seed")
    p.add_argument("--arch", default="full", choices=("full", "reduced"),
                   help="reduced = width-reduced clone for fast experiments")

    p = add("import-weights", "load a pretrained backbone archive into a fresh model")
    p.add_argument("--weights", required=True, help="CCW archive path")
    p.add_argument("--out", required=True, metavar="DIR",
                   help="output directory")
    p.add_argument("--classes", type=int, default=3, choices=(2, 3),
                   help="number of output classes")
    p.add_argument("--seed", type=int, default=0, help="init seed")
    p.add_argument("--strictness", default="backbone-only",
                   choices=("strict", "backbone-only"),
                   help="which parameters the archive must cover")
    p.add_argument("--arch", default="full", choices=("full", "reduced"),
                   help="model width preset")

    p = add("train", "train on a manifest and write history + checkpoint")
    p.add_argument("--manifest", required=True, help="manifest CSV path")
    p.add_argument("--out", required=True, metavar="DIR",
                   help="output directory")
    p.add_argument("--classes", type=int, default=3, choices=(2, 3),
                   help="number of output classes")
    p.add_argument("--arch", default="full", choices=("full", "reduced"),
                   help="model width preset")
    p.add_argument("--lr", type=float, default=0.001, help="learning rate")
    p.add_argument("--momentum", type=float, default=0.9, help="SGD momentum")
    p.add_argument("--batch-size", type=int, default=32, help="mini-batch size")
    p.add_argument("--epochs", type=int, default=30, help="training epochs")
    p.add_argument("--seed", type=int, default=0,
                   help="init and shuffle seed")
    p.add_argument("--freeze-backbone", action="store_true", default=False,
                   help="train only CCBlock and classifier layers")
    p.add_argument("--weights", default="",
                   help="optional backbone CCW archive imported before training")
    p.add_argument("--train-fraction", type=float, default=0.27,
                   help="used when the manifest has no split column")
    p.add_argument("--train-counts", default="",
                   help="per-class train overrides, e.g. covid=84,normal=176")
    p.add_argument("--split-seed", type=int, default=0,
                   help="seed for an on-the-fly split")
    p.add_argument("--log-timing", action="store_true", default=False,
                   help="append a seconds column to history.csv (breaks "
                        "bit-reproducibility)")

    p = add("eval", "evaluate a checkpoint on a manifest split")
    p.add_argument("--manifest", required=True, help="manifest CSV path")
    p.add_argument("--checkpoint", required=True, help="CCW checkpoint path")
    p.add_argument("--out", required=True, metavar="DIR",
                   help="output directory")
    p.add_argument("--classes", type=int, default=3, choices=(2, 3),
                   help="number of output classes")
    p.add_argument("--arch", default="full", choices=("full", "reduced"),
                   help="model width preset")
    p.add_argument("--split", default="test", choices=("train", "test"),
                   help="which split to evaluate")
    p.add_argument("--batch-size", type=int, default=32, help="eval batch size")
    p.add_argument("--run-name", default="Run1", help="label in reports")

    p = add("predict", "print class probabilities for image files")
    p.add_argument("--checkpoint", required=True, help="CCW checkpoint path")
    p.add_argument("--classes", type=int, default=3, choices=(2, 3),
                   help="number of output classes")
    p.add_argument("--arch", default="full", choices=("full", "reduced"),
                   help="model width preset")
    p.add_argument("images", nargs="+", metavar="IMAGE",
                   help="image files to classify")

    p = add("gradcheck", "finite-difference check of every layer type")
    p.add_argument("--seed", type=int, default=7, help="sampling seed")
    p.add_argument("--tolerance", type=float, default=1e-4,
                   help="max relative error allowed")

    add("selftest", "run the data-free arithmetic and format pins")
    return parser


def cmd_manifest(args) -> int:
    from .data import (SplitSpec, scan_class_directories, stratified_split,
                       split_counts, write_manifest)

    records = scan_class_directories(args.scan, num_classes=args.classes)
    if args.split:
        overrides = _parse_train_counts(args.train_counts)
        spec = SplitSpec(train_fraction=args.train_fraction,
                         per_class_train=overrides or None, seed=args.seed)
        records = stratified_split(records, spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.csv"
    write_manifest(records, manifest_path)
    print(f"wrote {manifest_path} with {len(records)} records")
    for label, (n_train, n_test) in sorted(split_counts(records).items()):
        if args.split:
            print(f"  {label}: train={n_train} test={n_test}")
        else:
            print(f"  {label}: {n_train + n_test}")
    return 0


def _model_spec(args):
    from .model import ModelSpec, reduced_spec

    if getattr(args, "arch", "full") == "reduced":
        return reduced_spec(num_classes=args.classes)
    return ModelSpec(num_classes=args.classes)


def cmd_summary(args) -> int:
    from .model import build_model, summarize_csv, summarize_text

    model = build_model(_model_spec(args), seed=args.seed)
    render = summarize_csv if args.format == "csv" else summarize_text
    sys.stdout.write(render(model))
    return 0


def cmd_import_weights(args) -> int:
    from .model import build_model
    from .training import checkpoint
    from .weights import apply_weights, load_archive

    model = build_model(_model_spec(args), seed=args.seed)
    report = apply_weights(model, load_archive(args.weights),
                           strictness=args.strictness)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "model.ccw"
    checkpoint(model, ckpt_path)
    report_text = str(report) + "\n"
    (out_dir / "import_report.txt").write_text(report_text)
    sys.stdout.write(report_text)
    print(f"loaded {len(report.loaded)} entries, skipped {len(report.skipped)}; "
          f"wrote {ckpt_path}")
    return 0


def _parse_train_counts(text: str) -> dict:
    overrides = {}
    if text:
        for item in text.split(","):
            label, _, value = item.partition("=")
            if not value:
                raise ValueError(
                    f"--train-counts expects label=count pairs, got {item!r}"
                )
            overrides[label.strip()] = int(value)
    return overrides


def _load_split_records(args):
    from .data import SplitSpec, parse_manifest, stratified_split

    records = parse_manifest(args.manifest, num_classes=args.classes)
    if all(not rec.split for rec in records):
        overrides = _parse_train_counts(getattr(args, "train_counts", ""))
        spec = SplitSpec(train_fraction=getattr(args, "train_fraction", 0.27),
                         per_class_train=overrides or None,
                         seed=getattr(args, "split_seed", 0))
        records = stratified_split(records, spec)
    train_records = [r for r in records if r.split == "train"]
    test_records = [r for r in records if r.split == "test"]
    return records, train_records, test_records


def cmd_train(args) -> int:
    from .data import ImageDataset, write_manifest
    from .model import build_model
    from .training import TrainConfig, checkpoint, train
    from .weights import apply_weights, load_archive

    records, train_records, test_records = _load_split_records(args)
    if not train_records:
        raise ValueError("manifest has no train records")
    model = build_model(_model_spec(args), seed=args.seed)
    if args.weights:
        report = apply_weights(model, load_archive(args.weights),
                               strictness="backbone-only")
        print(f"imported backbone: {len(report.loaded)} entries")
    cfg = TrainConfig(learning_rate=args.lr, momentum=args.momentum,
                      batch_size=args.batch_size, epochs=args.epochs,
                      seed=args.seed, freeze_backbone=args.freeze_backbone)
    train_data = ImageDataset(train_records, num_classes=args.classes)
    test_data = ImageDataset(test_records, num_classes=args.classes) \
        if test_records else None
    history = train(model, train_data, test_data, cfg, log=print)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "history.csv").write_text(
        history.to_csv(include_timing=args.log_timing)
    )
    write_manifest(records, out_dir / "split.csv")
    checkpoint(model, out_dir / "model.ccw")
    print(f"wrote {out_dir / 'history.csv'}, {out_dir / 'split.csv'}, "
          f"{out_dir / 'model.ccw'}")
    return 0


def cmd_eval(args) -> int:
    from .data import ImageDataset
    from .evaluation import cm_to_csv, evaluate_run, render_report
    from .model import build_model
    from .training import resume

    records, train_records, test_records = _load_split_records(args)
    chosen = train_records if args.split == "train" else test_records
    if not chosen:
        raise ValueError(f"manifest has no {args.split} records")
    model = build_model(_model_spec(args), seed=0)
    resume(model, args.checkpoint)
    dataset = ImageDataset(chosen, num_classes=args.classes)
    result = evaluate_run(model, dataset, name=args.run_name,
                          batch_size=args.batch_size)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = render_report([result], fmt="text")
    (out_dir / "report.txt").write_text(text)
    (out_dir / "report.csv").write_text(render_report([result], fmt="csv"))
    (out_dir / "report.jsonl").write_text(render_report([result], fmt="json-lines"))
    (out_dir / f"confusion_{args.run_name}.csv").write_text(
        cm_to_csv(result.cm, args.classes)
    )
    sys.stdout.write(text)
    print(f"wrote reports under {out_dir}")
    return 0


def cmd_predict(args) -> int:
    from .data import class_names, load_image
    import numpy as np

    from .model import build_model
    from .training import resume

    model = build_model(_model_spec(args), seed=0)
    resume(model, args.checkpoint)
    names = class_names(args.classes)
    batch = np.stack([load_image(path) for path in args.images])
    probs = model.forward(batch, train=False)
    for path, row in zip(args.images, probs):
        cells = " ".join(f"{name}={p:.4f}" for name, p in zip(names, row))
        print(f"{path} {cells} -> {names[int(row.argmax())]}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_layer_suite

    results = run_layer_suite(seed=args.seed)
    worst = 0.0
    for name, err in sorted(results.items()):
        status = "ok" if err <= args.tolerance else "FAIL"
        print(f"{name:20s} max_rel_error={err:.3e}  {status}")
        worst = max(worst, err)
    print(f"worst: {worst:.3e} (tolerance {args.tolerance:g})")
    if worst > args.tolerance:
        print("gradcheck failed", file=sys.stderr)
        return 1
    return 0


def cmd_selftest(args) -> int:
    import tempfile

    import numpy as np

    from .data import ManifestRecord, SplitSpec, batch_indices, split_counts, \
        stratified_split
    from .evaluation import BinaryCounts, MetricSet, average_runs, metrics, \
        one_vs_rest
    from .weights import (ArchiveFormatError, WeightArchive, load_archive,
                          save_archive)

    failures = []

    def check(name, ok):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures.append(name)

    got = metrics(BinaryCounts(tp=223, tn=473, fp=5, fn=3)).rounded()
    check("two-class metric pin (223/473/5/3) -> 98.67/98.95/98.86",
          got == MetricSet(98.67, 98.95, 98.86))

    got = metrics(BinaryCounts(tp=221, tn=1099, fp=10, fn=5)).rounded()
    check("three-class ratios (221/1099/10/5) -> 97.79/99.10",
          (got.sensitivity, got.specificity) == (97.79, 99.10))

    acc_rows = [MetricSet(s, p, a) for s, p, a in
                [(98.67, 98.54, 98.58), (98.23, 98.54, 98.44),
                 (98.67, 97.70, 98.01), (98.66, 98.95, 98.86),
                 (98.67, 98.74, 98.72)]]
    avg = average_runs(acc_rows).average.rounded()
    check("five-run average -> 98.58/98.49/98.52",
          avg == MetricSet(98.58, 98.49, 98.52))

    cm3 = np.array([[221, 3, 2], [6, 625, 0], [4, 0, 474]])
    check("one-vs-rest conserves 1335 samples",
          one_vs_rest(cm3, 0).total == 1335 == cm3.sum())
    cm2 = np.array([[223, 3], [5, 473]])
    check("one-vs-rest conserves 704 samples",
          one_vs_rest(cm2, 0).total == 704 == cm2.sum())

    rng = np.random.default_rng(0)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "t.ccw"
        archive = WeightArchive()
        for i in range(10):
            archive.add(f"t{i}", rng.normal(size=(3, 4)).astype(np.float32))
        save_archive(archive, path)
        loaded = load_archive(path)
        ok = all(np.array_equal(loaded.get(n), a) for n, a in archive)
        check("archive round-trip bitwise", ok)
        bad = Path(tmp) / "bad.ccw"
        bad.write_bytes(b"XXXX" + bytes(8))
        try:
            load_archive(bad)
            check("bad magic rejected", False)
        except ArchiveFormatError:
            check("bad magic rejected", True)

    records = []
    for label, n in (("covid", 310), ("pneumonia", 864), ("normal", 654)):
        records += [ManifestRecord(f"{label}/{i}.png", label) for i in range(n)]
    assigned = stratified_split(records, SplitSpec(
        per_class_train={"covid": 84, "pneumonia": 233, "normal": 176}, seed=0))
    check("stratified split pin 84/226, 233/631, 176/478",
          split_counts(assigned) == {"covid": (84, 226), "pneumonia": (233, 631),
                                     "normal": (176, 478)})

    chunks = batch_indices(493, 32, seed=0, epoch=0)
    check("493 records batch into 15x32 + 13",
          [len(c) for c in chunks] == [32] * 15 + [13])

    if failures:
        print(f"selftest failed: {', '.join(failures)}", file=sys.stderr)
        return 1
    print("selftest passed")
    return 0


COMMANDS = {
    "manifest": cmd_manifest,
    "summary": cmd_summary,
    "import-weights": cmd_import_weights,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # honor --threads before any numpy import
    if "--threads" in argv:
        idx = argv.index("--threads")
        if idx + 1 < len(argv) and argv[idx + 1].isdigit():
            threads = int(argv[idx + 1])
            if threads > 0:
                _set_thread_env(threads)
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1
    except Exception as exc:  # contract failures -> one-line reason, exit 1
        print(f"ccblock {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
