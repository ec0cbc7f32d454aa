"""Command line entry point: ``glyphlab {synth,ingest,train,eval,repro}``.

Exit codes: 0 success, 1 usage or configuration error, 2 missing or
corrupt data, 3 numerical failure during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import checkpoint, pipeline
from .data import idx, ingest, synth
from .data.dataset import TASKS, LabeledDataset
from .data.netpbm import write_netpbm
from .report import curve_svg, emit_report, history_csv, paired
from .scg import NumericalError

log = logging.getLogger("glyphlab")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CHECKPOINT_FILE = "model.ckpt"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def threads() -> int:
    try:
        return max(1, int(os.environ.get("GLYPHLAB_THREADS", "1")))
    except ValueError:
        return 1


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="glyphlab", description="Handwritten Urdu glyph recognition experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset (or form scans)")
    s.add_argument("--n-writers", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--task", choices=list(TASKS), default="combined", help="classes to draw")
    s.add_argument("--forms", action="store_true", help="write one PGM form scan per writer instead")
    s.add_argument("--out", required=True)

    g = sub.add_parser("ingest", help="segment form scans into a dataset")
    g.add_argument("scans_dir")
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train one model preset")
    t.add_argument("--config", help="JSON file with run settings; flags win on conflict")
    t.add_argument("--model", help=f"one of {', '.join(pipeline.MODELS)}")
    t.add_argument("--task", choices=list(TASKS))
    t.add_argument("--seed", type=int)
    t.add_argument("--split", type=float, dest="train_fraction", help="fraction of writers used for training")
    t.add_argument("--optimizer", choices=list(pipeline.OPTIMIZERS))
    t.add_argument("--ae-iterations", type=_int_list, help="per-layer pretraining iterations, e.g. 350,300")
    t.add_argument("--head-iterations", type=int)
    t.add_argument("--finetune-iterations", type=int)
    t.add_argument("--finetune-l2-scale", type=float, help="multiplier on the L2 weights during fine-tuning")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--learning-rate", type=float)
    src = t.add_mutually_exclusive_group()
    src.add_argument("--data", help="dataset directory (IDX files + manifest)")
    src.add_argument("--synth-writers", type=int, help="generate this many synthetic writers instead")
    t.add_argument("--out", help="output directory")

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", help="dataset directory; defaults to the training data source, "
                   "restricted to the checkpoint's task")
    e.add_argument("--split", choices=["test", "train", "all"], default="test")
    e.add_argument("--restrict-to-task", action="store_true",
                   help="drop samples outside the checkpoint's task instead of failing")
    e.add_argument("--out", required=True)

    r = sub.add_parser("repro", help="AE and CNN presets for every task on synthetic data")
    r.add_argument("--synth-writers", type=int, default=120)
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--tasks", default=",".join(TASKS))
    r.add_argument("--out", required=True)
    return p


# -- data sources -------------------------------------------------------------

def _load(directory) -> LabeledDataset:
    try:
        return idx.load_dataset(directory)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    except (idx.DatasetFormatError, ValueError) as exc:
        raise DataError(f"{directory}: corrupt dataset: {exc}") from exc


def _synthetic(n_writers: int, seed: int, task: str) -> LabeledDataset:
    if n_writers < 1:
        raise UsageError("--synth-writers must be >= 1")
    return synth.synth_generate(n_writers, TASKS[task], seed)


def _dataset_for(source: dict, task: str) -> LabeledDataset:
    if "synth_writers" in source:
        return _synthetic(source["synth_writers"], source["synth_seed"], task)
    return _load(source["path"])


# -- commands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.n_writers < 1:
        raise UsageError("--n-writers must be >= 1")
    out = Path(args.out)
    if args.forms:
        out.mkdir(parents=True, exist_ok=True)
        for wid, rng in enumerate(synth.writer_streams(args.seed, args.n_writers)):
            write_netpbm(out / f"{wid}.pgm", synth.synth_form(rng))
        print(f"wrote {args.n_writers} form scans to {out}")
        return EXIT_OK
    ds = synth.synth_generate(args.n_writers, TASKS[args.task], args.seed)
    idx.store_dataset(ds, out)
    print(f"wrote {len(ds)} samples from {args.n_writers} writers to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    out = Path(args.out)
    try:
        ds, logs = ingest.ingest_directory(args.scans_dir, threads())
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    except ingest.IngestError as exc:
        out.mkdir(parents=True, exist_ok=True)
        (out / "segmentation.log").write_text(ingest.segmentation_log(exc.logs), encoding="utf-8")
        for lg in exc.logs:
            if lg.error:
                print(f"error: {lg.path}: {lg.error}", file=sys.stderr)
        raise DataError(str(exc)) from exc
    idx.store_dataset(ds, out)
    (out / "segmentation.log").write_text(ingest.segmentation_log(logs), encoding="utf-8")
    dropped = sum(len(lg.discarded) for lg in logs)
    print(f"{len(logs)} forms: kept {len(ds)} cells, discarded {dropped}")
    return EXIT_OK


FLAG_KEYS = ("model", "task", "seed", "train_fraction", "optimizer", "ae_iterations",
             "head_iterations", "finetune_iterations", "finetune_l2_scale", "epochs", "batch_size",
             "learning_rate")
SOURCE_KEYS = ("data", "synth_writers", "out")


def resolve_train_config(args) -> tuple[pipeline.RunConfig, dict, Path]:
    """Merge the JSON config with command-line flags (flags win)."""
    settings = {}
    if args.config:
        try:
            settings = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(settings, dict):
            raise UsageError("config must be a JSON object")
    for key in FLAG_KEYS + SOURCE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if args.data is not None:
        settings.pop("synth_writers", None)
    if args.synth_writers is not None:
        settings.pop("data", None)
    source_keys = [k for k in ("data", "synth_writers") if k in settings]
    if len(source_keys) != 1:
        raise UsageError("give exactly one data source: --data DIR or --synth-writers N")
    if "out" not in settings:
        raise UsageError("an output directory is required (--out)")
    out = Path(settings.pop("out"))
    raw_source = {k: settings.pop(k) for k in source_keys}
    try:
        cfg = pipeline.RunConfig.from_dict(settings)
    except pipeline.ConfigError as exc:
        raise UsageError(str(exc)) from exc
    if "data" in raw_source:
        source = {"path": str(Path(raw_source["data"]).resolve())}
    else:
        source = {"synth_writers": int(raw_source["synth_writers"]), "synth_seed": cfg.seed}
    return cfg, source, out


def cmd_train(args) -> int:
    cfg, source, out = resolve_train_config(args)
    ds = _dataset_for(source, cfg.task)
    try:
        model = pipeline.train_model(ds, cfg)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    ckpt = pipeline.to_checkpoint(model)
    ckpt.meta["data"] = source
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save(out / CHECKPOINT_FILE, ckpt)
    (out / "config.json").write_text(json.dumps({**cfg.to_dict(), **source}, indent=2) + "\n", encoding="utf-8")
    (out / "history.csv").write_text(history_csv(model.history), encoding="utf-8", newline="\n")
    if len(model.history):
        (out / "curve.svg").write_text(curve_svg(model.history, f"{cfg.model} {cfg.task} error rate"),
                                       encoding="utf-8", newline="\n")
    test = pipeline.select(ds.for_task(cfg.task), model, "test")
    acc = 100.0 * float(np.mean(model.predict(test.images) == test.labels))
    a, err = paired(acc)
    print(f"{cfg.model} {cfg.task}: held-out accuracy {a}% error {err}% ({len(test)} samples)")
    print(f"checkpoint: {out / CHECKPOINT_FILE}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        ckpt = checkpoint.load(args.checkpoint)
    except FileNotFoundError as exc:
        raise DataError(f"checkpoint not found: {args.checkpoint}") from exc
    except checkpoint.CheckpointError as exc:
        raise DataError(f"{args.checkpoint}: {exc}") from exc
    model = pipeline.from_checkpoint(ckpt)
    task = model.config.task
    if args.data:
        ds = _load(args.data)
    elif "data" in ckpt.meta:
        # the training source holds other classes too; the model's task is implied
        ds = _dataset_for(ckpt.meta["data"], task).for_task(task)
    else:
        raise UsageError("checkpoint records no data source; pass --data")
    if args.restrict_to_task:
        ds = ds.for_task(task)
    try:
        pipeline.check_classes(ds, model)
    except pipeline.ClassMismatchError as exc:
        raise UsageError(str(exc)) from exc
    ds = pipeline.select(ds, model, args.split)
    if len(ds) == 0:
        raise DataError(f"no samples in the {args.split} split of this dataset")
    res = pipeline.evaluate(model, ds)
    emit_report(res.report, model.history, args.out, model=model.config.model, task=task,
                confusion=res.confusion, class_names=res.class_names)
    a, err = paired(res.report.overall_accuracy)
    print(f"{model.config.model} {task} ({args.split}, {len(ds)} samples): accuracy {a}% error {err}%")
    return EXIT_OK


REPRO_MODELS = ("ae2", "cnn2", "ae3", "cnn3")


def cmd_repro(args) -> int:
    tasks = [t for t in args.tasks.split(",") if t]
    unknown = [t for t in tasks if t not in TASKS]
    if unknown:
        raise UsageError(f"unknown task(s) {unknown}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for task in tasks:
        ds = _synthetic(args.synth_writers, args.seed, task)
        accs = {}
        for name in REPRO_MODELS:
            cfg = pipeline.RunConfig(model=name, task=task, seed=args.seed)
            model = pipeline.train_model(ds, cfg)
            res = pipeline.evaluate(model, pipeline.select(ds, model, "test"))
            run_dir = out / f"{task}_{name}"
            emit_report(res.report, model.history, run_dir, model=name, task=task,
                        confusion=res.confusion, class_names=res.class_names)
            ckpt = pipeline.to_checkpoint(model)
            ckpt.meta["data"] = {"synth_writers": args.synth_writers, "synth_seed": args.seed}
            checkpoint.save(run_dir / CHECKPOINT_FILE, ckpt)
            accs[name] = res.report.overall_accuracy
            print(f"{task} {name}: {paired(accs[name])[0]}%", flush=True)
        rows.append((task, accs))
    table = summary_table(rows)
    (out / "summary.txt").write_text(table, encoding="utf-8", newline="\n")
    print(table, end="")
    return EXIT_OK


def summary_table(rows) -> str:
    """Accuracy and error per task for 2 and 3 hidden layers, AE and CNN side by side."""
    head = ["task", "acc ae2", "acc cnn2", "err ae2", "err cnn2", "acc ae3", "acc cnn3", "err ae3", "err cnn3"]
    lines = ["\t".join(head)]
    for task, accs in rows:
        cells = [task]
        for pair in (("ae2", "cnn2"), ("ae3", "cnn3")):
            ps = [paired(accs[m]) for m in pair]
            cells += [ps[0][0], ps[1][0], ps[0][1], ps[1][1]]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "train": cmd_train, "eval": cmd_eval, "repro": cmd_repro}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=threads()):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
