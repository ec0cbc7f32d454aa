"""Train and evaluate the model presets on a labelled glyph dataset.

Shared by the command line and the test suite. A run picks a task (which
classes take part), splits the task's samples by writer, trains one model
on the training writers and keeps the held-out writer ids so evaluation
can later select the same test set from the same dataset files.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import autoencoder as ae
from . import baselines as bl
from . import cnn
from .checkpoint import Checkpoint
from .data.dataset import TASKS, LabeledDataset, SplitSpec, split_subject_independent
from .report import ClassReport, RunHistory, confusion_matrix, per_class_accuracy
from .scg import NumericalError

log = logging.getLogger(__name__)

MODELS = ("ae2", "ae3", "cnn2", "cnn3") + tuple(f"baseline:{k}" for k in bl.KINDS)
OPTIMIZERS = ("scg", "gd")


class ConfigError(ValueError):
    """Invalid run configuration."""


class ClassMismatchError(ValueError):
    """Dataset labels the model was not trained to predict."""


@dataclass(frozen=True)
class RunConfig:
    model: str
    task: str = "digits"
    seed: int = 42
    train_fraction: float = 0.85
    optimizer: str = "scg"
    # autoencoder schedule; None keeps the tabulated per-layer iterations
    ae_iterations: tuple | None = None
    head_iterations: int = ae.LAYER_ITERATIONS[2]
    finetune_iterations: int = 200
    finetune_l2_scale: float = ae.FINETUNE_L2_SCALE
    # cnn schedule
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.ae_iterations is not None:
            object.__setattr__(self, "ae_iterations", tuple(int(n) for n in self.ae_iterations))
            if self.model in ae.PRESETS and len(self.ae_iterations) != len(ae.PRESETS[self.model]):
                raise ConfigError(f"{self.model} needs {len(ae.PRESETS[self.model])} ae_iterations")
        counts = [self.head_iterations, self.finetune_iterations, *(self.ae_iterations or ())]
        if any(n < 0 for n in counts):
            raise ConfigError("iteration counts must be >= 0")
        if self.finetune_l2_scale < 0:
            raise ConfigError("finetune_l2_scale must be >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigError("epochs and batch_size must be >= 1 and learning_rate > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(extra)}")
        if "model" not in d:
            raise ConfigError("config needs a model")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["ae_iterations"] is not None:
            d["ae_iterations"] = list(d["ae_iterations"])
        return d

    @property
    def family(self) -> str:
        return "baseline" if ":" in self.model else self.model.rstrip("0123456789")


@dataclass
class TrainedModel:
    config: RunConfig
    classes: list  # global class ids, in output-row order
    params: object  # AEStack, (CNNSpec, params) or BaselineModel
    history: RunHistory = field(default_factory=RunHistory)
    test_writers: list = field(default_factory=list)
    # optimizer traces of the run that produced the model; not saved in checkpoints
    fit_report: object = None

    def predict(self, images) -> np.ndarray:
        """Predicted global class ids."""
        family = self.config.family
        if family == "ae":
            rows, _ = ae.predict_ae(self.params, images)
        elif family == "cnn":
            spec, params = self.params
            rows, _ = cnn.predict_cnn(spec, params, images)
        else:
            return bl.predict_baseline(self.params, images)
        return np.asarray(self.classes, dtype=np.int64)[rows]


def split_for(ds: LabeledDataset, cfg: RunConfig):
    """Task filter, then writer-disjoint split."""
    task_ds = ds.for_task(cfg.task)
    if len(task_ds) == 0:
        raise ValueError(f"dataset has no samples for task {cfg.task!r}")
    return split_subject_independent(task_ds, SplitSpec(cfg.train_fraction, cfg.seed))


def _error_pct(pred, truth) -> float:
    return 100.0 * float(np.mean(pred != truth)) if len(truth) else 0.0


def train_model(ds: LabeledDataset, cfg: RunConfig) -> TrainedModel:
    train, test = split_for(ds, cfg)
    classes = list(TASKS[cfg.task])
    lut = np.full(max(classes) + 1, -1, dtype=np.int64)
    lut[classes] = np.arange(len(classes))
    ytr, yte = lut[train.labels], lut[test.labels]
    log.info("%s on %s: %d train / %d test samples", cfg.model, cfg.task, len(train), len(test))
    history = RunHistory()
    fit_report = None

    if cfg.family == "ae":
        sizes = ae.PRESETS[cfg.model]
        cfgs = ae.layer_configs(sizes)
        if cfg.ae_iterations is not None:
            cfgs = ae.with_iterations(cfgs, cfg.ae_iterations)
        x_test = test.images.reshape(len(test), -1)

        def track(iteration, value, stack):
            rows, _ = ae.predict_ae(stack, x_test)
            history.add(iteration, value, _error_pct(rows, yte))

        params, fit_report = ae.fit_autoencoder(
            train.images, ytr, sizes, len(classes), seed=cfg.seed, optimizer=cfg.optimizer,
            cfgs=cfgs, head_iterations=cfg.head_iterations,
            finetune_iterations=cfg.finetune_iterations, finetune_l2_scale=cfg.finetune_l2_scale,
            classes=classes, callback=track,
        )
    elif cfg.family == "cnn":
        spec = cnn.preset_spec(cfg.model, len(classes))
        tcfg = cnn.CNNTrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                                  learning_rate=cfg.learning_rate, seed=cfg.seed)
        weights, history = cnn.train_cnn(spec, (train.images, ytr), (test.images, yte), tcfg)
        if not all(np.isfinite(loss) for _, loss, _ in history.epochs):
            raise NumericalError("cnn training loss became non-finite", cnn.flatten_params(weights))
        params = (spec, weights)
    else:
        kind = bl.BaselineKind(cfg.model.split(":", 1)[1], seed=cfg.seed)
        params = bl.train_baseline(kind, train.images, train.labels)

    return TrainedModel(cfg, classes, params, history, sorted(int(w) for w in test.writers), fit_report)


@dataclass
class EvalResult:
    report: ClassReport
    confusion: np.ndarray
    class_names: list
    predictions: np.ndarray
    labels: np.ndarray


def select(ds: LabeledDataset, model: TrainedModel, subset: str = "test") -> LabeledDataset:
    """Samples of ``ds`` from the model's held-out writers, the others, or all."""
    if subset == "all":
        return ds
    held_out = np.isin(ds.writer_ids, model.test_writers)
    if subset == "test":
        return ds.subset(held_out)
    if subset == "train":
        return ds.subset(~held_out)
    raise ValueError(f"unknown subset {subset!r}")


def check_classes(ds: LabeledDataset, model: TrainedModel) -> None:
    unknown = sorted(set(np.unique(ds.labels).tolist()) - set(model.classes))
    if unknown:
        raise ClassMismatchError(
            f"dataset has {len(np.unique(ds.labels))} classes but the {model.config.task} model "
            f"predicts {len(model.classes)}; labels {unknown[:5]}{'...' if len(unknown) > 5 else ''} "
            "are outside its class set"
        )


def evaluate(model: TrainedModel, ds: LabeledDataset) -> EvalResult:
    """Per-class report over the model's classes for every sample of ``ds``."""
    check_classes(ds, model)
    if len(ds) == 0:
        raise ValueError("nothing to evaluate: the selection is empty")
    preds = model.predict(ds.images)
    lut = {c: i for i, c in enumerate(model.classes)}
    p = np.array([lut[int(c)] for c in preds], dtype=np.int64)
    t = np.array([lut[int(c)] for c in ds.labels], dtype=np.int64)
    names = [ds.class_names[c] for c in model.classes]
    report = per_class_accuracy(p, t, names)
    report.rows = [replace(r, class_index=model.classes[r.class_index]) for r in report.rows]
    return EvalResult(report, confusion_matrix(p, t, len(names)), names, preds, ds.labels)


# -- checkpoints ------------------------------------------------------------

def to_checkpoint(model: TrainedModel) -> Checkpoint:
    meta = {
        "config": model.config.to_dict(),
        "classes": list(model.classes),
        "test_writers": list(model.test_writers),
        "history": [list(e) for e in model.history.epochs],
    }
    family = model.config.family
    if family == "ae":
        stack = model.params
        blocks = []
        for layer in stack.layers:
            blocks += [layer.w_enc, layer.b_enc, layer.w_dec, layer.b_dec]
        blocks += [stack.head.weight, stack.head.bias]
        return Checkpoint("ae", stack.layer_sizes, meta, blocks)
    if family == "cnn":
        spec, params = model.params
        meta["spec"] = {
            "blocks": [[b.filters, b.kernel, int(b.pool)] for b in spec.blocks],
            "weight_decay": list(spec.weight_decay),
            "num_classes": spec.num_classes,
        }
        return Checkpoint("cnn", list(spec.fc_sizes), meta, list(params))
    base = model.params
    keys = sorted(base.arrays)
    meta["baseline"] = {
        "kind": asdict(base.kind),
        "classes": base.classes.tolist(),
        "keys": keys,
        "dtypes": [np.asarray(base.arrays[k]).dtype.str for k in keys],
    }
    return Checkpoint("baseline", [], meta, [base.arrays[k] for k in keys])


def from_checkpoint(ckpt: Checkpoint) -> TrainedModel:
    meta = ckpt.meta
    cfg = RunConfig.from_dict(meta["config"])
    history = RunHistory()
    for epoch, loss, err in meta.get("history", []):
        history.add(epoch, loss, err)
    if ckpt.kind == "ae":
        n = len(ckpt.sizes)
        b = ckpt.blocks
        layers = [ae.AELayer(*b[4 * i:4 * i + 4]) for i in range(n)]
        params = ae.AEStack(layers, ae.SoftmaxHead(b[4 * n], b[4 * n + 1]), list(meta["classes"]))
    elif ckpt.kind == "cnn":
        s = meta["spec"]
        spec = cnn.CNNSpec(
            blocks=tuple(cnn.ConvBlock(f, k, bool(p)) for f, k, p in s["blocks"]),
            fc_sizes=tuple(ckpt.sizes),
            num_classes=s["num_classes"],
            weight_decay=tuple(s["weight_decay"]),
        )
        params = (spec, list(ckpt.blocks))
    else:
        s = meta["baseline"]
        arrays = {k: np.asarray(a).astype(np.dtype(dt)) for k, a, dt in zip(s["keys"], ckpt.blocks, s["dtypes"])}
        params = bl.BaselineModel(bl.BaselineKind(**s["kind"]), np.array(s["classes"], dtype=np.int64), arrays)
    return TrainedModel(cfg, list(meta["classes"]), params, history, list(meta["test_writers"]))
