"""Acceptance suite: one test group per criterion, summarised after the run.

The learning criteria train on 120 synthetic writers with seed 42 and take a
few minutes on one core. Every group records its checks through the
``criterion`` fixture, which prints a PASS/FAIL line per criterion at the end
of the session.
"""

import csv
import time

import numpy as np
import pytest

from glyphlab import autoencoder as ae
from glyphlab import baselines as B
from glyphlab import cnn, core, pipeline
from glyphlab import report as R
from glyphlab.data import forms, idx, ingest, netpbm, preprocess, synth
from glyphlab.data.dataset import TASKS, SplitSpec, LabeledDataset, split_subject_independent
from glyphlab.scg import scg_minimize
from oracles import (best_threshold_oracle, gnb_log_posterior_oracle, image_from_hist, integer_points,
                     knn_oracle, otsu_oracle, random_histograms)

SEED = 42
WRITERS = 120
TIME_LIMIT = 600.0
GRAD_TOL = 1e-5


# -- 1. gradient fidelity -----------------------------------------------------

def _ae_instance(rng):
    d, h = int(rng.integers(3, 8)), int(rng.integers(2, 6))
    layer = ae.AELayer(rng.normal(0, 0.5, (h, d)), rng.normal(0, 0.1, h),
                       rng.normal(0, 0.5, (d, h)), rng.normal(0, 0.1, d))
    c = ae.AETrainConfig(rng.uniform(0, 0.01), rng.uniform(0, 5), rng.uniform(0.05, 0.3), 1, 0.1, h)
    x = rng.random((int(rng.integers(2, 7)), d))
    _, g = ae.ae_objective(layer, x, c)
    num = core.numeric_gradient(lambda t: ae.ae_objective(ae.AELayer.unflatten(t, d, h), x, c)[0].total,
                                layer.flatten())
    return core.max_relative_error(g, num)


def _head_instance(rng):
    k, d, n = int(rng.integers(2, 6)), int(rng.integers(2, 7)), int(rng.integers(2, 9))
    f = ae.head_objective((k, d), rng.random((n, d)), core.one_hot(rng.integers(0, k, n), k), 0.002)
    theta = rng.normal(0, 0.5, k * d + k)
    return core.max_relative_error(f(theta)[1], core.numeric_gradient(lambda t: f(t)[0], theta))


def _finetune_instance(rng):
    d, k = 8, 3
    sizes = [int(rng.integers(3, 7)) for _ in range(int(rng.integers(1, 4)))]
    layers, prev = [], d
    for h in sizes:
        layers.append(ae.AELayer(rng.normal(0, 0.5, (h, prev)), rng.normal(0, 0.1, h),
                                 rng.normal(0, 0.5, (prev, h)), rng.normal(0, 0.1, prev)))
        prev = h
    stack = ae.AEStack(layers, ae.SoftmaxHead(rng.normal(0, 0.5, (k, prev)), rng.normal(0, 0.1, k)))
    x, onehot = rng.random((8, d)), core.one_hot(rng.integers(0, k, 8), k)
    l2s = [0.1 * ae.LAYER_L2[i] for i in range(len(sizes))]
    f = ae.finetune_objective(stack, x, onehot, l2s, 0.1 * ae.HEAD_L2)
    theta = ae.stack_to_theta(stack)
    return core.max_relative_error(f(theta)[1], core.numeric_gradient(lambda t: f(t)[0], theta))


def _cnn_instance(rng):
    pool = bool(rng.integers(0, 2))
    spec = cnn.CNNSpec(blocks=(cnn.ConvBlock(int(rng.integers(1, 4)), 3, pool),), fc_sizes=(4,),
                       num_classes=3, weight_decay=(float(rng.uniform(0, 0.1)),), input_shape=(6, 6))
    params = [rng.normal(0, 0.6, s) for s in spec.param_shapes()]
    x, y = rng.random((3, 6, 6)), rng.integers(0, 3, 3)
    onehot = core.one_hot(y, 3)

    def f(theta):
        p = cnn.unflatten_params(spec, theta)
        return cnn.loss_from_probs(spec, p, cnn.cnn_forward(spec, p, x)[0], onehot)

    g = cnn.flatten_params(cnn.cnn_backward(spec, params, x, y))
    return core.max_relative_error(g, core.numeric_gradient(f, cnn.flatten_params(params)))


def test_criterion_1_gradient_fidelity(criterion):
    with criterion(1, "gradient fidelity") as c:
        start = time.perf_counter()
        rng = np.random.default_rng(SEED)
        for name, make in (("ae objective", _ae_instance), ("softmax head", _head_instance),
                           ("fine-tune stack", _finetune_instance), ("cnn backward", _cnn_instance)):
            errs = [make(rng) for _ in range(20)]
            c.check(max(errs) <= GRAD_TOL, f"{name}: worst of 20 = {max(errs):.1e}")
        elapsed = time.perf_counter() - start
        c.check(elapsed < 60.0, f"runtime {elapsed:.1f} s")


# -- 2. optimizer ----------------------------------------------------------------

def test_criterion_2_scg_on_quadratic(criterion):
    with criterion(2, "optimizer") as c:
        rng = np.random.default_rng(SEED)
        q = rng.normal(size=(10, 10))
        a = q @ q.T + 10 * np.eye(10)
        target = rng.normal(size=10)

        def f(theta):
            d = theta - target
            return 0.5 * float(d @ a @ d), a @ d

        res = scg_minimize(f, np.zeros(10), 50)
        dist = float(np.linalg.norm(res.theta - target))
        c.check(dist <= 1e-6 and res.iterations <= 50,
                f"10-dim quadratic: |theta - theta*| = {dist:.1e} after {res.iterations} iterations")


# -- 3. oracle equivalence ---------------------------------------------------------

def test_criterion_3_oracle_equivalence(criterion):
    with criterion(3, "oracle equivalence") as c:
        rng = np.random.default_rng(SEED)
        x, y = integer_points(rng, 200, 8, 5)
        q, _ = integer_points(rng, 200, 8, 5)
        model = B.train_baseline(B.BaselineKind("knn", k=3), x, y)
        c.check(np.array_equal(B.predict_baseline(model, q), knn_oracle(x, y, q, 3)),
                "knn equals all-pairs oracle on 200 samples")

        hists = random_histograms(rng, 50)
        agree = sum(preprocess.otsu_threshold(image_from_hist(h)) == otsu_oracle(h) for h in hists)
        c.check(agree == 50, f"otsu equals exhaustive oracle on {agree}/50 histograms")

        toy = B.train_baseline(B.BaselineKind("gaussian_nb"), np.array([[-0.1], [0.1], [0.9], [1.1]]),
                               np.array([0, 0, 1, 1]))
        grid = np.linspace(-0.5, 1.5, 41)[:, None]
        want = [gnb_log_posterior_oracle(g.tolist(), [[0.0], [1.0]], [[0.01], [0.01]], [0.5, 0.5]) for g in grid]
        got = B.gnb_log_posterior(toy, grid)
        boundary_ok = np.array_equal(B.predict_baseline(toy, np.array([[0.4999], [0.5001]])), [0, 1])
        c.check(np.allclose(got, want, rtol=1e-12, atol=1e-12) and boundary_ok,
                "gaussian nb matches closed-form posterior, boundary at 0.5")

        ok = 0
        for _ in range(50):
            n = int(rng.integers(2, 30))
            v, lab = rng.integers(0, 8, n).astype(float), rng.integers(0, 3, n)
            got, exp = B.best_gini_split(v[:, None], lab, 3), best_threshold_oracle(v, lab)
            ok += (got is None and exp is None) or (
                got is not None and exp is not None and got[1] == exp[0] and abs(got[2] - exp[1]) <= 1e-12)
        c.check(ok == 50, f"depth-1 tree equals exhaustive split search on {ok}/50 cases")


# -- 4. pipeline integrity ----------------------------------------------------------

def test_criterion_4_pipeline_integrity(criterion, tmp_path):
    with criterion(4, "pipeline integrity") as c:
        ds900 = synth.synth_generate(900, seed=SEED)
        c.check(len(ds900) == 45_000, f"900 writers give {len(ds900)} samples")

        rng = np.random.default_rng(SEED)
        exact = 0
        for _ in range(20):
            cells = [(rng.random((64, 64)) < 0.3).astype(np.uint8) for _ in range(50)]
            out = forms.segment_form(forms.compose_form(cells), crop=2)
            exact += len(out) == 50 and all(np.array_equal(a[2:-2, 2:-2], b) for a, b in zip(cells, out))
        for wid, stream in enumerate(synth.writer_streams(SEED, 5)):
            netpbm.write_netpbm(tmp_path / f"{wid}.pgm", synth.synth_form(stream))
        _, logs = ingest.ingest_directory(tmp_path)
        kept = [len(lg.kept) for lg in logs]
        c.check(exact == 20 and kept == [50] * 5,
                f"compose/segment exact on {exact}/20 forms; synthetic scans keep {kept} cells")

        small = ds900.subset(ds900.writer_ids < 60)
        disjoint = 0
        for seed in range(100):
            tr, te = split_subject_independent(small, SplitSpec(0.85, seed))
            disjoint += not (set(tr.writer_ids) & set(te.writer_ids)) and len(tr) + len(te) == len(small)
        c.check(disjoint == 100, f"split writer-disjoint for {disjoint}/100 seeds")

        sample = ds900.subset(ds900.writer_ids < 40)
        idx.store_dataset(sample, tmp_path / "store")
        back = idx.load_dataset(tmp_path / "store")
        pix = float(np.max(np.abs(back.images - sample.images)))
        c.check(np.array_equal(back.labels, sample.labels) and np.array_equal(back.writer_ids, sample.writer_ids)
                and pix <= 1 / 255, f"IDX round trip: labels exact, max pixel error {pix:.4f}")


# -- 5/6/7. learning, trends and reporting on synthetic writers -------------------

@pytest.fixture(scope="module")
def digits():
    return synth.synth_generate(WRITERS, TASKS["digits"], seed=SEED)


@pytest.fixture(scope="module")
def combined():
    return synth.synth_generate(WRITERS, TASKS["combined"], seed=SEED)


@pytest.fixture(scope="module")
def runs():
    """Trained models shared between criteria, keyed by (model, task)."""
    return {}


def train(runs, ds: LabeledDataset, model: str, task: str):
    key = (model, task)
    if key not in runs:
        start = time.perf_counter()
        trained = pipeline.train_model(ds, pipeline.RunConfig(model=model, task=task, seed=SEED))
        seconds = time.perf_counter() - start
        res = pipeline.evaluate(trained, pipeline.select(ds, trained, "test"))
        runs[key] = (trained, res, seconds)
    return runs[key]


@pytest.mark.slow
def test_criterion_5_desk_scale_learning(criterion, digits, runs):
    with criterion(5, "desk-scale learning") as c:
        for model, floor in (("ae2", 92.0), ("cnn2", 90.0)):
            _, res, seconds = train(runs, digits, model, "digits")
            acc = res.report.overall_accuracy
            c.check(acc >= floor, f"{model} digits {acc:.2f}% (need >= {floor})")
            c.check(seconds <= TIME_LIMIT, f"{model} trained in {seconds:.0f} s")


@pytest.mark.slow
def test_criterion_6_baseline_trend(criterion, digits, runs):
    with criterion(6, "trend checks") as c:
        accs = {k: train(runs, digits, f"baseline:{k}", "digits")[1].report.overall_accuracy
                for k in ("linear_svm", "knn", "gaussian_nb")}
        for k in ("linear_svm", "knn"):
            c.check(accs[k] >= accs["gaussian_nb"] + 5.0,
                    f"{k} {accs[k]:.2f}% vs gaussian_nb {accs['gaussian_nb']:.2f}%")


@pytest.mark.slow
def test_criterion_6_depth_trend(criterion, combined, runs):
    with criterion(6, "trend checks") as c:
        a2 = train(runs, combined, "ae2", "combined")[1].report.overall_accuracy
        a3 = train(runs, combined, "ae3", "combined")[1].report.overall_accuracy
        c.check(a3 >= a2 - 0.5, f"combined ae3 {a3:.2f}% vs ae2 {a2:.2f}% (need ae3 >= ae2 - 0.5)")


@pytest.mark.slow
def test_criterion_7_reporting(criterion, combined, runs, tmp_path):
    with criterion(7, "reporting") as c:
        trained, res, _ = train(runs, combined, "ae2", "combined")
        R.emit_report(res.report, trained.history, tmp_path, model="ae2", task="combined",
                      confusion=res.confusion, class_names=res.class_names)
        with open(tmp_path / "per_class.csv", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        class_rows = [r for r in rows if r["class_name"] != "overall"]
        c.check(len(class_rows) == 50, f"{len(class_rows)} class rows")

        rep = res.report
        weighted = sum(r.support * r.accuracy for r in rep.rows) / sum(r.support for r in rep.rows)
        gap = abs(rep.overall_accuracy - weighted)
        c.check(gap <= 1e-9, f"overall vs weighted mean differ by {gap:.1e}")

        bad = [r["class_name"] for r in rows
               if round(float(r["accuracy_pct"]) + float(r["error_pct"]), 1) != 100.0]
        summary = (tmp_path / "summary.txt").read_text(encoding="utf-8")
        acc = float(summary.split("accuracy (%): ")[1].split()[0])
        err = float(summary.split("error (%): ")[1].split()[0])
        c.check(not bad and round(acc + err, 1) == 100.0, f"accuracy+error = 100.0 on all {len(rows)} rows")


@pytest.mark.slow
def test_criterion_2_training_runs_monotone(criterion, digits, runs):
    with criterion(2, "optimizer") as c:
        train(runs, digits, "ae2", "digits")  # reused when the learning criteria already ran
        traces = [(key, r) for key, (trained, _, _) in runs.items() if trained.fit_report is not None
                  for r in (*trained.fit_report.pretrain, *trained.fit_report.head, *trained.fit_report.finetune)]
        bad = [key for key, r in traces if np.any(np.diff(r.accepted_values) > 0)]
        c.check(traces and not bad, f"accepted values non-increasing on {len(traces) - len(bad)}/{len(traces)} "
                                    f"SCG runs from the learning criteria")
