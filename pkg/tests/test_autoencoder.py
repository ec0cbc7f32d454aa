import numpy as np
import pytest

from glyphlab import autoencoder as ae
from glyphlab import core


def cfg(hidden, l2=0.004, beta=4.0, rho=0.15, iters=10, lr=0.15):
    return ae.AETrainConfig(l2, beta, rho, iters, lr, hidden)


def random_layer(rng, d, h, scale=0.5):
    return ae.AELayer(rng.normal(0, scale, (h, d)), rng.normal(0, 0.1, h),
                      rng.normal(0, scale, (d, h)), rng.normal(0, 0.1, d))


def test_tabulated_settings():
    two, three = ae.layer_configs([100, 50]), ae.layer_configs([100, 100, 50])
    assert [c.iterations for c in two] == [350, 300]
    assert [c.iterations for c in three] == [350, 300, 350]
    assert [c.learning_rate for c in three] == [0.15, 0.1, 0.1]
    assert [c.l2_weight for c in three] == [0.004, 0.002, 0.002]
    assert [c.sparsity_target for c in three] == [0.15, 0.1, 0.1]
    assert all(c.sparsity_weight == 4.0 for c in three)
    assert ae.PRESETS == {"ae2": (100, 50), "ae3": (100, 100, 50)}
    with pytest.raises(ValueError):
        ae.layer_configs([10, 10, 10, 10])


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(4, rho=1.0)
    with pytest.raises(ValueError):
        cfg(4, l2=-1.0)
    with pytest.raises(ValueError):
        cfg(4, lr=0.0)


def test_objective_zero_for_exact_reconstruction_without_penalties():
    # a decoder that saturates to the binary inputs reconstructs them (to round-off)
    x = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    layer = ae.AELayer(np.zeros((2, 3)), np.zeros(2), np.zeros((3, 2)), np.zeros(3))
    c = ae.AETrainConfig(0.0, 0.0, 0.5, 1, 0.1, 2)
    loss, _ = ae.ae_objective(layer, np.full((4, 3), 0.5), c)
    assert loss.total == 0.0
    layer.b_dec = np.array([800.0, -800.0, 800.0])
    loss, _ = ae.ae_objective(layer, x[:1], c)
    assert loss.total == 0.0


def test_l2_penalty_closed_form_on_scalar_layer():
    layer = ae.AELayer(np.array([[0.7]]), np.zeros(1), np.array([[0.0]]), np.zeros(1))
    loss, _ = ae.ae_objective(layer, np.array([[0.3]]), cfg(1, l2=0.004))
    assert loss.l2_penalty == 0.004 * 0.7 ** 2


def test_loss_decomposition_is_exact():
    rng = np.random.default_rng(0)
    layer = random_layer(rng, 6, 4)
    loss, _ = ae.ae_objective(layer, rng.random((5, 6)), cfg(4))
    assert loss.total == loss.reconstruction + loss.l2_penalty + loss.sparsity_penalty
    assert min(loss.reconstruction, loss.l2_penalty, loss.sparsity_penalty) >= 0


def test_ae_objective_gradient_check():
    rng = np.random.default_rng(1)
    d, h = 6, 4
    for _ in range(5):
        layer = random_layer(rng, d, h)
        x = rng.random((5, d))
        c = cfg(h, l2=rng.uniform(0, 0.01), beta=rng.uniform(0, 5), rho=rng.uniform(0.05, 0.3))
        _, g = ae.ae_objective(layer, x, c)
        num = core.numeric_gradient(
            lambda t: ae.ae_objective(ae.AELayer.unflatten(t, d, h), x, c)[0].total, layer.flatten())
        assert core.max_relative_error(g, num) <= 1e-6


def test_layer_flatten_round_trip():
    rng = np.random.default_rng(2)
    layer = random_layer(rng, 5, 3)
    back = ae.AELayer.unflatten(layer.flatten(), 5, 3)
    for a, b in zip((layer.w_enc, layer.b_enc, layer.w_dec, layer.b_dec),
                    (back.w_enc, back.b_enc, back.w_dec, back.b_dec)):
        np.testing.assert_array_equal(a, b)


def toy_images(seed=3, n=40, d=16):
    rng = np.random.default_rng(seed)
    protos = rng.random((4, d)) < 0.4
    labels = np.arange(n) % 4
    x = np.clip(protos[labels] + rng.normal(0, 0.1, (n, d)), 0, 1)
    return x, labels


def test_pretraining_is_greedy_invariant_and_deterministic():
    x, _ = toy_images()
    cfgs3 = [cfg(8, iters=15), cfg(6, iters=10, rho=0.1), cfg(4, iters=10, rho=0.1)]
    s1 = ae.pretrain_stack(x, [8], cfgs3[:1], seed=11)
    s3 = ae.pretrain_stack(x, [8, 6, 4], cfgs3, seed=11)
    s3b = ae.pretrain_stack(x, [8, 6, 4], cfgs3, seed=11)
    np.testing.assert_array_equal(s1.layers[0].w_enc, s3.layers[0].w_enc)
    for a, b in zip(s3.layers, s3b.layers):
        np.testing.assert_array_equal(a.flatten(), b.flatten())
    assert s3.layer_sizes == [8, 6, 4]


def test_pretraining_runs_stated_iterations_and_never_increases():
    x, _ = toy_images()
    hist = []
    ae.pretrain_stack(x, [8, 4], [cfg(8, iters=12), cfg(4, iters=9, rho=0.1)], seed=0, history=hist)
    assert [r.iterations for r in hist] == [12, 9]
    for r in hist:
        assert np.all(np.diff(r.accepted_values) <= 0)


def test_pretraining_rejects_misaligned_configs():
    x, _ = toy_images()
    with pytest.raises(ValueError):
        ae.pretrain_stack(x, [8, 4], [cfg(8)], seed=0)
    with pytest.raises(ValueError):
        ae.pretrain_stack(x, [8, 4], [cfg(8), cfg(5)], seed=0)
    with pytest.raises(ValueError):
        ae.pretrain_stack(x, [], seed=0)


def test_dimension_chain_is_checked():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="chain"):
        ae.AEStack([random_layer(rng, 6, 4), random_layer(rng, 5, 3)])


def test_gd_fallback_takes_learning_rate_sized_steps():
    # one full-batch epoch is a single step of -lr * gradient from the initial layer
    x, _ = toy_images()
    c = cfg(6, iters=1, lr=0.15)
    got = ae.train_layer(x, c, np.random.default_rng(0), optimizer="gd", batch_size=len(x))
    init = ae.AELayer.init(np.random.default_rng(0), 16, 6)
    _, g = ae.ae_objective(init, x, c)
    np.testing.assert_allclose(got.flatten(), init.flatten() - 0.15 * g, rtol=1e-12, atol=1e-14)
    with pytest.raises(ValueError):
        ae.train_layer(x, cfg(6), np.random.default_rng(0), optimizer="adam")


def test_softmax_head_separable_toy():
    feats = np.array([[0.0, 0.0], [0.1, 0.2], [1.0, 1.0], [0.9, 0.8]])
    labels = np.array([0, 0, 1, 1])
    head = ae.train_softmax_head(feats, labels, 2, 100)
    probs = head.probabilities(feats)
    np.testing.assert_array_equal(probs.argmax(axis=1), labels)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        ae.train_softmax_head(feats, np.array([0, 0, 1, 2]), 2)


def test_head_objective_gradient():
    rng = np.random.default_rng(4)
    feats = rng.random((7, 5))
    onehot = core.one_hot(rng.integers(0, 3, 7), 3)
    f = ae.head_objective((3, 5), feats, onehot, 0.002)
    theta = rng.normal(size=18)
    assert core.max_relative_error(f(theta)[1], core.numeric_gradient(lambda t: f(t)[0], theta)) <= 1e-6


def small_stack(rng, sizes=(6, 5, 3), classes=3, d=8):
    layers, prev = [], d
    for h in sizes:
        layers.append(random_layer(rng, prev, h))
        prev = h
    head = ae.SoftmaxHead(rng.normal(0, 0.5, (classes, prev)), rng.normal(0, 0.1, classes))
    return ae.AEStack(layers, head, list(range(classes)))


def test_finetune_gradient_check_on_eight_samples():
    rng = np.random.default_rng(5)
    stack = small_stack(rng)
    x = rng.random((8, 8))
    onehot = core.one_hot(np.arange(8) % 3, 3)
    f = ae.finetune_objective(stack, x, onehot, [0.004, 0.002, 0.002], 0.002)
    theta = ae.stack_to_theta(stack)
    assert core.max_relative_error(f(theta)[1], core.numeric_gradient(lambda t: f(t)[0], theta)) <= 1e-5


def test_finetune_zero_iterations_is_identity_and_learns_toy():
    rng = np.random.default_rng(6)
    x, y = toy_images(7, n=8)
    stack = small_stack(rng, sizes=(6, 4), classes=4, d=16)
    same = ae.fine_tune(stack, x, y, 0)
    assert same is stack
    hist = []
    cfgs = [cfg(6), cfg(4)]
    tuned = ae.fine_tune(stack, x, y, 200, cfgs, history=hist)
    assert np.all(np.diff(hist[0].accepted_values) <= 0)
    pred, probs = ae.predict_ae(tuned, x)
    assert np.all(pred == y)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    # decoders are carried over untouched
    np.testing.assert_array_equal(tuned.layers[0].w_dec, stack.layers[0].w_dec)


def test_predict_tie_rule_and_dimension_check():
    rng = np.random.default_rng(7)
    stack = small_stack(rng)
    stack.head = ae.SoftmaxHead(np.zeros((3, 3)), np.zeros(3))
    pred, _ = ae.predict_ae(stack, rng.random((5, 8)))
    assert np.all(pred == 0)
    with pytest.raises(ValueError):
        ae.predict_ae(stack, rng.random((5, 9)))


def test_fit_autoencoder_end_to_end_is_deterministic():
    x, y = toy_images(8, n=60)
    cfgs = [cfg(8, iters=20), cfg(4, iters=20, rho=0.1)]
    runs = [ae.fit_autoencoder(x, y, [8, 4], 4, seed=1, cfgs=cfgs, head_iterations=30,
                               finetune_iterations=30) for _ in range(2)]
    (a, rep), (b, _) = runs
    np.testing.assert_array_equal(ae.stack_to_theta(a), ae.stack_to_theta(b))
    assert len(rep.pretrain) == 2 and len(rep.head) == 1 and len(rep.finetune) == 1
    pred, _ = ae.predict_ae(a, x)
    assert np.mean(pred == y) > 0.9


def test_finetune_l2_scale_enters_the_objective():
    rng = np.random.default_rng(9)
    stack = small_stack(rng)
    x, y = rng.random((8, 8)), np.arange(8) % 3
    cfgs = [cfg(6), cfg(5, l2=0.002), cfg(3, l2=0.002)]
    onehot = core.one_hot(y, 3)
    for scale in (1.0, 0.1, 0.0):
        hist = []
        ae.fine_tune(stack, x, y, 1, cfgs, l2_scale=scale, history=hist)
        f = ae.finetune_objective(stack, x, onehot, [scale * c.l2_weight for c in cfgs], scale * ae.HEAD_L2)
        assert hist[0].accepted_values[0] == f(ae.stack_to_theta(stack))[0]
    assert ae.FINETUNE_L2_SCALE == 0.1
    with pytest.raises(ValueError):
        ae.fine_tune(stack, x, y, 1, cfgs, l2_scale=-1.0)
