import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embed_audit.core import (
    AdamState,
    Network,
    TrainConfig,
    adam_step,
    best_permutation_agreement,
    kmeans,
    mean_squared_error,
    roc_auc,
    set_precision_recall,
    soft_cross_entropy,
    softmax,
    softmax_cross_entropy,
    train_network,
)
from embed_audit.errors import InvalidArgument, NumericFailure


def pairwise_auc(scores, labels):
    """O(n^2) reference: P(pos > neg) + 0.5 P(tie) over all pairs."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def reference_adam(x, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return x


# ---------------------------------------------------------------- adam


def test_adam_zero_gradient_is_fixed_point():
    p = np.array([1.5, -2.0, 0.25])
    state = AdamState.like(p)
    for _ in range(10):
        p2 = adam_step(p, np.zeros(3), state)
        np.testing.assert_array_equal(p2, p)
    assert state.step_count == 10


def test_adam_first_step():
    state = AdamState.zeros((), learning_rate=1e-3)
    p = adam_step(np.array(0.0), np.array(1.0), state)
    assert abs(float(p) + 0.001) < 1e-6
    assert state.step_count == 1


def test_adam_minimizes_square():
    p = np.array(1.0)
    state = AdamState.like(p, learning_rate=1e-3)
    for _ in range(5000):
        p = adam_step(p, 2 * p, state)
    assert abs(float(p)) < 0.01
    ref = reference_adam(1.0, lambda x: 2 * x, 1e-3, 5000)
    assert abs(float(p) - ref) < 1e-12


def test_adam_matches_reference_recurrence_at_1e6():
    rng = np.random.default_rng(0)
    p = rng.normal(size=4)
    state = AdamState.like(p, learning_rate=0.01)
    x = p.copy()
    for _ in range(50):
        p = adam_step(p, np.sin(p) + p, state)
    for i in range(4):
        ref = reference_adam(x[i], lambda z: math.sin(z) + z, 0.01, 50)
        assert abs(p[i] - ref) <= 1e-6 * max(1.0, abs(ref))


def test_adam_shape_mismatch():
    state = AdamState.zeros((3,))
    with pytest.raises(InvalidArgument):
        adam_step(np.zeros(3), np.zeros(4), state)


@pytest.mark.parametrize("kw", [{"beta1": 1.0}, {"beta2": 0.0}, {"epsilon": 0.0}, {"learning_rate": -1.0}])
def test_adam_state_validation(kw):
    with pytest.raises(InvalidArgument):
        AdamState.zeros((2,), **kw)


@given(st.integers(1, 30), st.lists(st.floats(-5, 5), min_size=1, max_size=6))
@settings(max_examples=30, deadline=None)
def test_adam_zero_gradient_property(n_steps, values):
    p = np.array(values)
    state = AdamState.like(p)
    for _ in range(n_steps):
        p = adam_step(p, np.zeros_like(p), state)
    np.testing.assert_array_equal(p, np.array(values))


# ---------------------------------------------------------------- softmax cross-entropy


def test_cross_entropy_uniform():
    loss, _ = softmax_cross_entropy(np.zeros((3, 4)), np.array([0, 1, 3]))
    assert loss == pytest.approx(math.log(4), abs=1e-12)


def test_cross_entropy_two_class_closed_form():
    loss, _ = softmax_cross_entropy(np.array([[1.0, 0.0]]), np.array([0]))
    assert loss == pytest.approx(0.31326, abs=1e-5)
    assert loss == pytest.approx(math.log1p(math.exp(-1)), abs=1e-15)


def test_cross_entropy_saturated():
    loss, _ = softmax_cross_entropy(np.array([[50.0, 0.0]]), np.array([0]))
    assert loss < 1e-8


def test_cross_entropy_bad_label():
    with pytest.raises(InvalidArgument):
        softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(InvalidArgument):
        softmax_cross_entropy(np.zeros((2, 3)), np.array([0, -1]))


def _central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def _rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


@pytest.mark.parametrize("seed", range(5))
def test_cross_entropy_gradient_finite_difference(seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(5, 4))
    labels = rng.integers(0, 4, size=5)
    _, grad = softmax_cross_entropy(logits, labels)
    num = _central_diff(lambda z: softmax_cross_entropy(z, labels)[0], logits)
    assert _rel_err(grad, num) < 1e-6


def test_soft_cross_entropy_matches_hard_on_one_hot():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(6, 3))
    labels = rng.integers(0, 3, size=6)
    hard = softmax_cross_entropy(logits, labels)
    soft = soft_cross_entropy(logits, np.eye(3)[labels])
    assert soft[0] == pytest.approx(hard[0], abs=1e-12)
    np.testing.assert_allclose(soft[1], hard[1], atol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    p = softmax(rng.normal(scale=30, size=(100, 7)))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p >= 0)


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_network_backward_finite_difference(activation):
    rng = np.random.default_rng(3)
    net = Network([4, 5, 3], activation, seed=1)
    x = rng.normal(size=(6, 4))
    y = rng.integers(0, 3, size=6)
    acts = net.forward(x)
    _, g_out = softmax_cross_entropy(acts[-1], y)
    gw, gb, gx = net.backward(acts, g_out)

    def loss_with(i, w):
        saved = net.weights[i]
        net.weights[i] = w
        value = softmax_cross_entropy(net(x), y)[0]
        net.weights[i] = saved
        return value

    for i in range(net.n_layers):
        num = _central_diff(lambda w, i=i: loss_with(i, w), net.weights[i].copy())
        assert _rel_err(gw[i], num) < 1e-6
    num_x = _central_diff(lambda z: softmax_cross_entropy(net(z), y)[0], x)
    assert _rel_err(gx, num_x) < 1e-6


def test_mse_gradient():
    rng = np.random.default_rng(4)
    out, tgt = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    _, grad = mean_squared_error(out, tgt)
    num = _central_diff(lambda o: mean_squared_error(o, tgt)[0], out)
    assert _rel_err(grad, num) < 1e-6


def test_train_network_deterministic_and_learns():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(200, 2))
    y = (x[:, 0] + x[:, 1] > 0).astype(int)
    cfg = TrainConfig(epochs=20, seed=3)
    curves = []
    for _ in range(2):
        net = Network([2, 8, 2], "tanh", seed=3)
        curves.append(train_network(net, x, lambda o, i: softmax_cross_entropy(o, y[i]), cfg))
    assert curves[0] == curves[1]
    assert curves[0][-1] < curves[0][0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_network_rejects_divergence():
    x = np.ones((8, 1))
    net = Network([1, 2], "linear", seed=0)
    cfg = TrainConfig(epochs=3, learning_rate=1e300, optimizer="sgd")
    with pytest.raises(NumericFailure):
        train_network(net, x, lambda o, i: mean_squared_error(o * 1e300, np.zeros_like(o)), cfg)


@pytest.mark.parametrize("kw", [{"epochs": -1}, {"batch_size": 0}, {"optimizer": "rmsprop"}, {"l2_penalty": -0.1}])
def test_train_config_validation(kw):
    with pytest.raises(InvalidArgument):
        TrainConfig(**kw)


# ---------------------------------------------------------------- k-means


def test_kmeans_separated_pairs():
    pts = np.array([[0, 0], [0.1, 0], [10, 10], [10.1, 10]], dtype=float)
    assign, _ = kmeans(pts, 2, seed=0)
    assert assign[0] == assign[1] and assign[2] == assign[3] and assign[0] != assign[2]


def test_kmeans_single_cluster_is_mean():
    pts = np.random.default_rng(0).normal(size=(30, 3))
    assign, cents = kmeans(pts, 1, seed=4)
    assert set(assign) == {0}
    np.testing.assert_allclose(cents[0], pts.mean(axis=0), atol=1e-12)


def test_kmeans_k_equals_n():
    pts = np.random.default_rng(1).normal(size=(7, 2))
    assign, cents = kmeans(pts, 7, seed=2)
    assert sorted(assign) == list(range(7))
    assert np.sum((pts - cents[assign]) ** 2) == pytest.approx(0.0, abs=1e-20)


@pytest.mark.parametrize("k", [0, -1, 8])
def test_kmeans_bad_k(k):
    with pytest.raises(InvalidArgument):
        kmeans(np.zeros((7, 2)), k, seed=0)


def test_kmeans_deterministic():
    pts = np.random.default_rng(2).normal(size=(100, 4))
    a1, c1 = kmeans(pts, 5, seed=11)
    a2, c2 = kmeans(pts, 5, seed=11)
    assert a1 == a2
    np.testing.assert_array_equal(c1, c2)


@given(st.integers(0, 10_000), st.integers(2, 6))
@settings(max_examples=25, deadline=None)
def test_kmeans_inertia_non_increasing(seed, k):
    pts = np.random.default_rng(seed).normal(size=(40, 3))
    trace = []
    assign, _ = kmeans(pts, k, seed=seed, trace=trace)
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))
    assert all(0 <= c < k for c in assign)


def test_best_permutation_agreement():
    assert best_permutation_agreement([1, 1, 0, 0, 2], [0, 0, 1, 1, 2]) == 1.0
    assert best_permutation_agreement([0, 0, 0, 0], [0, 0, 1, 1]) == 0.5


# ---------------------------------------------------------------- ROC / AUC


def test_roc_perfect_and_ties():
    assert roc_auc([0.9, 0.1], [1, 0]).auc == 1.0
    assert roc_auc([0.3] * 6, [1, 0, 1, 0, 1, 0]).auc == 0.5


def test_roc_known_value():
    scores, labels = [0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]
    assert pairwise_auc(scores, labels) == 0.75
    assert roc_auc(scores, labels).auc == 0.75


def test_roc_single_class():
    with pytest.raises(InvalidArgument):
        roc_auc([0.1, 0.2], [1, 1])


def test_roc_matches_pairwise_oracle_on_200_instances():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        # coarse rounding forces ties
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))
        assert roc_auc(scores, labels).auc == pairwise_auc(scores.tolist(), labels.tolist())


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.integers(0, 1)), min_size=2, max_size=40))
@settings(max_examples=100, deadline=None)
def test_roc_curve_invariants(pairs):
    scores = [s for s, _ in pairs]
    labels = [y for _, y in pairs]
    if len(set(labels)) < 2:
        return
    curve = roc_auc(scores, labels)
    fpr = [p[0] for p in curve.points]
    assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)
    assert all(b >= a for a, b in zip(fpr, fpr[1:]))
    assert abs(curve.auc - curve.trapezoid_area()) < 1e-12
    assert 0.0 <= curve.auc <= 1.0


@given(st.lists(st.integers(0, 1), min_size=2, max_size=40), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_roc_flip_and_monotone_transform(labels, seed):
    if len(set(labels)) < 2:
        return
    scores = np.random.default_rng(seed).permutation(len(labels)).astype(float)
    auc = roc_auc(scores, labels).auc
    flipped = roc_auc(scores, [1 - y for y in labels]).auc
    assert auc == pytest.approx(1 - flipped, abs=1e-12)
    assert roc_auc(np.exp(scores / 10) + 3, labels).auc == auc


# ---------------------------------------------------------------- precision / recall


def test_precision_recall_cases():
    assert tuple(set_precision_recall({"a", "b"}, {"a", "b"}))[:2] == (1.0, 1.0)
    pr = set_precision_recall({"a", "b", "c"}, {"a", "b", "d"})
    assert pr.precision == pytest.approx(2 / 3) and pr.recall == pytest.approx(2 / 3)
    empty = set_precision_recall(set(), {"a"})
    assert (empty.precision, empty.recall, empty.degenerate) == (1.0, 0.0, True)


def test_precision_recall_empty_truth():
    with pytest.raises(InvalidArgument):
        set_precision_recall({"a"}, set())
