import math

import numpy as np
import pytest

from dsgm.gnn import (
    GnnConfig,
    GnnModel,
    PreconditionError,
    TrainingError,
    accuracy,
    gnn_forward,
    graph_filter,
    init_gnn,
    interpolate_filter,
    load_model,
    masked_cross_entropy,
    save_model,
    softmax,
    spectral_coefficient_check,
    train_gnn,
    train_se_classifier,
    write_history_csv,
)
from dsgm.graphs import make_rng, normalized_adjacency, one_hot, sample_sbm, sbm_probabilities
from dsgm.spectra import eig_sym, spectral_embedding

from conftest import random_symmetric_01
from gradcheck import gnn_gradient_error, mlp_gradient_error


def test_graph_filter_basics(rng):
    s = random_symmetric_01(rng, 6)
    x = rng.standard_normal((6, 3))
    assert np.allclose(graph_filter(s, x, [np.eye(3)]), x)
    assert np.allclose(graph_filter(s, x, [np.zeros((3, 3)), np.eye(3)]), s @ x)
    p2 = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(graph_filter(p2, np.array([1.0, 0.0]), [1.0, 1.0]), [1.0, 1.0])
    with pytest.raises(ValueError):
        graph_filter(s, x, [np.eye(2)])


def test_forward_properties(rng):
    s = random_symmetric_01(rng, 10)
    x = rng.standard_normal((10, 3))
    cfg = GnnConfig(hidden=(4, 4))
    model = init_gnn(cfg, 3, 3, rng)
    logits, probs = gnn_forward(model, s, x)
    assert np.allclose(probs.sum(1), 1, atol=1e-9)
    again = gnn_forward(model, s, x)
    assert np.array_equal(logits, again[0])
    zero = GnnModel([np.zeros_like(h) for h in model.filters], model.slopes, np.zeros_like(model.classifier))
    assert np.allclose(gnn_forward(zero, s, x)[1], 1 / 3)
    lin = GnnModel([model.filters[0][:1]], np.array([0.25]), np.eye(4), "identity")
    assert np.allclose(gnn_forward(lin, s, x)[0], graph_filter(s, x, list(model.filters[0][:1])))
    with pytest.raises(ValueError):
        gnn_forward(model, s, x[:, :2])


def test_softmax_rows_sum_to_one(rng):
    for _ in range(50):
        z = rng.standard_normal((20, 4)) * rng.uniform(0.1, 300)
        assert np.allclose(softmax(z).sum(1), 1, atol=1e-9)


def test_cross_entropy():
    y = one_hot(np.array([0, 1, 2, 1]), 3)
    uni = np.full((4, 3), 1 / 3)
    assert masked_cross_entropy(uni, y, [0, 1, 2]) == pytest.approx(math.log(3))
    assert masked_cross_entropy(y, y, [0, 1, 2, 3]) == pytest.approx(0.0)
    p = uni.copy()
    p[3] = [1.0, 0.0, 0.0]
    assert masked_cross_entropy(p, y, [0, 1]) == masked_cross_entropy(uni, y, [0, 1])
    assert masked_cross_entropy(np.array([[1.0, 0.0]]), one_hot(np.array([1]), 2), [0]) == pytest.approx(-math.log(1e-12))
    with pytest.raises(ValueError):
        masked_cross_entropy(uni, y, [])


def test_accuracy_tie_break():
    p = np.array([[0.5, 0.5], [0.2, 0.8]])
    y = one_hot(np.array([0, 0]), 2)
    assert accuracy(p, y, [0, 1]) == 0.5


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("activation", ["prelu", "identity"])
def test_gnn_gradients(seed, activation):
    assert gnn_gradient_error(seed, activation) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_mlp_gradients(seed):
    assert mlp_gradient_error(seed) < 1e-4


def test_gnn_gradients_three_taps():
    assert gnn_gradient_error(11, taps=3, layers=3) < 1e-4


def _two_block_task(seed, n=120):
    labels = np.repeat([0, 1], n // 2)
    y = one_hot(labels)
    g = sample_sbm(y, [[0.9, 0.05], [0.05, 0.9]], seed)
    rng = make_rng(seed, 99)
    x = np.where(labels[:, None] == 0, 1.0, -1.0) * np.ones((n, 2)) + 0.3 * rng.standard_normal((n, 2))
    perm = rng.permutation(n)
    return g, x, y, np.sort(perm[: n // 2]), np.sort(perm[n // 2 :])


def test_training_separable_toy():
    g, x, y, tr, te = _two_block_task(0)
    s = normalized_adjacency(g)
    res = train_gnn(GnnConfig(hidden=(16, 16)), s, x, y, tr, 0, test_idx=te)
    assert res.history[-1].test_acc >= 0.95
    model, history = res
    assert len(history) <= 200


def test_zero_learning_rate_keeps_parameters():
    g, x, y, tr, _ = _two_block_task(1)
    s = normalized_adjacency(g)
    cfg = GnnConfig(hidden=(8, 8), lr=0.0, epochs=5)
    res = train_gnn(cfg, s, x, y, tr, 3)
    ref = init_gnn(cfg, 2, 2, make_rng(3))
    for a, b in zip(res.model.filters, ref.filters):
        assert np.array_equal(a, b)
    assert np.array_equal(res.model.classifier, ref.classifier)


def test_training_deterministic():
    g, x, y, tr, te = _two_block_task(2)
    s = normalized_adjacency(g)
    a = train_gnn(GnnConfig(hidden=(8, 8), epochs=30), s, x, y, tr, 5, test_idx=te)
    b = train_gnn(GnnConfig(hidden=(8, 8), epochs=30), s, x, y, tr, 5, test_idx=te)
    assert [r.train_loss for r in a.history] == [r.train_loss for r in b.history]


def test_loss_mostly_nonincreasing():
    ok = 0
    for seed in range(10):
        g, x, y, tr, _ = _two_block_task(seed)
        res = train_gnn(GnnConfig(hidden=(8, 8), dropout=0.0, epochs=60), normalized_adjacency(g), x, y, tr, seed)
        losses = np.array([r.train_loss for r in res.history])
        ok += np.mean(np.diff(losses) <= 1e-12) >= 0.95
    assert ok >= 9


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises():
    g, x, y, tr, _ = _two_block_task(3)
    with pytest.raises(TrainingError):
        train_gnn(GnnConfig(hidden=(8, 8), dropout=0.0, epochs=5), g.adjacency * 1e3, x * 1e300, y, tr, 0)


def test_se_classifier_on_clean_embedding():
    n = 40
    y = one_hot(np.repeat([0, 1], n // 2))
    d = eig_sym(sbm_probabilities(y, [[0.5, 0.1], [0.1, 0.5]]))
    emb = spectral_embedding(d, 2)
    tr = np.arange(0, n, 2)
    res = train_se_classifier(emb, y, tr, seed=0, dropout=0.0)
    assert res.history[-1].train_acc == 1.0
    again = train_se_classifier(emb, y, tr, seed=0, dropout=0.0)
    assert np.array_equal(res.model.w1, again.model.w1)


def test_checkpoint_round_trip(tmp_path, rng):
    cfg = GnnConfig(hidden=(4, 5))
    model = init_gnn(cfg, 3, 2, rng)
    save_model(model, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    for a, b in zip(model.filters, back.filters):
        assert np.array_equal(a, b)
    assert back.activation == "prelu" and np.array_equal(back.classifier, model.classifier)


def test_history_csv(tmp_path):
    g, x, y, tr, te = _two_block_task(4)
    res = train_gnn(GnnConfig(hidden=(4, 4), epochs=3), normalized_adjacency(g), x, y, tr, 0, test_idx=te)
    write_history_csv(res.history, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,test_acc" and len(lines) == 4


# --- exact interpolation with one filter


def test_interpolate_small_cases():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    h = interpolate_filter(a, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert np.allclose(np.asarray(h, float), [0.0, 1.0])
    rng = np.random.default_rng(8)
    b = random_symmetric_01(rng, 6)
    while np.min(np.diff(np.sort(np.linalg.eigvalsh(b)))) < 1e-3:
        b = random_symmetric_01(rng, 6)
    x = rng.standard_normal(6)
    h = np.asarray(interpolate_filter(b, x, x), float)
    assert np.allclose(h, np.eye(6)[0], atol=1e-8)


def _separated_instance(rng, sep):
    while True:
        n = int(rng.integers(3, 13))
        a = random_symmetric_01(rng, n)
        d = eig_sym(a)
        rho = np.max(np.abs(d.values))
        x = rng.standard_normal(n)
        chk = spectral_coefficient_check(d, x)
        if rho > 0 and chk.min_gap >= sep * rho and chk.min_coefficient >= sep:
            return a, x, rng.standard_normal(n)


def test_interpolate_fifty_instances_tight():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        a, x, y = _separated_instance(rng, 0.05)
        h = interpolate_filter(a, x, y)
        worst = max(worst, np.max(np.abs(graph_filter(a, x, h) - y)) / max(1, np.max(np.abs(y))))
    assert worst <= 1e-8


def test_interpolate_is_inverse_of_filter():
    rng = np.random.default_rng(9)
    for _ in range(30):
        a, x, _ = _separated_instance(rng, 0.01)
        h = rng.standard_normal(a.shape[0])
        y = graph_filter(a, x, h)
        back = interpolate_filter(a, x, y)
        assert np.max(np.abs(graph_filter(a, x, back) - y)) <= 1e-6 * max(1, np.max(np.abs(y)))


def test_interpolate_preconditions():
    k3 = np.ones((3, 3)) - np.eye(3)
    with pytest.raises(PreconditionError, match="repeated eigenvalue"):
        interpolate_filter(k3, np.array([1.0, 2.0, 3.0]), np.ones(3))
    path = np.diag(np.ones(3), 1) + np.diag(np.ones(3), -1)
    v1 = eig_sym(path).vectors[:, 0]
    with pytest.raises(PreconditionError, match="orthogonal"):
        interpolate_filter(path, v1, np.ones(4))


def test_coefficient_check():
    path = np.diag(np.ones(4), 1) + np.diag(np.ones(4), -1)
    d = eig_sym(path)
    assert not spectral_coefficient_check(d, d.vectors[:, 0]).ok
    k3 = eig_sym(np.ones((3, 3)) - np.eye(3))
    assert spectral_coefficient_check(k3, np.array([1.0, 2.0, 3.0])).min_gap < 1e-14
    rng = np.random.default_rng(10)
    a = random_symmetric_01(rng, 10)
    while np.min(np.diff(np.sort(np.linalg.eigvalsh(a)))) < 1e-6:
        a = random_symmetric_01(rng, 10)
    d = eig_sym(a)
    fails = sum(not spectral_coefficient_check(d, rng.standard_normal(10), 1e-12).ok for _ in range(1000))
    assert fails == 0


def test_positive_taps_preserve_coefficients():
    # a filter with positive taps on a PSD-shifted operator keeps every spectral coefficient nonzero
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(3, 11))
        a = random_symmetric_01(rng, n)
        shifted = a + (np.max(np.abs(np.linalg.eigvalsh(a))) + 0.1) * np.eye(n)
        d = eig_sym(shifted)
        x = rng.standard_normal(n)
        if not spectral_coefficient_check(d, x, 1e-8).ok:
            continue
        h = rng.uniform(0.1, 1.0, 3)
        assert spectral_coefficient_check(d, graph_filter(shifted, x, h), 1e-12).min_coefficient > 0
