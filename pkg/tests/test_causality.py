from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forge.causality import (CausalityTrainConfig, MotifNetwork, estimate_batch_causality, group_penalty,
                             load_matrix, local_motif_loss, lstm_forward, normalize_causality,
                             partition_causality, prox_group_lasso, save_matrix, smooth_loss_and_grad,
                             train_motif_network, train_networks)
from forge.data import TraceSet, split_disjoint
from forge.motif import build_motif_set, indicator_series
from helpers import numeric_grad, rel_error

CFG = CausalityTrainConfig()


def planted_indicators(n=200, L=6, m=4, cause=2, effect=0, seed=0):
    """Motif ``cause`` at t forces ``effect`` at t+1; effect never occurs otherwise."""
    rng = np.random.default_rng(seed)
    seq = np.empty((n, L), dtype=int)
    for r in range(n):
        for t in range(L):
            seq[r, t] = effect if t > 0 and seq[r, t - 1] == cause else rng.integers(1, m)
    return indicator_series(seq, m)


def naive_loss(net: MotifNetwork, data, lam):
    """Plain-loop LSTM and loss, written independently of forge.nn."""
    p = net.net.params
    H = p["U"].shape[1]
    sig = lambda a: 1.0 / (1.0 + np.exp(-a))
    total = 0.0
    for seq in data:
        h = np.zeros(H)
        c = np.zeros(H)
        preds = []
        for x in seq:
            a = p["W"] @ x + p["U"] @ h + p["b"]
            i, f, g, o = sig(a[:H]), sig(a[H:2 * H]), np.tanh(a[2 * H:3 * H]), sig(a[3 * H:])
            c = f * c + i * g
            h = o * np.tanh(c)
            preds.append(float(p["V"][0] @ h + p["c"][0]))
        for t in range(len(seq) - 1):
            total += (preds[t] - seq[t + 1][net.target]) ** 2
    pen = sum(np.sqrt(sum(p["W"][r, j] ** 2 for r in range(p["W"].shape[0]))) for j in range(p["W"].shape[1]))
    return total / len(data) + lam * pen


def test_zero_network_predicts_zero():
    net = MotifNetwork.zeros(0, 3, 4)
    y, h = lstm_forward(net, np.eye(3)[[0, 1, 2, 1]])
    assert np.allclose(y, 0) and np.allclose(h, 0)


def test_forward_is_stateless_between_calls():
    net = MotifNetwork.init(0, 3, 2, np.random.default_rng(0), scale=0.5)
    x = np.eye(3)[[1]]
    assert np.array_equal(lstm_forward(net, x)[1], lstm_forward(net, x)[1])


def test_local_loss_examples():
    data = indicator_series(np.array([[0, 1, 1], [1, 0, 1]]), 2)
    zero = MotifNetwork.zeros(1, 2, 3)
    assert local_motif_loss(zero, np.zeros((2, 3, 2)), 0.5) == 0.0
    # target 1 occurs 3 times after the first step, over 2 sequences
    assert local_motif_loss(zero, data, 0.5) == pytest.approx(3 / 2)


def test_local_loss_matches_naive_oracle():
    rng = np.random.default_rng(5)
    net = MotifNetwork.init(1, 3, 2, rng, scale=0.7)
    data = indicator_series(rng.integers(0, 3, size=(4, 5)), 3)
    assert local_motif_loss(net, data, 0.3) == pytest.approx(naive_loss(net, data, 0.3), abs=1e-10)


def test_smooth_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    net = MotifNetwork.init(2, 3, 2, rng, scale=0.7)
    data = indicator_series(rng.integers(0, 3, size=(4, 5)), 3)
    _, grads = smooth_loss_and_grad(net, data)
    f = lambda: smooth_loss_and_grad(net, data, need_grad=False)[0]
    for k, v in net.net.params.items():
        assert rel_error(grads[k], numeric_grad(f, v)) < 1e-4, k


def test_prox_examples():
    W = np.array([[0.3, 3.0], [0.4, 4.0]])
    out = prox_group_lasso(W, lam=1.0, step=1.0)
    assert np.allclose(out[:, 0], 0.0)
    assert np.allclose(out[:, 1], [2.4, 3.2])
    assert np.array_equal(prox_group_lasso(W, 0.0, 1.0), W)


def test_prox_closed_form_on_random_columns():
    rng = np.random.default_rng(7)
    W = rng.normal(size=(8, 1000)) * rng.uniform(0, 2, size=1000)
    lam, step = 0.7, 0.9
    out = prox_group_lasso(W, lam, step)
    for j in range(1000):
        n = np.linalg.norm(W[:, j])
        expected = max(0.0, 1.0 - lam * step / n) * W[:, j]
        assert np.max(np.abs(out[:, j] - expected)) <= 1e-12


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.floats(0, 2), st.floats(0.01, 1))
def test_prox_shrinks_and_zero_is_absorbing(seed, lam, step):
    W = np.random.default_rng(seed).normal(size=(4, 6))
    out = prox_group_lasso(W, lam, step)
    assert (np.linalg.norm(out, axis=0) <= np.linalg.norm(W, axis=0) + 1e-15).all()
    again = prox_group_lasso(out, lam, step)
    zero = np.linalg.norm(out, axis=0) == 0
    assert (np.linalg.norm(again[:, zero], axis=0) == 0).all()


def test_zeroed_column_makes_channel_irrelevant():
    rng = np.random.default_rng(8)
    net = MotifNetwork.init(0, 4, 3, rng, scale=1.0)
    net.net.params["W"][:, 2] = 0.0
    x = rng.normal(size=(3, 5, 4))
    x2 = x.copy()
    x2[..., 2] = rng.normal(size=(3, 5)) * 10
    assert np.array_equal(lstm_forward(net, x)[0], lstm_forward(net, x2)[0])


def test_absent_motif_learns_near_zero_and_sparse():
    rng = np.random.default_rng(0)
    data = indicator_series(rng.integers(0, 3, size=(200, 6)), 4)
    net = train_motif_network(3, data, replace(CFG, lam=0.1))
    y, _ = lstm_forward(net, data)
    assert np.abs(y).mean() <= 0.1
    assert np.count_nonzero(net.column_norms() == 0) >= 3


def test_planted_rule_column_dominates():
    net = train_motif_network(0, planted_indicators(), CFG)
    norms = net.column_norms()
    assert norms[2] >= 3 * np.median(norms)


def test_stacked_training_equals_one_at_a_time():
    data = planted_indicators(n=40)
    cfg = replace(CFG, epochs=20)
    together = train_networks(data, cfg)
    for i in range(4):
        alone = train_motif_network(i, data, cfg)
        for k in alone.net.params:
            assert np.allclose(together[i].net.params[k], alone.net.params[k], atol=1e-12)


def test_normalize_examples():
    out = normalize_causality(np.array([[0, 2, 4], [0, 0, 0], [1, 1, 3]], dtype=float))
    assert out[0].tolist() == [0, 0.5, 1.0]
    assert out[1].tolist() == [0, 0, 0]
    assert np.array_equal(normalize_causality(out), out)
    raw = np.random.default_rng(0).uniform(size=(5, 5))
    assert np.array_equal(raw.argmax(axis=1), normalize_causality(raw).argmax(axis=1))


def test_single_motif_partition():
    s = TraceSet.from_array(np.full((4, 16), 120.0))
    ms = build_motif_set(s, 4, 2.0)
    M = partition_causality(s, ms, replace(CFG, epochs=20))
    assert M.shape == (1, 1) and 0 <= M[0, 0] <= 1


def test_partition_determinism_and_planted_recovery(toy):
    from forge.toy import PLANTED_CAUSE, PLANTED_EFFECT, templates
    corpus, _ = toy
    part = TraceSet(corpus.traces[:60])
    ms = build_motif_set(corpus, 8, 2.0)
    M1 = partition_causality(part, ms, CFG)
    M2 = partition_causality(TraceSet(list(part.traces)), ms, CFG)
    assert np.array_equal(M1, M2)
    assert ((M1 >= 0) & (M1 <= 1)).all()
    lookup = lambda k: int(np.argmin(np.abs(ms.values - templates(8)[k]).sum(axis=1)))
    assert M1[lookup(PLANTED_EFFECT)].argmax() == lookup(PLANTED_CAUSE)


def test_batch_estimate_self_consistency(toy):
    corpus, _ = toy
    caus, _ = split_disjoint(corpus, 0.5, 0)
    ms = build_motif_set(caus, 8, 2.0)
    M = partition_causality(caus, ms, CFG)
    M_hat, nets = estimate_batch_causality(caus, ms, replace(CFG, seed=1, inner_steps=300))
    assert np.max(np.abs(M_hat - M)) < 0.15
    # no inner steps: the warm start comes back unchanged
    M_warm, _ = estimate_batch_causality(caus, ms, replace(CFG, inner_steps=0), warm=nets)
    assert np.array_equal(M_warm, M_hat)
    a, _ = estimate_batch_causality(caus, ms, CFG, warm=nets)
    b, _ = estimate_batch_causality(caus, ms, CFG, warm=nets)
    assert np.array_equal(a, b)


def test_matrix_round_trip(tmp_path):
    M = normalize_causality(np.random.default_rng(0).uniform(size=(4, 4)))
    save_matrix(M, tmp_path / "M.csv", {"config_hash": "x"})
    assert np.array_equal(load_matrix(tmp_path / "M.csv"), M)


def test_group_penalty():
    assert group_penalty(np.array([[3.0, 0], [4.0, 0]])) == 5.0
