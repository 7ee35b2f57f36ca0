import math
from dataclasses import replace

import numpy as np
import pytest

from forge.gan import (GanConfig, LossReport, _bce_grad, _distributional_grad, _mse_grad, ae_phase, bce,
                       discriminate, discriminator_phase, embed, generate, generator_phase, init_state,
                       load_checkpoint, loss_distributional, loss_motif, loss_reconstruction, loss_stepwise,
                       recover, sample_noise, save_checkpoint, spsa_gradient, spsa_gradient_LM, train,
                       train_epoch, write_loss_log)
from forge.motif import build_motif_set
from forge.causality import CausalityTrainConfig
from forge.nn import DivergenceError, RecurrentNet
from forge.privacy import DpSgdConfig
from helpers import numeric_grad, rel_error

TINY = GanConfig(embed_dim=2, hidden_embedder=3, hidden_recovery=3, hidden_generator=3,
                 hidden_discriminator=3, batch_size=3, seed=4)


def tiny_batch(seed=0, B=3, T=4):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.1, 0.9, size=(B, T, 1)), rng.standard_normal((B, T, TINY.nz))


# ---- losses against naive oracles

def test_reconstruction_examples():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(3, 5))
    assert loss_reconstruction(x, x) == 0.0
    assert loss_reconstruction(x, x + 0.1) == pytest.approx(0.01)
    y = rng.uniform(size=(3, 5))
    naive = sum((x[i, j] - y[i, j]) ** 2 for i in range(3) for j in range(5)) / 15
    assert loss_reconstruction(x, y) == pytest.approx(naive, abs=1e-12)


def test_stepwise_examples():
    rng = np.random.default_rng(1)
    a = rng.uniform(size=(2, 4, 3))
    assert loss_stepwise(a, a) == 0.0
    assert loss_stepwise(a, a + 0.3) == pytest.approx(0.09)
    b = rng.uniform(size=(2, 4, 3))
    naive = np.mean([(a[i, t, d] - b[i, t, d]) ** 2 for i in range(2) for t in range(4) for d in range(3)])
    assert loss_stepwise(a, b) == pytest.approx(naive, abs=1e-12)


def test_distributional_examples():
    rng = np.random.default_rng(2)
    a = rng.uniform(size=(5, 4, 2))
    assert loss_distributional(a, a) == 0.0
    assert loss_distributional(a, a[::-1]) == pytest.approx(0.0, abs=1e-15)
    # 2 x 2 by hand: coords (t0, t1); batch a = [[0, 1], [2, 3]], b = [[1, 1], [1, 5]]
    A = np.array([[0.0, 1.0], [2.0, 3.0]])[..., None]
    B = np.array([[1.0, 1.0], [1.0, 5.0]])[..., None]
    # means a (1, 2) b (1, 3); variances a (1, 1) b (0, 4)
    assert loss_distributional(A, B) == pytest.approx(0 + 1 + 1 + 9)


def test_motif_loss_examples():
    assert loss_motif(np.eye(3), np.eye(3)) == 0.0
    assert loss_motif(np.zeros((2, 2)), np.ones((2, 2))) == 1.0
    rng = np.random.default_rng(3)
    a, b = rng.uniform(size=(2, 4, 4))
    assert loss_motif(a, b) == pytest.approx(sum((a[i, j] - b[i, j]) ** 2 for i in range(4) for j in range(4)) / 16)


def test_bce_examples():
    assert bce(np.full(4, 0.5), 0.0) == pytest.approx(math.log(2))
    assert bce(np.full(4, 0.5), 1.0) == pytest.approx(math.log(2))
    assert bce(np.array([0.0, 0.0]), 0.0) < 1e-6
    assert bce(np.array([1.0]), 0.0) == pytest.approx(-math.log(1e-7), rel=1e-6)
    p = np.random.default_rng(4).uniform(0.01, 0.99, size=7)
    naive = -sum(math.log(v) for v in p) / 7
    assert bce(p, 1.0) == pytest.approx(naive, abs=1e-12)


@pytest.mark.parametrize("which", ["mse", "moments", "bce0", "bce1"])
def test_loss_gradients_match_finite_differences(which):
    rng = np.random.default_rng(5)
    a = rng.uniform(0.1, 0.9, size=(4, 3, 2))
    b = rng.uniform(0.1, 0.9, size=(4, 3, 2))
    fns = {
        "mse": (lambda: _mse_grad(b, a)),
        "moments": (lambda: _distributional_grad(a, b)),
        "bce0": (lambda: _bce_grad(b, 0.0)),
        "bce1": (lambda: _bce_grad(b, 1.0)),
    }
    _, g = fns[which]()
    assert rel_error(g, numeric_grad(lambda: fns[which]()[0], b)) < 1e-4


# ---- phase gradients on tiny shapes (H=3, e=2, steps=4)

def _phase_fd(phase, names, **kw):
    state = init_state(TINY, 4)
    x, z = tiny_batch()
    _, _, grads = phase(state.nets, x, z, TINY, **kw)
    f = lambda: phase(state.nets, x, z, TINY, **kw)[0]
    for name in names:
        for k, v in state.nets[name].params.items():
            assert rel_error(grads[name][k], numeric_grad(f, v)) < 1e-4, (name, k)


def test_autoencoder_phase_gradients():
    _phase_fd(ae_phase, ["embedder", "recovery"])


def test_generator_phase_gradients():
    _phase_fd(generator_phase, ["generator"])


def test_discriminator_phase_gradients():
    _phase_fd(discriminator_phase, ["discriminator"])


def test_generator_lm_upstream_is_chained_through_recovery():
    state = init_state(TINY, 4)
    x, z = tiny_batch()
    w = np.random.default_rng(9).normal(size=(3, 4))
    base = lambda: generator_phase(state.nets, x, z, TINY)[0]
    f = lambda: base() + float(np.sum(w * recover(state, state.nets["generator"](z))))
    _, _, grads = generator_phase(state.nets, x, z, TINY, lm_upstream=w)
    for k, v in state.nets["generator"].params.items():
        assert rel_error(grads["generator"][k], numeric_grad(f, v)) < 1e-4, k


@pytest.mark.parametrize("phase", [ae_phase, generator_phase, discriminator_phase])
def test_per_example_phase_grads_sum_to_batch(phase):
    state = init_state(TINY, 4)
    x, z = tiny_batch()
    _, _, g = phase(state.nets, x, z, TINY)
    _, _, pe = phase(state.nets, x, z, TINY, per_example=True)
    for name in g:
        for k in g[name]:
            assert np.allclose(pe[name][k].sum(axis=0), g[name][k], atol=1e-12)


def test_alpha_zero_is_pure_reconstruction():
    state = init_state(TINY, 4)
    x, z = tiny_batch()
    _, _, g = ae_phase(state.nets, x, z, replace(TINY, alpha=0.0))
    E, R = state.nets["embedder"], state.nets["recovery"]
    x_e, ce = E.forward(x)
    x_t, cr = R.forward(x_e)
    _, d = _mse_grad(x_t, x)
    gR, dxe = R.backward(cr, d)
    gE, _ = E.backward(ce, dxe)
    for k in gE:
        assert np.array_equal(g["embedder"][k], gE[k])
        assert np.array_equal(g["recovery"][k], gR[k])


# ---- networks

def test_zero_networks_and_shapes():
    state = init_state(GanConfig(), 48)
    for name, net in state.nets.items():
        state.nets[name] = RecurrentNet({k: np.zeros_like(v) for k, v in net.params.items()}, net.activation)
    x = np.random.default_rng(0).uniform(size=(5, 48))
    x_e = embed(state, x)
    assert x_e.shape == (5, 48, 8)
    assert np.allclose(recover(state, x_e), 0.5)
    assert discriminate(state, x_e).shape == (5, 48)


def test_generate_is_deterministic_and_in_range():
    state = init_state(GanConfig(), 48)
    a = generate(state, 50, seed=3).values()
    b = generate(state, 50, seed=3).values()
    assert np.array_equal(a, b)
    assert a.min() >= 40 and a.max() <= 400


def test_autoencoder_learns_constant_traces():
    cfg = GanConfig(optimizer="adam", lr_embedder=0.01, lr_recovery=0.01, batch_size=16, seed=0)
    levels = np.linspace(0.2, 0.8, 32)
    data = np.repeat(levels[:, None], 24, axis=1)
    state = init_state(cfg, 24)
    rep = None
    for _ in range(40):
        state, rep = train_epoch(state, data)
    assert rep.L_R < 0.01


# ---- SPSA

def test_spsa_constant_function_gives_zero():
    g = spsa_gradient(lambda v: 3.0, np.ones((2, 3)), 0.05, 4, seed=0)
    assert np.abs(g).max() < 1e-6


def test_spsa_quadratic_within_twenty_percent():
    A = np.diag([1.0, 2.0, 3.0, 4.0])
    x = np.array([0.5, -1.0, 2.0, 1.0])
    exact = 2 * A @ x
    g = spsa_gradient(lambda v: float(v @ A @ v), x, 0.01, 16, seed=1)
    assert np.linalg.norm(g - exact) / np.linalg.norm(exact) < 0.2


def test_spsa_lm_is_deterministic_and_zero_when_insensitive(toy):
    corpus, _ = toy
    ms = build_motif_set(corpus, 8, 2.0)
    M = np.eye(ms.m)
    xhat = corpus.normalized()[:6]
    cc = CausalityTrainConfig(epochs=5, inner_steps=2)
    a = spsa_gradient_LM(xhat, M, ms, cc, seed=5, c=1e-4, k=2)
    b = spsa_gradient_LM(xhat, M, ms, cc, seed=5, c=1e-4, k=2)
    assert np.array_equal(a, b)
    # perturbations far below sigma never change motif encodings, so M_hat is fixed
    assert np.abs(a).max() < 1e-6


# ---- training loop

def _small_data(n=12, T=8, seed=0):
    return np.random.default_rng(seed).uniform(0.2, 0.8, size=(n, T))


def test_epoch_is_bitwise_reproducible():
    cfg = replace(TINY, batch_size=4)
    data = _small_data()
    r1 = train_epoch(init_state(cfg, 8), data)[1]
    r2 = train_epoch(init_state(cfg, 8), data)[1]
    assert r1.row() == r2.row() and r1.finite()


def test_phase_order_is_observable():
    cfg = replace(TINY, batch_size=12)
    state = init_state(cfg, 8)
    seen = []

    def on_phase(name, st):
        seen.append((name, st.checksums()))

    before = state.checksums()
    train_epoch(state, _small_data(), on_phase=on_phase)
    assert [n for n, _ in seen] == ["autoencoder", "generator", "discriminator"]
    changed = lambda a, b: {k for k in a if a[k] != b[k]}
    assert changed(before, seen[0][1]) == {"embedder", "recovery"}
    assert changed(seen[0][1], seen[1][1]) == {"generator"}
    assert changed(seen[1][1], seen[2][1]) == {"discriminator"}


def test_noop_privacy_is_bitwise_identical():
    data = _small_data()
    plain = replace(TINY, batch_size=4)
    noop = replace(plain, privacy=DpSgdConfig(clip=math.inf, noise_multiplier=0.0))
    s1, r1 = train(plain, data, epochs=2)
    s2, r2 = train(noop, data, epochs=2)
    assert [r.row() for r in r1] == [r.row() for r in r2]
    assert s1.checksums() == s2.checksums()


def test_private_training_clips_and_differs():
    data = _small_data()
    plain = replace(TINY, batch_size=4)
    priv = replace(plain, privacy=DpSgdConfig(clip=0.5, noise_multiplier=1.0, sample_rate=1 / 3, steps=3))
    s1, r1 = train(plain, data, epochs=1)
    s2, r2 = train(priv, data, epochs=1)
    assert r2[0].finite()
    assert s1.checksums() != s2.checksums()


def test_motif_term_is_reported(toy):
    corpus, _ = toy
    ms = build_motif_set(corpus, 8, 2.0)
    cfg = GanConfig(embed_dim=4, hidden_embedder=4, hidden_recovery=4, hidden_generator=4,
                    hidden_discriminator=4, batch_size=16, spsa_probes=1, lm_batch=8)
    cc = CausalityTrainConfig(epochs=5, inner_steps=1)
    state = init_state(cfg, 48)
    _, rep = train_epoch(state, corpus.normalized()[:32], np.eye(ms.m), ms, cc)
    assert rep.finite() and rep.L_M > 0


def test_divergence_is_raised():
    state = init_state(replace(TINY, batch_size=4), 8)
    state.nets["generator"].params["V"][:] = np.nan
    with pytest.raises(DivergenceError, match="phase"):
        train_epoch(state, _small_data())


def test_checkpoint_round_trip(tmp_path):
    cfg = replace(TINY, batch_size=4, optimizer="adam")
    state, _ = train(cfg, _small_data(), epochs=1)
    save_checkpoint(state, tmp_path / "ck.json", extra={"config_hash": "x"})
    back = load_checkpoint(tmp_path / "ck.json")
    assert back.checksums() == state.checksums() and back.epoch == 1
    # resumed training matches uninterrupted training bitwise
    r_cont = train_epoch(state, _small_data())[1]
    r_back = train_epoch(back, _small_data())[1]
    assert r_cont.row() == r_back.row()


def test_loss_log_format(tmp_path):
    reps = [LossReport(1, 0.1, 0.2, 0.0, 0.3, 0.6, 0.7), LossReport(2, 0.05, 0.2, 0.0, 0.3, 0.6, 0.7)]
    write_loss_log(reps[:1], tmp_path / "l.csv")
    write_loss_log(reps[1:], tmp_path / "l.csv", append=True)
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert lines[0] == "epoch,L_R,L_S,L_M,L_D,L_Ar,L_Af"
    assert len(lines) == 3 and lines[2].startswith("2,")


def test_noise_shape():
    z = sample_noise(np.random.default_rng(0), 4, 6, 3)
    assert z.shape == (4, 6, 3)
