import math

import numpy as np
import pytest

from aqt import model as M
from aqt import povm
from aqt.errors import ShapeError, ValidationError
from conftest import assert_counts_match

TINY = M.TransformerConfig(max_len=3, n_layers=1, embed_dim=8, n_heads=2, seed=7)


def perturbed(config, scale=0.3, seed=0):
    """Model with every parameter (including the zero-initialised head) moved off its init."""
    m = M.init_model(config)
    r = np.random.default_rng(seed)
    for k in m.params:
        m.params[k] = m.params[k] + r.normal(0.0, scale, m.params[k].shape)
    return m


def test_config_validation():
    with pytest.raises(ValidationError):
        M.TransformerConfig(max_len=3, embed_dim=10, n_heads=4)
    with pytest.raises(ValidationError):
        M.TransformerConfig(max_len=0)
    with pytest.raises(ValidationError):
        M.TransformerConfig(max_len=3, vocab=7)
    assert M.TransformerConfig(max_len=3).ff_dim == 256
    full = M.TransformerConfig.full_size(6)
    assert (full.n_layers, full.embed_dim) == (6, 256)


def test_init_is_uniform():
    m = M.init_model(M.TransformerConfig.desk(3))
    outs = np.random.default_rng(0).integers(0, 4, (20, 3))
    assert np.allclose(M.log_probs(m, outs), -3 * math.log(4), atol=1e-12)
    assert np.allclose(M.conditionals(m, [[0, 1]]), 0.25, atol=1e-15)
    loss, _ = M.nll_and_gradients(m, outs)
    assert abs(loss - 3 * math.log(4)) < 1e-12


def test_init_is_deterministic():
    a = M.init_model(TINY)
    b = M.init_model(TINY)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    c = M.init_model(M.TransformerConfig(**{**TINY.__dict__, "seed": 8}))
    assert not np.array_equal(a.params["l0.wq"], c.params["l0.wq"])


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_normalisation_exhaustive(n):
    m = perturbed(M.TransformerConfig(max_len=n, n_layers=2, embed_dim=16, n_heads=4, seed=n), scale=0.5)
    total = np.exp(M.log_probs(m, povm.all_outcomes(n))).sum()
    assert abs(total - 1.0) <= 1e-8


def test_conditionals_normalise():
    m = perturbed(TINY, scale=1.0)
    c = M.conditionals(m, np.random.default_rng(1).integers(0, 4, (50, 2)))
    assert np.max(np.abs(c.sum(axis=1) - 1)) <= 1e-12


def test_causal_mask_suffix_independence():
    m = perturbed(M.TransformerConfig(max_len=6, n_layers=2, embed_dim=16, n_heads=2), scale=0.5)
    r = np.random.default_rng(3)
    base = r.integers(0, 4, (40, 6))
    logp_base, _ = M.forward(m, M.input_tokens(base))
    for i in range(6):
        alt = base.copy()
        alt[:, i:] = r.integers(0, 4, (40, 6 - i))
        logp_alt, _ = M.forward(m, M.input_tokens(alt))
        # conditionals at positions 0..i only see tokens before a_i
        assert np.array_equal(logp_base[:, : i + 1], logp_alt[:, : i + 1])


def test_log_prob_shape_errors():
    m = M.init_model(TINY)
    with pytest.raises(ShapeError):
        M.log_prob(m, [0, 1])
    with pytest.raises(ShapeError):
        M.nll_and_gradients(m, np.zeros((0, 3), dtype=int))


def fd_check(m, batch, eps=1e-5, per_tensor=200, seed=0):
    """Compare analytic gradients with central differences; returns worst relative error."""
    _, grads = M.nll_and_gradients(m, batch)
    r = np.random.default_rng(seed)
    worst = 0.0
    checked = 0
    for name, arr in m.params.items():
        flat = arr.reshape(-1)
        idx = r.choice(flat.size, size=min(per_tensor, flat.size), replace=False)
        for j in idx:
            old = flat[j]
            flat[j] = old + eps
            lp, _ = M.nll_and_gradients(m, batch)
            flat[j] = old - eps
            lm, _ = M.nll_and_gradients(m, batch)
            flat[j] = old
            fd = (lp - lm) / (2 * eps)
            g = grads[name].reshape(-1)[j]
            worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-6))
            checked += 1
    return worst, checked


def test_gradients_match_finite_differences():
    m = perturbed(TINY)
    batch = np.random.default_rng(5).integers(0, 4, (9, 3))
    worst, checked = fd_check(m, batch)
    assert checked >= 200
    assert worst <= 1e-4


def test_gradient_names_and_shapes():
    m = perturbed(TINY)
    _, g = M.nll_and_gradients(m, [[0, 1, 2]])
    assert list(g) == list(m.params)
    assert all(g[k].shape == m.params[k].shape for k in g)


def test_loss_batch_permutation_invariance():
    m = perturbed(M.TransformerConfig(max_len=5, n_layers=2, embed_dim=16, n_heads=4), scale=0.5)
    r = np.random.default_rng(9)
    batch = r.integers(0, 4, (257, 5))
    loss, _ = M.nll_and_gradients(m, batch)
    for _ in range(5):
        shuffled, _ = M.nll_and_gradients(m, batch[r.permutation(len(batch))])
        assert shuffled == loss


def test_memorises_single_string():
    from aqt.train import Adam

    m = M.init_model(M.TransformerConfig(max_len=3, n_layers=1, embed_dim=16, n_heads=2))
    batch = np.array([[2, 0, 3]] * 16)
    opt = Adam(m.params, lr=1e-2)
    for _ in range(600):
        loss, g = M.nll_and_gradients(m, batch)
        opt.step(g)
    assert loss < 1e-3
    assert math.exp(M.log_prob(m, [2, 0, 3])) > 0.999


def test_sampler_uniform_at_init():
    m = M.init_model(M.TransformerConfig(max_len=2, n_layers=1, embed_dim=8, n_heads=2))
    n = 10**5
    counts = np.bincount(povm.outcome_index(M.sample_model(m, n, seed=1).outcomes), minlength=16)
    assert_counts_match(counts, np.full(16, 1 / 16), n)


@pytest.mark.parametrize("n_q", [3, 4])
def test_sampler_matches_log_prob(n_q):
    m = perturbed(M.TransformerConfig(max_len=n_q, n_layers=1, embed_dim=16, n_heads=2), scale=0.8, seed=n_q)
    n = 10**5
    counts = np.bincount(povm.outcome_index(M.sample_model(m, n, seed=2).outcomes), minlength=4**n_q)
    p = np.exp(M.log_probs(m, povm.all_outcomes(n_q)))
    assert_counts_match(counts, p, n)


def test_sampler_deterministic():
    m = perturbed(TINY)
    a = M.sample_model(m, 500, seed=3).outcomes
    assert np.array_equal(a, M.sample_model(m, 500, seed=3).outcomes)
    assert a.shape == (500, 3)


def test_checkpoint_round_trip(tmp_path):
    m = perturbed(M.TransformerConfig(max_len=4, n_layers=2, embed_dim=16, n_heads=4))
    path = tmp_path / "m.ckpt"
    M.save_checkpoint(m, path, train_options={"lr": 1e-3}, provenance={"source": "test"})
    back, header = M.load_checkpoint(path)
    assert back.config == m.config
    assert header["train_options"] == {"lr": 1e-3}
    assert header["provenance"] == {"source": "test"}
    assert [p[0] for p in header["parameters"]] == list(m.params)
    outs = povm.all_outcomes(4)
    assert np.array_equal(M.log_probs(back, outs), M.log_probs(m, outs))


def test_checkpoint_rejects_corruption(tmp_path):
    m = M.init_model(TINY)
    path = tmp_path / "m.ckpt"
    M.save_checkpoint(m, path)
    data = path.read_bytes()
    (tmp_path / "short.ckpt").write_bytes(data[:-8])
    with pytest.raises(ValidationError):
        M.load_checkpoint(tmp_path / "short.ckpt")
    (tmp_path / "junk.ckpt").write_bytes(b"hello\n")
    with pytest.raises(ValidationError):
        M.load_checkpoint(tmp_path / "junk.ckpt")
