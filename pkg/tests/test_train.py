import math

import numpy as np
import pytest

from aqt import fidelity, povm, states
from aqt import model as M
from aqt import train as T
from aqt.errors import NumericError, ValidationError

FRAME = povm.pauli4_frame()


def assert_trend_non_increasing(trace, uptick=0.05):
    nll = np.array([r.train_nll for r in trace])
    assert nll[-1] <= nll[0]
    best = np.minimum.accumulate(nll)
    # each epoch stays within a 5% transient uptick of the best so far
    assert np.all(nll <= best * (1 + uptick))


@pytest.fixture(scope="module")
def product_run():
    st = states.product_state([[1, 0], [1, 0]])
    ds = povm.sample(st, FRAME, 10**4, seed=11)
    return st, T.train(M.init_model(M.TransformerConfig.desk(2)), ds, T.TrainOptions(seed=0))


@pytest.fixture(scope="module")
def ghz_run():
    g = states.ghz(3)
    ds = povm.sample(g, FRAME, 2700, seed=12)
    return g, T.train(M.init_model(M.TransformerConfig.desk(3)), ds, T.TrainOptions(seed=0))


@pytest.mark.slow
def test_product_state_total_variation(product_run):
    st, res = product_run
    outs = povm.all_outcomes(2)
    p0 = povm.outcome_probs(st, FRAME, outs)
    p1 = np.exp(M.log_probs(res.model, outs))
    assert 0.5 * np.abs(p0 - p1).sum() <= 0.02
    assert_trend_non_increasing(res.trace)


@pytest.mark.slow
def test_ghz3_reference_budget_classical_fidelity(ghz_run):
    g, res = ghz_run
    est = fidelity.classical_fidelity_exact(povm.state_evaluator(g, FRAME), res.model, 3)
    assert est.value >= 0.98
    assert_trend_non_increasing(res.trace)


@pytest.mark.slow
def test_trace_and_best_epoch(ghz_run):
    _, res = ghz_run
    held = [r.heldout_nll for r in res.trace]
    assert [r.epoch for r in res.trace] == list(range(1, len(res.trace) + 1))
    assert res.best_epoch == int(np.argmin(held)) + 1
    if res.stopped_early:
        assert len(res.trace) - res.best_epoch == T.TrainOptions().patience


def small_dataset(n=300, seed=0):
    return povm.sample(states.ghz(2), FRAME, n, seed=seed)


def test_training_is_deterministic_and_does_not_mutate_input():
    cfg = M.TransformerConfig(max_len=2, n_layers=1, embed_dim=8, n_heads=2)
    m = M.init_model(cfg)
    before = {k: v.copy() for k, v in m.params.items()}
    opts = T.TrainOptions(epochs=3, batch_size=32, seed=5)
    a = T.train(m, small_dataset(), opts)
    b = T.train(m, small_dataset(), opts)
    for k in before:
        assert np.array_equal(m.params[k], before[k])
        assert np.array_equal(a.model.params[k], b.model.params[k])
    assert [r.train_nll for r in a.trace] == [r.train_nll for r in b.trace]


def test_seed_changes_result():
    cfg = M.TransformerConfig(max_len=2, n_layers=1, embed_dim=8, n_heads=2)
    a = T.train(M.init_model(cfg), small_dataset(), T.TrainOptions(epochs=2, seed=1))
    b = T.train(M.init_model(cfg), small_dataset(), T.TrainOptions(epochs=2, seed=2))
    assert a.trace[0].train_nll != b.trace[0].train_nll


def test_nan_loss_aborts_with_checkpoint(monkeypatch):
    cfg = M.TransformerConfig(max_len=2, n_layers=1, embed_dim=8, n_heads=2)
    calls = {"n": 0}
    real = T.nll_and_gradients

    def flaky(model, batch):
        calls["n"] += 1
        loss, grads = real(model, batch)
        return (math.nan if calls["n"] > 12 else loss), grads

    monkeypatch.setattr(T, "nll_and_gradients", flaky)
    with pytest.raises(NumericError) as info:
        T.train(M.init_model(cfg), small_dataset(), T.TrainOptions(epochs=5, batch_size=32))
    ckpt = info.value.checkpoint
    assert isinstance(ckpt, M.TransformerModel)
    assert all(np.all(np.isfinite(v)) for v in ckpt.params.values())
    assert info.value.exit_code == 4


def test_validation_errors():
    cfg = M.TransformerConfig(max_len=3, n_layers=1, embed_dim=8, n_heads=2)
    with pytest.raises(ValidationError, match="qubits"):
        T.train(M.init_model(cfg), small_dataset(), T.TrainOptions(epochs=1))
    with pytest.raises(ValidationError):
        T.TrainOptions(learning_rate=0)
    with pytest.raises(ValidationError):
        T.TrainOptions(heldout_fraction=1.0)


def test_adam_first_step_is_lr_sized():
    params = {"w": np.array([1.0, -2.0])}
    opt = T.Adam(params, lr=0.1)
    opt.step({"w": np.array([3.0, -0.5])})
    assert np.allclose(params["w"], [0.9, -1.9], atol=1e-8)


def test_plateau_schedule_cuts_learning_rate():
    cfg = M.TransformerConfig(max_len=2, n_layers=1, embed_dim=8, n_heads=2)
    opts = T.TrainOptions(epochs=12, batch_size=32, learning_rate=0.05, lr_decay=0.5, decay_patience=1, patience=0)
    res = T.train(M.init_model(cfg), small_dataset(60), opts)
    lrs = res.learning_rates
    assert lrs[0] == 0.05 and len(lrs) == 12
    assert all(b in (a, max(a * 0.5, opts.min_learning_rate)) for a, b in zip(lrs, lrs[1:]))
    assert lrs[-1] < lrs[0]
    fixed = T.train(M.init_model(cfg), small_dataset(60), T.TrainOptions(epochs=3, batch_size=32))
    assert fixed.learning_rates == [1e-3] * 3
    with pytest.raises(ValidationError):
        T.TrainOptions(lr_decay=0.0)
