import numpy as np
import pytest

from aqt import kernels, povm, states

BACKENDS = kernels.backends()
FRAME = povm.pauli4_frame()


def test_compiled_backend_is_built():
    # the editable install builds the extension; the fallback is still covered below
    assert "cython" in BACKENDS


@pytest.fixture(params=sorted(BACKENDS))
def backend(request, monkeypatch):
    monkeypatch.setattr(kernels, "_impl", BACKENDS[request.param])
    return request.param


@pytest.mark.parametrize("state", [states.ghz(5), states.faulty_qubit_state(0.4), states.ghz(40)], ids=lambda s: s.label)
def test_backends_agree_bitwise(state):
    outs = np.random.default_rng(1).integers(0, 4, (300, state.n_qubits))
    results = {}
    for name, mod in BACKENDS.items():
        kernels._impl, saved = mod, kernels._impl
        try:
            results[name] = (
                povm.outcome_probs(state, FRAME, outs),
                povm.sample(state, FRAME, 3000, seed=4).outcomes,
            )
        finally:
            kernels._impl = saved
    ref = results["python"]
    for name, (p, s) in results.items():
        assert np.array_equal(p, ref[0]), name
        assert np.array_equal(s, ref[1]), name


def test_each_backend_normalises(backend):
    e = states.faulty_qubit_state(0.15)
    assert abs(povm.outcome_probs(e, FRAME, povm.all_outcomes(3)).sum() - 1) < 1e-13


def test_each_backend_never_picks_zero_probability_symbols(backend):
    # GHZ has many exactly-zero outcome probabilities
    ds = povm.sample(states.ghz(6), FRAME, 20000, seed=8)
    p = povm.outcome_probs(states.ghz(6), FRAME, ds.outcomes)
    assert np.all(p > 0)
