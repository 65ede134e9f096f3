"""Exit criteria for the full pipeline.

Each test records one ``PASS``/``FAIL`` line, printed in the terminal
summary (see ``conftest.py``), and asserts the criterion at its stated
tolerance. Seeds and training settings are fixed here once for all runs.

Run just these with ``pytest -m acceptance``; expect about half an hour on one
core. ``python tests/test_acceptance.py`` runs them as a script.
"""

from __future__ import annotations

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from aqt import experiments, fidelity, povm, reconstruct, states
from aqt.density import read_export, write_export
from aqt.model import TransformerConfig
from aqt.train import TrainOptions

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

SEED = 0
#: desk architecture with the plateau schedule, shared by every criterion
MODEL = TransformerConfig.desk(3)
TRAIN = TrainOptions(lr_decay=0.3, decay_patience=2)
FRAME = povm.pauli4_frame()

RESULTS: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)


# -------------------------------------------------------------- 1: error model


@pytest.mark.parametrize("p", [0.0, 0.1, 0.2, 0.3])
def test_error_model_readout(p):
    row, _ = experiments.error_point(p, 60_000, SEED, MODEL, TRAIN)
    ok_dev = row.deviation <= 0.05
    ok_err = row.fq_err >= 0.97
    record(
        f"1 (p={p})",
        ok_dev and ok_err,
        f"F_Q(model, ghz)={row.fq_ghz:.4f} |dev|={row.deviation:.4f} (<= 0.05: {ok_dev}); "
        f"F_Q(model, err)={row.fq_err:.4f} (>= 0.97: {ok_err}); projection distance {row.projection_distance:.3g}",
    )
    assert ok_dev, f"|F_Q - (1 - p)| = {row.deviation:.4f} > 0.05"
    assert ok_err, f"F_Q(model, err) = {row.fq_err:.4f} < 0.97"


# --------------------------------------------------------- 2: six-qubit GHZ


def test_six_qubit_reconstruction(tmp_path):
    g = states.ghz(6)
    ds = povm.sample(g, FRAME, 20_000, seed=SEED)
    fitted = experiments.fit(ds, MODEL, TRAIN)
    est = experiments.classical_fidelity(g, fitted.model, FRAME, 100_000, SEED)
    rec = experiments.reconstruct_model(fitted.model, FRAME)
    path = tmp_path / "ghz6.json"
    write_export(rec.projected, path)
    corner = read_export(path).corner_mass()
    fq = fidelity.quantum_fidelity(states.to_dense(g), rec.projected)
    ok_fc = est.value + 2 * est.std_error >= 0.99
    ok_corner = corner >= 0.70
    record(
        "2",
        ok_fc and ok_corner,
        f"F_C={est} (>= 0.99 within 2 s.e.: {ok_fc}); corner mass of export {corner:.3f} (>= 0.70: {ok_corner}); "
        f"raw corner mass {rec.raw.corner_mass():.3f}; F_Q={fq:.3f} at projection distance {rec.projection_distance:.3g}",
    )
    assert ok_fc
    assert ok_corner, f"corner mass {corner:.3f} < 0.70"


# ------------------------------------------------------ 3: sample complexity

LADDER = [100, 200, 500, 1000, 2000, 5000, 10_000]


def test_sample_complexity_scaling():
    res = experiments.sweep_scaling([4, 6, 8, 10], LADDER, (SEED,), 0.99, MODEL, TRAIN, fc_samples=10_000)
    stars = [res.n_star[n] for n in (4, 6, 8, 10)]
    resolved = all(s is not None for s in stars)
    monotone = resolved and all(b >= a for a, b in zip(stars, stars[1:]))
    small = resolved and stars[-1] < 10_000
    record(
        "3",
        resolved and monotone and small,
        f"N_s* by N_q 4/6/8/10 = {stars} (resolved: {resolved}, non-decreasing: {monotone}, N_s*(10) < 1e4: {small})",
    )
    assert resolved and monotone and small


def test_ninety_qubit_sampler():
    a = povm.sample(states.ghz(90), FRAME, 2000, seed=SEED)
    b = povm.sample(states.ghz(90), FRAME, 2000, seed=SEED)
    ok = a.outcomes.shape == (2000, 90) and np.array_equal(a.outcomes, b.outcomes)
    record("3 (90-qubit sampler)", ok, f"shape {a.outcomes.shape}, deterministic {np.array_equal(a.outcomes, b.outcomes)}")
    assert ok


# --------------------------------------------------- 4: AQT versus MLE at 2,700


def test_aqt_agrees_with_mle():
    p = 0.15
    st = states.faulty_qubit_state(p)
    ds = povm.sample(st, FRAME, 2700, seed=SEED)
    fitted = experiments.fit(ds, MODEL, TRAIN)
    aqt = experiments.reconstruct_model(fitted.model, FRAME).projected
    mle = reconstruct.mle_reconstruct(ds, FRAME).density
    ghz = states.to_dense(states.ghz(3))
    agree = fidelity.quantum_fidelity(aqt, mle)
    fq_aqt = fidelity.quantum_fidelity(ghz, aqt)
    fq_mle = fidelity.quantum_fidelity(ghz, mle)
    ok_agree = agree >= 0.95
    ok_aqt = abs(fq_aqt - (1 - p)) <= 0.05
    ok_mle = abs(fq_mle - (1 - p)) <= 0.05
    record(
        "4",
        ok_agree and ok_aqt and ok_mle,
        f"F_Q(AQT, MLE)={agree:.4f} (>= 0.95: {ok_agree}); F_Q(AQT, ghz)={fq_aqt:.4f}, "
        f"F_Q(MLE, ghz)={fq_mle:.4f} vs {1 - p:.2f} (within 0.05: {ok_aqt}, {ok_mle})",
    )
    assert ok_agree and ok_aqt and ok_mle


# ------------------------------------------------------------ 5: properties

TESTS = Path(__file__).parent
PROPERTY_TESTS = [
    "test_povm.py::test_pauli4_elements",
    "test_povm.py::test_completeness",
    "test_povm.py::test_frame_identity_pauli_basis",
    "test_povm.py::test_frame_identity_random_states",
    "test_povm.py::test_sampler_frequencies_ghz2",
    "test_povm.py::test_sampler_marginals_faulty",
    "test_reconstruct.py::test_frame_inversion_exact",
    "test_reconstruct.py::test_model_reconstruction_is_inversion_of_its_distribution",
    "test_model.py::test_normalisation_exhaustive",
    "test_model.py::test_causal_mask_suffix_independence",
    "test_model.py::test_gradients_match_finite_differences",
    "test_model.py::test_sampler_matches_log_prob",
    "test_fidelity.py::test_quantum_fidelity_axioms",
    "test_fidelity.py::test_exact_self_fidelity_is_one",
    "test_fidelity.py::test_sampled_self_is_exactly_one",
    "test_fidelity.py::test_classical_upper_bounds_quantum_exact",
    "test_fidelity.py::test_classical_upper_bounds_quantum_on_trained_models",
    "test_reconstruct.py::test_mle_likelihood_monotone_and_physical",
]


def test_property_suites():
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *[str(TESTS / t) for t in PROPERTY_TESTS]],
        capture_output=True,
        text=True,
        cwd=TESTS.parent,
    )
    elapsed = time.perf_counter() - start
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and elapsed < 300
    record("5", ok, f"{summary}; wall time {elapsed:.0f} s (< 300 s)")
    assert proc.returncode == 0, proc.stdout[-3000:]
    assert elapsed < 300


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
