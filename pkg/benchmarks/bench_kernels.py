"""Compare the compiled and pure-Python ensemble kernels.

Run with ``python benchmarks/bench_kernels.py``. Each case is timed for both
backends on identical inputs and the outputs are checked to be bit-identical.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from aqt import _pykernels, povm, states

try:
    from aqt import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _inputs(state, n_draws, seed):
    frame = povm.pauli4_frame()
    table = povm._trace_table(state, frame)
    traces = np.trace(state.factors, axis1=2, axis2=3)
    suffix = np.ones((state.n_terms, state.n_qubits + 1), dtype=np.complex128)
    for i in range(state.n_qubits - 1, -1, -1):
        suffix[:, i] = suffix[:, i + 1] * traces[:, i]
    x = table * suffix[:, 1:, None]
    u = np.random.default_rng(seed).random((n_draws, state.n_qubits))
    outs = np.random.default_rng(seed + 1).integers(0, 4, (n_draws, state.n_qubits), dtype=np.uint8)
    split = povm._split
    return split(state.coeffs), split(table), split(x), u, outs


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    cases = [("ghz:10", states.ghz(10)), ("ghz:90", states.ghz(90)), ("faulty:0.2", states.faulty_qubit_state(0.2))]
    print(f"{'case':<12}{'kernel':<10}{'python s':>10}{'cython s':>10}{'speedup':>9}  identical")
    for label, st in cases:
        (c_re, c_im), (t_re, t_im), (x_re, x_im), u, outs = _inputs(st, args.draws, 0)
        jobs = {
            "probs": lambda m: m.ensemble_probs(c_re, c_im, t_re, t_im, outs),
            "sample": lambda m: m.ensemble_sample(c_re, c_im, t_re, t_im, x_re, x_im, u),
        }
        for name, job in jobs.items():
            t_py, out_py = best_of(lambda: job(_pykernels), args.repeats)
            if _ckernels is None:
                print(f"{label:<12}{name:<10}{t_py:>10.4f}{'n/a':>10}{'':>9}  n/a")
                continue
            t_c, out_c = best_of(lambda: job(_ckernels), args.repeats)
            same = np.array_equal(np.asarray(out_py), np.asarray(out_c))
            print(f"{label:<12}{name:<10}{t_py:>10.4f}{t_c:>10.4f}{t_py / t_c:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
