"""Pure-numpy kernels for product-operator ensembles.

Vectorised over the batch axis; loops over terms and qubits run in the same
order as the compiled kernels so the two backends give identical results.
"""

import numpy as np


def ensemble_probs(c_re, c_im, t_re, t_im, outcomes):
    n_terms, n_qubits, _ = t_re.shape
    outcomes = np.asarray(outcomes, dtype=np.intp)
    acc = np.zeros(outcomes.shape[0])
    for t in range(n_terms):
        pr = np.full(outcomes.shape[0], c_re[t])
        pi = np.full(outcomes.shape[0], c_im[t])
        for i in range(n_qubits):
            k = outcomes[:, i]
            ar = t_re[t, i][k]
            ai = t_im[t, i][k]
            pr, pi = pr * ar - pi * ai, pr * ai + pi * ar
        acc = acc + pr
    return acc


def ensemble_sample(c_re, c_im, t_re, t_im, x_re, x_im, uniforms):
    n_terms, n_qubits, _ = t_re.shape
    batch = uniforms.shape[0]
    pr = np.repeat(np.asarray(c_re, dtype=float)[:, None], batch, axis=1)
    pi = np.repeat(np.asarray(c_im, dtype=float)[:, None], batch, axis=1)
    out = np.empty((batch, n_qubits), dtype=np.uint8)
    rows = np.arange(batch)
    for i in range(n_qubits):
        q = np.zeros((4, batch))
        for k in range(4):
            acc = np.zeros(batch)
            for t in range(n_terms):
                acc = acc + (pr[t] * x_re[t, i, k] - pi[t] * x_im[t, i, k])
            q[k] = np.maximum(acc, 0.0)
        cum = np.empty_like(q)
        cum[0] = q[0]
        cum[1] = cum[0] + q[1]
        cum[2] = cum[1] + q[2]
        cum[3] = cum[2] + q[3]
        thr = uniforms[:, i] * cum[3]
        chosen = (cum[:3] <= thr).sum(axis=0)
        out[:, i] = chosen
        qk = q[chosen, rows]
        ar = t_re[:, i, :][:, chosen]
        ai = t_im[:, i, :][:, chosen]
        pr, pi = (pr * ar - pi * ai) / qk, (pr * ai + pi * ar) / qk
    return out
