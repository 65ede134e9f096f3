# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for product-operator ensembles.

Same contract and same floating-point operation order as ``_pykernels``;
complex products are spelled out in real arithmetic so both backends agree
bit for bit.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def ensemble_probs(const double[::1] c_re, const double[::1] c_im,
                   const double[:, :, ::1] t_re, const double[:, :, ::1] t_im,
                   const unsigned char[:, ::1] outcomes):
    cdef Py_ssize_t n_terms = t_re.shape[0]
    cdef Py_ssize_t n_qubits = t_re.shape[1]
    cdef Py_ssize_t batch = outcomes.shape[0]
    cdef Py_ssize_t b, t, i
    cdef unsigned char k
    cdef double pr, pi, qr, qi, acc
    out = np.empty(batch, dtype=np.float64)
    cdef double[::1] res = out
    for b in range(batch):
        acc = 0.0
        for t in range(n_terms):
            pr = c_re[t]
            pi = c_im[t]
            for i in range(n_qubits):
                k = outcomes[b, i]
                qr = pr * t_re[t, i, k] - pi * t_im[t, i, k]
                qi = pr * t_im[t, i, k] + pi * t_re[t, i, k]
                pr = qr
                pi = qi
            acc = acc + pr
        res[b] = acc
    return out


def ensemble_sample(const double[::1] c_re, const double[::1] c_im,
                    const double[:, :, ::1] t_re, const double[:, :, ::1] t_im,
                    const double[:, :, ::1] x_re, const double[:, :, ::1] x_im,
                    const double[:, ::1] uniforms):
    cdef Py_ssize_t n_terms = t_re.shape[0]
    cdef Py_ssize_t n_qubits = t_re.shape[1]
    cdef Py_ssize_t batch = uniforms.shape[0]
    cdef Py_ssize_t b, t, i, k, chosen
    cdef double q[4]
    cdef double cum[4]
    cdef double thr, qk, nr, ni
    cdef double[64] pr_buf
    cdef double[64] pi_buf
    if n_terms > 64:
        raise ValueError("compiled sampler supports at most 64 terms")
    out = np.empty((batch, n_qubits), dtype=np.uint8)
    cdef unsigned char[:, ::1] res = out
    for b in range(batch):
        for t in range(n_terms):
            pr_buf[t] = c_re[t]
            pi_buf[t] = c_im[t]
        for i in range(n_qubits):
            for k in range(4):
                q[k] = 0.0
                for t in range(n_terms):
                    q[k] = q[k] + (pr_buf[t] * x_re[t, i, k] - pi_buf[t] * x_im[t, i, k])
                if q[k] < 0.0:
                    q[k] = 0.0
            cum[0] = q[0]
            cum[1] = cum[0] + q[1]
            cum[2] = cum[1] + q[2]
            cum[3] = cum[2] + q[3]
            thr = uniforms[b, i] * cum[3]
            chosen = 0
            for k in range(3):
                if cum[k] <= thr:
                    chosen = chosen + 1
            res[b, i] = <unsigned char>chosen
            qk = q[chosen]
            for t in range(n_terms):
                nr = (pr_buf[t] * t_re[t, i, chosen] - pi_buf[t] * t_im[t, i, chosen]) / qk
                ni = (pr_buf[t] * t_im[t, i, chosen] + pi_buf[t] * t_re[t, i, chosen]) / qk
                pr_buf[t] = nr
                pi_buf[t] = ni
    return out
