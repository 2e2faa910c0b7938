# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CTC forward-backward kernel.

Log-space dynamic program over the blank-augmented label sequence with the
exact gradient w.r.t. the log-probability lattice.  Mirrors
``lrasr.kernels.pure`` (which is the import-time fallback).
"""

import numpy as np

from libc.math cimport exp, log, INFINITY


cdef inline double logadd2(double a, double b) nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log(1.0 + exp(b - a))
    return b + log(1.0 + exp(a - b))


cdef inline double logadd3(double a, double b, double c) nogil:
    return logadd2(logadd2(a, b), c)


def ctc_forward_backward(double[:, ::1] logp, long[::1] labels):
    """See ``lrasr.kernels.pure.ctc_forward_backward``."""
    cdef Py_ssize_t T = logp.shape[0]
    cdef Py_ssize_t V = logp.shape[1]
    cdef Py_ssize_t L = labels.shape[0]
    cdef Py_ssize_t S = 2 * L + 1
    cdef Py_ssize_t t, s, k

    aug_arr = np.zeros(S, dtype=np.int64)
    aug_arr[1::2] = np.asarray(labels)
    cdef long[::1] aug = aug_arr

    skip_arr = np.zeros(S, dtype=np.uint8)
    for s in range(3, S, 2):
        if aug_arr[s] != aug_arr[s - 2]:
            skip_arr[s] = 1
    cdef unsigned char[::1] can_skip = skip_arr

    alpha_arr = np.full((T, S), -np.inf)
    beta_arr = np.full((T, S), -np.inf)
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] beta = beta_arr

    cdef double prev, prev1, prev2, log_p_total

    alpha[0, 0] = logp[0, aug[0]]
    if S > 1:
        alpha[0, 1] = logp[0, aug[1]]
    for t in range(1, T):
        for s in range(S):
            prev = alpha[t - 1, s]
            prev1 = alpha[t - 1, s - 1] if s >= 1 else -INFINITY
            prev2 = alpha[t - 1, s - 2] if (s >= 2 and can_skip[s]) else -INFINITY
            alpha[t, s] = logp[t, aug[s]] + logadd3(prev, prev1, prev2)

    if S > 1:
        log_p_total = logadd2(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    else:
        log_p_total = alpha[T - 1, S - 1]
    if log_p_total == -INFINITY:
        raise FloatingPointError("CTC total probability underflowed to zero")

    beta[T - 1, S - 1] = logp[T - 1, aug[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = logp[T - 1, aug[S - 2]]
    for t in range(T - 2, -1, -1):
        for s in range(S):
            prev = beta[t + 1, s]
            prev1 = beta[t + 1, s + 1] if s + 1 < S else -INFINITY
            prev2 = (
                beta[t + 1, s + 2]
                if (s + 2 < S and can_skip[s + 2])
                else -INFINITY
            )
            beta[t, s] = logp[t, aug[s]] + logadd3(prev, prev1, prev2)

    grad_arr = np.zeros((T, V))
    cdef double[:, ::1] grad = grad_arr
    cdef double occ
    for t in range(T):
        for s in range(S):
            if alpha[t, s] == -INFINITY or beta[t, s] == -INFINITY:
                continue
            occ = alpha[t, s] + beta[t, s] - logp[t, aug[s]] - log_p_total
            grad[t, aug[s]] -= exp(occ)

    return -log_p_total, grad_arr
