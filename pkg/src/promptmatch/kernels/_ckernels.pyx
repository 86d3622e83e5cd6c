# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled policy kernels; same signatures and semantics as _pykernels.

Dense products go through numpy (BLAS); the softmax, entropy, backward
elementwise work and the optimizer update run as fused C loops.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, tanh, sqrt, pow

cnp.import_array()


cdef void _tanh_inplace(double[:, ::1] x) noexcept nogil:
    cdef Py_ssize_t b, j
    for b in range(x.shape[0]):
        for j in range(x.shape[1]):
            x[b, j] = tanh(x[b, j])


cdef void _log_softmax_rows(double[:, ::1] x) noexcept nogil:
    cdef Py_ssize_t b, k, na = x.shape[1]
    cdef double mx, tot
    for b in range(x.shape[0]):
        mx = x[b, 0]
        for k in range(1, na):
            if x[b, k] > mx:
                mx = x[b, k]
        tot = 0.0
        for k in range(na):
            tot += exp(x[b, k] - mx)
        tot = mx + log(tot)
        for k in range(na):
            x[b, k] -= tot


def _check(W1, W2, S):
    if S.shape[1] != W1.shape[1] or W2.shape[1] != W1.shape[0]:
        raise ValueError("dimension mismatch")


def forward_batch(w1, w2, states):
    W1 = np.ascontiguousarray(w1, dtype=np.float64)
    W2 = np.ascontiguousarray(w2, dtype=np.float64)
    S = np.ascontiguousarray(states, dtype=np.float64)
    _check(W1, W2, S)
    h_arr = np.ascontiguousarray(S @ W1.T)
    cdef double[:, ::1] H = h_arr
    with nogil:
        _tanh_inplace(H)
    lp_arr = np.ascontiguousarray(h_arr @ W2.T)
    cdef double[:, ::1] LP = lp_arr
    with nogil:
        _log_softmax_rows(LP)
    return h_arr, np.exp(lp_arr)


def forward(w1, w2, state):
    s = np.asarray(state, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("dimension mismatch")
    h, p = forward_batch(w1, w2, s[None, :])
    return h[0], p[0]


def loss_and_grad(w1, w2, states, actions, advantages, double entropy_coef):
    W1 = np.ascontiguousarray(w1, dtype=np.float64)
    W2 = np.ascontiguousarray(w2, dtype=np.float64)
    S = np.ascontiguousarray(states, dtype=np.float64)
    _check(W1, W2, S)
    cdef const cnp.int64_t[::1] A = np.ascontiguousarray(actions, dtype=np.int64)
    cdef const double[::1] ADV = np.ascontiguousarray(advantages, dtype=np.float64)
    cdef Py_ssize_t nb = S.shape[0], nh = W1.shape[0], na = W2.shape[0]
    if A.shape[0] != nb or ADV.shape[0] != nb:
        raise ValueError("dimension mismatch")

    h_arr = np.ascontiguousarray(S @ W1.T)
    cdef double[:, ::1] H = h_arr
    with nogil:
        _tanh_inplace(H)
    lp_arr = np.ascontiguousarray(h_arr @ W2.T)
    cdef double[:, ::1] LP = lp_arr
    cdef const double[:, ::1] Wv = W2
    gl_arr = np.empty((nb, na))
    gp_arr = np.empty((nb, nh))
    cdef double[:, ::1] GL = gl_arr
    cdef double[:, ::1] GP = gp_arr
    cdef Py_ssize_t b, j, k, a
    cdef double ent, pk, acc, loss_pg = 0.0, ent_sum = 0.0, inv_b = 1.0 / nb
    with nogil:
        _log_softmax_rows(LP)
        for b in range(nb):
            a = A[b]
            ent = 0.0
            for k in range(na):
                ent -= exp(LP[b, k]) * LP[b, k]
            loss_pg += LP[b, a] * ADV[b]
            ent_sum += ent
            for k in range(na):
                pk = exp(LP[b, k])
                GL[b, k] = (ADV[b] * pk + entropy_coef * pk * (LP[b, k] + ent)) * inv_b
            GL[b, a] -= ADV[b] * inv_b
            for j in range(nh):
                GP[b, j] = 0.0
            for k in range(na):
                acc = GL[b, k]
                for j in range(nh):
                    GP[b, j] += acc * Wv[k, j]
            for j in range(nh):
                GP[b, j] *= 1.0 - H[b, j] * H[b, j]
    g2 = gl_arr.T @ h_arr
    g1 = gp_arr.T @ S
    loss = -loss_pg * inv_b - entropy_coef * ent_sum * inv_b
    return loss, ent_sum * inv_b, g1, g2


def adamw_step(param, grad, m, v, long step, double lr, double beta1, double beta2, double eps,
               double weight_decay):
    cdef double[::1] P = param.reshape(-1)
    cdef const double[::1] G = np.ascontiguousarray(grad, dtype=np.float64).reshape(-1)
    cdef double[::1] M = m.reshape(-1)
    cdef double[::1] V = v.reshape(-1)
    cdef Py_ssize_t i, n = P.shape[0]
    cdef double c1 = 1.0 - pow(beta1, step), c2 = 1.0 - pow(beta2, step), decay = 1.0 - lr * weight_decay
    if G.shape[0] != n or M.shape[0] != n or V.shape[0] != n:
        raise ValueError("shape mismatch")
    with nogil:
        for i in range(n):
            P[i] *= decay
            M[i] = beta1 * M[i] + (1.0 - beta1) * G[i]
            V[i] = beta2 * V[i] + (1.0 - beta2) * G[i] * G[i]
            P[i] -= lr * (M[i] / c1) / (sqrt(V[i] / c2) + eps)
