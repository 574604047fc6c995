# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-pixel kernels.

One pass over the (K, H, W) tensor per call, parallel over rows. Every
pixel is independent, so results are bit-deterministic for any thread
count. Accumulation is float64; selection outputs keep exact float32
values. Stack kernels use one scratch row per image row, so concurrent
rows never share state.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport log

cnp.import_array()


def entropy64(const cnp.float32_t[:, :, ::1] probs not None):
    cdef Py_ssize_t K = probs.shape[0], H = probs.shape[1], W = probs.shape[2]
    out = np.zeros((H, W), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] o = out
    cdef Py_ssize_t h, w, k
    cdef double v
    for h in prange(H, nogil=True, schedule="static"):
        for w in range(W):
            for k in range(K):
                v = probs[k, h, w]
                if v > 1.0:
                    v = 1.0
                if v > 0.0:
                    o[h, w] = o[h, w] - v * log(v)
    return out


def top2_argmax(const cnp.float32_t[:, :, ::1] probs not None):
    cdef Py_ssize_t K = probs.shape[0], H = probs.shape[1], W = probs.shape[2]
    p1 = np.empty((H, W), dtype=np.float32)
    p2 = np.empty((H, W), dtype=np.float32)
    am = np.empty((H, W), dtype=np.int32)
    cdef cnp.float32_t[:, ::1] o1 = p1
    cdef cnp.float32_t[:, ::1] o2 = p2
    cdef cnp.int32_t[:, ::1] oa = am
    cdef Py_ssize_t h, w, k
    cdef float v, b1, b2
    cdef int best
    for h in prange(H, nogil=True, schedule="static"):
        for w in range(W):
            b1 = -1.0
            b2 = -1.0
            best = 0
            for k in range(K):
                v = probs[k, h, w]
                if v > b1:
                    b2 = b1
                    b1 = v
                    best = <int>k
                elif v > b2:
                    b2 = v
            o1[h, w] = b1
            o2[h, w] = b2
            oa[h, w] = best
    return p1, p2, am


def base_stats(const cnp.float32_t[:, :, ::1] probs not None):
    """Entropy, top-2 probabilities and argmax fused into one tensor pass."""
    cdef Py_ssize_t K = probs.shape[0], H = probs.shape[1], W = probs.shape[2]
    ent = np.zeros((H, W), dtype=np.float64)
    p1 = np.empty((H, W), dtype=np.float32)
    p2 = np.empty((H, W), dtype=np.float32)
    am = np.empty((H, W), dtype=np.int32)
    cdef cnp.float64_t[:, ::1] oe = ent
    cdef cnp.float32_t[:, ::1] o1 = p1
    cdef cnp.float32_t[:, ::1] o2 = p2
    cdef cnp.int32_t[:, ::1] oa = am
    cdef Py_ssize_t h, w, k
    cdef float v, b1, b2
    cdef double vd
    cdef int best
    for h in prange(H, nogil=True, schedule="static"):
        for w in range(W):
            b1 = -1.0
            b2 = -1.0
            best = 0
            for k in range(K):
                v = probs[k, h, w]
                if v > b1:
                    b2 = b1
                    b1 = v
                    best = <int>k
                elif v > b2:
                    b2 = v
                vd = v
                if vd > 1.0:
                    vd = 1.0
                if vd > 0.0:
                    oe[h, w] = oe[h, w] - vd * log(vd)
            o1[h, w] = b1
            o2[h, w] = b2
            oa[h, w] = best
    return ent, p1, p2, am


def stack_mean(const cnp.float32_t[:, :, :, ::1] stack not None):
    cdef Py_ssize_t N = stack.shape[0], K = stack.shape[1]
    cdef Py_ssize_t H = stack.shape[2], W = stack.shape[3]
    out = np.zeros((K, H, W), dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] o = out
    cdef Py_ssize_t i, k, h, w
    for k in range(K):
        for h in prange(H, nogil=True, schedule="static"):
            for w in range(W):
                for i in range(N):
                    o[k, h, w] = o[k, h, w] + stack[i, k, h, w]
                o[k, h, w] = o[k, h, w] / N
    return out


def stack_variance(const cnp.float32_t[:, :, :, ::1] stack not None):
    cdef Py_ssize_t N = stack.shape[0], K = stack.shape[1]
    cdef Py_ssize_t H = stack.shape[2], W = stack.shape[3]
    vmean = np.empty((H, W), dtype=np.float64)
    vmax = np.empty((H, W), dtype=np.float64)
    scratch = np.empty((H, K), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] om = vmean
    cdef cnp.float64_t[:, ::1] ox = vmax
    cdef cnp.float64_t[:, ::1] buf = scratch
    cdef Py_ssize_t i, k, h, w
    cdef double acc, d, vk, best, total
    for h in prange(H, nogil=True, schedule="static"):
        for w in range(W):
            for k in range(K):
                acc = 0.0
                for i in range(N):
                    acc = acc + stack[i, k, h, w]
                buf[h, k] = acc / N
            total = 0.0
            best = 0.0
            for k in range(K):
                acc = 0.0
                for i in range(N):
                    d = stack[i, k, h, w] - buf[h, k]
                    acc = acc + d * d
                vk = acc / N
                total = total + vk
                if vk > best:
                    best = vk
            om[h, w] = total / K
            ox[h, w] = best
    return vmean, vmax


def bald_raw(const cnp.float32_t[:, :, :, ::1] stack not None):
    cdef Py_ssize_t N = stack.shape[0], K = stack.shape[1]
    cdef Py_ssize_t H = stack.shape[2], W = stack.shape[3]
    out = np.empty((H, W), dtype=np.float64)
    scratch = np.empty((H, K), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] o = out
    cdef cnp.float64_t[:, ::1] buf = scratch
    cdef Py_ssize_t i, k, h, w
    cdef double acc, v, ent_mean, sum_ent, member_ent
    for h in prange(H, nogil=True, schedule="static"):
        for w in range(W):
            for k in range(K):
                acc = 0.0
                for i in range(N):
                    acc = acc + stack[i, k, h, w]
                buf[h, k] = acc / N
            ent_mean = 0.0
            for k in range(K):
                v = buf[h, k]
                if v > 1.0:
                    v = 1.0
                if v > 0.0:
                    ent_mean = ent_mean - v * log(v)
            # Per-member subtotals mirror the mixture term's accumulation
            # order, so identical members cancel to exactly zero.
            sum_ent = 0.0
            for i in range(N):
                member_ent = 0.0
                for k in range(K):
                    v = stack[i, k, h, w]
                    if v > 1.0:
                        v = 1.0
                    if v > 0.0:
                        member_ent = member_ent - v * log(v)
                sum_ent = sum_ent + member_ent
            o[h, w] = ent_mean - sum_ent / N
    return out
