# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled training kernels. Same contracts as ``_numpy``; matrix products
go through BLAS dgemm, everything else is tight C loops."""

from libc.math cimport exp, fabs, log
from libc.stdint cimport int64_t

from scipy.linalg.cython_blas cimport dgemm

NAME = "compiled"


cdef inline void _zero(double[:, ::1] out) nogil:
    cdef Py_ssize_t i, j
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] = 0.0


cdef void _dgemm_rm(double[:, ::1] a, double[:, ::1] b, double[:, ::1] out,
                    bint trans_a, bint trans_b, double beta) nogil:
    # row-major product through the column-major BLAS: out^T = opB^T @ opA^T,
    # and a row-major buffer read column-major is its own transpose
    cdef int m = <int> out.shape[0]
    cdef int n = <int> out.shape[1]
    cdef int k = <int> (a.shape[0] if trans_a else a.shape[1])
    cdef int lda = <int> a.shape[1]
    cdef int ldb = <int> b.shape[1]
    cdef int ldc = n
    cdef char ta = b'T' if trans_a else b'N'
    cdef char tb = b'T' if trans_b else b'N'
    cdef double alpha = 1.0
    if m == 0 or n == 0:
        return
    if k == 0:
        if beta == 0.0:
            _zero(out)
        return
    dgemm(&tb, &ta, &n, &m, &k, &alpha, &b[0, 0], &ldb, &a[0, 0], &lda,
          &beta, &out[0, 0], &ldc)


cdef inline void _check_gemm(Py_ssize_t ra, Py_ssize_t ca, Py_ssize_t rb,
                             Py_ssize_t cb, Py_ssize_t ro, Py_ssize_t co,
                             bint trans_a, bint trans_b):
    cdef Py_ssize_t am = ca if trans_a else ra
    cdef Py_ssize_t ak = ra if trans_a else ca
    cdef Py_ssize_t bk = cb if trans_b else rb
    cdef Py_ssize_t bn = rb if trans_b else cb
    if ak != bk or ro != am or co != bn:
        raise ValueError(
            f"gemm shape mismatch: ({ra},{ca})x({rb},{cb}) "
            f"trans=({trans_a},{trans_b}) -> ({ro},{co})")


def gemm(double[:, ::1] a, double[:, ::1] b, double[:, ::1] out,
         bint trans_a=False, bint trans_b=False):
    """out = opA(a) @ opB(b), where op transposes when the flag is set."""
    _check_gemm(a.shape[0], a.shape[1], b.shape[0], b.shape[1],
                out.shape[0], out.shape[1], trans_a, trans_b)
    _dgemm_rm(a, b, out, trans_a, trans_b, 0.0)
    return out.base


def gemm_acc(double[:, ::1] a, double[:, ::1] b, double[:, ::1] out,
             bint trans_a=False, bint trans_b=False):
    """out += opA(a) @ opB(b)."""
    _check_gemm(a.shape[0], a.shape[1], b.shape[0], b.shape[1],
                out.shape[0], out.shape[1], trans_a, trans_b)
    _dgemm_rm(a, b, out, trans_a, trans_b, 1.0)
    return out.base


def affine(double[:, ::1] x, double[:, ::1] w, double[::1] b,
           double[:, ::1] out):
    """out = x @ w + b (bias broadcast over rows)."""
    _check_gemm(x.shape[0], x.shape[1], w.shape[0], w.shape[1],
                out.shape[0], out.shape[1], False, False)
    if b.shape[0] != w.shape[1]:
        raise ValueError("bias length must match weight columns")
    cdef Py_ssize_t i, j
    with nogil:
        _dgemm_rm(x, w, out, False, False, 0.0)
        for i in range(out.shape[0]):
            for j in range(out.shape[1]):
                out[i, j] += b[j]
    return out.base


def relu(double[:, ::1] z, double[:, ::1] out):
    if z.shape[0] != out.shape[0] or z.shape[1] != out.shape[1]:
        raise ValueError("relu shape mismatch")
    cdef Py_ssize_t i, j
    cdef double v
    with nogil:
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                v = z[i, j]
                # branchless: 2v or 0, halved; NaN propagates through
                # the add, matching np.maximum
                out[i, j] = (v + fabs(v)) * 0.5
    return out.base


def relu_bwd(double[:, ::1] z, double[:, ::1] g, double[:, ::1] out):
    """out = g where z > 0 else 0."""
    if (z.shape[0] != g.shape[0] or z.shape[1] != g.shape[1]
            or z.shape[0] != out.shape[0] or z.shape[1] != out.shape[1]):
        raise ValueError("relu_bwd shape mismatch")
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                out[i, j] = g[i, j] * (1.0 if z[i, j] > 0.0 else 0.0)
    return out.base


def softmax(double[:, ::1] logits, double[:, ::1] out):
    """Row-wise softmax with max subtraction."""
    if logits.shape[0] != out.shape[0] or logits.shape[1] != out.shape[1]:
        raise ValueError("softmax shape mismatch")
    cdef Py_ssize_t i, j
    cdef double mx, s
    with nogil:
        for i in range(logits.shape[0]):
            mx = logits[i, 0]
            for j in range(1, logits.shape[1]):
                if logits[i, j] > mx:
                    mx = logits[i, j]
            s = 0.0
            for j in range(logits.shape[1]):
                out[i, j] = exp(logits[i, j] - mx)
                s += out[i, j]
            for j in range(logits.shape[1]):
                out[i, j] /= s
    return out.base


def per_sample_ce(double[:, ::1] probs, int64_t[::1] labels, double[::1] out):
    """out[i] = -ln probs[i, labels[i]]."""
    if probs.shape[0] != labels.shape[0] or out.shape[0] != labels.shape[0]:
        raise ValueError("per_sample_ce shape mismatch")
    cdef Py_ssize_t i
    cdef int64_t y
    for i in range(labels.shape[0]):
        y = labels[i]
        if y < 0 or y >= probs.shape[1]:
            raise ValueError(f"label {y} out of range")
        out[i] = -log(probs[i, y])
    return out.base


def ce_grad(double[:, ::1] probs, int64_t[::1] labels, double scale,
            double[:, ::1] out):
    """out = scale * (probs - onehot(labels))."""
    if (probs.shape[0] != labels.shape[0] or out.shape[0] != probs.shape[0]
            or out.shape[1] != probs.shape[1]):
        raise ValueError("ce_grad shape mismatch")
    cdef Py_ssize_t i, j
    cdef int64_t y
    for i in range(probs.shape[0]):
        y = labels[i]
        if y < 0 or y >= probs.shape[1]:
            raise ValueError(f"label {y} out of range")
        for j in range(probs.shape[1]):
            out[i, j] = probs[i, j] * scale
        out[i, y] -= scale
    return out.base


def dropout_apply(double[:, ::1] x, double[:, ::1] mask, double scale,
                  double[:, ::1] out):
    """out = x * mask * scale (inverted dropout)."""
    if (x.shape[0] != mask.shape[0] or x.shape[1] != mask.shape[1]
            or out.shape[0] != x.shape[0] or out.shape[1] != x.shape[1]):
        raise ValueError("dropout_apply shape mismatch")
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                out[i, j] = x[i, j] * mask[i, j] * scale
    return out.base


def sgd_update(double[::1] w, double[::1] g, double[::1] v, double lr,
               double momentum, double weight_decay):
    """v = momentum*v + g + weight_decay*w; w -= lr*v.  All 1-D, in place."""
    if w.shape[0] != g.shape[0] or w.shape[0] != v.shape[0]:
        raise ValueError("sgd_update length mismatch")
    cdef Py_ssize_t i
    with nogil:
        for i in range(w.shape[0]):
            v[i] = momentum * v[i] + g[i] + weight_decay * w[i]
            w[i] -= lr * v[i]
