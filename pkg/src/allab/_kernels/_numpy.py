"""Pure-numpy implementations of the hot training kernels.

Mirrors the signatures of the compiled core (`_core.pyx`).  All matrices are
C-contiguous float64; ``out`` arguments are written in place so callers can
reuse buffers.
"""

import numpy as np

NAME = "python"


def gemm(a, b, out, trans_a=False, trans_b=False):
    """out = opA(a) @ opB(b), where op transposes when the flag is set."""
    np.matmul(a.T if trans_a else a, b.T if trans_b else b, out=out)
    return out


def gemm_acc(a, b, out, trans_a=False, trans_b=False):
    """out += opA(a) @ opB(b)."""
    out += np.matmul(a.T if trans_a else a, b.T if trans_b else b)
    return out


def affine(x, w, b, out):
    """out = x @ w + b (bias broadcast over rows)."""
    np.matmul(x, w, out=out)
    out += b
    return out


def relu(z, out):
    return np.maximum(z, 0.0, out=out)


def relu_bwd(z, g, out):
    """out = g where z > 0 else 0."""
    np.multiply(g, z > 0.0, out=out)
    return out


def softmax(logits, out):
    """Row-wise softmax with max subtraction."""
    np.subtract(logits, logits.max(axis=1, keepdims=True), out=out)
    np.exp(out, out=out)
    out /= out.sum(axis=1, keepdims=True)
    return out


def per_sample_ce(probs, labels, out):
    """out[i] = -ln probs[i, labels[i]]."""
    np.log(probs[np.arange(len(labels)), labels], out=out)
    np.negative(out, out=out)
    return out


def ce_grad(probs, labels, scale, out):
    """out = scale * (probs - onehot(labels))."""
    np.copyto(out, probs)
    out[np.arange(len(labels)), labels] -= 1.0
    out *= scale
    return out


def dropout_apply(x, mask, scale, out):
    """out = x * mask * scale (inverted dropout)."""
    np.multiply(x, mask, out=out)
    out *= scale
    return out


def sgd_update(w, g, v, lr, momentum, weight_decay):
    """v = momentum*v + g + weight_decay*w; w -= lr*v.  All 1-D, in place."""
    v *= momentum
    v += g
    if weight_decay != 0.0:
        v += weight_decay * w
    w -= lr * v
