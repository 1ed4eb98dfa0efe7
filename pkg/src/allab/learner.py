"""Feed-forward classifier with dropout, SGD+momentum training, MC-dropout
sampling, penultimate embeddings and an auxiliary loss-prediction head.

The hot per-batch arithmetic goes through ``allab._kernels`` (compiled core
when built, numpy otherwise); everything above the kernel level is plain
Python and identical for both backends.

Sign convention of the pairwise ranking loss (see :func:`llal_pair_loss`):
a pair is penalized when the *predicted* loss ordering disagrees with the
true loss ordering.  Some published statements of this loss carry the
opposite sign, which would reward mispredictions; this implementation
penalizes disagreement.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import Dataset
from .errors import (
    InvalidParameterError,
    LossHeadMissingError,
    NonFiniteLossError,
    OddBatchError,
    ParseError,
)

__all__ = [
    "LearnerConfig",
    "LearnerModel",
    "init_model",
    "train",
    "predict_proba",
    "predict_proba_mc",
    "embed",
    "predict_loss",
    "llal_pair_loss",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class LearnerConfig:
    """Architecture and training schedule.

    ``llal_detach_epoch=None`` derives the default 0.6 * epochs, after which
    head gradients stop flowing into the trunk.
    """

    hidden_sizes: tuple = (128, 64)
    dropout_p: float = 0.2
    epochs: int = 200
    batch_size: int = 64
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_step_epoch: int = 160
    lr_step_factor: float = 0.1
    seed: int = 0
    loss_head: bool = False
    llal_margin: float = 1.0
    llal_weight: float = 1.0
    llal_detach_epoch: int | None = None
    llal_interm: int = 32

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if any(h < 1 for h in self.hidden_sizes):
            raise InvalidParameterError("hidden layer widths must be >= 1")
        if self.lr < 0:
            raise InvalidParameterError("lr must be >= 0")
        if not 0 <= self.momentum < 1:
            raise InvalidParameterError("momentum must be in [0, 1)")
        if self.epochs < 1:
            raise InvalidParameterError("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidParameterError("batch_size must be >= 1")
        if not 0 <= self.dropout_p < 1:
            raise InvalidParameterError("dropout_p must be in [0, 1)")
        if self.weight_decay < 0:
            raise InvalidParameterError("weight_decay must be >= 0")
        if self.llal_margin < 0 or self.llal_weight < 0:
            raise InvalidParameterError("llal margin and weight must be >= 0")
        if self.loss_head and self.batch_size % 2 != 0:
            raise InvalidParameterError(
                "batch_size must be even when the loss head is enabled")
        if self.llal_interm < 1:
            raise InvalidParameterError("llal_interm must be >= 1")

    @property
    def detach_epoch(self) -> int:
        if self.llal_detach_epoch is not None:
            return self.llal_detach_epoch
        return int(round(0.6 * self.epochs))


@dataclass
class LearnerModel:
    """Trunk parameters, optional loss-head parameters and training state."""

    dim: int
    num_classes: int
    hidden_sizes: tuple
    dropout_p: float
    weights: list  # trunk weight matrices, (fan_in, fan_out) each
    biases: list
    head_w1: list | None  # one tap per hidden layer (or the input when none)
    head_b1: list | None
    head_w2: np.ndarray | None
    head_b2: np.ndarray | None
    llal_interm: int
    seed: int
    rng: np.random.Generator
    epochs_trained: int = 0
    loss_history: list = field(default_factory=list)

    @property
    def has_loss_head(self) -> bool:
        return self.head_w2 is not None

    @property
    def embed_dim(self) -> int:
        return self.hidden_sizes[-1] if self.hidden_sizes else self.dim

    def parameter_arrays(self) -> list:
        """All trainable arrays, in a fixed order."""
        arrays = []
        for w, b in zip(self.weights, self.biases):
            arrays.extend([w, b])
        if self.has_loss_head:
            for w, b in zip(self.head_w1, self.head_b1):
                arrays.extend([w, b])
            arrays.extend([self.head_w2, self.head_b2])
        return arrays


def _uniform_fan_in(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_model(cfg: LearnerConfig, dim: int, num_classes: int) -> LearnerModel:
    """Fresh model with scaled-uniform fan-in init, deterministic in cfg.seed."""
    if dim < 1:
        raise InvalidParameterError("dim must be >= 1")
    if num_classes < 2:
        raise InvalidParameterError("num_classes must be >= 2")
    rng = np.random.default_rng(cfg.seed)
    sizes = [dim, *cfg.hidden_sizes, num_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(_uniform_fan_in(rng, fan_in, (fan_in, fan_out)))
        biases.append(_uniform_fan_in(rng, fan_in, (fan_out,)))
    head_w1 = head_b1 = head_w2 = head_b2 = None
    if cfg.loss_head:
        taps = list(cfg.hidden_sizes) if cfg.hidden_sizes else [dim]
        head_w1, head_b1 = [], []
        for width in taps:
            head_w1.append(_uniform_fan_in(rng, width, (width, cfg.llal_interm)))
            head_b1.append(_uniform_fan_in(rng, width, (cfg.llal_interm,)))
        joint = len(taps) * cfg.llal_interm
        head_w2 = _uniform_fan_in(rng, joint, (joint, 1))
        head_b2 = _uniform_fan_in(rng, joint, (1,))
    return LearnerModel(
        dim=dim, num_classes=num_classes, hidden_sizes=cfg.hidden_sizes,
        dropout_p=cfg.dropout_p, weights=weights, biases=biases,
        head_w1=head_w1, head_b1=head_b1, head_w2=head_w2, head_b2=head_b2,
        llal_interm=cfg.llal_interm, seed=cfg.seed, rng=rng)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def _forward_trunk(model, x, masks=None):
    """Forward pass.

    Returns (zs, rs, layer_inputs, logits, probs) where layer_inputs[i] is
    what layer i consumed (post-dropout when masks are given) and rs are the
    post-relu activations the loss head taps.
    """
    K = _kernels.active
    n = x.shape[0]
    zs, rs = [], []
    inputs = [x]
    a = x
    scale = 1.0 / (1.0 - model.dropout_p) if model.dropout_p > 0 else 1.0
    for i, width in enumerate(model.hidden_sizes):
        z = K.affine(a, model.weights[i], model.biases[i], np.empty((n, width)))
        r = K.relu(z, np.empty_like(z))
        zs.append(z)
        rs.append(r)
        if masks is not None and model.dropout_p > 0:
            a = K.dropout_apply(r, masks[i], scale, np.empty_like(r))
        else:
            a = r
        inputs.append(a)
    logits = K.affine(a, model.weights[-1], model.biases[-1],
                      np.empty((n, model.num_classes)))
    probs = K.softmax(logits, np.empty_like(logits))
    return zs, rs, inputs, logits, probs


def _backward_trunk(model, glogits, zs, inputs, masks, grads_w, grads_b,
                    extra_r_grads=None):
    """Accumulate trunk gradients given dLoss/dlogits (and optional extra
    gradients arriving at each post-relu activation, e.g. from the head)."""
    K = _kernels.active
    scale = 1.0 / (1.0 - model.dropout_p) if model.dropout_p > 0 else 1.0
    g = glogits
    K.gemm_acc(inputs[-1], g, grads_w[-1], trans_a=True)
    grads_b[-1] += g.sum(axis=0)
    for i in range(len(model.hidden_sizes) - 1, -1, -1):
        gd = K.gemm(g, model.weights[i + 1], np.empty((g.shape[0], model.hidden_sizes[i])),
                    trans_b=True)
        if masks is not None and model.dropout_p > 0:
            gr = K.dropout_apply(gd, masks[i], scale, gd)
        else:
            gr = gd
        if extra_r_grads is not None and extra_r_grads[i] is not None:
            gr += extra_r_grads[i]
        gz = K.relu_bwd(zs[i], gr, gr)
        K.gemm_acc(inputs[i], gz, grads_w[i], trans_a=True)
        grads_b[i] += gz.sum(axis=0)
        g = gz


def _forward_head(model, taps):
    """Loss-head forward over the tap activations; returns (pres, hs, joint, lhat)."""
    K = _kernels.active
    n = taps[0].shape[0]
    pres, hs = [], []
    for t, tap in enumerate(taps):
        pre = K.affine(tap, model.head_w1[t], model.head_b1[t],
                       np.empty((n, model.llal_interm)))
        pres.append(pre)
        hs.append(K.relu(pre, np.empty_like(pre)))
    joint = hs[0] if len(hs) == 1 else np.concatenate(hs, axis=1)
    lhat = K.affine(joint, model.head_w2, model.head_b2, np.empty((n, 1)))
    return pres, hs, joint, lhat[:, 0]


def _backward_head(model, glhat, taps, pres, joint, head_gw1, head_gb1,
                   head_gw2, head_gb2, want_tap_grads):
    """Accumulate head gradients; returns per-tap input gradients (or None)."""
    K = _kernels.active
    g2 = glhat[:, None]
    K.gemm_acc(joint, g2, head_gw2, trans_a=True)
    head_gb2 += g2.sum(axis=0)
    gjoint = K.gemm(g2, model.head_w2, np.empty_like(joint), trans_b=True)
    interm = model.llal_interm
    tap_grads = [] if want_tap_grads else None
    for t, tap in enumerate(taps):
        gh = np.ascontiguousarray(gjoint[:, t * interm:(t + 1) * interm])
        gpre = K.relu_bwd(pres[t], gh, gh)
        K.gemm_acc(tap, gpre, head_gw1[t], trans_a=True)
        head_gb1[t] += gpre.sum(axis=0)
        if want_tap_grads:
            tap_grads.append(K.gemm(gpre, model.head_w1[t],
                                    np.empty_like(tap), trans_b=True))
    return tap_grads


def llal_pair_loss(losses, predicted, margin: float) -> float:
    """Mean hinge over pairs (first half vs second half of the batch).

    For pair (j, k): max(0, -s * (predicted_k - predicted_j) + margin) with
    s = +1 when losses_k > losses_j else -1, i.e. zero whenever the predicted
    ordering matches the true ordering by at least the margin.
    """
    losses = np.asarray(losses, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if losses.shape != predicted.shape or losses.ndim != 1:
        raise InvalidParameterError("losses and predictions must be equal-length vectors")
    n = len(losses)
    if n == 0 or n % 2 != 0:
        raise OddBatchError(f"pairing requires a non-empty even batch, got {n}")
    loss, _, _ = _pair_loss_with_grads(losses, predicted, margin)
    return float(loss)


def _pair_loss_with_grads(losses, predicted, margin):
    """Returns (loss, grad_wrt_predicted_first_half, grad_second_half)."""
    p = len(losses) // 2
    lj, lk = losses[:p], losses[p:2 * p]
    hj, hk = predicted[:p], predicted[p:2 * p]
    s = np.where(lk > lj, 1.0, -1.0)
    m = -s * (hk - hj) + margin
    active = m > 0
    loss = np.where(active, m, 0.0).sum() / p
    gk = np.where(active, -s, 0.0) / p
    return loss, -gk, gk


def _softmax_jacobian_vp(probs, gprobs, out):
    """out = J_softmax^T gprobs, row-wise: p * (g - sum(p*g))."""
    dot = (probs * gprobs).sum(axis=1, keepdims=True)
    np.subtract(gprobs, dot, out=out)
    out *= probs
    return out


def _sym_kl_value_and_prob_grads(pa, pb):
    """Mean symmetric KL over rows plus gradients w.r.t. both prob matrices."""
    n = pa.shape[0]
    la, lb = np.log(pa), np.log(pb)
    diff = la - lb
    value = ((pa - pb) * diff).sum() / n
    ga = (diff + 1.0 - pb / pa) / n
    gb = (-diff + 1.0 - pa / pb) / n
    return value, ga, gb


class _GradBuffers:
    """Zero-initialized gradient accumulators matching the model parameters."""

    def __init__(self, model):
        self.w = [np.zeros_like(w) for w in model.weights]
        self.b = [np.zeros_like(b) for b in model.biases]
        if model.has_loss_head:
            self.hw1 = [np.zeros_like(w) for w in model.head_w1]
            self.hb1 = [np.zeros_like(b) for b in model.head_b1]
            self.hw2 = np.zeros_like(model.head_w2)
            self.hb2 = np.zeros_like(model.head_b2)
        else:
            self.hw1 = self.hb1 = None
            self.hw2 = self.hb2 = None

    def zero(self):
        for a in self.arrays():
            a.fill(0.0)

    def arrays(self):
        # same order as LearnerModel.parameter_arrays
        out = []
        for w, b in zip(self.w, self.b):
            out.extend([w, b])
        if self.hw2 is not None:
            for w, b in zip(self.hw1, self.hb1):
                out.extend([w, b])
            out.extend([self.hw2, self.hb2])
        return out


def _batch_loss_and_grads(model, x, y, masks, cfg, detach_head,
                          views=None, cons_weight=0.0, grads=None):
    """Total loss for one step: cross-entropy, plus the ranking term when the
    head is on, plus the consistency term when two views are given.

    Gradients accumulate into ``grads`` (allocated when omitted).  Pure
    function of its inputs; the training loop and the gradient-check tests
    both go through here.
    """
    K = _kernels.active
    if grads is None:
        grads = _GradBuffers(model)
    n = x.shape[0]
    zs, rs, inputs, logits, probs = _forward_trunk(model, x, masks)
    ce_vec = K.per_sample_ce(probs, y, np.empty(n))
    loss = float(ce_vec.mean())
    glogits = K.ce_grad(probs, y, 1.0 / n, np.empty_like(probs))

    extra = None
    if model.has_loss_head:
        taps = rs if model.hidden_sizes else [x]
        n_pair = (n // 2) * 2
        if n_pair >= 2 and cfg.llal_weight > 0:
            pres, hs, joint, lhat = _forward_head(model, taps)
            pair, gj, gk = _pair_loss_with_grads(
                ce_vec[:n_pair], lhat[:n_pair], cfg.llal_margin)
            loss += cfg.llal_weight * pair
            glhat = np.zeros(n)
            glhat[:n_pair // 2] = cfg.llal_weight * gj
            glhat[n_pair // 2:n_pair] = cfg.llal_weight * gk
            tap_grads = _backward_head(
                model, glhat, taps, pres, joint,
                grads.hw1, grads.hb1, grads.hw2, grads.hb2,
                want_tap_grads=not detach_head)
            if tap_grads is not None and model.hidden_sizes:
                extra = tap_grads

    _backward_trunk(model, glogits, zs, inputs, masks, grads.w, grads.b,
                    extra_r_grads=extra)

    if views is not None and cons_weight > 0.0:
        xa, xb = views
        m = xa.shape[0]
        zs_a, _, in_a, _, pa = _forward_trunk(model, xa, None)
        zs_b, _, in_b, _, pb = _forward_trunk(model, xb, None)
        value, gpa, gpb = _sym_kl_value_and_prob_grads(pa, pb)
        loss += cons_weight * value
        gza = _softmax_jacobian_vp(pa, gpa, np.empty_like(pa))
        gza *= cons_weight
        gzb = _softmax_jacobian_vp(pb, gpb, np.empty_like(pb))
        gzb *= cons_weight
        _backward_trunk(model, gza, zs_a, in_a, None, grads.w, grads.b)
        _backward_trunk(model, gzb, zs_b, in_b, None, grads.w, grads.b)

    return loss, grads


def _batch_loss(model, x, y, masks, cfg, detach_head, views=None,
                cons_weight=0.0):
    """Loss only; used by the finite-difference tests."""
    loss, _ = _batch_loss_and_grads(model, x, y, masks, cfg, detach_head,
                                    views=views, cons_weight=cons_weight)
    return loss


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _check_arch(model, cfg):
    if tuple(model.hidden_sizes) != tuple(cfg.hidden_sizes):
        raise InvalidParameterError("model architecture does not match config")
    if cfg.loss_head and not model.has_loss_head:
        raise LossHeadMissingError("config enables the loss head but the "
                                   "model was built without one")


def train(model: LearnerModel, ds: Dataset, labeled, cfg: LearnerConfig,
          consistency=None) -> LearnerModel:
    """Minibatch SGD with momentum and weight decay over cross-entropy.

    The learning rate is multiplied once by ``lr_step_factor`` from epoch
    ``lr_step_epoch`` on, counted against the model's lifetime epoch counter:
    a freshly initialized model walks the schedule from the top, while
    continued training (a loaded checkpoint, or finetuning across cycles)
    resumes the schedule where it left off instead of restarting at full
    rate.  With the loss head enabled the ranking term is added (head
    gradients stop flowing into the trunk from ``detach_epoch`` on; that
    curriculum, like the consistency ramp, is per call).  ``consistency`` is
    an optional duck-typed context adding a perturbation-consistency term on
    unlabeled data (see ``allab.ssl``).  Momentum buffers start at zero on
    every call.
    """
    labeled = np.asarray(labeled, dtype=np.int64)
    if labeled.size == 0:
        raise InvalidParameterError("labeled set must be non-empty")
    _check_arch(model, cfg)

    x_all = ds.features[labeled]
    y_all = ds.labels[labeled]
    n = len(labeled)
    grads = _GradBuffers(model)
    params = model.parameter_arrays()
    garrays = grads.arrays()
    velocity = [np.zeros(p.size) for p in params]
    rng = model.rng
    keep = 1.0 - cfg.dropout_p
    K = _kernels.active

    for epoch in range(cfg.epochs):
        lr = cfg.lr * (cfg.lr_step_factor
                       if model.epochs_trained >= cfg.lr_step_epoch else 1.0)
        detach = epoch >= cfg.detach_epoch
        cons_weight = consistency.weight_for_epoch(epoch) if consistency is not None else 0.0
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb = np.ascontiguousarray(x_all[idx])
            yb = np.ascontiguousarray(y_all[idx])
            masks = None
            if cfg.dropout_p > 0:
                masks = [(rng.random((len(idx), h)) < keep).astype(np.float64)
                         for h in model.hidden_sizes]
            views = consistency.draw_views() if (
                consistency is not None and cons_weight > 0.0) else None
            grads.zero()
            loss, _ = _batch_loss_and_grads(
                model, xb, yb, masks, cfg, detach,
                views=views, cons_weight=cons_weight, grads=grads)
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"training diverged at epoch {epoch} "
                    f"(loss={loss!r}, lr={lr}, |labeled|={n})")
            if lr != 0.0:
                for p, g, v in zip(params, garrays, velocity):
                    K.sgd_update(p.reshape(-1), g.reshape(-1), v, lr,
                                 cfg.momentum, cfg.weight_decay)
            epoch_loss += loss * len(idx)
        model.loss_history.append(epoch_loss / n)
        model.epochs_trained += 1
    return model


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def _take(ds, indices):
    return np.ascontiguousarray(ds.features[np.asarray(indices, dtype=np.int64)])


def predict_proba(model: LearnerModel, ds: Dataset, indices) -> np.ndarray:
    """Row-stochastic class probabilities; dropout disabled."""
    x = _take(ds, indices)
    _, _, _, _, probs = _forward_trunk(model, x, None)
    return probs


def predict_proba_features(model: LearnerModel, x: np.ndarray) -> np.ndarray:
    """predict_proba on a raw (n, dim) feature matrix instead of dataset rows."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise InvalidParameterError(
            f"expected feature matrix of shape (n, {model.dim}), got {x.shape}")
    _, _, _, _, probs = _forward_trunk(model, x, None)
    return probs


def predict_proba_mc(model: LearnerModel, ds: Dataset, indices, passes: int,
                     seed: int) -> np.ndarray:
    """(passes, n, c) tensor of dropout-active forward passes, seeded."""
    if passes < 1:
        raise InvalidParameterError("need at least one stochastic pass")
    if model.dropout_p <= 0:
        raise InvalidParameterError(
            "MC sampling needs dropout_p > 0; the model was built without dropout")
    x = _take(ds, indices)
    rng = np.random.default_rng(seed)
    keep = 1.0 - model.dropout_p
    out = np.empty((passes, x.shape[0], model.num_classes))
    for t in range(passes):
        masks = [(rng.random((x.shape[0], h)) < keep).astype(np.float64)
                 for h in model.hidden_sizes]
        _, _, _, _, probs = _forward_trunk(model, x, masks)
        out[t] = probs
    return out


def embed(model: LearnerModel, ds: Dataset, indices) -> np.ndarray:
    """Penultimate-layer activations (the raw input when there are no hidden
    layers); dropout disabled."""
    x = _take(ds, indices)
    if not model.hidden_sizes:
        return x
    _, rs, _, _, _ = _forward_trunk(model, x, None)
    return rs[-1]


def predict_loss(model: LearnerModel, ds: Dataset, indices) -> np.ndarray:
    """Predicted per-sample loss from the auxiliary head; dropout disabled."""
    if not model.has_loss_head:
        raise LossHeadMissingError("model has no loss-prediction head")
    x = _take(ds, indices)
    _, rs, _, _, _ = _forward_trunk(model, x, None)
    taps = rs if model.hidden_sizes else [x]
    _, _, _, lhat = _forward_head(model, taps)
    return lhat


# ---------------------------------------------------------------------------
# checkpoint file (little-endian; magic, dims, row-major float64 payload)
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"ALAB"
_CKPT_VERSION = 1


def save_checkpoint(model: LearnerModel, path: str):
    """Versioned binary layout: magic, version, architecture, then all
    parameter matrices as row-major float64."""
    flags = 1 if model.has_loss_head else 0
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIB3x", _CKPT_MAGIC, _CKPT_VERSION, flags))
        fh.write(struct.pack("<III", model.dim, model.num_classes,
                             len(model.hidden_sizes)))
        for h in model.hidden_sizes:
            fh.write(struct.pack("<I", h))
        fh.write(struct.pack("<dIIq", model.dropout_p, model.llal_interm,
                             model.epochs_trained, model.seed))
        for arr in model.parameter_arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> LearnerModel:
    """Inverse of :func:`save_checkpoint`.

    The training rng is re-derived from (seed, epochs_trained); the live
    generator state is not persisted.
    """
    with open(path, "rb") as fh:
        blob = fh.read()

    def fail(msg):
        raise ParseError(f"{path}: {msg}")

    off = 0

    def unpack(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            fail(f"truncated at offset {off}")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    magic, version, flags = unpack("<4sIB3x")
    if magic != _CKPT_MAGIC:
        fail(f"bad magic {magic!r}")
    if version != _CKPT_VERSION:
        fail(f"unsupported version {version}")
    dim, num_classes, n_hidden = unpack("<III")
    hidden = tuple(unpack("<I")[0] for _ in range(n_hidden))
    dropout_p, interm, epochs, seed = unpack("<dIIq")

    def read_array(shape):
        nonlocal off
        count = int(np.prod(shape))
        size = count * 8
        if off + size > len(blob):
            fail(f"truncated parameter block at offset {off}")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
        off += size
        return arr.reshape(shape).copy()

    sizes = [dim, *hidden, num_classes]
    # weights and biases interleave in parameter_arrays order
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(read_array((fan_in, fan_out)))
        biases.append(read_array((fan_out,)))
    head_w1 = head_b1 = head_w2 = head_b2 = None
    if flags & 1:
        taps = list(hidden) if hidden else [dim]
        head_w1, head_b1 = [], []
        for width in taps:
            head_w1.append(read_array((width, interm)))
            head_b1.append(read_array((interm,)))
        joint = len(taps) * interm
        head_w2 = read_array((joint, 1))
        head_b2 = read_array((1,))
    if off != len(blob):
        fail(f"{len(blob) - off} trailing bytes")
    return LearnerModel(
        dim=dim, num_classes=num_classes, hidden_sizes=hidden,
        dropout_p=dropout_p, weights=weights, biases=biases,
        head_w1=head_w1, head_b1=head_b1, head_w2=head_w2, head_b2=head_b2,
        llal_interm=interm, seed=seed,
        rng=np.random.default_rng((seed, epochs)), epochs_trained=epochs)
