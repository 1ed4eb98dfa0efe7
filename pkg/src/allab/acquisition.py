"""Acquisition strategies: pure functions from model outputs and pool state
to per-sample scores and selected unlabeled positions.

Entropy uses the natural log (the base only rescales scores and never changes
a ranking).  All logarithms floor their argument at 1e-12, so scores stay
finite on degenerate inputs.  Ties are always broken toward the lower
unlabeled position, which keeps every selection reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import (
    BudgetExceedsPoolError,
    InstanceTooLargeError,
    InvalidDistributionError,
    InvalidParameterError,
    TooFewSamplesError,
)

__all__ = [
    "STRATEGIES",
    "AcquisitionScores",
    "SelectionRequest",
    "score_random",
    "score_entropy",
    "score_var_ratio",
    "score_bald",
    "score_llal",
    "score_inconsistency",
    "select_top_k",
    "select_coreset",
    "brute_force_kcenter",
]

STRATEGIES = ("random", "entropy", "var_ratio", "bald", "llal", "coreset",
              "inconsistency")

_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class AcquisitionScores:
    """Finite score per unlabeled sample, aligned with the unlabeled order."""

    scores: np.ndarray
    strategy: str

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        if scores.ndim != 1:
            raise InvalidParameterError("scores must be a vector")
        if not np.isfinite(scores).all():
            raise InvalidParameterError("scores must all be finite")
        if self.strategy not in STRATEGIES:
            raise InvalidParameterError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class SelectionRequest:
    """How many samples to pick, with an optional random prefilter."""

    budget: int
    prefilter_size: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise InvalidParameterError("budget must be >= 1")
        if self.prefilter_size is not None and self.prefilter_size < self.budget:
            raise InvalidParameterError(
                "prefilter_size must be >= budget when set")


def _check_probs(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise InvalidDistributionError("expected an (n, c) probability matrix")
    if (probs < 0).any():
        raise InvalidDistributionError("probabilities must be non-negative")
    sums = probs.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-6:
        raise InvalidDistributionError("rows must sum to 1 within 1e-6")
    return probs


def score_random(n_unlabeled: int, seed: int) -> AcquisitionScores:
    """I.i.d. uniform [0, 1) scores; the default baseline."""
    if n_unlabeled < 1:
        raise InvalidParameterError("pool must be non-empty")
    scores = np.random.default_rng(seed).random(n_unlabeled)
    return AcquisitionScores(scores, "random")


def score_entropy(probs) -> AcquisitionScores:
    """Predictive entropy -sum p ln p per row, in [0, ln c]."""
    probs = _check_probs(probs)
    ent = -(probs * np.log(np.maximum(probs, _LOG_FLOOR))).sum(axis=1)
    return AcquisitionScores(ent, "entropy")


def score_var_ratio(probs) -> AcquisitionScores:
    """1 - max class probability per row, in [0, 1 - 1/c]."""
    probs = _check_probs(probs)
    return AcquisitionScores(1.0 - probs.max(axis=1), "var_ratio")


def score_bald(mc) -> AcquisitionScores:
    """Mutual information estimate: entropy of the mean prediction minus the
    mean per-pass entropy, clamped at zero."""
    mc = np.asarray(mc, dtype=np.float64)
    if mc.ndim != 3:
        raise InvalidParameterError("expected a (passes, n, c) tensor")
    if mc.shape[0] < 2:
        raise TooFewSamplesError("BALD needs at least 2 stochastic passes")
    for t in range(mc.shape[0]):
        _check_probs(mc[t])

    def ent(p):
        return -(p * np.log(np.maximum(p, _LOG_FLOOR))).sum(axis=-1)

    mean_p = mc.mean(axis=0)
    scores = ent(mean_p) - ent(mc).mean(axis=0)
    np.maximum(scores, 0.0, out=scores)
    return AcquisitionScores(scores, "bald")


def score_llal(predicted_losses) -> AcquisitionScores:
    """Predicted per-sample losses, used directly as ranking scores."""
    return AcquisitionScores(np.asarray(predicted_losses, dtype=np.float64),
                             "llal")


def score_inconsistency(probs_a, probs_b) -> AcquisitionScores:
    """Symmetric KL divergence between two prediction matrices, per row."""
    pa = _check_probs(probs_a)
    pb = _check_probs(probs_b)
    if pa.shape != pb.shape:
        raise InvalidParameterError(
            f"shape mismatch: {pa.shape} vs {pb.shape}")
    la = np.log(np.maximum(pa, _LOG_FLOOR))
    lb = np.log(np.maximum(pb, _LOG_FLOOR))
    scores = ((pa - pb) * (la - lb)).sum(axis=1)
    np.maximum(scores, 0.0, out=scores)
    return AcquisitionScores(scores, "inconsistency")


def select_top_k(scores: AcquisitionScores, req: SelectionRequest) -> np.ndarray:
    """Positions of the ``budget`` largest scores, in descending-score order.

    Ties go to the lower position.  With ``prefilter_size`` set, a seeded
    uniform subsample of positions is drawn first and selection happens only
    among those (the diversity heuristic).
    """
    vec = scores.scores
    n = len(vec)
    if req.budget > n:
        raise BudgetExceedsPoolError(
            f"budget {req.budget} exceeds pool size {n}")
    candidates = prefilter_candidates(n, req)
    order = np.argsort(-vec[candidates], kind="stable")[:req.budget]
    return candidates[order]


def prefilter_candidates(n: int, req: SelectionRequest) -> np.ndarray:
    """Candidate positions for selection: all of 0..n-1, or a seeded uniform
    subsample of ``prefilter_size`` of them (returned sorted)."""
    if req.prefilter_size is None or req.prefilter_size >= n:
        return np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(req.seed)
    return np.sort(rng.choice(n, size=req.prefilter_size, replace=False))


def select_coreset(embeddings_labeled, embeddings_unlabeled,
                   budget: int) -> np.ndarray:
    """Greedy k-center over embeddings.

    Repeatedly picks the unlabeled point farthest (Euclidean) from its
    nearest covered center, where centers are the labeled embeddings plus
    everything picked so far.  Carries the classical 2-approximation
    guarantee against the exhaustive optimum.
    """
    emb_l = np.asarray(embeddings_labeled, dtype=np.float64)
    emb_u = np.asarray(embeddings_unlabeled, dtype=np.float64)
    if emb_u.ndim != 2 or emb_u.shape[1] < 1:
        raise InvalidParameterError("unlabeled embeddings must be (n, h)")
    n = emb_u.shape[0]
    if budget < 1:
        raise InvalidParameterError("budget must be >= 1")
    if budget > n:
        raise BudgetExceedsPoolError(f"budget {budget} exceeds pool size {n}")

    picks = []
    if emb_l.size == 0:
        # no labeled centers yet: seed coverage with position 0
        picks.append(0)
        min_d2 = _dist2_to_center(emb_u, emb_u[0])
    else:
        if emb_l.ndim != 2 or emb_l.shape[1] != emb_u.shape[1]:
            raise InvalidParameterError("embedding dims must match")
        min_d2 = _min_dist2_to_centers(emb_u, emb_l)
    while len(picks) < budget:
        far = int(np.argmax(min_d2))  # argmax takes the lowest position on ties
        picks.append(far)
        np.minimum(min_d2, _dist2_to_center(emb_u, emb_u[far]), out=min_d2)
    return np.asarray(picks, dtype=np.int64)


def _dist2_to_center(points, center):
    d2 = (points * points).sum(axis=1) - 2.0 * (points @ center)
    d2 += center @ center
    return np.maximum(d2, 0.0, out=d2)


def _min_dist2_to_centers(points, centers, block: int = 512):
    # expansion form keeps memory at O(n * block) instead of O(n * |centers| * h)
    pp = (points * points).sum(axis=1)
    best = np.full(points.shape[0], np.inf)
    for start in range(0, centers.shape[0], block):
        blk = centers[start:start + block]
        d2 = pp[:, None] - 2.0 * (points @ blk.T)
        d2 += (blk * blk).sum(axis=1)[None, :]
        np.minimum(best, d2.min(axis=1), out=best)
    return np.maximum(best, 0.0, out=best)


def covering_radius(points, centers) -> float:
    """Max over points of the distance to the nearest center."""
    points = np.asarray(points, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if centers.size == 0:
        raise InvalidParameterError("need at least one center")
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min(axis=1).max()))


def brute_force_kcenter(points, centers_init, k: int):
    """Exhaustive k-center oracle: the k-subset of ``points`` minimizing the
    covering radius together with ``centers_init``.  Returns (indices, radius).
    """
    points = np.asarray(points, dtype=np.float64)
    centers_init = np.asarray(centers_init, dtype=np.float64)
    n = points.shape[0]
    if n > 12:
        raise InstanceTooLargeError(
            f"exhaustive oracle limited to 12 points, got {n}")
    if k < 0 or k > n:
        raise InvalidParameterError(f"k must be in [0, {n}]")
    if k == 0 and centers_init.size == 0:
        raise InvalidParameterError("k=0 needs initial centers to cover with")

    best_idx, best_radius = None, np.inf
    for subset in combinations(range(n), k):
        chosen = points[list(subset)]
        centers = (np.vstack([centers_init, chosen])
                   if centers_init.size else chosen)
        radius = covering_radius(points, centers)
        if radius < best_radius - 1e-15:
            best_idx, best_radius = subset, radius
    return np.asarray(best_idx, dtype=np.int64), float(best_radius)
