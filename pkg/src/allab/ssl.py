"""Consistency-regularized semi-supervised training and the inconsistency
acquisition score built on it.

Each training step adds ``weight * mean symmetric-KL`` between predictions on
two seeded perturbations of an unlabeled minibatch; the weight ramps up
linearly.  The same divergence, evaluated between two perturbed prediction
passes, doubles as an acquisition score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import learner as learner_mod
from .acquisition import AcquisitionScores, score_inconsistency
from .data import Dataset, PoolPartition
from .errors import InvalidParameterError
from .learner import LearnerConfig, LearnerModel

__all__ = ["SSLConfig", "train_ssl", "acquire_inconsistency"]

PERTURBATIONS = ("gaussian_noise", "input_dropout")


@dataclass(frozen=True)
class SSLConfig:
    consistency_weight: float = 0.1
    perturbation: str = "gaussian_noise"
    noise_scale: float = 0.3
    unlabeled_batch_size: int = 64
    ramp_up_epochs: int = 30

    def __post_init__(self):
        if not np.isfinite(self.consistency_weight) or self.consistency_weight < 0:
            raise InvalidParameterError("consistency_weight must be finite and >= 0")
        if self.perturbation not in PERTURBATIONS:
            raise InvalidParameterError(
                f"perturbation must be one of {PERTURBATIONS}")
        if not self.noise_scale > 0:
            raise InvalidParameterError("noise_scale must be > 0")
        if self.perturbation == "input_dropout" and not self.noise_scale < 1:
            raise InvalidParameterError("input_dropout rate must be < 1")
        if self.unlabeled_batch_size < 1:
            raise InvalidParameterError("unlabeled_batch_size must be >= 1")
        if self.ramp_up_epochs < 0:
            raise InvalidParameterError("ramp_up_epochs must be >= 0")


def perturb(x: np.ndarray, cfg: SSLConfig, rng: np.random.Generator) -> np.ndarray:
    """One perturbed view of the rows of x."""
    if cfg.perturbation == "gaussian_noise":
        return x + cfg.noise_scale * rng.standard_normal(x.shape)
    keep = 1.0 - cfg.noise_scale
    mask = rng.random(x.shape) < keep
    return x * mask / keep


class _ConsistencyContext:
    """Duck-typed hook consumed by the training loop: supplies the ramped
    weight per epoch and freshly perturbed unlabeled view pairs per step."""

    def __init__(self, features, unlabeled, ssl_cfg, rng):
        self.features = features
        self.unlabeled = np.asarray(unlabeled, dtype=np.int64)
        self.cfg = ssl_cfg
        self.rng = rng

    def weight_for_epoch(self, epoch: int) -> float:
        w = self.cfg.consistency_weight
        if self.cfg.ramp_up_epochs > 0:
            w *= min(1.0, (epoch + 1) / self.cfg.ramp_up_epochs)
        return w

    def draw_views(self):
        take = min(self.cfg.unlabeled_batch_size, len(self.unlabeled))
        rows = self.rng.choice(len(self.unlabeled), size=take, replace=False)
        x = self.features[self.unlabeled[rows]]
        return (np.ascontiguousarray(perturb(x, self.cfg, self.rng)),
                np.ascontiguousarray(perturb(x, self.cfg, self.rng)))


def train_ssl(model: LearnerModel, ds: Dataset, partition: PoolPartition,
              cfg: LearnerConfig, ssl_cfg: SSLConfig) -> LearnerModel:
    """Supervised training plus the consistency term on the unlabeled pool.

    With ``consistency_weight == 0`` this is bitwise-identical to plain
    :func:`allab.learner.train` (the consistency machinery draws from its own
    rng stream, so skipping it leaves the supervised stream untouched).
    """
    if len(partition.unlabeled) < 1:
        raise InvalidParameterError("SSL training needs a non-empty unlabeled pool")
    if ssl_cfg.consistency_weight == 0.0:
        return learner_mod.train(model, ds, partition.labeled, cfg)
    ssl_rng = np.random.default_rng(
        np.random.SeedSequence((model.seed, model.epochs_trained, 0x55)))
    ctx = _ConsistencyContext(ds.features, partition.unlabeled, ssl_cfg, ssl_rng)
    return learner_mod.train(model, ds, partition.labeled, cfg, consistency=ctx)


def acquire_inconsistency(model: LearnerModel, ds: Dataset, unlabeled,
                          ssl_cfg: SSLConfig, seed: int) -> AcquisitionScores:
    """Symmetric KL between predictions on two seeded perturbations of each
    unlabeled sample."""
    unlabeled = np.asarray(unlabeled, dtype=np.int64)
    x = ds.features[unlabeled]
    rng = np.random.default_rng(seed)
    xa = np.ascontiguousarray(perturb(x, ssl_cfg, rng))
    xb = np.ascontiguousarray(perturb(x, ssl_cfg, rng))
    pa = learner_mod.predict_proba_features(model, xa)
    pb = learner_mod.predict_proba_features(model, xb)
    return score_inconsistency(pa, pb)
