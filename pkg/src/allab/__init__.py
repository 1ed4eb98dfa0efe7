"""Desk-scale pool-based active-learning laboratory.

Six acquisition strategies (random, entropy, variation ratio, BALD, loss
prediction, core-set) plus a consistency-based inconsistency score, a
reproducible train/score/select/label loop with scratch-vs-finetune and
budget ablations, and a consistency-regularized semi-supervised mode.
"""

from . import _kernels, acquisition, data, learner, loop, ssl
from ._kernels import backend_name

__version__ = "0.1.0"

__all__ = ["data", "learner", "acquisition", "loop", "ssl",
           "backend_name", "__version__"]
