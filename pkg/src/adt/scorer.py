"""Reconstruction-based anomaly scoring.

An undercomplete autoencoder (relu hidden layers, sigmoid output) is trained
on normal-only windows with mean squared error.  The anomaly score of a
window is the L2 norm of its reconstruction error, min-max normalized into
[0, 1] against a reference segment and clamped there for held-out data.

The normalization range is deliberately fitted on a different segment than
the training windows (the mixed segment the thresholding agent trains on),
so scores of unseen anomalies saturate at 1 instead of rescaling the stream.
"""

import json
import os
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._io import atomic_write_text
from .nn import Mlp, make_optimizer
from .timeseries import WindowSequence
from .validation import as_float_array, check_unit_interval


@dataclass(frozen=True)
class ScoredWindow:
    """One window's place in a scored stream."""

    window_index: int
    score: float
    truth_label: int


def _as_matrix(X, name="X"):
    """Accept a WindowSequence or array and return (matrix, labels, meta)."""
    if isinstance(X, WindowSequence):
        return X.flat, X.labels, (X.window_size, X.n_channels)
    arr = as_float_array(X, name)
    if arr.ndim == 3:
        return arr.reshape(arr.shape[0], -1), None, (arr.shape[1], arr.shape[2])
    if arr.ndim == 2:
        return arr, None, None
    raise ValueError(f"{name} must be a WindowSequence or a 2-/3-dimensional array")


class AutoencoderScorer(BaseEstimator):
    """Window anomaly scorer with the architecture in - hidden - latent - hidden - in.

    Parameters
    ----------
    hidden : int, width of the two symmetric hidden layers.
    latent : int, bottleneck width.
    epochs, batch_size, lr, optimizer : training schedule knobs.
    random_state : seed controlling initialization and batch shuffling; the
        same seed and data give bit-identical parameters.
    """

    def __init__(self, hidden=64, latent=16, epochs=200, batch_size=64,
                 lr=1e-3, optimizer="adam", random_state=0):
        self.hidden = hidden
        self.latent = latent
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.optimizer = optimizer
        self.random_state = random_state

    def fit(self, X, y=None):
        """Train on normal windows only; any anomalous label raises."""
        matrix, labels, meta = _as_matrix(X)
        if y is not None:
            labels = np.asarray(y)
        if labels is not None and np.any(np.asarray(labels) == 1):
            raise ValueError(
                "scorer training data must be normal-only; got a window labeled 1"
            )
        if matrix.shape[0] == 0:
            raise ValueError("no training windows")
        check_unit_interval(matrix, "training windows")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        n, dim = matrix.shape
        rng = np.random.default_rng(self.random_state)
        net = Mlp([dim, self.hidden, self.latent, self.hidden, dim], "sigmoid", rng)
        opt = make_optimizer(self.optimizer, self.lr)
        curve = []
        for _ in range(self.epochs):
            order = rng.permutation(n)
            squared_sum = 0.0
            for lo in range(0, n, self.batch_size):
                idx = order[lo : lo + self.batch_size]
                xb = matrix[idx]
                out, cache = net.forward_cache(xb)
                diff = out - xb
                squared_sum += float(np.sum(diff * diff))
                grads = net.backward(cache, 2.0 * diff / diff.size)
                opt.step(net, grads)
            curve.append(squared_sum / (n * dim))
        self.net_ = net
        self.loss_curve_ = curve
        self.input_dim_ = dim
        self.window_shape_ = meta
        return self

    def _check_net(self):
        if not hasattr(self, "net_"):
            raise NotFittedError("AutoencoderScorer is not fitted; call fit first")

    def raw_errors(self, X):
        """L2-norm reconstruction error per window (unnormalized score)."""
        self._check_net()
        matrix, _, _ = _as_matrix(X)
        if matrix.shape[1] != self.input_dim_:
            raise ValueError(
                f"windows have {matrix.shape[1]} values, scorer expects {self.input_dim_}"
            )
        out = self.net_.forward(matrix)
        return np.sqrt(np.sum((out - matrix) ** 2, axis=1))

    def fit_score_range(self, X):
        """Pin the [0, 1] score normalization to this segment's raw errors."""
        errors = self.raw_errors(X)
        if errors.size == 0:
            raise ValueError("cannot fit the score range on an empty segment")
        self.score_min_ = float(errors.min())
        self.score_max_ = float(errors.max())
        return self

    def score_samples(self, X):
        """Anomaly scores in [0, 1]; requires fit and fit_score_range."""
        if not hasattr(self, "score_min_"):
            raise NotFittedError(
                "score normalization range not fitted; call fit_score_range first"
            )
        errors = self.raw_errors(X)
        span = self.score_max_ - self.score_min_
        if span <= 0.0:
            return np.zeros_like(errors)
        return np.clip((errors - self.score_min_) / span, 0.0, 1.0)

    def save(self, prefix):
        """Write <prefix>.json (header) and <prefix>.net.w (weights)."""
        self._check_net()
        net_file = os.path.basename(prefix) + ".net.w"
        header = {
            "format": 1,
            "input_dim": self.input_dim_,
            "hidden": self.hidden,
            "latent": self.latent,
            "window_shape": list(self.window_shape_) if self.window_shape_ else None,
            "score_min": getattr(self, "score_min_", None),
            "score_max": getattr(self, "score_max_", None),
            "net_file": net_file,
        }
        atomic_write_text(prefix + ".json", json.dumps(header, indent=2) + "\n")
        self.net_.save(os.path.join(os.path.dirname(prefix) or ".", net_file))

    @classmethod
    def load(cls, prefix):
        with open(prefix + ".json", "r", encoding="utf-8") as fh:
            header = json.load(fh)
        if header.get("format") != 1:
            raise ValueError(f"{prefix}.json: unsupported scorer format {header.get('format')}")
        scorer = cls(hidden=header["hidden"], latent=header["latent"])
        scorer.net_ = Mlp.load(os.path.join(os.path.dirname(prefix) or ".", header["net_file"]))
        scorer.input_dim_ = header["input_dim"]
        shape = header.get("window_shape")
        scorer.window_shape_ = tuple(shape) if shape else None
        if scorer.net_.layer_sizes[0] != scorer.input_dim_:
            raise ValueError(f"{prefix}: weight file does not match the stored input_dim")
        if header.get("score_min") is not None:
            scorer.score_min_ = header["score_min"]
            scorer.score_max_ = header["score_max"]
        return scorer
