"""The threshold-switching decision process.

A detection pass walks a scored window stream once.  Each step the agent
picks one of two thresholds for the current window:

* action 0, threshold 0.0 ("active"): any positive score is flagged;
* action 1, threshold 1.0 ("passive"): nothing is flagged.

A window is flagged iff its score strictly exceeds the threshold.  The state
summarizes the ``lookback`` most recently classified windows: mean and
sample variance of their scores plus their confusion-cell fractions, so the
agent sees delayed ground truth (labels of windows it already classified),
never the current window's label.  The per-step reward weighs the same
rolling tally: alpha * (tp - fp - fn) + beta * tn with alpha + beta = 1.

The environment is pure: no randomness, and identical inputs and actions
reproduce identical trajectories.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .metrics import ConfusionCounts
from .validation import (
    as_float_array,
    as_label_array,
    check_positive_int,
    check_same_length,
    check_unit_interval,
)

# Index = action id; value = decision threshold.
ACTION_THRESHOLDS = (0.0, 1.0)
N_ACTIONS = 2
STATE_DIM = 6

# Confusion cell ids used in the rolling tally.
_TP, _TN, _FP, _FN = 0, 1, 2, 3


@dataclass(frozen=True)
class EnvConfig:
    """Reward weights and state lookback.

    alpha weighs detection outcomes (tp, fp, fn), beta weighs tn; they must
    be non-negative and sum to 1.  lookback is the number of recent windows
    the state and reward aggregate over.
    """

    lookback: int = 2
    alpha: float = 0.9
    beta: float = 0.1

    def __post_init__(self):
        check_positive_int(self.lookback, "lookback")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if abs(self.alpha + self.beta - 1.0) > 1e-12:
            raise ValueError(
                f"alpha + beta must equal 1, got {self.alpha} + {self.beta}"
            )


class EnvState(NamedTuple):
    """Rolling summary of the last ``lookback`` classified windows."""

    score_mean: float
    score_var: float
    tp_rate: float
    tn_rate: float
    fp_rate: float
    fn_rate: float

    def as_vector(self):
        return np.array(self, dtype=np.float64)


class StepOutcome(NamedTuple):
    state: EnvState
    reward: float
    terminal: bool
    prediction: int
    threshold: float
    window_index: int


def classify(score, threshold):
    """1 iff the score strictly exceeds the threshold."""
    return 1 if score > threshold else 0


def _cell(prediction, truth):
    if truth == 1:
        return _TP if prediction == 1 else _FN
    return _FP if prediction == 1 else _TN


def compute_state(scores, truths, predictions):
    """State over exactly the last ``lookback`` classified windows.

    ``scores``, ``truths`` and ``predictions`` are the records of those
    windows, oldest first.  Variance is the sample variance (divisor k - 1),
    defined as 0 for a single record.
    """
    k = len(scores)
    if k == 0:
        raise ValueError("compute_state needs at least one record")
    if len(truths) != k or len(predictions) != k:
        raise ValueError("scores, truths and predictions must have equal length")
    mean = sum(scores) / k
    if k > 1:
        var = sum((s - mean) ** 2 for s in scores) / (k - 1)
    else:
        var = 0.0
    tallies = [0, 0, 0, 0]
    for p, t in zip(predictions, truths):
        tallies[_cell(p, t)] += 1
    return EnvState(
        float(mean),
        float(var),
        tallies[_TP] / k,
        tallies[_TN] / k,
        tallies[_FP] / k,
        tallies[_FN] / k,
    )


def compute_reward(counts, config):
    """alpha * (tp - fp - fn) + beta * tn over a tally of ``lookback`` windows."""
    if counts.total != config.lookback:
        raise ValueError(
            f"tally covers {counts.total} windows, expected lookback {config.lookback}"
        )
    return config.alpha * (counts.tp - counts.fp - counts.fn) + config.beta * counts.tn


class ThresholdingEnv:
    """Single-pass episode over a scored, labeled window stream.

    ``reset`` classifies the first ``lookback`` windows with the passive
    threshold as warm-up and returns the state over them; each ``step``
    classifies one more window.  The reward tally includes the window just
    classified, so the reward reflects the evaluated action immediately.
    """

    def __init__(self, scores, truths, config):
        scores_arr = as_float_array(scores, "scores", ndim=1)
        check_unit_interval(scores_arr, "scores")
        truths_arr = as_label_array(truths, "truths")
        check_same_length(scores_arr, truths_arr, "scores", "truths")
        if len(scores_arr) < config.lookback + 1:
            raise ValueError(
                f"stream has {len(scores_arr)} windows; need at least "
                f"lookback + 1 = {config.lookback + 1}"
            )
        self.config = config
        self.scores = scores_arr
        self.truths = truths_arr
        self._scores_list = scores_arr.tolist()
        self._truths_list = truths_arr.tolist()
        self._n = len(scores_arr)
        self._cursor = None

    @property
    def n_steps(self):
        """Episode length: one step per window after the warm-up."""
        return self._n - self.config.lookback

    def reset(self):
        k = self.config.lookback
        self._predictions = [0] * self._n
        self._cells = [0] * self._n
        self._tally = [0, 0, 0, 0]
        passive = ACTION_THRESHOLDS[1]
        for i in range(k):
            pred = classify(self._scores_list[i], passive)
            self._predictions[i] = pred
            cell = _cell(pred, self._truths_list[i])
            self._cells[i] = cell
            self._tally[cell] += 1
        self._cursor = k
        return self._current_state()

    def _current_state(self):
        k = self.config.lookback
        lo = self._cursor - k
        return compute_state(
            self._scores_list[lo : self._cursor],
            self._truths_list[lo : self._cursor],
            self._predictions[lo : self._cursor],
        )

    def step(self, action):
        if self._cursor is None:
            raise RuntimeError("call reset before step")
        if self._cursor >= self._n:
            raise RuntimeError("episode is finished; call reset to start another")
        if action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {action!r}")
        i = self._cursor
        k = self.config.lookback
        threshold = ACTION_THRESHOLDS[action]
        pred = classify(self._scores_list[i], threshold)
        cell = _cell(pred, self._truths_list[i])
        self._predictions[i] = pred
        self._cells[i] = cell
        tally = self._tally
        tally[cell] += 1
        tally[self._cells[i - k]] -= 1
        # Same expression as compute_reward, kept inline for the hot loop.
        reward = (
            self.config.alpha * (tally[_TP] - tally[_FP] - tally[_FN])
            + self.config.beta * tally[_TN]
        )
        self._cursor += 1
        state = self._current_state()
        return StepOutcome(state, reward, self._cursor == self._n, pred, threshold, i)

    def tally_counts(self):
        """The current rolling tally as ConfusionCounts (for diagnostics)."""
        return ConfusionCounts(
            tp=self._tally[_TP], tn=self._tally[_TN],
            fp=self._tally[_FP], fn=self._tally[_FN],
        )
