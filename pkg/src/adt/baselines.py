"""Reference thresholding baselines.

Two comparison points for the learned policy:

* :class:`StaticThresholder` brute-forces the single F1-optimal cut over a
  scored stream.  Candidates are the midpoints between consecutive distinct
  scores plus sentinels below the minimum and above the maximum, so every
  achievable prediction partition is evaluated; ties break toward the
  smallest threshold.

* :class:`DspotThresholder` is the streaming peaks-over-threshold detector
  with drift correction: values are centered by a depth-``depth`` moving
  average, excesses over the 98th-percentile anchor feed a generalized
  Pareto tail model, and the alarm line is the extreme q-quantile of that
  model.  Alarming values update neither the tail model nor the drift
  buffer.

The generalized Pareto fit uses Grimshaw's reduction of the likelihood
equations to a scalar root search, with a method-of-moments candidate and
the exponential (gamma = 0) limit as fallbacks; the best log-likelihood
wins.  Fitting happens on excesses divided by their mean, which makes the
estimated scale exactly equivariant under rescaling of the input.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .metrics import ConfusionCounts, precision_recall_f1
from .validation import as_float_array, as_label_array, check_same_length

TAIL_PERCENTILE = 0.98
_GAMMA_ZERO_TOL = 1e-12
_ROOT_GRID_POINTS = 64


@dataclass(frozen=True)
class StaticThresholdResult:
    threshold: float
    precision: float
    recall: float
    f1: float


def optimal_static_threshold(scores, truths):
    """Exhaustive search for the F1-maximizing fixed threshold.

    Predictions are ``score > threshold``.  Every distinct partition of the
    stream is scored via one sorted pass with suffix sums, so the search is
    exact in O(n log n).  Ties on F1 go to the smallest candidate threshold.
    """
    s = as_float_array(scores, "scores", ndim=1)
    t = as_label_array(truths, "truths")
    check_same_length(s, t, "scores", "truths")
    if s.size == 0:
        raise ValueError("scores must be non-empty")

    order = np.argsort(s, kind="stable")
    s_sorted = s[order]
    t_sorted = t[order]
    n = s.size
    total_pos = int(t_sorted.sum())
    # suffix_pos[i] = number of true anomalies among s_sorted[i:]
    suffix_pos = np.concatenate([np.cumsum(t_sorted[::-1])[::-1], [0]])

    # Candidate thresholds with the boundary index of the first predicted
    # positive: below-min (everything flagged), midpoints between distinct
    # values, above-max (nothing flagged).
    distinct_starts = np.flatnonzero(np.concatenate([[True], s_sorted[1:] != s_sorted[:-1]]))
    candidates = [(float(s_sorted[0] - 1.0), 0)]
    for a, b in zip(distinct_starts[:-1], distinct_starts[1:]):
        candidates.append((float((s_sorted[a] + s_sorted[b]) / 2.0), int(b)))
    candidates.append((float(s_sorted[-1] + 1.0), n))

    best = None
    for threshold, boundary in candidates:
        tp = int(suffix_pos[boundary])
        fp = (n - boundary) - tp
        fn = total_pos - tp
        tn = boundary - fn
        p, r, f1 = precision_recall_f1(ConfusionCounts(tp, tn, fp, fn))
        if best is None or f1 > best.f1:
            best = StaticThresholdResult(threshold, p, r, f1)
    return best


class StaticThresholder(BaseEstimator):
    """The optimal-static baseline as an estimator."""

    def fit(self, scores, truths):
        result = optimal_static_threshold(scores, truths)
        self.threshold_ = result.threshold
        self.precision_ = result.precision
        self.recall_ = result.recall
        self.f1_ = result.f1
        return self

    def predict(self, scores):
        if not hasattr(self, "threshold_"):
            raise NotFittedError("StaticThresholder is not fitted; call fit first")
        s = as_float_array(scores, "scores", ndim=1)
        return (s > self.threshold_).astype(np.int64)

    def decision_trace(self, scores):
        """(thresholds, predictions) in the same shape the agent emits."""
        predictions = self.predict(scores)
        thresholds = np.full(len(predictions), self.threshold_, dtype=np.float64)
        return thresholds, predictions


def _gpd_log_likelihood(z, gamma, sigma):
    n = z.size
    if sigma <= 0.0:
        return -np.inf
    if abs(gamma) < _GAMMA_ZERO_TOL:
        return -n * np.log(sigma) - float(z.sum()) / sigma
    w = 1.0 + gamma * z / sigma
    if w.min() <= 0.0:
        return -np.inf
    return -n * np.log(sigma) - (1.0 + 1.0 / gamma) * float(np.log(w).sum())


def _grimshaw_roots(z):
    """Roots of the profile-likelihood equation w(t) = u(s) v(s) - 1 = 0.

    s = 1 + t * z must stay positive, which bounds the search left of zero
    by -1/max(z); positive roots are bounded above by the moment-based
    limit 2 (mean - min) / min^2.  The positive side is swept on a log
    grid because the root scale is unknown a priori.  Sign changes are
    refined with Brent's method.
    """

    def w(t):
        s = 1.0 + t * z
        u = 1.0 + float(np.mean(np.log(s)))
        v = float(np.mean(1.0 / s))
        return u * v - 1.0

    z_min, z_max, z_mean = float(z.min()), float(z.max()), float(z.mean())
    eps = 1e-8
    grids = []
    left_lo = -1.0 / z_max + eps
    left_hi = -eps
    if left_lo < left_hi:
        grids.append(np.linspace(left_lo, left_hi, _ROOT_GRID_POINTS))
    right_hi = 2.0 * (z_mean - z_min) / (z_min * z_min)
    if right_hi > eps:
        grids.append(np.geomspace(eps, right_hi, _ROOT_GRID_POINTS))

    roots = []
    for grid in grids:
        values = [w(t) for t in grid]
        for i in range(len(grid) - 1):
            va, vb = values[i], values[i + 1]
            if va == 0.0:
                roots.append(float(grid[i]))
            elif va * vb < 0.0:
                roots.append(float(brentq(w, grid[i], grid[i + 1])))
        if values[-1] == 0.0:
            roots.append(float(grid[-1]))
    return roots


def fit_gpd(excesses):
    """Generalized Pareto (gamma, sigma) for positive excesses.

    Maximum likelihood via Grimshaw's scalar reduction; the exponential
    limit and a method-of-moments estimate are always evaluated as
    fallbacks, and the candidate with the best log-likelihood wins.  Needs
    at least two excesses that are not all equal.
    """
    y = as_float_array(excesses, "excesses", ndim=1)
    if y.size < 2:
        raise ValueError("need at least 2 excesses to fit a tail model")
    if y.min() <= 0.0:
        raise ValueError("excesses must be strictly positive")
    if float(y.min()) == float(y.max()):
        raise ValueError("excesses are all equal; the tail model is degenerate")

    # Normalizing by the mean makes sigma-hat scale exactly with the data.
    scale = float(y.mean())
    z = y / scale

    candidates = [(0.0, float(z.mean()))]
    variance = float(z.var())
    if variance > 0.0:
        m = float(z.mean())
        ratio = m * m / variance
        candidates.append((0.5 * (1.0 - ratio), 0.5 * m * (1.0 + ratio)))
    for t in _grimshaw_roots(z):
        gamma = float(np.mean(np.log1p(t * z)))
        if abs(gamma) < _GAMMA_ZERO_TOL or t == 0.0:
            continue
        candidates.append((gamma, gamma / t))

    best = None
    for gamma, sigma in candidates:
        ll = _gpd_log_likelihood(z, gamma, sigma)
        if best is None or ll > best[2]:
            best = (gamma, sigma, ll)
    if best is None or not np.isfinite(best[2]):  # pragma: no cover - gamma=0 is always finite
        raise ValueError("tail model fit failed for the given excesses")
    return float(best[0]), float(best[1] * scale)


def gpd_quantile(gamma, sigma, anchor, q, n_seen, n_tail):
    """Extreme q-quantile of the fitted tail above ``anchor``.

    With r = q * n_seen / n_tail the quantile is
    ``anchor + sigma/gamma * (r**-gamma - 1)``, or the exponential limit
    ``anchor - sigma * log(r)`` as gamma -> 0.
    """
    if n_tail <= 0 or n_seen <= 0:
        raise ValueError("n_seen and n_tail must be positive")
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    r = q * n_seen / n_tail
    if abs(gamma) < _GAMMA_ZERO_TOL:
        return anchor - sigma * np.log(r)
    return anchor + sigma / gamma * (r ** -gamma - 1.0)


class DspotThresholder(BaseEstimator):
    """Streaming drift-aware peaks-over-threshold detector.

    Parameters
    ----------
    q : float
        Target probability of exceeding the alarm line (default 1e-3).
    depth : int
        Length of the moving-average drift window; 0 disables drift
        correction (the stationary variant).
    """

    def __init__(self, q=1e-3, depth=10):
        self.q = q
        self.depth = depth

    def fit(self, calibration):
        """Initialize anchor, tail model and drift buffer from a calibration stream."""
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must be in (0, 1)")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        arr = as_float_array(calibration, "calibration", ndim=1)
        if self.depth > 0:
            if arr.size <= self.depth:
                raise ValueError(
                    f"calibration needs more than depth = {self.depth} values, got {arr.size}"
                )
            # Drift-corrected view: each value minus the mean of the depth
            # values before it.
            windows = np.lib.stride_tricks.sliding_window_view(arr[:-1], self.depth)
            corrected = arr[self.depth:] - windows.mean(axis=1)
        else:
            corrected = arr.copy()
        n_init = corrected.size
        if n_init < 2:
            raise ValueError("calibration is too short after drift correction")
        anchor = float(np.sort(corrected)[int(TAIL_PERCENTILE * n_init)])
        peaks = corrected[corrected > anchor] - anchor
        if peaks.size < 2 or float(peaks.min()) == float(peaks.max()):
            raise ValueError(
                "calibration tail is empty or degenerate; use a larger calibration "
                "set or a lower tail percentile"
            )
        self.anchor_ = anchor
        self.peaks_ = [float(p) for p in peaks]
        self.n_seen_ = n_init
        self.n_tail_ = int(peaks.size)
        self.gamma_, self.sigma_ = fit_gpd(peaks)
        self.z_ = self._alarm_line()
        if self.z_ < self.anchor_:
            raise ValueError(
                "the alarm quantile fell below the tail anchor; q is too large "
                "for the calibration tail fraction"
            )
        self._buffer = deque(arr[-self.depth:], maxlen=self.depth) if self.depth else None
        return self

    def _alarm_line(self):
        z = float(gpd_quantile(self.gamma_, self.sigma_, self.anchor_,
                               self.q, self.n_seen_, self.n_tail_))
        # q larger than the live tail fraction would place the quantile
        # inside the bulk; the anchor is the honest floor.
        return max(z, self.anchor_)

    def _check_fitted(self):
        if not hasattr(self, "z_"):
            raise NotFittedError("DspotThresholder is not fitted; call fit first")

    def _drift_mean(self):
        if not self.depth:
            return 0.0
        return sum(self._buffer) / len(self._buffer)

    def _advance(self, value):
        if self.depth:
            self._buffer.append(value)

    def step(self, value):
        """Process one value; returns (alarm, current absolute threshold).

        Alarms leave the model and drift buffer untouched.  Non-alarming
        excesses above the anchor refit the tail; everything else only
        advances the counters and drift buffer.
        """
        self._check_fitted()
        value = float(value)
        drift = self._drift_mean()
        corrected = value - drift
        threshold = self.z_ + drift
        if corrected > self.z_:
            return 1, threshold
        if corrected > self.anchor_:
            self.peaks_.append(corrected - self.anchor_)
            self.n_tail_ += 1
            self.n_seen_ += 1
            self.gamma_, self.sigma_ = fit_gpd(np.asarray(self.peaks_))
            self.z_ = self._alarm_line()
        else:
            self.n_seen_ += 1
        self._advance(value)
        return 0, threshold

    def stream(self, scores):
        """Run the detector over a stream: (alarms, absolute thresholds)."""
        self._check_fitted()
        arr = as_float_array(scores, "scores", ndim=1)
        alarms = np.empty(arr.size, dtype=np.int64)
        thresholds = np.empty(arr.size, dtype=np.float64)
        for i, value in enumerate(arr):
            alarms[i], thresholds[i] = self.step(value)
        return alarms, thresholds

    def predict(self, scores):
        """Alarm labels for a stream (mutates the running model state)."""
        return self.stream(scores)[0]
