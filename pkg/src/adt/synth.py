"""Seeded synthetic streams with labeled anomaly segments.

The base signal is a sine (or mixture of sines) per channel plus Gaussian
noise.  Anomalies are contiguous, non-overlapping segments of three kinds:

* ``spike``       additive jumps of 5-10 noise standard deviations,
* ``level_shift`` a constant offset of 3-6 noise standard deviations,
* ``noise_burst`` noise amplified to 4x its standard deviation.

Total anomalous length lands within +-20% of ``anomaly_rate * n``.  The
leading ``clean_fraction`` of the series stays anomaly-free so a scorer can
be trained on normal data.  Identical config and seed give identical bytes.
"""

from dataclasses import dataclass

import numpy as np

from .timeseries import TimeSeries

BASE_PATTERNS = ("sine", "mixture")
ANOMALY_KINDS = ("spike", "level_shift", "noise_burst")

# Magnitudes in units of noise_std.
SPIKE_RANGE = (5.0, 10.0)
LEVEL_SHIFT_RANGE = (3.0, 6.0)
NOISE_BURST_FACTOR = 4.0

_BUDGET_TOLERANCE = 0.2
_PLACEMENT_ATTEMPTS = 1000


@dataclass(frozen=True)
class SynthConfig:
    n: int
    channels: int = 1
    base: str = "mixture"
    noise_std: float = 0.05
    anomaly_rate: float = 0.05
    kinds: tuple = ANOMALY_KINDS
    min_segment: int = 20
    max_segment: int = 80
    clean_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.base not in BASE_PATTERNS:
            raise ValueError(f"base must be one of {BASE_PATTERNS}, got {self.base!r}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if not 0.0 <= self.anomaly_rate < 1.0:
            raise ValueError("anomaly_rate must be in [0, 1)")
        if not self.kinds:
            raise ValueError("kinds must not be empty")
        unknown = set(self.kinds) - set(ANOMALY_KINDS)
        if unknown:
            raise ValueError(f"unknown anomaly kinds {sorted(unknown)}")
        if not 1 <= self.min_segment <= self.max_segment:
            raise ValueError("need 1 <= min_segment <= max_segment")
        if not 0.0 <= self.clean_fraction < 1.0:
            raise ValueError("clean_fraction must be in [0, 1)")


def _draw_segment_lengths(cfg, rng):
    """Segment lengths whose sum is within the +-20% anomaly budget."""
    target = cfg.anomaly_rate * cfg.n
    low = (1.0 - _BUDGET_TOLERANCE) * target
    high = (1.0 + _BUDGET_TOLERANCE) * target
    if cfg.min_segment > high:
        raise ValueError(
            f"min_segment {cfg.min_segment} exceeds the anomaly budget cap "
            f"{high:.1f} (= 1.2 * anomaly_rate * n); lower min_segment or raise the rate"
        )
    for _ in range(_PLACEMENT_ATTEMPTS):
        lengths = []
        total = 0
        while total < low:
            length = int(rng.integers(cfg.min_segment, cfg.max_segment + 1))
            lengths.append(length)
            total += length
        if total <= high:
            return lengths
    raise ValueError(
        "could not satisfy the +-20% anomaly budget with the configured "
        "segment length range; widen [min_segment, max_segment] or adjust the rate"
    )


def _place_segments(cfg, lengths, rng):
    """Non-overlapping (start, length) pairs after the clean prefix.

    Segments are separated by at least ``min_segment`` normal points so they
    stay distinct under point-adjust window labeling.
    """
    region_start = int(np.ceil(cfg.clean_fraction * cfg.n))
    region_len = cfg.n - region_start
    gap = cfg.min_segment
    needed = sum(lengths) + gap * (len(lengths) - 1)
    slack = region_len - needed
    if slack < 0:
        raise ValueError(
            f"anomaly segments need {needed} points but only {region_len} lie "
            f"after the clean prefix; lower anomaly_rate or clean_fraction"
        )
    cuts = np.sort(rng.integers(0, slack + 1, size=len(lengths)))
    starts = []
    consumed = 0
    for i, length in enumerate(lengths):
        starts.append(region_start + int(cuts[i]) + consumed + i * gap)
        consumed += length
    return list(zip(starts, lengths))


def _base_signal(cfg, rng):
    t = np.arange(cfg.n, dtype=np.float64)
    values = np.empty((cfg.n, cfg.channels), dtype=np.float64)
    n_components = 1 if cfg.base == "sine" else 3
    for c in range(cfg.channels):
        signal = np.zeros(cfg.n)
        for comp in range(n_components):
            period = rng.uniform(50.0, 400.0)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amplitude = 1.0 / (comp + 1)
            signal += amplitude * np.sin(2.0 * np.pi * t / period + phase)
        values[:, c] = signal
    return values


def _inject(values, start, length, kind, cfg, rng):
    channel = int(rng.integers(0, cfg.channels))
    sl = slice(start, start + length)
    std = cfg.noise_std
    if kind == "spike":
        magnitudes = rng.uniform(SPIKE_RANGE[0], SPIKE_RANGE[1], size=length)
        values[sl, channel] += magnitudes * std
    elif kind == "level_shift":
        shift = rng.uniform(LEVEL_SHIFT_RANGE[0], LEVEL_SHIFT_RANGE[1])
        values[sl, channel] += shift * std
    elif kind == "noise_burst":
        # Extra noise on top of the base noise_std so the total std is ~4x.
        extra = std * np.sqrt(NOISE_BURST_FACTOR ** 2 - 1.0)
        values[sl, channel] += rng.normal(0.0, extra, size=length)
    else:  # pragma: no cover - kinds validated in SynthConfig
        raise ValueError(f"unknown anomaly kind {kind!r}")


def generate(cfg):
    """Build the labeled synthetic series described by ``cfg``."""
    rng = np.random.default_rng(cfg.seed)
    values = _base_signal(cfg, rng)
    values += rng.normal(0.0, cfg.noise_std, size=values.shape)
    labels = np.zeros(cfg.n, dtype=np.int64)
    if cfg.anomaly_rate > 0.0 and round(cfg.anomaly_rate * cfg.n) > 0:
        lengths = _draw_segment_lengths(cfg, rng)
        segments = _place_segments(cfg, lengths, rng)
        for start, length in segments:
            kind = cfg.kinds[int(rng.integers(0, len(cfg.kinds)))]
            _inject(values, start, length, kind, cfg, rng)
            labels[start : start + length] = 1
    return TimeSeries(values, labels)
