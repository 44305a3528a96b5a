import numpy as np
import pytest

from adt.synth import ANOMALY_KINDS, SynthConfig, generate


def segments_of(labels):
    """(start, length) pairs of contiguous label-1 runs."""
    padded = np.concatenate([[0], labels, [0]])
    diff = np.diff(padded)
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1)
    return list(zip(starts.tolist(), (ends - starts).tolist()))


class TestDeterminism:
    def test_same_config_same_bytes(self):
        cfg = SynthConfig(n=2000, anomaly_rate=0.06, seed=3)
        a = generate(cfg)
        b = generate(cfg)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_different_seeds_differ(self):
        a = generate(SynthConfig(n=500, seed=1))
        b = generate(SynthConfig(n=500, seed=2))
        assert not np.array_equal(a.values, b.values)


class TestShapeAndBudget:
    def test_shapes(self):
        series = generate(SynthConfig(n=1000, channels=3, seed=0))
        assert series.values.shape == (1000, 3)
        assert series.labels.shape == (1000,)

    def test_anomaly_budget_within_20_percent(self):
        for seed in range(5):
            cfg = SynthConfig(n=4000, anomaly_rate=0.05, seed=seed)
            series = generate(cfg)
            total = int(series.labels.sum())
            target = cfg.anomaly_rate * cfg.n
            assert 0.8 * target <= total <= 1.2 * target

    def test_zero_rate_means_no_anomalies(self):
        series = generate(SynthConfig(n=300, anomaly_rate=0.0, seed=0))
        assert series.labels.sum() == 0

    def test_rounds_tiny_budget_to_zero(self):
        series = generate(SynthConfig(n=100, anomaly_rate=0.004, min_segment=1,
                                      max_segment=2, seed=0))
        assert series.labels.sum() == 0


class TestPlacement:
    def test_clean_prefix_is_clean(self):
        cfg = SynthConfig(n=3000, anomaly_rate=0.08, clean_fraction=0.4, seed=7)
        series = generate(cfg)
        prefix = int(np.ceil(0.4 * 3000))
        assert series.labels[:prefix].sum() == 0
        assert series.labels[prefix:].sum() > 0

    def test_segment_lengths_within_bounds(self):
        cfg = SynthConfig(n=5000, anomaly_rate=0.06, min_segment=25, max_segment=60, seed=11)
        series = generate(cfg)
        for _, length in segments_of(series.labels):
            assert 25 <= length <= 60

    def test_segments_separated_by_min_segment_gap(self):
        cfg = SynthConfig(n=5000, anomaly_rate=0.08, min_segment=30, max_segment=50, seed=13)
        series = generate(cfg)
        segs = segments_of(series.labels)
        assert len(segs) >= 2
        for (s1, l1), (s2, _) in zip(segs, segs[1:]):
            assert s2 - (s1 + l1) >= 30

    def test_segments_stay_inside_series(self):
        cfg = SynthConfig(n=2000, anomaly_rate=0.1, seed=17)
        series = generate(cfg)
        segs = segments_of(series.labels)
        last_start, last_len = segs[-1]
        assert last_start + last_len <= 2000


class TestAnomalyEffects:
    # Large noise_std makes the injected magnitudes dominate the unit-height
    # base signal, so label-conditional statistics separate cleanly.

    def test_spike_raises_labeled_mean(self):
        cfg = SynthConfig(n=6000, noise_std=0.5, anomaly_rate=0.06,
                          kinds=("spike",), seed=19)
        series = generate(cfg)
        x = series.values[:, 0]
        lifted = x[series.labels == 1].mean() - x[series.labels == 0].mean()
        # spikes add U(5, 10) * 0.5 = 2.5..5.0 per point
        assert lifted > 2.0

    def test_level_shift_raises_labeled_mean(self):
        cfg = SynthConfig(n=6000, noise_std=0.5, anomaly_rate=0.06,
                          kinds=("level_shift",), seed=23)
        series = generate(cfg)
        x = series.values[:, 0]
        lifted = x[series.labels == 1].mean() - x[series.labels == 0].mean()
        # shifts add U(3, 6) * 0.5 = 1.5..3.0 per segment
        assert lifted > 1.0

    def test_noise_burst_raises_labeled_variance(self):
        cfg = SynthConfig(n=8000, noise_std=0.5, anomaly_rate=0.08,
                          kinds=("noise_burst",), seed=29)
        series = generate(cfg)
        x = series.values[:, 0]
        # first differences detrend the slow sine; iid noise dominates them
        diffs = np.diff(x)
        both_labeled = (series.labels[1:] == 1) & (series.labels[:-1] == 1)
        both_clean = (series.labels[1:] == 0) & (series.labels[:-1] == 0)
        ratio = diffs[both_labeled].var() / diffs[both_clean].var()
        # burst variance is 16x the base noise variance
        assert ratio > 4.0

    def test_injection_touches_exactly_one_channel(self):
        cfg = SynthConfig(n=6000, channels=2, noise_std=2.0, anomaly_rate=0.05,
                          kinds=("level_shift",), min_segment=40, max_segment=60, seed=31)
        series = generate(cfg)
        segs = segments_of(series.labels)
        assert len(segs) >= 2
        shifted_channels = []
        for start, length in segs:
            before = series.values[max(0, start - 20) : start]
            inside = series.values[start : start + length]
            jump = np.abs(inside.mean(axis=0) - before.mean(axis=0))
            shifted_channels.append(int(np.sum(jump > 3.0)))
        # the shift is U(3, 6) * 2.0 = 6..12 units in one channel, while
        # base-sine drift plus noise stays below 2 over these horizons
        assert all(c == 1 for c in shifted_channels)


class TestConfigValidation:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown anomaly kinds"):
            SynthConfig(n=100, kinds=("spike", "dropout"))

    def test_rejects_bad_base(self):
        with pytest.raises(ValueError, match="base"):
            SynthConfig(n=100, base="square")

    def test_rejects_rate_of_one(self):
        with pytest.raises(ValueError, match="anomaly_rate"):
            SynthConfig(n=100, anomaly_rate=1.0)

    def test_rejects_inverted_segment_bounds(self):
        with pytest.raises(ValueError, match="min_segment"):
            SynthConfig(n=100, min_segment=50, max_segment=20)

    def test_rejects_empty_kinds(self):
        with pytest.raises(ValueError, match="kinds"):
            SynthConfig(n=100, kinds=())

    def test_min_segment_above_budget_cap(self):
        cfg = SynthConfig(n=1000, anomaly_rate=0.01, min_segment=20, max_segment=30)
        with pytest.raises(ValueError, match="budget cap"):
            generate(cfg)

    def test_segments_that_cannot_fit_after_prefix(self):
        cfg = SynthConfig(n=1000, anomaly_rate=0.6, clean_fraction=0.5,
                          min_segment=20, max_segment=40)
        with pytest.raises(ValueError, match="clean prefix|budget"):
            generate(cfg)

    def test_default_kinds_are_the_full_set(self):
        assert SynthConfig(n=100).kinds == ANOMALY_KINDS
