"""End-to-end acceptance checks for the whole package.

These are the contract-level guarantees: exact math in the learning core,
exact baselines, calibrated tail behaviour, and the headline detection
quality of the full benchmark configuration.  They are slower than the
unit suites; the full-benchmark class dominates the runtime.
"""

import itertools
import json
import os
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from adt.agent import DqnThresholder, Transition, compute_targets
from adt.baselines import (
    DspotThresholder,
    fit_gpd,
    optimal_static_threshold,
)
from adt.config import ExperimentConfig
from adt.env import EnvConfig, ThresholdingEnv, compute_reward
from adt.metrics import (
    ConfusionCounts,
    WilcoxonResult,
    precision_recall_f1,
    wilcoxon_two_tailed,
)
from adt.nn import Mlp, gradient_check
from adt.pipeline import run_benchmark, run_pipeline

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
BENCHMARK_CONFIG = os.path.join(REPO_ROOT, "configs", "benchmark.json")


class TestGradientCorrectness:
    def test_backprop_matches_numerical_gradients_quickly(self):
        started = time.time()
        rng = np.random.default_rng(0)
        net = Mlp([4, 5, 2], output_activation="identity", rng=rng)  # 47 parameters
        x = rng.uniform(-1.0, 1.0, size=(6, 4))
        y = rng.uniform(-1.0, 1.0, size=(6, 2))
        worst = gradient_check(net, x, y)
        assert worst < 1e-6
        assert time.time() - started < 10.0


class TestLearningTargets:
    def test_bootstrapped_targets_are_exact(self):
        rng = np.random.default_rng(1)
        target_net = Mlp([6, 8, 2], output_activation="identity", rng=rng)
        batch = []
        for i in range(64):
            batch.append(Transition(
                state=rng.uniform(size=6),
                action=int(rng.integers(2)),
                reward=float(rng.normal()),
                next_state=rng.uniform(size=6),
                terminal=bool(i % 7 == 0),
            ))
        gamma = 0.97
        got = compute_targets(batch, target_net, gamma)
        for i, tr in enumerate(batch):
            if tr.terminal:
                expected = tr.reward
            else:
                q_next = target_net.forward(tr.next_state)
                expected = tr.reward + gamma * float(np.max(q_next))
            assert abs(got[i] - expected) <= 1e-12


class TestRewardAccounting:
    @pytest.mark.parametrize("alpha,beta", [(1.0, 0.0), (0.9, 0.1), (0.5, 0.5), (0.0, 1.0)])
    def test_reward_formula_over_all_small_tallies(self, alpha, beta):
        for lookback in (1, 2, 3, 4):
            cfg = EnvConfig(lookback=lookback, alpha=alpha, beta=beta)
            cells = [(tp, tn, fp, fn)
                     for tp in range(lookback + 1)
                     for tn in range(lookback + 1 - tp)
                     for fp in range(lookback + 1 - tp - tn)
                     for fn in (lookback - tp - tn - fp,)]
            for tp, tn, fp, fn in cells:
                counts = ConfusionCounts(tp, tn, fp, fn)
                expected = alpha * (tp - fp - fn) + beta * tn
                assert compute_reward(counts, cfg) == pytest.approx(expected, abs=1e-12)

    def test_live_episode_rewards_match_the_tally(self):
        rng = np.random.default_rng(7)
        cfg = EnvConfig(lookback=2, alpha=0.9, beta=0.1)
        scores = rng.uniform(size=40)
        truths = rng.integers(0, 2, size=40)
        env = ThresholdingEnv(scores, truths, cfg)
        env.reset()
        for t in range(env.n_steps):
            out = env.step(int(rng.integers(2)))
            assert out.reward == pytest.approx(
                compute_reward(env.tally_counts(), cfg), abs=1e-12)


def single_window_reward(score, truth, action, alpha, beta):
    predicted = 1 if score > (0.0, 1.0)[action] else 0
    if predicted == 1 and truth == 1:
        return alpha
    if predicted == 0 and truth == 0:
        return beta
    return -alpha


class TestEpisodeOptimality:
    """The environment's best achievable return equals brute-force enumeration.

    With a lookback of one window each step's reward depends only on that
    step's action, so enumerating all 2**T action sequences through an
    independent reward computation gives the exact optimum.
    """

    ALPHA, BETA = 0.9, 0.1

    def independent_totals(self, scores, truths):
        n_steps = len(scores) - 1
        assignments = np.array(
            list(itertools.product([0, 1], repeat=n_steps)), dtype=int)
        rewards = np.empty_like(assignments, dtype=np.float64)
        for t in range(n_steps):
            for action in (0, 1):
                rewards[assignments[:, t] == action, t] = single_window_reward(
                    scores[t + 1], truths[t + 1], action, self.ALPHA, self.BETA)
        return assignments, rewards.sum(axis=1)

    def env_total(self, scores, truths, actions):
        env = ThresholdingEnv(
            scores, truths, EnvConfig(lookback=1, alpha=self.ALPHA, beta=self.BETA))
        env.reset()
        total = 0.0
        for action in actions:
            total += env.step(int(action)).reward
        return total

    def test_hundred_seeded_episodes(self):
        for seed in range(100):
            rng = np.random.default_rng(2000 + seed)
            n = int(rng.integers(3, 13))
            scores = rng.uniform(size=n)
            truths = rng.integers(0, 2, size=n)
            assignments, totals = self.independent_totals(scores, truths)
            best_idx = int(np.argmax(totals))
            best = self.env_total(scores, truths, assignments[best_idx])
            assert best == pytest.approx(float(totals[best_idx]), abs=1e-9)
            probe_idx = int(rng.integers(len(assignments)))
            probe = self.env_total(scores, truths, assignments[probe_idx])
            assert probe == pytest.approx(float(totals[probe_idx]), abs=1e-9)
            assert probe <= best + 1e-9


class TestStaticBaselineExactness:
    def test_matches_brute_force_on_200_random_sets(self):
        for case in range(200):
            rng = np.random.default_rng(3000 + case)
            n = int(rng.integers(1, 201))
            if case % 3 == 0:
                scores = rng.choice(np.linspace(0.0, 1.0, 9), size=n)
            else:
                scores = rng.uniform(size=n)
            truths = rng.integers(0, 2, size=n)
            result = optimal_static_threshold(scores, truths)

            candidates = [float(scores.min() - 1.0), float(scores.max() + 1.0)]
            u = np.unique(scores)
            candidates += [float((a + b) / 2.0) for a, b in zip(u[:-1], u[1:])]
            best = -1.0
            for threshold in candidates:
                pred = (scores > threshold).astype(int)
                f1 = precision_recall_f1(ConfusionCounts.from_arrays(pred, truths))[2]
                best = max(best, f1)
            assert result.f1 == best


class TestTailModel:
    @pytest.mark.parametrize("gamma", [-0.2, 0.0, 0.2, 0.5])
    def test_shape_recovery_on_large_samples(self, gamma):
        rng = np.random.default_rng(40)
        u = rng.uniform(size=100_000)
        if gamma == 0.0:
            sample = -np.log1p(-u)
        else:
            sample = ((1.0 - u) ** -gamma - 1.0) / gamma
        gamma_hat, sigma_hat = fit_gpd(sample)
        assert gamma_hat == pytest.approx(gamma, abs=0.05)
        assert sigma_hat == pytest.approx(1.0, abs=0.05)

    def test_streaming_false_alarm_rate_tracks_q(self):
        q = 1e-3
        rng = np.random.default_rng(41)
        calibration = rng.exponential(1.0, size=2000)
        stream = rng.exponential(1.0, size=100_000)
        detector = DspotThresholder(q=q, depth=0).fit(calibration)
        alarms, _ = detector.stream(stream)
        rate = float(alarms.mean())
        assert q / 3.0 <= rate <= q * 3.0


def brute_force_wilcoxon(differences):
    d = np.asarray(differences, dtype=np.float64)
    d = d[d != 0.0]
    n = d.size
    magnitudes = np.abs(d)
    order = np.argsort(magnitudes, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    sorted_mag = magnitudes[order]
    i = 0
    while i < n:
        j = i
        while j < n and sorted_mag[j] == sorted_mag[i]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0
        i = j
    w_plus = float(ranks[d > 0].sum())
    statistic = min(w_plus, float(ranks.sum()) - w_plus)
    hits = 0
    for signs in itertools.product([0, 1], repeat=n):
        t = float(sum(r for s, r in zip(signs, ranks) if s))
        if min(t, float(ranks.sum()) - t) <= statistic + 1e-12:
            hits += 1
    return statistic, hits / 2.0 ** n


class TestEvaluationProtocol:
    def test_degenerate_confusion_conventions(self):
        assert precision_recall_f1(ConfusionCounts(0, 5, 0, 0)) == (1.0, 1.0, 1.0)
        assert precision_recall_f1(ConfusionCounts(0, 3, 2, 1)) == (0.0, 0.0, 0.0)
        assert precision_recall_f1(ConfusionCounts(2, 2, 0, 0)) == (1.0, 1.0, 1.0)

    def test_exact_small_sample_significance(self):
        # all ten differences positive: two-sided p is 2 / 2**10
        result = wilcoxon_two_tailed(np.arange(1.0, 11.0), np.zeros(10))
        assert isinstance(result, WilcoxonResult)
        assert result.p_value == pytest.approx(2.0 / 1024.0, abs=1e-15)

        for case in range(25):
            rng = np.random.default_rng(500 + case)
            n = int(rng.integers(4, 13))
            x = rng.integers(-4, 5, size=n).astype(float) / 2.0
            y = rng.integers(-4, 5, size=n).astype(float) / 2.0
            if np.all(x == y):
                x[0] += 1.0
            stat, p = brute_force_wilcoxon(x - y)
            result = wilcoxon_two_tailed(x, y)
            assert result.statistic == pytest.approx(stat, abs=1e-12)
            assert result.p_value == pytest.approx(p, abs=1e-12)


@pytest.fixture(scope="module")
def benchmark_run(tmp_path_factory):
    out_dir = str(tmp_path_factory.mktemp("benchmark"))
    cfg = ExperimentConfig.from_json(
        BENCHMARK_CONFIG, overrides=[f"out_dir={json.dumps(out_dir)}"])
    started = time.time()
    summary = run_benchmark(cfg)
    wall = time.time() - started
    return cfg, out_dir, summary, wall


class TestEndToEndBenchmark:
    def test_config_pins_the_headline_protocol(self):
        cfg = ExperimentConfig.from_json(BENCHMARK_CONFIG)
        assert cfg.dataset.synth.n == 20000
        assert cfg.dataset.synth.anomaly_rate == 0.05
        assert cfg.agent.episodes == 2000
        assert cfg.lookback == 2
        assert cfg.action_hold == 1
        assert (cfg.alpha, cfg.beta) == (0.9, 0.1)

    def test_detection_quality_bar(self, benchmark_run):
        _, _, summary, _ = benchmark_run
        results = summary["results"]
        assert results["adt"].f1 >= 0.90
        assert results["adt"].f1 >= results["static"].f1
        assert results["adt"].f1 >= results["dspot"].f1

    def test_runtime_budget(self, benchmark_run):
        _, _, _, wall = benchmark_run
        assert wall < 600.0

    def test_learning_curve_improves(self, benchmark_run):
        _, out_dir, _, _ = benchmark_run
        with open(os.path.join(out_dir, "training_log.csv")) as fh:
            rows = fh.read().strip().splitlines()[1:]
        totals = [float(line.split(",")[1]) for line in rows]
        head = float(np.mean(totals[:100]))
        tail = float(np.mean(totals[-100:]))
        assert tail > head

    def test_subset_robustness_is_tight(self, benchmark_run):
        _, _, summary, _ = benchmark_run
        report = summary["robustness"]["adt"]
        assert len(report.subsets) == 10
        assert report.f1_std <= 0.05

    def test_report_artifacts_render(self, benchmark_run):
        _, out_dir, _, _ = benchmark_run
        for name in ("threshold_trace.svg", "training_reward.svg"):
            with open(os.path.join(out_dir, name)) as fh:
                assert ET.fromstring(fh.read()).tag.endswith("svg")


REDUCED = {
    "dataset": {"kind": "synth", "synth": {
        "n": 6000, "noise_std": 0.1, "anomaly_rate": 0.05,
        "kinds": ["spike", "noise_burst"], "min_segment": 30, "max_segment": 90,
        "clean_fraction": 0.3, "seed": 100}},
    "window_size": 10,
    "ae": {"hidden": 48, "latent": 4, "epochs": 200},
    "agent": {"episodes": 400, "updates_per_episode": 8, "minibatch": 64,
              "replay_capacity": 20000, "epsilon_decay": 0.99},
    "seed": 0,
}


def reduced_run(out_dir, **top_level):
    doc = json.loads(json.dumps(REDUCED))
    doc.update(top_level)
    doc["out_dir"] = str(out_dir)
    summary = run_pipeline(ExperimentConfig.from_dict(doc))
    return summary["results"]["adt"].f1, summary["train_wall_ms"]["agent"]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("trends")
    out = {}
    out["hold1"] = reduced_run(base / "hold1")
    out["hold10"] = reduced_run(base / "hold10", action_hold=10)
    out["hold100"] = reduced_run(base / "hold100", action_hold=100)
    out["tn_only"] = reduced_run(base / "tn_only", alpha=0.0, beta=1.0)
    return out


class TestBehaviouralTrends:
    def test_moderate_action_holding_preserves_quality(self, runs):
        assert abs(runs["hold1"][0] - runs["hold10"][0]) <= 0.05

    def test_longer_holds_train_no_slower(self, runs):
        assert runs["hold1"][1] >= runs["hold100"][1]

    def test_true_negative_only_reward_degrades_detection(self, runs):
        # without a miss penalty the reward no longer cares about anomalous
        # windows, so detection quality must drop well below the balanced run
        assert runs["tn_only"][0] < runs["hold1"][0] - 0.05


REAL_DATA_VAR = "ADT_REAL_DATA"


@pytest.mark.skipif(
    not os.path.exists(os.environ.get(REAL_DATA_VAR, "")),
    reason=f"set {REAL_DATA_VAR} to a labeled CSV to run the real-data check",
)
class TestRealDataset:
    def test_pipeline_beats_streaming_baseline(self, tmp_path):
        cfg = ExperimentConfig.from_dict({
            "dataset": {"kind": "csv", "path": os.environ[REAL_DATA_VAR]},
            "out_dir": str(tmp_path),
        })
        summary = run_benchmark(cfg)
        results = summary["results"]
        assert results["adt"].f1 >= results["dspot"].f1
