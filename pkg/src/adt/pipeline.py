"""End-to-end experiment pipeline and artifact emission.

Four phases: load data, preprocess (normalize + window + split), train the
scorer, train the agent, then detect and evaluate on the held-out stream
against the enabled baselines.  Every run writes its resolved config next to
the outputs, all files are written atomically, and (config, seed) determines
every emitted byte except the wall-clock columns.

Split layout is contiguous and leading: the first ``ae_train`` fraction of
points (anomaly-free by contract) trains the scorer, the next ``adt_train``
fraction is the mixed segment the agent trains on, and the remainder up to
``test`` is evaluation data.  Windows straddling a boundary are dropped so
no split leaks into another.
"""

import csv
import io
import json
import logging
import os
import time
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write_text
from .agent import DqnThresholder
from .baselines import DspotThresholder, StaticThresholder
from .config import ExperimentConfig, apply_overrides
from .metrics import evaluate_run, subset_robustness, wilcoxon_two_tailed
from .scorer import AutoencoderScorer
from .svgplot import reward_curve_svg, sweep_curve_svg, threshold_trace_svg
from .synth import generate
from .timeseries import CsvSchema, TimeSeries, MinMaxNormalizer, load_csv, make_windows, save_csv

log = logging.getLogger("adt.pipeline")

DATA_FILE = "data.csv"
SCORER_PREFIX = "scorer"
POLICY_PREFIX = "policy"
TRAINING_LOG_FILE = "training_log.csv"
RESULTS_FILE = "results.csv"
ROBUSTNESS_FILE = "robustness.csv"
ROBUSTNESS_SUMMARY_FILE = "robustness_summary.csv"
TRACE_SVG_FILE = "threshold_trace.svg"
REWARD_SVG_FILE = "training_reward.svg"
SWEEP_FILE = "sweep.csv"
SWEEP_SVG_FILE = "sweep.svg"
CONFIG_ECHO_FILE = "config_resolved.json"

N_ROBUSTNESS_SUBSETS = 10

# Fixed offsets that derive one independent seed stream per phase.
_SEED_STREAMS = {"synth": 1, "scorer": 2, "agent": 3}


class PipelineError(Exception):
    """An error attributed to one pipeline phase."""

    def __init__(self, phase, message):
        super().__init__(message)
        self.phase = phase

    def __str__(self):
        return f"[{self.phase}] {super().__str__()}"


def derive_seed(master, stream):
    """Deterministic per-phase seed from the experiment master seed."""
    seq = np.random.SeedSequence([int(master), _SEED_STREAMS[stream]])
    return int(seq.generate_state(1)[0])


def _phase(phase, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except (ValueError, OSError, RuntimeError) as exc:
        raise PipelineError(phase, str(exc)) from exc


def trace_path(method):
    return f"trace_{method}.csv"


def load_dataset(cfg):
    """Materialize the configured dataset as a labeled TimeSeries."""
    ds = cfg.dataset
    if ds.kind == "synth":
        synth_cfg = ds.synth.build(derive_seed(cfg.seed, "synth"))
        return _phase("data", generate, synth_cfg)
    schema = CsvSchema(
        feature_columns=list(ds.feature_columns) if ds.feature_columns else None,
        label_column=ds.label_column,
        label_map=ds.label_map,
    )
    series = _phase("data", load_csv, ds.path, schema)
    if series.labels is None:
        raise PipelineError(
            "data", f"{ds.path}: dataset has no label column; evaluation needs ground truth"
        )
    return series


@dataclass
class PreparedData:
    windows_ae: object
    windows_adt: object
    windows_test: object
    normalizer: MinMaxNormalizer
    point_bounds: tuple  # (ae_end, adt_end, test_end) in point space


def prepare(cfg, series):
    """Normalize, window, and split the series; validates split contracts."""
    n = series.n_points
    tau = cfg.window_size
    c1 = int(cfg.splits.ae_train * n)
    c2 = c1 + int(cfg.splits.adt_train * n)
    total = cfg.splits.ae_train + cfg.splits.adt_train + cfg.splits.test
    c3 = n if total >= 1.0 - 1e-9 else c2 + int(cfg.splits.test * n)

    fit_end = c1 if cfg.normalization == "train" else c3
    if fit_end < 1:
        raise PipelineError("preprocess", "normalization region is empty")
    normalizer = MinMaxNormalizer().fit(series.values[:fit_end])
    normalized = TimeSeries(normalizer.transform(series.values), series.labels)
    windows = make_windows(normalized, tau)

    ae_stop = c1 - tau + 1
    adt_stop = c2 - tau + 1
    test_stop = c3 - tau + 1
    if ae_stop < 1:
        raise PipelineError(
            "preprocess", f"AE split ends at point {c1}, too short for window_size {tau}"
        )
    ws_ae = windows.slice(0, ae_stop)
    ws_adt = windows.slice(c1, max(adt_stop, c1))
    ws_test = windows.slice(c2, max(test_stop, c2))

    if len(ws_adt) < cfg.lookback + 1:
        raise PipelineError(
            "preprocess",
            f"agent training split has {len(ws_adt)} windows; "
            f"need at least lookback + 1 = {cfg.lookback + 1}",
        )
    if len(ws_test) < cfg.lookback + 1:
        raise PipelineError(
            "preprocess",
            f"test split has {len(ws_test)} windows; "
            f"need at least lookback + 1 = {cfg.lookback + 1}",
        )
    if series.labels is None:
        raise PipelineError("preprocess", "series has no labels")
    if np.any(ws_ae.labels == 1):
        raise PipelineError(
            "preprocess",
            "scorer training region contains anomalous windows; "
            "shrink splits.ae_train or clean the leading data",
        )
    adt_labels = set(np.unique(ws_adt.labels).tolist())
    if adt_labels != {0, 1}:
        raise PipelineError(
            "preprocess",
            "agent training split must contain both normal and anomalous windows; "
            f"found labels {sorted(adt_labels)}",
        )
    log.info(
        "splits: %d scorer-train, %d agent-train, %d test windows",
        len(ws_ae), len(ws_adt), len(ws_test),
    )
    return PreparedData(ws_ae, ws_adt, ws_test, normalizer, (c1, c2, c3))


def train_scorer(cfg, prepared):
    scorer = AutoencoderScorer(
        hidden=cfg.ae.hidden, latent=cfg.ae.latent, epochs=cfg.ae.epochs,
        batch_size=cfg.ae.batch_size, lr=cfg.ae.lr, optimizer=cfg.ae.optimizer,
        random_state=derive_seed(cfg.seed, "scorer"),
    )
    start = time.perf_counter()
    _phase("train-scorer", scorer.fit, prepared.windows_ae)
    _phase("train-scorer", scorer.fit_score_range, prepared.windows_adt)
    wall_ms = int(round((time.perf_counter() - start) * 1000))
    log.info("scorer trained in %d ms, final loss %.6g", wall_ms, scorer.loss_curve_[-1])
    return scorer, wall_ms


def train_agent(cfg, scorer, prepared):
    scores = _phase("train-agent", scorer.score_samples, prepared.windows_adt)
    agent = DqnThresholder(
        lookback=cfg.lookback, alpha=cfg.alpha, beta=cfg.beta,
        action_hold=cfg.action_hold, episodes=cfg.agent.episodes,
        gamma=cfg.agent.gamma, epsilon=cfg.agent.epsilon,
        epsilon_min=cfg.agent.epsilon_min, epsilon_decay=cfg.agent.epsilon_decay,
        target_copy_every=cfg.agent.target_copy_every, minibatch=cfg.agent.minibatch,
        replay_capacity=cfg.agent.replay_capacity, lr=cfg.agent.lr,
        hidden=cfg.agent.hidden, optimizer=cfg.agent.optimizer,
        updates_per_episode=cfg.agent.updates_per_episode,
        random_state=derive_seed(cfg.seed, "agent"),
    )
    start = time.perf_counter()
    _phase("train-agent", agent.fit, scores, prepared.windows_adt.labels)
    wall_ms = int(round((time.perf_counter() - start) * 1000))
    log.info("agent trained in %d ms over %d episodes", wall_ms, cfg.agent.episodes)
    return agent, wall_ms


@dataclass
class MethodRun:
    method: str
    thresholds: np.ndarray
    predictions: np.ndarray
    result: object
    wall_ms: int


def run_detection(cfg, scorer, agent, prepared):
    """Score the test stream and run every enabled method over it."""
    scores_test = _phase("detect", scorer.score_samples, prepared.windows_test)
    truths_test = prepared.windows_test.labels
    runs = []

    start = time.perf_counter()
    thresholds, predictions = _phase("detect", agent.decision_trace, scores_test, truths_test)
    wall = int(round((time.perf_counter() - start) * 1000))
    runs.append(MethodRun("adt", thresholds, predictions,
                          evaluate_run(predictions, truths_test), wall))

    if cfg.baselines.static:
        start = time.perf_counter()
        static = StaticThresholder()
        _phase("detect", static.fit, scores_test, truths_test)
        thresholds, predictions = static.decision_trace(scores_test)
        wall = int(round((time.perf_counter() - start) * 1000))
        runs.append(MethodRun("static", thresholds, predictions,
                              evaluate_run(predictions, truths_test), wall))

    if cfg.baselines.dspot.enabled:
        scores_adt = _phase("detect", scorer.score_samples, prepared.windows_adt)
        dspot = DspotThresholder(q=cfg.baselines.dspot.q, depth=cfg.baselines.dspot.depth)
        _phase("detect", dspot.fit, scores_adt)
        start = time.perf_counter()
        alarms, thresholds = _phase("detect", dspot.stream, scores_test)
        wall = int(round((time.perf_counter() - start) * 1000))
        runs.append(MethodRun("dspot", thresholds, alarms,
                              evaluate_run(alarms, truths_test), wall))
    return scores_test, truths_test, runs


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(value):
    return repr(float(value))


def write_trace(out_dir, method, indices, scores, truths, run):
    rows = [
        (int(indices[i]), _fmt(scores[i]), int(truths[i]),
         _fmt(run.thresholds[i]), int(run.predictions[i]))
        for i in range(len(scores))
    ]
    path = os.path.join(out_dir, trace_path(method))
    atomic_write_text(path, _csv_text(
        ("window_index", "score", "truth", "threshold", "prediction"), rows))
    return path


def write_results(out_dir, dataset_name, runs):
    rows = [
        (run.method, dataset_name, "test", _fmt(run.result.precision),
         _fmt(run.result.recall), _fmt(run.result.f1), run.wall_ms)
        for run in runs
    ]
    path = os.path.join(out_dir, RESULTS_FILE)
    atomic_write_text(path, _csv_text(
        ("method", "dataset", "split", "precision", "recall", "f1", "wall_ms"), rows))
    return path


def write_training_log(out_dir, training_log):
    rows = [(episode, _fmt(total), _fmt(eps)) for episode, total, eps in training_log]
    path = os.path.join(out_dir, TRAINING_LOG_FILE)
    atomic_write_text(path, _csv_text(("episode", "total_reward", "epsilon"), rows))
    return path


def write_robustness(out_dir, reports, p_values):
    rows = []
    for method, report in reports:
        for i, subset in enumerate(report.subsets):
            rows.append((method, i, _fmt(subset.precision),
                         _fmt(subset.recall), _fmt(subset.f1)))
    atomic_write_text(os.path.join(out_dir, ROBUSTNESS_FILE), _csv_text(
        ("method", "subset", "precision", "recall", "f1"), rows))

    summary_rows = []
    for method, report in reports:
        p = p_values.get(method)
        summary_rows.append((
            method,
            _fmt(report.precision_mean), _fmt(report.precision_std),
            _fmt(report.recall_mean), _fmt(report.recall_std),
            _fmt(report.f1_mean), _fmt(report.f1_std),
            "" if p is None else _fmt(p),
        ))
    atomic_write_text(os.path.join(out_dir, ROBUSTNESS_SUMMARY_FILE), _csv_text(
        ("method", "precision_mean", "precision_std", "recall_mean", "recall_std",
         "f1_mean", "f1_std", "wilcoxon_f1_p_vs_adt"), summary_rows))


def _echo_config(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(
        os.path.join(out_dir, CONFIG_ECHO_FILE),
        json.dumps(cfg.to_dict(), indent=2) + "\n",
    )


def run_synth(cfg, out_dir=None):
    """Generate the configured synthetic series and write data.csv."""
    if cfg.dataset.kind != "synth":
        raise PipelineError("data", "dataset.kind is not 'synth'; nothing to generate")
    out_dir = out_dir or cfg.out_dir
    series = load_dataset(cfg)
    _echo_config(cfg, out_dir)
    path = os.path.join(out_dir, DATA_FILE)
    _phase("data", save_csv, series, path)
    log.info("wrote %s (%d points, %d channels)", path, series.n_points, series.n_channels)
    return path


def run_train_ae(cfg, out_dir=None):
    """Phases data/preprocess/train-scorer; persists the scorer."""
    out_dir = out_dir or cfg.out_dir
    series = load_dataset(cfg)
    prepared = prepare(cfg, series)
    scorer, wall_ms = train_scorer(cfg, prepared)
    _echo_config(cfg, out_dir)
    _phase("train-scorer", scorer.save, os.path.join(out_dir, SCORER_PREFIX))
    return {"scorer_wall_ms": wall_ms, "final_loss": scorer.loss_curve_[-1],
            "windows": (len(prepared.windows_ae), len(prepared.windows_adt),
                        len(prepared.windows_test))}


def _load_scorer(out_dir, phase):
    prefix = os.path.join(out_dir, SCORER_PREFIX)
    if not os.path.exists(prefix + ".json"):
        raise PipelineError(
            phase, f"no trained scorer at {prefix}.json; run train-ae first"
        )
    return _phase(phase, AutoencoderScorer.load, prefix)


def run_train_adt(cfg, out_dir=None):
    """Phase train-agent from the persisted scorer; persists the policy."""
    out_dir = out_dir or cfg.out_dir
    series = load_dataset(cfg)
    prepared = prepare(cfg, series)
    scorer = _load_scorer(out_dir, "train-agent")
    agent, wall_ms = train_agent(cfg, scorer, prepared)
    _echo_config(cfg, out_dir)
    _phase("train-agent", agent.save, os.path.join(out_dir, POLICY_PREFIX))
    write_training_log(out_dir, agent.training_log_)
    episodes = [row[0] for row in agent.training_log_]
    rewards = [row[1] for row in agent.training_log_]
    atomic_write_text(os.path.join(out_dir, REWARD_SVG_FILE),
                      reward_curve_svg(episodes, rewards))
    return {"agent_wall_ms": wall_ms,
            "final_reward": rewards[-1] if rewards else None}


def _detect_and_write(cfg, out_dir, scorer, agent, prepared):
    scores_test, truths_test, runs = run_detection(cfg, scorer, agent, prepared)
    indices = prepared.windows_test.start_indices
    for run in runs:
        write_trace(out_dir, run.method, indices, scores_test, truths_test, run)
    write_results(out_dir, cfg.dataset.name, runs)
    adt_run = runs[0]
    atomic_write_text(
        os.path.join(out_dir, TRACE_SVG_FILE),
        threshold_trace_svg(indices, scores_test, truths_test, adt_run.thresholds),
    )
    return scores_test, truths_test, runs


def run_detect(cfg, out_dir=None):
    """Detection + evaluation from persisted scorer and policy artifacts."""
    out_dir = out_dir or cfg.out_dir
    series = load_dataset(cfg)
    prepared = prepare(cfg, series)
    scorer = _load_scorer(out_dir, "detect")
    policy_prefix = os.path.join(out_dir, POLICY_PREFIX)
    if not os.path.exists(policy_prefix + ".json"):
        raise PipelineError(
            "detect", f"no trained policy at {policy_prefix}.json; run train-adt first"
        )
    agent = _phase("detect", DqnThresholder.load, policy_prefix)
    _echo_config(cfg, out_dir)
    _, _, runs = _detect_and_write(cfg, out_dir, scorer, agent, prepared)
    return {run.method: run.result for run in runs}


def run_pipeline(cfg, out_dir=None):
    """All phases in sequence; returns {method: DetectionResult}."""
    out_dir = out_dir or cfg.out_dir
    series = load_dataset(cfg)
    prepared = prepare(cfg, series)
    scorer, scorer_wall = train_scorer(cfg, prepared)
    agent, agent_wall = train_agent(cfg, scorer, prepared)
    _echo_config(cfg, out_dir)
    _phase("train-scorer", scorer.save, os.path.join(out_dir, SCORER_PREFIX))
    _phase("train-agent", agent.save, os.path.join(out_dir, POLICY_PREFIX))
    write_training_log(out_dir, agent.training_log_)
    episodes = [row[0] for row in agent.training_log_]
    rewards = [row[1] for row in agent.training_log_]
    atomic_write_text(os.path.join(out_dir, REWARD_SVG_FILE),
                      reward_curve_svg(episodes, rewards))
    scores_test, truths_test, runs = _detect_and_write(cfg, out_dir, scorer, agent, prepared)
    return {
        "results": {run.method: run.result for run in runs},
        "runs": runs,
        "scores_test": scores_test,
        "truths_test": truths_test,
        "train_wall_ms": {"scorer": scorer_wall, "agent": agent_wall},
    }


def run_benchmark(cfg, out_dir=None):
    """Full pipeline plus the subset-robustness and significance report."""
    out_dir = out_dir or cfg.out_dir
    summary = run_pipeline(cfg, out_dir)
    truths = summary["truths_test"]
    reports = []
    for run in summary["runs"]:
        report = _phase("report", subset_robustness, run.predictions, truths,
                        N_ROBUSTNESS_SUBSETS)
        reports.append((run.method, report))
    adt_f1 = reports[0][1].f1_values
    p_values = {}
    for method, report in reports[1:]:
        try:
            p_values[method] = wilcoxon_two_tailed(adt_f1, report.f1_values).p_value
        except ValueError:
            p_values[method] = None  # identical subset scores: test undefined
    write_robustness(out_dir, reports, p_values)
    summary["robustness"] = dict(reports)
    summary["wilcoxon_p"] = p_values
    return summary


def run_sweep(cfg, parameter, values, out_dir=None):
    """Re-run the pipeline for each value of one config parameter.

    Run i uses seed ``cfg.seed + i``; pin dataset.synth.seed in the config to
    hold the data fixed while the training seeds vary.  Emits sweep.csv and
    sweep.svg plus per-run artifacts under runs/.
    """
    if not values:
        raise PipelineError("sweep", "no sweep values given")
    out_dir = out_dir or cfg.out_dir
    base = cfg.to_dict()
    rows = []
    f1s = []
    for i, value in enumerate(values):
        doc = apply_overrides(base, [f"{parameter}={json.dumps(value)}",
                                     f"seed={cfg.seed + i}"])
        try:
            run_cfg = ExperimentConfig.from_dict(doc)
        except ValueError as exc:
            raise PipelineError("sweep", f"invalid sweep value {value!r}: {exc}") from exc
        run_dir = os.path.join(out_dir, "runs", f"{i:02d}_{parameter.replace('.', '_')}_{value}")
        os.makedirs(run_dir, exist_ok=True)
        summary = run_pipeline(run_cfg, run_dir)
        adt = summary["results"]["adt"]
        rows.append((parameter, value, _fmt(adt.precision), _fmt(adt.recall),
                     _fmt(adt.f1), summary["train_wall_ms"]["agent"]))
        f1s.append(adt.f1)
        log.info("sweep %s=%r: F1 %.4f", parameter, value, adt.f1)
    atomic_write_text(os.path.join(out_dir, SWEEP_FILE), _csv_text(
        ("parameter", "value", "precision", "recall", "f1", "train_wall_ms"), rows))
    atomic_write_text(os.path.join(out_dir, SWEEP_SVG_FILE),
                      sweep_curve_svg([v for _, v, *_ in rows], f1s, parameter))
    return rows
