"""Adaptive-threshold anomaly detection for windowed time series.

A reconstruction-based scorer maps sliding windows to anomaly scores in
[0, 1], and a small reinforcement-learning agent flips the detection
threshold between an active and a passive level as the stream evolves.
Static-threshold and streaming extreme-value baselines plus an evaluation
protocol (windowed labels, subset robustness, exact signed-rank test) round
out the experiment toolkit.  See the CLI (``adt --help``) for the driver.
"""

from .agent import DqnThresholder, ReplayMemory, Transition, compute_targets, select_action
from .baselines import (
    DspotThresholder,
    StaticThresholder,
    StaticThresholdResult,
    fit_gpd,
    gpd_quantile,
    optimal_static_threshold,
)
from .config import ConfigError, ExperimentConfig, SynthSettings, parse_override
from .env import (
    ACTION_THRESHOLDS,
    EnvConfig,
    EnvState,
    StepOutcome,
    ThresholdingEnv,
    classify,
    compute_reward,
    compute_state,
)
from .metrics import (
    ConfusionCounts,
    DetectionResult,
    RobustnessReport,
    WilcoxonResult,
    evaluate_run,
    precision_recall_f1,
    subset_robustness,
    wilcoxon_two_tailed,
)
from .nn import AdamOptimizer, Mlp, SgdOptimizer, gradient_check
from .pipeline import (
    PipelineError,
    run_benchmark,
    run_detect,
    run_pipeline,
    run_sweep,
    run_synth,
    run_train_adt,
    run_train_ae,
)
from .scorer import AutoencoderScorer
from .synth import SynthConfig, generate
from .timeseries import (
    CsvSchema,
    MinMaxNormalizer,
    TimeSeries,
    Window,
    WindowSequence,
    load_csv,
    make_windows,
    minmax_normalize,
    point_adjust_label,
    save_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ACTION_THRESHOLDS",
    "AdamOptimizer",
    "AutoencoderScorer",
    "ConfigError",
    "ConfusionCounts",
    "CsvSchema",
    "DetectionResult",
    "DqnThresholder",
    "DspotThresholder",
    "EnvConfig",
    "EnvState",
    "ExperimentConfig",
    "MinMaxNormalizer",
    "Mlp",
    "PipelineError",
    "ReplayMemory",
    "RobustnessReport",
    "SgdOptimizer",
    "StaticThresholder",
    "StaticThresholdResult",
    "StepOutcome",
    "SynthConfig",
    "SynthSettings",
    "ThresholdingEnv",
    "TimeSeries",
    "Transition",
    "WilcoxonResult",
    "Window",
    "WindowSequence",
    "classify",
    "compute_reward",
    "compute_state",
    "compute_targets",
    "evaluate_run",
    "fit_gpd",
    "generate",
    "gpd_quantile",
    "gradient_check",
    "load_csv",
    "make_windows",
    "minmax_normalize",
    "optimal_static_threshold",
    "parse_override",
    "point_adjust_label",
    "precision_recall_f1",
    "run_benchmark",
    "run_detect",
    "run_pipeline",
    "run_sweep",
    "run_synth",
    "run_train_adt",
    "run_train_ae",
    "save_csv",
    "select_action",
    "subset_robustness",
    "wilcoxon_two_tailed",
]
