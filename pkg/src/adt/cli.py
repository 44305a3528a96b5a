"""Command-line entry points.

Every command takes the same config plumbing: an optional JSON config file,
optional --seed/--out shortcuts, and repeatable --override KEY=VALUE flags
applied by dotted path (values parse as JSON, falling back to raw strings).
Without --config a default synthetic dataset is assumed, so
``adt benchmark --seed 7`` works out of the box.

Log verbosity comes from the ADT_LOG environment variable (DEBUG, INFO,
WARNING, ERROR; default WARNING).  Commands exit 0 on success and 1 on any
pipeline or config failure, printing ``[phase] message`` to stderr.
"""

import csv
import json
import logging
import os
import sys

import click
import numpy as np

from ._io import atomic_write_text
from .config import ConfigError, ExperimentConfig, apply_overrides
from .pipeline import (
    PipelineError,
    run_benchmark,
    run_detect,
    run_sweep,
    run_synth,
    run_train_adt,
    run_train_ae,
)
from .svgplot import threshold_trace_svg


def _configure_logging():
    level_name = os.environ.get("ADT_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_config(config, seed, out, override):
    overrides = list(override)
    if seed is not None:
        overrides.append(f"seed={seed}")
    if out is not None:
        overrides.append(f"out_dir={json.dumps(out)}")
    if config is not None:
        return ExperimentConfig.from_json(config, overrides)
    doc = apply_overrides({"dataset": {"kind": "synth"}}, overrides)
    return ExperimentConfig.from_dict(doc)


def _common_options(fn):
    fn = click.option("--override", "-O", multiple=True, metavar="KEY=VALUE",
                      help="Override a config entry by dotted path.")(fn)
    fn = click.option("--out", default=None, type=click.Path(file_okay=False),
                      help="Output directory (overrides config out_dir).")(fn)
    fn = click.option("--seed", default=None, type=int,
                      help="Master seed (overrides config seed).")(fn)
    fn = click.option("--config", "-c", default=None,
                      type=click.Path(exists=True, dir_okay=False),
                      help="JSON experiment config file.")(fn)
    return fn


def _run(action):
    try:
        return action()
    except ConfigError as exc:
        click.echo(f"[config] {exc}", err=True)
        sys.exit(1)
    except PipelineError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)


def _echo_results(results):
    for method, res in results.items():
        click.echo(f"{method}: precision={res.precision:.4f} "
                   f"recall={res.recall:.4f} f1={res.f1:.4f}")


@click.group()
def main():
    """Adaptive-threshold anomaly detection experiments."""
    _configure_logging()


@main.command()
@_common_options
def synth(config, seed, out, override):
    """Generate the configured synthetic dataset as data.csv."""
    cfg = _run(lambda: _load_config(config, seed, out, override))
    path = _run(lambda: run_synth(cfg))
    click.echo(f"wrote {path}")


@main.command("train-ae")
@_common_options
def train_ae(config, seed, out, override):
    """Train the window scorer and save it to the output directory."""
    cfg = _run(lambda: _load_config(config, seed, out, override))
    info = _run(lambda: run_train_ae(cfg))
    click.echo(f"scorer trained: final loss {info['final_loss']:.6g} "
               f"({info['scorer_wall_ms']} ms)")


@main.command("train-adt")
@_common_options
def train_adt(config, seed, out, override):
    """Train the thresholding agent against the saved scorer."""
    cfg = _run(lambda: _load_config(config, seed, out, override))
    info = _run(lambda: run_train_adt(cfg))
    click.echo(f"agent trained: final episode reward {info['final_reward']:.4f} "
               f"({info['agent_wall_ms']} ms)")


@main.command()
@_common_options
def detect(config, seed, out, override):
    """Run detection with the saved scorer and policy; write results.csv."""
    cfg = _run(lambda: _load_config(config, seed, out, override))
    results = _run(lambda: run_detect(cfg))
    _echo_results(results)


@main.command()
@_common_options
def benchmark(config, seed, out, override):
    """Train everything from scratch, evaluate, and write the full report."""
    cfg = _run(lambda: _load_config(config, seed, out, override))
    summary = _run(lambda: run_benchmark(cfg))
    _echo_results(summary["results"])
    for method, p in summary["wilcoxon_p"].items():
        shown = "n/a" if p is None else f"{p:.6g}"
        click.echo(f"wilcoxon adt vs {method}: p={shown}")


@main.command()
@_common_options
@click.option("--param", required=True, metavar="DOTTED.PATH",
              help="Config entry to sweep, e.g. action_hold or agent.gamma.")
@click.option("--values", required=True, metavar="V1,V2,...",
              help="Comma-separated values; each parses as JSON else string.")
def sweep(config, seed, out, override, param, values):
    """Re-run the pipeline for each value of one parameter."""
    cfg = _run(lambda: _load_config(config, seed, out, override))
    parsed = []
    for chunk in values.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            parsed.append(json.loads(chunk))
        except json.JSONDecodeError:
            parsed.append(chunk)
    rows = _run(lambda: run_sweep(cfg, param, parsed))
    for _, value, _, _, f1, wall in rows:
        click.echo(f"{param}={value}: f1={float(f1):.4f} train_wall_ms={wall}")


@main.command()
@click.option("--trace", required=True, type=click.Path(exists=True, dir_okay=False),
              help="A trace_*.csv produced by detect or benchmark.")
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Output SVG path (default: trace path with .svg).")
def plot(trace, out):
    """Render a detection trace CSV as an SVG chart."""
    try:
        with open(trace, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            needed = {"window_index", "score", "truth", "threshold"}
            if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
                raise ValueError(
                    f"{trace}: expected columns {sorted(needed)}, "
                    f"got {reader.fieldnames}"
                )
            rows = list(reader)
        if not rows:
            raise ValueError(f"{trace}: no data rows")
        indices = np.array([int(r["window_index"]) for r in rows])
        scores = np.array([float(r["score"]) for r in rows])
        truths = np.array([int(r["truth"]) for r in rows])
        thresholds = np.array([float(r["threshold"]) for r in rows])
    except (ValueError, OSError) as exc:
        click.echo(f"[plot] {exc}", err=True)
        sys.exit(1)
    out = out or os.path.splitext(trace)[0] + ".svg"
    atomic_write_text(out, threshold_trace_svg(indices, scores, truths, thresholds))
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
