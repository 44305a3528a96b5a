"""Plot emission as self-contained SVG strings.

No rendering library: plots are data mapped straight to SVG primitives.
The threshold trace mirrors the detection view: anomalous spans shaded,
the score polyline on top, and the decision threshold as a step line.
"""

import numpy as np

_WIDTH, _HEIGHT = 960, 300
_ML, _MR, _MT, _MB = 58, 16, 28, 40


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo
    if span <= 0:
        span = 1.0
    return out_lo + (np.asarray(values, dtype=np.float64) - lo) * (out_hi - out_lo) / span


def _polyline(xs, ys, color, width=1.2, dash=None):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}"'
            f'{dash_attr} points="{pts}"/>')


def _frame(title, x_label, y_label, x_ticks, y_ticks):
    parts = [
        f'<rect x="0" y="0" width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.0f}" y="18" font-size="13" text-anchor="middle" '
        f'font-family="sans-serif">{title}</text>',
    ]
    x0, x1 = _ML, _WIDTH - _MR
    y0, y1 = _HEIGHT - _MB, _MT
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#444"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#444"/>')
    for value, px in x_ticks:
        parts.append(f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y0 + 4}" stroke="#444"/>')
        parts.append(
            f'<text x="{px:.2f}" y="{y0 + 16}" font-size="10" text-anchor="middle" '
            f'font-family="sans-serif">{value}</text>'
        )
    for value, py in y_ticks:
        parts.append(f'<line x1="{x0 - 4}" y1="{py:.2f}" x2="{x0}" y2="{py:.2f}" stroke="#444"/>')
        parts.append(
            f'<text x="{x0 - 7}" y="{py + 3.5:.2f}" font-size="10" text-anchor="end" '
            f'font-family="sans-serif">{value}</text>'
        )
    parts.append(
        f'<text x="{(x0 + x1) / 2:.0f}" y="{_HEIGHT - 8}" font-size="11" '
        f'text-anchor="middle" font-family="sans-serif">{x_label}</text>'
    )
    parts.append(
        f'<text x="14" y="{(y0 + y1) / 2:.0f}" font-size="11" text-anchor="middle" '
        f'font-family="sans-serif" transform="rotate(-90 14 {(y0 + y1) / 2:.0f})">{y_label}</text>'
    )
    return parts


def _document(parts):
    body = "\n".join(parts)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
            f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">\n{body}\n</svg>\n')


def _runs(mask):
    """Contiguous [start, stop) index runs where mask is true."""
    out = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            out.append((start, i))
            start = None
    if start is not None:
        out.append((start, len(mask)))
    return out


def threshold_trace_svg(indices, scores, truths, thresholds, title="threshold trace"):
    """Scores, ground-truth spans and the decision threshold over a stream."""
    indices = np.asarray(indices, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if not (len(indices) == len(scores) == len(truths) == len(thresholds)) or len(indices) == 0:
        raise ValueError("trace columns must be non-empty and equally long")

    x_lo, x_hi = float(indices[0]), float(indices[-1] if len(indices) > 1 else indices[0] + 1)
    y_lo, y_hi = 0.0, max(1.0, float(scores.max()), float(thresholds.max()))
    xs = _scale(indices, x_lo, x_hi, _ML, _WIDTH - _MR)
    ys = _scale(scores, y_lo, y_hi, _HEIGHT - _MB, _MT)
    yt = _scale(thresholds, y_lo, y_hi, _HEIGHT - _MB, _MT)

    x_ticks = [(int(v), float(_scale([v], x_lo, x_hi, _ML, _WIDTH - _MR)[0]))
               for v in np.linspace(x_lo, x_hi, 5)]
    y_ticks = [(f"{v:.2f}", float(_scale([v], y_lo, y_hi, _HEIGHT - _MB, _MT)[0]))
               for v in np.linspace(y_lo, y_hi, 5)]
    parts = _frame(title, "window index", "score", x_ticks, y_ticks)

    for start, stop in _runs(truths == 1):
        x_a = xs[start]
        x_b = xs[stop - 1] if stop - 1 < len(xs) else xs[-1]
        parts.append(
            f'<rect x="{x_a:.2f}" y="{_MT}" width="{max(x_b - x_a, 1.0):.2f}" '
            f'height="{_HEIGHT - _MB - _MT}" fill="#e4572e" opacity="0.18"/>'
        )

    # Threshold as a step line, compressed to the change points.
    step_x, step_y = [xs[0]], [yt[0]]
    for i in range(1, len(xs)):
        if thresholds[i] != thresholds[i - 1]:
            step_x.extend([xs[i], xs[i]])
            step_y.extend([yt[i - 1], yt[i]])
    step_x.append(xs[-1])
    step_y.append(yt[-1])
    parts.append(_polyline(step_x, step_y, "#ff7f0e", width=1.4))
    parts.append(_polyline(xs, ys, "#1f77b4", width=1.0))
    return _document(parts)


def reward_curve_svg(episodes, rewards, title="training reward per episode"):
    episodes = np.asarray(episodes, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    if len(episodes) == 0 or len(episodes) != len(rewards):
        raise ValueError("episodes and rewards must be non-empty and equally long")
    x_lo, x_hi = float(episodes[0]), float(episodes[-1] if len(episodes) > 1 else episodes[0] + 1)
    y_lo, y_hi = float(rewards.min()), float(rewards.max())
    if y_lo == y_hi:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    xs = _scale(episodes, x_lo, x_hi, _ML, _WIDTH - _MR)
    ys = _scale(rewards, y_lo, y_hi, _HEIGHT - _MB, _MT)
    x_ticks = [(int(v), float(_scale([v], x_lo, x_hi, _ML, _WIDTH - _MR)[0]))
               for v in np.linspace(x_lo, x_hi, 5)]
    y_ticks = [(f"{v:.1f}", float(_scale([v], y_lo, y_hi, _HEIGHT - _MB, _MT)[0]))
               for v in np.linspace(y_lo, y_hi, 5)]
    parts = _frame(title, "episode", "total reward", x_ticks, y_ticks)
    parts.append(_polyline(xs, ys, "#2a9d8f", width=1.0))
    return _document(parts)


def sweep_curve_svg(values, f1s, parameter, title=None):
    values = [str(v) for v in values]
    f1s = np.asarray(f1s, dtype=np.float64)
    if len(values) == 0 or len(values) != len(f1s):
        raise ValueError("values and f1s must be non-empty and equally long")
    title = title or f"F1 vs {parameter}"
    xs = np.linspace(_ML + 30, _WIDTH - _MR - 30, len(values))
    y_lo, y_hi = 0.0, 1.0
    ys = _scale(f1s, y_lo, y_hi, _HEIGHT - _MB, _MT)
    x_ticks = [(values[i], float(xs[i])) for i in range(len(values))]
    y_ticks = [(f"{v:.2f}", float(_scale([v], y_lo, y_hi, _HEIGHT - _MB, _MT)[0]))
               for v in np.linspace(y_lo, y_hi, 5)]
    parts = _frame(title, parameter, "F1", x_ticks, y_ticks)
    if len(values) > 1:
        parts.append(_polyline(xs, ys, "#6a4c93", width=1.4))
    for x, y, f in zip(xs, ys, f1s):
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3.2" fill="#6a4c93"/>')
        parts.append(
            f'<text x="{x:.2f}" y="{y - 8:.2f}" font-size="10" text-anchor="middle" '
            f'font-family="sans-serif">{f:.3f}</text>'
        )
    return _document(parts)
