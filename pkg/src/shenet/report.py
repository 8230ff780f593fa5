"""Static SVG plots of evaluation results (no plotting library, byte-stable output)."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import DataError
from .metrics import METRICS, EvalReport, parse_flat

COLORS = {"observed": "blue", "predicted": "red", "ground-truth": "green"}
_W, _H = 480, 360  # trajectory panel
_BW = 260  # bar panel width
_PAD = 40


def _fmt(v: float) -> str:
    s = f"{v:.3f}"
    return "0.000" if s == "-0.000" else s


def select_samples(n_rows: int, n_samples: int) -> list[int]:
    if n_rows == 0 or n_samples <= 0:
        return []
    return sorted(set(np.linspace(0, n_rows - 1, min(n_samples, n_rows)).round().astype(int).tolist()))


def render_svg(samples, aggregate: dict | None = None, title: str = "") -> str:
    """``samples`` is a list of (observed, predicted, ground_truth) arrays of shape (T, 2)."""
    pts = [np.asarray(a, dtype=np.float64).reshape(-1, 2) for s in samples for a in s if len(a)]
    if pts:
        allp = np.concatenate(pts)
        lo, hi = allp.min(axis=0), allp.max(axis=0)
    else:
        lo, hi = np.array([0.0, 0.0]), np.array([1.0, 1.0])
    span = np.maximum(hi - lo, 1e-9)
    scale = min((_W - 2 * _PAD) / span[0], (_H - 2 * _PAD) / span[1])

    def xy(p):
        return _PAD + (p[0] - lo[0]) * scale, _H - _PAD - (p[1] - lo[1]) * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W + _BW}" height="{_H}" viewBox="0 0 {_W + _BW} {_H}">',
        f'<rect x="0" y="0" width="{_W + _BW}" height="{_H}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{_PAD}" y="20" font-size="12">{title}</text>')
    # trajectory axes
    out.append(f'<g id="trajectories">')
    out.append(f'<line class="axis" x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>')
    out.append(f'<line class="axis" x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>')
    out.append(f'<text x="{_PAD}" y="{_H - _PAD + 14}" font-size="10">{_fmt(lo[0])}</text>')
    out.append(f'<text x="{_W - _PAD}" y="{_H - _PAD + 14}" font-size="10" text-anchor="end">{_fmt(hi[0])}</text>')
    out.append(f'<text x="{_PAD - 4}" y="{_H - _PAD}" font-size="10" text-anchor="end">{_fmt(lo[1])}</text>')
    out.append(f'<text x="{_PAD - 4}" y="{_PAD + 8}" font-size="10" text-anchor="end">{_fmt(hi[1])}</text>')
    for i, (obs, pred, gt) in enumerate(samples):
        obs, pred, gt = (np.asarray(a, dtype=np.float64).reshape(-1, 2) for a in (obs, pred, gt))
        # predicted and ground-truth paths start from the last observed point
        anchor = obs[-1:] if len(obs) else obs
        for cls, arr in (("observed", obs), ("ground-truth", np.concatenate([anchor, gt])),
                         ("predicted", np.concatenate([anchor, pred]))):
            if len(arr) == 0:
                continue
            coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in map(xy, arr))
            out.append(f'<polyline class="{cls}" data-sample="{i}" points="{coords}" fill="none" '
                       f'stroke="{COLORS[cls]}" stroke-width="1.5"/>')
    out.append("</g>")

    # metric bar chart
    agg = aggregate or {}
    vals = [agg.get(m, float("nan")) for m in METRICS]
    finite = [v for v in vals if math.isfinite(v)]
    top = max(finite) if finite and max(finite) > 0 else 1.0
    x0, base = _W + 20, _H - _PAD
    bar_w = (_BW - 40) / len(METRICS)
    out.append('<g id="metrics">')
    out.append(f'<line class="axis" x1="{x0}" y1="{base}" x2="{x0 + _BW - 40}" y2="{base}" stroke="black"/>')
    out.append(f'<line class="axis" x1="{x0}" y1="{_PAD}" x2="{x0}" y2="{base}" stroke="black"/>')
    for j, (m, v) in enumerate(zip(METRICS, vals)):
        bx = x0 + j * bar_w + 4
        hgt = (v / top) * (base - _PAD) if math.isfinite(v) else 0.0
        out.append(f'<rect class="bar" x="{_fmt(bx)}" y="{_fmt(base - hgt)}" width="{_fmt(bar_w - 8)}" '
                   f'height="{_fmt(hgt)}" fill="gray"/>')
        out.append(f'<text x="{_fmt(bx + (bar_w - 8) / 2)}" y="{base + 14}" font-size="10" text-anchor="middle">{m}</text>')
        label = _fmt(v) if math.isfinite(v) else "n/a"
        out.append(f'<text x="{_fmt(bx + (bar_w - 8) / 2)}" y="{_fmt(base - hgt - 4)}" font-size="9" '
                   f'text-anchor="middle">{label}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_report_svg(report: EvalReport, n_samples: int = 6) -> str:
    idx = select_samples(len(report.samples), n_samples)
    return render_svg([report.samples[i] for i in idx], report.aggregate)


def read_eval_csv(path):
    """Rows (past, pred, gt arrays) and the aggregate metrics of an evaluation CSV."""
    samples, aggregate = [], None
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            need = {"row", *METRICS, "past", "pred", "gt"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                raise DataError(f"{path}: not an evaluation CSV (columns {reader.fieldnames})")
            for line in reader:
                if line["row"] == "aggregate":
                    aggregate = {m: float(line[m]) for m in METRICS}
                    continue
                samples.append(tuple(parse_flat(line[c]) for c in ("past", "pred", "gt")))
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed evaluation CSV ({exc})") from exc
    return samples, aggregate


def cmd_report(eval_csv, out_svg, n_samples: int = 6) -> int:
    samples, aggregate = read_eval_csv(eval_csv)
    idx = select_samples(len(samples), n_samples)
    Path(out_svg).write_text(render_svg([samples[i] for i in idx], aggregate))
    return len(idx)
