"""Deterministic SVG plots written as plain text.

Coordinates are printed with fixed precision so the same rows always give
byte-identical files.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..errors import EmptyInput, IoError

__all__ = ["emit_svg", "emit_trace_svg", "cell_summary"]

_W, _H = 640, 420
_L, _R, _T, _B = 70, 170, 30, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _write(path, text: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def cell_summary(rows, value: str = "steps_used") -> dict:
    """Median and interquartile range of ``value`` per ``(method, sigma_w, n)``.

    Returns
    -------
    dict
        ``(method, sigma_w) -> list of (n, q25, median, q75)`` sorted by ``n``.
    """
    groups = defaultdict(list)
    for r in rows:
        groups[(r.method, r.sigma_w, r.n)].append(float(getattr(r, value)))
    out = defaultdict(list)
    for (method, s, n), vals in sorted(groups.items()):
        with np.errstate(invalid="ignore"):  # unstable runs carry inf
            q25, med, q75 = np.percentile(np.asarray(vals), [25, 50, 75])
        out[(method, s)].append((n, float(q25), float(med), float(q75)))
    return dict(out)


class _Axes:
    def __init__(self, xlo, xhi, ylo, yhi):
        if xhi <= xlo:
            xlo, xhi = xlo - 0.5, xhi + 0.5
        if yhi <= ylo:
            ylo, yhi = ylo - 0.5, yhi + 0.5
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi

    def x(self, v):
        return _L + (v - self.xlo) / (self.xhi - self.xlo) * (_W - _L - _R)

    def y(self, v):
        return _H - _B - (v - self.ylo) / (self.yhi - self.ylo) * (_H - _T - _B)


def _frame(ax: _Axes, xticks, yticks, xlabel: str, ylabel: str, title: str) -> list:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2 - _R / 2:.0f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{_L}" y1="{_H - _B}" x2="{_W - _R}" y2="{_H - _B}" stroke="black"/>',
        f'<line x1="{_L}" y1="{_T}" x2="{_L}" y2="{_H - _B}" stroke="black"/>',
    ]
    for v, label in xticks:
        x = _f(ax.x(v))
        parts.append(f'<line x1="{x}" y1="{_H - _B}" x2="{x}" y2="{_H - _B + 4}" stroke="black"/>')
        parts.append(f'<text x="{x}" y="{_H - _B + 16}" text-anchor="middle">{label}</text>')
    for v, label in yticks:
        y = _f(ax.y(v))
        parts.append(f'<line x1="{_L - 4}" y1="{y}" x2="{_L}" y2="{y}" stroke="black"/>')
        parts.append(f'<line x1="{_L}" y1="{y}" x2="{_W - _R}" y2="{y}" stroke="#e0e0e0"/>')
        parts.append(f'<text x="{_L - 6}" y="{y}" text-anchor="end" dominant-baseline="middle">{label}</text>')
    parts.append(f'<text x="{(_L + _W - _R) / 2:.0f}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{(_T + _H - _B) / 2:.0f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(_T + _H - _B) / 2:.0f})">{ylabel}</text>')
    return parts


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


def emit_svg(rows, path, value: str = "steps_used") -> None:
    """Median ``value`` against ``log2 n`` with an interquartile band per series.

    One series per ``(method, sigma_w)``.

    Raises
    ------
    EmptyInput
    IoError
    """
    rows = list(rows)
    if not rows:
        raise EmptyInput("no rows to plot")
    summary = cell_summary(rows, value)
    ns = sorted({r.n for r in rows})
    lx = [math.log2(n) for n in ns]
    finite = [v for pts in summary.values() for p in pts for v in p[1:] if math.isfinite(v)]
    ymax = max(finite) if finite else 1.0
    yticks = _nice_ticks(0.0, ymax * 1.05)
    ax = _Axes(min(lx), max(lx), 0.0, max(yticks[-1], ymax * 1.05))
    parts = _frame(ax, [(math.log2(n), str(n)) for n in ns], [(v, f"{v:g}") for v in yticks],
                   "state dimension n (log scale)", value.replace("_", " "),
                   f"median {value.replace('_', ' ')} with interquartile range")
    for i, ((method, s), pts) in enumerate(sorted(summary.items())):
        color = _COLORS[i % len(_COLORS)]
        pts = [p for p in pts if all(math.isfinite(v) for v in p[1:])]
        if not pts:
            continue
        upper = " ".join(f"{_f(ax.x(math.log2(n)))},{_f(ax.y(q75))}" for n, _, _, q75 in pts)
        lower = " ".join(f"{_f(ax.x(math.log2(n)))},{_f(ax.y(q25))}" for n, q25, _, _ in reversed(pts))
        parts.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.18" stroke="none"/>')
        line = " ".join(f"{_f(ax.x(math.log2(n)))},{_f(ax.y(med))}" for n, _, med, _ in pts)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        for n, _, med, _ in pts:
            parts.append(f'<circle cx="{_f(ax.x(math.log2(n)))}" cy="{_f(ax.y(med))}" r="3" fill="{color}"/>')
        ly = _T + 14 + 18 * i
        lx0 = _W - _R + 12
        parts.append(f'<line x1="{lx0}" y1="{ly}" x2="{lx0 + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx0 + 26}" y="{ly}" dominant-baseline="middle">{method} sigma_w={s:g}</text>')
    parts.append("</svg>")
    _write(path, "\n".join(parts) + "\n")


def emit_trace_svg(series: dict, path) -> None:
    """``log10 ||x_t||`` traces, one polyline per method.

    Parameters
    ----------
    series : dict
        ``method -> (norms, phases)`` as returned by
        :func:`~lts0.bench.grid.compare_trajectories`.

    Raises
    ------
    EmptyInput
    IoError
    """
    if not series:
        raise EmptyInput("no series to plot")
    logs = {}
    for method, (norms, _) in series.items():
        v = np.asarray(norms, dtype=float)
        logs[method] = np.log10(np.maximum(v, 1e-300))
    tmax = max(v.size for v in logs.values()) - 1
    allv = np.concatenate(list(logs.values()))
    allv = allv[np.isfinite(allv)]
    lo, hi = float(np.floor(allv.min())), float(np.ceil(allv.max()))
    ax = _Axes(0.0, float(max(tmax, 1)), lo, hi)
    yt = _nice_ticks(lo, hi)
    parts = _frame(ax, [(v, f"{v:g}") for v in _nice_ticks(0.0, float(max(tmax, 1)))],
                   [(v, f"1e{v:g}") for v in yt], "step t", "state norm", "state norm per step")
    for i, method in enumerate(sorted(logs)):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{_f(ax.x(t))},{_f(ax.y(v))}" for t, v in enumerate(logs[method]))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = _T + 14 + 18 * i
        lx0 = _W - _R + 12
        parts.append(f'<line x1="{lx0}" y1="{ly}" x2="{lx0 + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx0 + 26}" y="{ly}" dominant-baseline="middle">{method}</text>')
    parts.append("</svg>")
    _write(path, "\n".join(parts) + "\n")
