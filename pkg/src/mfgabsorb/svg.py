"""Tiny deterministic SVG line-plot writer (no plotting dependency)."""

from __future__ import annotations

import math

import numpy as np

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 40, 55
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(v):
    return f"{v:.2f}"


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        if b - a > 8:
            step = math.ceil((b - a) / 8)
            return [float(e) for e in range(a, b + 1, step)]
        return [float(e) for e in range(a, b + 1)]
    return list(np.linspace(lo, hi, 5))


def _label(v, log):
    if log:
        return f"1e{int(v)}"
    return f"{v:.3g}"


def render(series, title="", xlabel="", ylabel="", logx=False, logy=False):
    """Return SVG text for ``series = [(label, xs, ys, style), ...]``.

    ``style`` is ``"line"``, ``"points"`` or ``"dashed"``.  Non-positive
    values are dropped on log axes.
    """
    clean = []
    for label, xs, ys, style in series:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if logx:
            keep &= xs > 0
        if logy:
            keep &= ys > 0
        xs, ys = xs[keep], ys[keep]
        if logx:
            xs = np.log10(xs)
        if logy:
            ys = np.log10(ys)
        clean.append((label, xs, ys, style))
    allx = np.concatenate([c[1] for c in clean]) if clean else np.array([0.0, 1.0])
    ally = np.concatenate([c[2] for c in clean]) if clean else np.array([0.0, 1.0])
    if allx.size == 0:
        allx, ally = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def sx(v):
        return _ML + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return _MT + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
           f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" font-size="15">{_esc(title)}</text>',
           f'<text x="{_ML + pw / 2:.1f}" y="{_H - 12}" text-anchor="middle" '
           f'font-size="13">{_esc(xlabel)}</text>',
           f'<text x="16" y="{_MT + ph / 2:.1f}" text-anchor="middle" font-size="13" '
           f'transform="rotate(-90 16 {_MT + ph / 2:.1f})">{_esc(ylabel)}</text>']
    for v in _ticks(x0, x1, logx):
        if x0 - 1e-12 <= v <= x1 + 1e-12:
            out.append(f'<line x1="{_fmt(sx(v))}" y1="{_MT + ph}" x2="{_fmt(sx(v))}" '
                       f'y2="{_MT + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{_fmt(sx(v))}" y="{_MT + ph + 19}" text-anchor="middle" '
                       f'font-size="11">{_label(v, logx)}</text>')
    for v in _ticks(y0, y1, logy):
        if y0 - 1e-12 <= v <= y1 + 1e-12:
            out.append(f'<line x1="{_ML - 5}" y1="{_fmt(sy(v))}" x2="{_ML}" y2="{_fmt(sy(v))}" '
                       f'stroke="black"/>')
            out.append(f'<text x="{_ML - 8}" y="{_fmt(sy(v) + 4)}" text-anchor="end" '
                       f'font-size="11">{_label(v, logy)}</text>')
    for i, (label, xs, ys, style) in enumerate(clean):
        color = _COLORS[i % len(_COLORS)]
        if xs.size == 0:
            continue
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(xs, ys))
        if style == "points":
            for a, b in zip(xs, ys):
                out.append(f'<circle cx="{_fmt(sx(a))}" cy="{_fmt(sy(b))}" r="3.5" fill="{color}"/>')
        else:
            dash = ' stroke-dasharray="6,4"' if style == "dashed" else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                       f'stroke-width="1.6"{dash}/>')
        ly = _MT + 16 + 16 * i
        out.append(f'<line x1="{_ML + pw - 150}" y1="{ly - 4}" x2="{_ML + pw - 130}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_ML + pw - 125}" y="{ly}" font-size="11">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write(path, series, **kw):
    with open(path, "w") as fh:
        fh.write(render(series, **kw))
