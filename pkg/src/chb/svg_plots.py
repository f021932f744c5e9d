"""Minimal self-contained SVG line charts for experiment reports.

CSV is the canonical output of every experiment; these charts are an
optional convenience, so they are emitted directly as SVG markup rather
than through a plotting dependency.  Output is deterministic: fixed
viewport, fixed tick logic, fixed number formatting.
"""

from __future__ import annotations

import math

__all__ = ('line_chart', 'write_chart')

_COLORS = ('#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b')

_W, _H = 640, 480
_ML, _MR, _MT, _MB = 78, 24, 42, 56


def _ticks_linear(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    return [lo + span * k / (n - 1) for k in range(n)]


def _ticks_decades(lo: float, hi: float):
    k0 = math.floor(math.log10(lo))
    k1 = math.ceil(math.log10(hi))
    ticks = [10.0 ** k for k in range(int(k0), int(k1) + 1)]
    return ticks if len(ticks) >= 2 else _ticks_linear(lo, hi, 3)


def line_chart(series, title: str = '', xlabel: str = '', ylabel: str = '',
               loglog: bool = False) -> str:
    """Render series = [(label, xs, ys), ...] as an SVG document string."""
    pts_all = []
    for _, xs, ys in series:
        for x, y in zip(xs, ys):
            if loglog and (x <= 0 or y <= 0):
                continue
            pts_all.append((float(x), float(y)))
    if not pts_all:
        pts_all = [(1.0, 1.0)]

    tx = (lambda v: math.log10(v)) if loglog else (lambda v: v)
    xs_t = [tx(p[0]) for p in pts_all]
    ys_t = [tx(p[1]) for p in pts_all]
    x_lo, x_hi = min(xs_t), max(xs_t)
    y_lo, y_hi = min(ys_t), max(ys_t)
    if x_hi - x_lo < 1e-300:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi - y_lo < 1e-300:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad_x = 0.05 * (x_hi - x_lo)
    pad_y = 0.08 * (y_hi - y_lo)
    x_lo, x_hi = x_lo - pad_x, x_hi + pad_x
    y_lo, y_hi = y_lo - pad_y, y_hi + pad_y

    def px(x):
        return _ML + (tx(x) - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def py(y):
        return _H - _MB - (tx(y) - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" '
           f'font-size="15">{title}</text>']

    # axes box
    out.append(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
               f'height="{_H - _MT - _MB}" fill="none" stroke="#444"/>')

    if loglog:
        xticks = _ticks_decades(10 ** x_lo, 10 ** x_hi)
        yticks = _ticks_decades(10 ** y_lo, 10 ** y_hi)
    else:
        xticks = _ticks_linear(x_lo, x_hi)
        yticks = _ticks_linear(y_lo, y_hi)

    for t in xticks:
        xp = px(t)
        if xp < _ML - 0.5 or xp > _W - _MR + 0.5:
            continue
        out.append(f'<line x1="{xp:.1f}" y1="{_H - _MB}" x2="{xp:.1f}" '
                   f'y2="{_H - _MB + 5}" stroke="#444"/>')
        out.append(f'<text x="{xp:.1f}" y="{_H - _MB + 18}" '
                   f'text-anchor="middle">{t:.3g}</text>')
    for t in yticks:
        yp = py(t)
        if yp < _MT - 0.5 or yp > _H - _MB + 0.5:
            continue
        out.append(f'<line x1="{_ML - 5}" y1="{yp:.1f}" x2="{_ML}" '
                   f'y2="{yp:.1f}" stroke="#444"/>')
        out.append(f'<text x="{_ML - 8}" y="{yp + 4:.1f}" '
                   f'text-anchor="end">{t:.3g}</text>')

    out.append(f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 12}" '
               f'text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="18" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(_MT + _H - _MB) / 2:.1f})">{ylabel}</text>')

    for k, (label, xs, ys) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        pts = [(px(x), py(y)) for x, y in zip(xs, ys)
               if not (loglog and (x <= 0 or y <= 0))]
        if not pts:
            continue
        path = ' '.join(f'{x:.2f},{y:.2f}' for x, y in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        for x, y in pts:
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
        ly = _MT + 16 + 16 * k
        out.append(f'<line x1="{_W - _MR - 130}" y1="{ly - 4}" '
                   f'x2="{_W - _MR - 110}" y2="{ly - 4}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{_W - _MR - 104}" y="{ly}">{label}</text>')

    out.append('</svg>')
    return '\n'.join(out) + '\n'


def write_chart(path, series, **kwargs) -> None:
    with open(path, 'w', newline='\n') as fh:
        fh.write(line_chart(series, **kwargs))
