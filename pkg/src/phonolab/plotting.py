"""
Deterministic standalone SVG figures.

Series become a polyline with one ``<circle class="marker">`` per point; a
ring-up/ring-down series with ``t_d`` in its metadata gets a dashed vertical
line at the drive switch-off.  Ramsey grids become a heat map with one
``<rect class="cell">`` per grid point and a labeled color scale.

Output depends only on the input values: coordinates are printed with a
fixed number of decimals and nothing time- or environment-dependent is
embedded.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .protocols import RING_UP_RING_DOWN, RamseyGrid

WIDTH = 640
HEIGHT = 420
MARGIN = dict(left=70, right=30, top=40, bottom=55)
SCALE_WIDTH = 18
SCALE_STEPS = 64

# viridis control points; interpolated linearly
_VIRIDIS = np.array([
    [68, 1, 84], [72, 40, 120], [62, 74, 137], [49, 104, 142], [38, 130, 142],
    [31, 158, 137], [53, 183, 121], [109, 205, 89], [180, 222, 44], [253, 231, 37],
])


def _c(x):
    return f"{x:.2f}"


def _color(frac):
    frac = min(max(float(frac), 0.0), 1.0)
    pos = frac * (len(_VIRIDIS) - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(_VIRIDIS) - 1)
    rgb = _VIRIDIS[lo] + (pos - lo) * (_VIRIDIS[hi] - _VIRIDIS[lo])
    return "#{:02x}{:02x}{:02x}".format(*(int(round(v)) for v in rgb))


def _label(x):
    return f"{x:.4g}"


def _range(values):
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def _header(width, height, title):
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.2f}" y="22" text-anchor="middle" font-size="14">'
                   f'{escape(title)}</text>')
    return out


def _axes(out, x0, y0, x1, y1, xr, yr, xlabel, ylabel, ticks=5):
    out.append(f'<rect class="frame" x="{_c(x0)}" y="{_c(y0)}" width="{_c(x1 - x0)}" '
               f'height="{_c(y1 - y0)}" fill="none" stroke="black"/>')
    for k in range(ticks + 1):
        f = k / ticks
        xv = xr[0] + f * (xr[1] - xr[0])
        xp = x0 + f * (x1 - x0)
        out.append(f'<line x1="{_c(xp)}" y1="{_c(y1)}" x2="{_c(xp)}" y2="{_c(y1 + 5)}" stroke="black"/>')
        out.append(f'<text x="{_c(xp)}" y="{_c(y1 + 18)}" text-anchor="middle">{_label(xv)}</text>')
        yv = yr[0] + f * (yr[1] - yr[0])
        yp = y1 - f * (y1 - y0)
        out.append(f'<line x1="{_c(x0 - 5)}" y1="{_c(yp)}" x2="{_c(x0)}" y2="{_c(yp)}" stroke="black"/>')
        out.append(f'<text x="{_c(x0 - 8)}" y="{_c(yp + 4)}" text-anchor="end">{_label(yv)}</text>')
    out.append(f'<text x="{_c((x0 + x1) / 2)}" y="{_c(y1 + 40)}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{_c((y0 + y1) / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 18 {_c((y0 + y1) / 2)})">{escape(ylabel)}</text>')


def _series_svg(series, style):
    if len(series) == 0:
        raise ValueError("cannot plot an empty series")
    width, height = style.get("width", WIDTH), style.get("height", HEIGHT)
    x0, y0 = MARGIN["left"], MARGIN["top"]
    x1, y1 = width - MARGIN["right"], height - MARGIN["bottom"]
    is_time = series.kind == RING_UP_RING_DOWN
    xscale = 1e6 if is_time else 1e-3
    xs = series.axis * xscale
    xr = _range(xs)
    yr = _range(np.concatenate([series.nbar - series.sigma, series.nbar + series.sigma, [0.0]]))

    def px(x):
        return x0 + (x - xr[0]) / (xr[1] - xr[0]) * (x1 - x0)

    def py(y):
        return y1 - (y - yr[0]) / (yr[1] - yr[0]) * (y1 - y0)

    out = _header(width, height, style.get("title", ""))
    _axes(out, x0, y0, x1, y1, xr, yr,
          style.get("xlabel", "time (us)" if is_time else "detuning (kHz)"),
          style.get("ylabel", "mean occupation"))

    t_d = style.get("break_at", series.meta.get("t_d") if is_time else None)
    if t_d is not None:
        xb = float(t_d) * xscale
        if xr[0] <= xb <= xr[1]:
            out.append(f'<line class="break" x1="{_c(px(xb))}" y1="{_c(y0)}" x2="{_c(px(xb))}" '
                       f'y2="{_c(y1)}" stroke="black" stroke-dasharray="2,3"/>')
            out.append(f'<text class="break-label" x="{_c(px(xb) + 4)}" y="{_c(y0 + 14)}">'
                       f't_d = {_label(xb)} us</text>')

    order = np.argsort(xs, kind="stable")
    pts = " ".join(f"{_c(px(xs[i]))},{_c(py(series.nbar[i]))}" for i in order)
    out.append(f'<polyline class="curve" points="{pts}" fill="none" stroke="#3b528b" stroke-width="1.2"/>')
    for x, y, s in zip(xs, series.nbar, series.sigma):
        if s > 0:
            out.append(f'<line class="errorbar" x1="{_c(px(x))}" y1="{_c(py(y - s))}" '
                       f'x2="{_c(px(x))}" y2="{_c(py(y + s))}" stroke="#888888"/>')
        out.append(f'<circle class="marker" cx="{_c(px(x))}" cy="{_c(py(y))}" r="2.5" fill="#21918c"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _grid_svg(grid, style):
    if grid.nbar.size == 0:
        raise ValueError("cannot plot an empty grid")
    width, height = style.get("width", WIDTH), style.get("height", HEIGHT)
    x0, y0 = MARGIN["left"], MARGIN["top"]
    x1 = width - MARGIN["right"] - SCALE_WIDTH - 60
    y1 = height - MARGIN["bottom"]
    taus = grid.taus * 1e6
    phis = grid.phis / np.pi
    xr = _range(taus) if taus.size > 1 else (taus[0] - 0.5, taus[0] + 0.5)
    yr = _range(phis) if phis.size > 1 else (phis[0] - 0.5, phis[0] + 0.5)
    zlo, zhi = _range(grid.nbar)

    def edges(v, r):
        # cell boundaries halfway between grid points, clipped to the axis range
        if v.size == 1:
            return np.array(r)
        mids = 0.5 * (v[1:] + v[:-1])
        return np.concatenate([[r[0]], mids, [r[1]]])

    xe = x0 + (edges(taus, xr) - xr[0]) / (xr[1] - xr[0]) * (x1 - x0)
    ye = y1 - (edges(phis, yr) - yr[0]) / (yr[1] - yr[0]) * (y1 - y0)

    out = _header(width, height, style.get("title", ""))
    for i in range(taus.size):
        for j in range(phis.size):
            frac = (grid.nbar[i, j] - zlo) / (zhi - zlo)
            top, bottom = min(ye[j], ye[j + 1]), max(ye[j], ye[j + 1])
            out.append(f'<rect class="cell" x="{_c(xe[i])}" y="{_c(top)}" width="{_c(xe[i + 1] - xe[i])}" '
                       f'height="{_c(bottom - top)}" fill="{_color(frac)}"/>')
    _axes(out, x0, y0, x1, y1, xr, yr, style.get("xlabel", "delay tau (us)"),
          style.get("ylabel", "phase phi (units of pi)"))

    sx = x1 + 25
    step = (y1 - y0) / SCALE_STEPS
    for k in range(SCALE_STEPS):
        frac = (k + 0.5) / SCALE_STEPS
        out.append(f'<rect class="scale" x="{_c(sx)}" y="{_c(y1 - (k + 1) * step)}" width="{SCALE_WIDTH}" '
                   f'height="{_c(step + 0.5)}" fill="{_color(frac)}"/>')
    for k in range(5):
        f = k / 4
        yp = y1 - f * (y1 - y0)
        out.append(f'<text class="scale-label" x="{_c(sx + SCALE_WIDTH + 4)}" y="{_c(yp + 4)}">'
                   f'{_label(zlo + f * (zhi - zlo))}</text>')
    out.append(f'<text class="scale-label" x="{_c(sx)}" y="{_c(y0 - 8)}">'
               f'{escape(style.get("zlabel", "nbar"))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(data, style=None):
    """Render a series or Ramsey grid to an SVG document string.

    Parameters
    ----------
    data : ExperimentSeries or RamseyGrid
    style : dict, optional
        ``title``, ``xlabel``, ``ylabel``, ``zlabel``, ``width``, ``height``
        and, for series, ``break_at`` (seconds) to override the ``t_d`` line.

    Raises
    ------
    ValueError
        If ``data`` holds no points.
    """
    style = dict(style or {})
    if isinstance(data, RamseyGrid):
        return _grid_svg(data, style)
    return _series_svg(data, style)
