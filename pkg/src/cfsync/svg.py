"""Small deterministic SVG plot writer.

Byte-identical output for identical input is part of the contract, so
no timestamps, no randomness, fixed palettes and fixed float formats.
Two layouts cover everything the command line needs: stacked time
panels and a single complex-plane curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = ["Panel", "line_plot", "plane_plot"]

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
            "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
_MAX_POINTS = 4000

_W = 760
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 18, 34, 46
_PANEL_H = 240


@dataclass(frozen=True)
class Panel:
    t: np.ndarray
    series: np.ndarray  # (samples, lines)
    labels: tuple
    ylabel: str


def _fmt(v: float) -> str:
    s = f"{v:.10g}"
    return "0" if s in ("-0", "-0.0") else s


def _px(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, target: int = 6):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigurationError("cannot place ticks on a non-finite range")
    if hi <= lo:
        pad = 1.0 if lo == 0.0 else abs(lo) * 0.5
        lo, hi = lo - pad, hi + pad
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = 10.0 * mag
    for mult in (1.0, 2.0, 2.5, 5.0):
        if (hi - lo) / (mult * mag) <= target:
            step = mult * mag
            break
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < step * 1e-6 else v)
        v += step
    return lo, hi, ticks


def _stride(n: int) -> int:
    return max(1, -(-n // _MAX_POINTS))


def _path(xs, ys) -> str:
    parts = [f"{'M' if i == 0 else 'L'}{_px(x)},{_px(y)}"
             for i, (x, y) in enumerate(zip(xs, ys))]
    return "".join(parts)


def _panel_svg(out: list, panel: Panel, top: float, xlabel: str | None):
    t = np.asarray(panel.t, dtype=float)
    ys = np.asarray(panel.series, dtype=float)
    if ys.ndim == 1:
        ys = ys[:, None]
    st = _stride(len(t))
    t = t[::st]
    ys = ys[::st]
    x_lo, x_hi, x_ticks = _ticks(float(t[0]), float(t[-1]))
    y_lo, y_hi, y_ticks = _ticks(float(np.min(ys)), float(np.max(ys)))
    px0, px1 = _MARGIN_L, _W - _MARGIN_R
    py0, py1 = top + _PANEL_H, top

    def sx(v):
        return px0 + (v - x_lo) / (x_hi - x_lo) * (px1 - px0)

    def sy(v):
        return py0 + (v - y_lo) / (y_hi - y_lo) * (py1 - py0)

    out.append(f'<rect x="{px0}" y="{py1}" width="{px1 - px0}" '
               f'height="{py0 - py1}" fill="none" stroke="#444" stroke-width="1"/>')
    for v in x_ticks:
        x = sx(v)
        out.append(f'<line x1="{_px(x)}" y1="{_px(py0)}" x2="{_px(x)}" '
                   f'y2="{_px(py1)}" stroke="#ddd" stroke-width="0.7"/>')
        if xlabel is not None:
            out.append(f'<text x="{_px(x)}" y="{_px(py0 + 16)}" font-size="11" '
                       f'text-anchor="middle" fill="#333">{_fmt(v)}</text>')
    for v in y_ticks:
        y = sy(v)
        out.append(f'<line x1="{_px(px0)}" y1="{_px(y)}" x2="{_px(px1)}" '
                   f'y2="{_px(y)}" stroke="#ddd" stroke-width="0.7"/>')
        out.append(f'<text x="{_px(px0 - 6)}" y="{_px(y + 3.5)}" font-size="11" '
                   f'text-anchor="end" fill="#333">{_fmt(v)}</text>')
    for j in range(ys.shape[1]):
        color = _PALETTE[j % len(_PALETTE)]
        out.append(f'<path d="{_path(sx(t), sy(ys[:, j]))}" fill="none" '
                   f'stroke="{color}" stroke-width="1.4"/>')
    for j, label in enumerate(panel.labels):
        color = _PALETTE[j % len(_PALETTE)]
        lx = px1 - 110
        ly = py1 + 14 + 14 * j
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}" font-size="11" '
                   f'fill="#333">{label}</text>')
    out.append(f'<text x="{_px(px0 - 48)}" y="{_px((py0 + py1) / 2)}" '
               f'font-size="12" fill="#333" text-anchor="middle" '
               f'transform="rotate(-90 {_px(px0 - 48)} {_px((py0 + py1) / 2)})">'
               f'{panel.ylabel}</text>')
    if xlabel is not None:
        out.append(f'<text x="{_px((px0 + px1) / 2)}" y="{_px(py0 + 34)}" '
                   f'font-size="12" fill="#333" text-anchor="middle">{xlabel}</text>')


def line_plot(path: str, panels: list, title: str, xlabel: str):
    """Stacked time panels sharing one x axis label on the last panel."""
    if not panels:
        raise ConfigurationError("no panels to draw")
    height = _MARGIN_T + len(panels) * (_PANEL_H + 28) + _MARGIN_B - 28
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
           f'height="{height}" viewBox="0 0 {_W} {height}">',
           f'<rect width="{_W}" height="{height}" fill="#ffffff"/>',
           f'<text x="{_W / 2}" y="22" font-size="14" text-anchor="middle" '
           f'fill="#111" font-weight="bold">{title}</text>']
    top = _MARGIN_T
    for i, panel in enumerate(panels):
        last = i == len(panels) - 1
        _panel_svg(out, panel, top, xlabel if last else None)
        top += _PANEL_H + 28
    out.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def plane_plot(path: str, points: np.ndarray, title: str,
               mark: complex = 0.0 + 0.0j):
    """One complex-valued curve drawn with equal axis scales."""
    z = np.asarray(points, dtype=complex)
    st = _stride(len(z))
    z = z[::st]
    re, im = z.real, z.imag
    lo = min(float(re.min()), float(im.min()), mark.real, mark.imag)
    hi = max(float(re.max()), float(im.max()), mark.real, mark.imag)
    pad = 0.06 * (hi - lo if hi > lo else 1.0)
    lo, hi = lo - pad, hi + pad
    side = 460.0
    px0, py0 = _MARGIN_L, _MARGIN_T + side

    def sx(v):
        return px0 + (v - lo) / (hi - lo) * side

    def sy(v):
        return py0 - (v - lo) / (hi - lo) * side

    w = px0 + side + _MARGIN_R
    h = _MARGIN_T + side + _MARGIN_B
    _, _, ticks = _ticks(lo, hi)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
           f'viewBox="0 0 {w} {h}">',
           f'<rect width="{w}" height="{h}" fill="#ffffff"/>',
           f'<text x="{w / 2}" y="22" font-size="14" text-anchor="middle" '
           f'fill="#111" font-weight="bold">{title}</text>',
           f'<rect x="{px0}" y="{_MARGIN_T}" width="{side}" height="{side}" '
           f'fill="none" stroke="#444" stroke-width="1"/>']
    for v in ticks:
        x, y = sx(v), sy(v)
        out.append(f'<line x1="{_px(x)}" y1="{_px(py0)}" x2="{_px(x)}" '
                   f'y2="{_px(py0 - side)}" stroke="#ddd" stroke-width="0.7"/>')
        out.append(f'<line x1="{_px(px0)}" y1="{_px(y)}" x2="{_px(px0 + side)}" '
                   f'y2="{_px(y)}" stroke="#ddd" stroke-width="0.7"/>')
        out.append(f'<text x="{_px(x)}" y="{_px(py0 + 16)}" font-size="11" '
                   f'text-anchor="middle" fill="#333">{_fmt(v)}</text>')
        out.append(f'<text x="{_px(px0 - 6)}" y="{_px(y + 3.5)}" font-size="11" '
                   f'text-anchor="end" fill="#333">{_fmt(v)}</text>')
    mx, my = sx(mark.real), sy(mark.imag)
    out.append(f'<path d="M{_px(mx - 5)},{_px(my)}L{_px(mx + 5)},{_px(my)}'
               f'M{_px(mx)},{_px(my - 5)}L{_px(mx)},{_px(my + 5)}" '
               f'stroke="#d62728" stroke-width="1.6" fill="none"/>')
    out.append(f'<path d="{_path(sx(re), sy(im))}" fill="none" '
               f'stroke="#1f77b4" stroke-width="1.2"/>')
    out.append(f'<text x="{_px((px0 + px0 + side) / 2)}" y="{_px(py0 + 34)}" '
               f'font-size="12" fill="#333" text-anchor="middle">real part</text>')
    out.append(f'<text x="{_px(px0 - 44)}" y="{_px(py0 - side / 2)}" '
               f'font-size="12" fill="#333" text-anchor="middle" '
               f'transform="rotate(-90 {_px(px0 - 44)} {_px(py0 - side / 2)})">'
               f'imaginary part</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
