"""Small SVG line-plot writer: axes, optional log scales, polylines and legends."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


class Plot:
    def __init__(self, title: str = "", xlabel: str = "", ylabel: str = "", xlog: bool = False,
                 ylog: bool = False, width: int = 640, height: int = 420):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.xlog, self.ylog = xlog, ylog
        self.width, self.height = width, height
        self.series: list[tuple] = []

    def line(self, x, y, label: str = "", dashed: bool = False, color: str | None = None):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if self.xlog:
            ok &= x > 0
        if self.ylog:
            ok &= y > 0
        color = color or PALETTE[len(self.series) % len(PALETTE)]
        self.series.append((x[ok], y[ok], label, dashed, color))
        return self

    def reference_slope(self, x, slope: float, anchor_x: float, anchor_y: float, label: str = ""):
        """Power law y = anchor_y (x / anchor_x)^slope, drawn dashed (log-log axes)."""
        x = np.asarray(x, dtype=float)
        return self.line(x, anchor_y * (x / anchor_x) ** slope, label, dashed=True, color="#555555")

    def _tx(self, v, lo, hi, a, b, log):
        if log:
            v, lo, hi = np.log10(v), np.log10(lo), np.log10(hi)
        return a + (b - a) * (v - lo) / (hi - lo if hi > lo else 1.0)

    def _range(self, idx, log):
        vals = np.concatenate([s[idx] for s in self.series if len(s[idx])] or [np.array([0.0, 1.0])])
        lo, hi = float(vals.min()), float(vals.max())
        if lo == hi:
            lo, hi = (lo / 2, hi * 2) if log else (lo - 1, hi + 1)
        return lo, hi

    def render(self) -> str:
        W, H = self.width, self.height
        L, R, Tm, B = 70, W - 150, 30, H - 50
        xlo, xhi = self._range(0, self.xlog)
        ylo, yhi = self._range(1, self.ylog)
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
               f'font-family="sans-serif" font-size="11">',
               f'<rect width="{W}" height="{H}" fill="white"/>',
               f'<rect x="{L}" y="{Tm}" width="{R - L}" height="{B - Tm}" fill="none" stroke="black"/>',
               f'<text x="{(L + R) / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(self.title)}</text>',
               f'<text x="{(L + R) / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(self.xlabel)}</text>',
               f'<text x="14" y="{(Tm + B) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(Tm + B) / 2:.1f})">{escape(self.ylabel)}</text>']
        for frac in np.linspace(0, 1, 5):
            xv = 10 ** (np.log10(xlo) + frac * np.log10(xhi / xlo)) if self.xlog else xlo + frac * (xhi - xlo)
            yv = 10 ** (np.log10(ylo) + frac * np.log10(yhi / ylo)) if self.ylog else ylo + frac * (yhi - ylo)
            px = L + frac * (R - L)
            py = B - frac * (B - Tm)
            out.append(f'<line x1="{px:.1f}" y1="{B}" x2="{px:.1f}" y2="{B + 4}" stroke="black"/>')
            out.append(f'<text x="{px:.1f}" y="{B + 16}" text-anchor="middle">{xv:.3g}</text>')
            out.append(f'<line x1="{L - 4}" y1="{py:.1f}" x2="{L}" y2="{py:.1f}" stroke="black"/>')
            out.append(f'<text x="{L - 6}" y="{py + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
        for j, (x, y, label, dashed, color) in enumerate(self.series):
            if len(x) == 0:
                continue
            px = self._tx(x, xlo, xhi, L, R, self.xlog)
            py = self._tx(y, ylo, yhi, B, Tm, self.ylog)
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
            dash = ' stroke-dasharray="5,4"' if dashed else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.4"{dash}/>')
            if label:
                ly = Tm + 14 + 16 * j
                out.append(f'<line x1="{R + 8}" y1="{ly - 4}" x2="{R + 28}" y2="{ly - 4}" stroke="{color}"{dash}/>')
                out.append(f'<text x="{R + 32}" y="{ly}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())
