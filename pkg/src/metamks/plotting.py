"""Minimal static SVG charts (scatter and line) with deterministic output."""

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 480, 360
MARGIN = dict(left=64, right=20, top=28, bottom=52)

# a few viridis stops; colors are interpolated linearly between them
_RAMP = np.array(
    [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]],
    dtype=np.float64,
)


def color_for(values):
    v = np.asarray(values, dtype=np.float64)
    lo, hi = np.nanmin(v), np.nanmax(v)
    t = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    pos = t * (len(_RAMP) - 1)
    i = np.clip(np.floor(pos).astype(int), 0, len(_RAMP) - 2)
    frac = (pos - i)[:, None]
    rgb = np.rint(_RAMP[i] * (1 - frac) + _RAMP[i + 1] * frac).astype(int)
    return [f"#{r:02x}{g:02x}{b:02x}" for r, g, b in rgb]


def _nice_ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    step = 10 ** np.floor(np.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    first = np.ceil(lo / step) * step
    return list(np.arange(first, hi + 0.5 * step, step))


class _Frame:
    def __init__(self, xlim, ylim):
        pad = lambda lo, hi: (lo - 0.5, hi + 0.5) if hi == lo else (lo - 0.04 * (hi - lo), hi + 0.04 * (hi - lo))
        self.x0, self.x1 = pad(*xlim)
        self.y0, self.y1 = pad(*ylim)
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(self, x):
        return MARGIN["left"] + (np.asarray(x) - self.x0) / (self.x1 - self.x0) * self.pw

    def sy(self, y):
        return MARGIN["top"] + (self.y1 - np.asarray(y)) / (self.y1 - self.y0) * self.ph


def _axes(frame, title, xlabel, ylabel):
    out = [
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{frame.pw}" height="{frame.ph}" fill="none" stroke="#333"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{MARGIN["left"] + frame.pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{MARGIN["top"] + frame.ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {MARGIN["top"] + frame.ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    base = MARGIN["top"] + frame.ph
    for t in _nice_ticks(frame.x0, frame.x1):
        x = frame.sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{base}" x2="{x:.2f}" y2="{base + 4}" stroke="#333"/>')
        out.append(f'<text x="{x:.2f}" y="{base + 16}" text-anchor="middle" font-size="10">{t:.4g}</text>')
    for t in _nice_ticks(frame.y0, frame.y1):
        y = frame.sy(t)
        out.append(f'<line x1="{MARGIN["left"] - 4}" y1="{y:.2f}" x2="{MARGIN["left"]}" y2="{y:.2f}" stroke="#333"/>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{y + 3:.2f}" text-anchor="end" font-size="10">{t:.4g}</text>')
    return out


def _document(body):
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">'
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>", ""])


def scatter_svg(x, y, color=None, title="", xlabel="", ylabel="", diagonal=False):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lo = min(x.min(), y.min()) if diagonal else None
    hi = max(x.max(), y.max()) if diagonal else None
    frame = _Frame((lo, hi) if diagonal else (x.min(), x.max()), (lo, hi) if diagonal else (y.min(), y.max()))
    body = _axes(frame, title, xlabel, ylabel)
    if diagonal:
        body.append(
            f'<line x1="{frame.sx(lo):.2f}" y1="{frame.sy(lo):.2f}" x2="{frame.sx(hi):.2f}" y2="{frame.sy(hi):.2f}" '
            'stroke="#c00" stroke-dasharray="4 3"/>'
        )
    fills = color_for(color) if color is not None else ["#1f5fa8"] * len(x)
    for px, py, c in zip(frame.sx(x), frame.sy(y), fills):
        body.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.2" fill="{c}" fill-opacity="0.8"/>')
    return _document(body)


def line_svg(x, y, band=None, title="", xlabel="", ylabel=""):
    """Line chart; ``band`` is an optional symmetric half-width drawn as a shaded area."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lo, hi = y.min(), y.max()
    if band is not None:
        band = np.asarray(band, dtype=np.float64)
        lo, hi = (y - band).min(), (y + band).max()
    frame = _Frame((x.min(), x.max()), (lo, hi))
    body = _axes(frame, title, xlabel, ylabel)
    if band is not None:
        upper = [f"{a:.2f},{b:.2f}" for a, b in zip(frame.sx(x), frame.sy(y + band))]
        lower = [f"{a:.2f},{b:.2f}" for a, b in zip(frame.sx(x)[::-1], frame.sy((y - band)[::-1]))]
        body.append(f'<polygon points="{" ".join(upper + lower)}" fill="#1f5fa8" fill-opacity="0.2" stroke="none"/>')
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(frame.sx(x), frame.sy(y)))
    body.append(f'<polyline points="{pts}" fill="none" stroke="#1f5fa8" stroke-width="1.6"/>')
    return _document(body)
