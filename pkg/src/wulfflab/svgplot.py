"""Minimal SVG output: line charts, heatmaps and outlines as plain text."""

from xml.sax.saxutils import escape

import numpy as np

W, H, PAD = 480, 360, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v):
    return f"{v:.6g}"


def _header(title):
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            '<rect width="100%" height="100%" fill="white"/>',
            f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>']


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (np.asarray(v) - lo) / span * (b - a)


def line_chart(series, title="", xlabel="", ylabel="", logx=False, logy=False):
    """``series`` maps a label to (x, y); returns SVG text."""
    tx = np.log10 if logx else (lambda v: np.asarray(v, dtype=float))
    ty = np.log10 if logy else (lambda v: np.asarray(v, dtype=float))
    xs = np.concatenate([tx(np.asarray(x, float)) for x, _ in series.values()])
    ys = np.concatenate([ty(np.asarray(y, float)) for _, y in series.values()])
    ok = np.isfinite(xs) & np.isfinite(ys)
    xs, ys = xs[ok], ys[ok]
    if xs.size == 0:
        xs, ys = np.zeros(1), np.zeros(1)
    sx = _scale(xs.min(), xs.max(), PAD, W - PAD)
    sy = _scale(ys.min(), ys.max(), H - PAD, PAD)
    out = _header(title)
    out.append(f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>')
    out.append(f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>')
    for v, lab in ((xs.min(), "min"), (xs.max(), "max")):
        shown = 10 ** v if logx else v
        out.append(f'<text x="{_fmt(float(sx(v)))}" y="{H - PAD + 15}" font-size="10" '
                   f'text-anchor="middle">{_fmt(shown)}</text>')
    for v in (ys.min(), ys.max()):
        shown = 10 ** v if logy else v
        out.append(f'<text x="{PAD - 4}" y="{_fmt(float(sy(v)))}" font-size="10" text-anchor="end">{_fmt(shown)}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{H / 2}" font-size="12" transform="rotate(-90 14 {H / 2})" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    for k, (label, (x, y)) in enumerate(series.items()):
        x, y = tx(np.asarray(x, float)), ty(np.asarray(y, float))
        good = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{_fmt(float(a))},{_fmt(float(b))}" for a, b in zip(sx(x[good]), sy(y[good])))
        color = COLORS[k % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        for a, b in zip(sx(x[good]), sy(y[good])):
            out.append(f'<circle cx="{_fmt(float(a))}" cy="{_fmt(float(b))}" r="2.5" fill="{color}"/>')
        out.append(f'<text x="{W - PAD}" y="{PAD + 14 * k}" font-size="11" fill="{color}" '
                   f'text-anchor="end">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap(values, mask=None, title=""):
    """Grid values as coloured cells (blue low, red high); masked-out cells blank."""
    V = np.asarray(values, dtype=float)
    mask = np.ones(V.shape, bool) if mask is None else np.asarray(mask, bool)
    lo, hi = (float(V[mask].min()), float(V[mask].max())) if mask.any() else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    nx, ny = V.shape
    cw, ch = (W - 2 * PAD) / nx, (H - 2 * PAD) / ny
    out = _header(f"{title}  [{_fmt(lo)}, {_fmt(hi)}]")
    for i in range(nx):
        for j in range(ny):
            if not mask[i, j]:
                continue
            t = (V[i, j] - lo) / span
            r, b = int(255 * t), int(255 * (1 - t))
            y = H - PAD - (j + 1) * ch
            out.append(f'<rect x="{_fmt(PAD + i * cw)}" y="{_fmt(y)}" width="{_fmt(cw)}" height="{_fmt(ch)}" '
                       f'fill="rgb({r},64,{b})"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def outline(curves, title=""):
    """Closed planar curves (label -> (N, 2) points) drawn with equal axes."""
    allp = np.concatenate([np.asarray(c, float) for c in curves.values()])
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = float((hi - lo).max()) or 1.0
    size = min(W, H) - 2 * PAD

    def tr(P):
        Q = (np.asarray(P, float) - lo) / span * size
        return np.stack([PAD + Q[:, 0], H - PAD - Q[:, 1]], axis=1)

    out = _header(title)
    for k, (label, P) in enumerate(curves.items()):
        Q = tr(P)
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in Q)
        color = COLORS[k % len(COLORS)]
        out.append(f'<polygon fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{W - PAD}" y="{PAD + 14 * k}" font-size="11" fill="{color}" '
                   f'text-anchor="end">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
