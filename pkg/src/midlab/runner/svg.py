"""Dependency-free SVG scatter plots of 2-D labeled datasets."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from ..domains import LabeledDataset
from .files import atomic_write

DOMAIN_COLORS = {"source": "#1f77b4", "target": "#ff7f0e", "generated": "#2ca02c"}
GLYPHS = ("circle", "square", "triangle", "diamond", "cross")
MARGIN = 48


def _glyph(kind, x, y, r, color):
    if kind == "circle":
        return f'<circle cx="{x:.1f}" cy="{y:.1f}" r="{r}" fill="{color}"/>'
    if kind == "square":
        return f'<rect x="{x - r:.1f}" y="{y - r:.1f}" width="{2 * r}" height="{2 * r}" fill="{color}"/>'
    if kind == "triangle":
        pts = f"{x:.1f},{y - r:.1f} {x - r:.1f},{y + r:.1f} {x + r:.1f},{y + r:.1f}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    if kind == "diamond":
        pts = f"{x:.1f},{y - r:.1f} {x + r:.1f},{y:.1f} {x:.1f},{y + r:.1f} {x - r:.1f},{y:.1f}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    return (
        f'<path d="M{x - r:.1f} {y - r:.1f}L{x + r:.1f} {y + r:.1f}M{x - r:.1f} {y + r:.1f}'
        f'L{x + r:.1f} {y - r:.1f}" stroke="{color}" stroke-width="1"/>'
    )


def render_scatter_svg(datasets, styles=None, width=640, height=480, radius=2) -> str:
    """SVG text: color by domain tag, glyph by class, a legend row per dataset."""
    datasets = list(datasets)
    styles = list(styles or [{} for _ in datasets])
    if len(styles) != len(datasets):
        raise ValueError("styles must match datasets one to one")
    for d in datasets:
        if not isinstance(d, LabeledDataset) or d.dim != 2:
            raise ValueError("scatter plots need 2-D LabeledDatasets")

    if datasets:
        allpts = np.concatenate([d.points for d in datasets])
        lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    else:
        lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
    pad = np.maximum(0.05 * (hi - lo), 1e-9)
    lo, hi = lo - pad, hi + pad
    pw, ph = width - 2 * MARGIN, height - 2 * MARGIN

    def to_px(p):
        x = MARGIN + (p[:, 0] - lo[0]) / (hi[0] - lo[0]) * pw
        y = height - MARGIN - (p[:, 1] - lo[1]) / (hi[1] - lo[1]) * ph
        return x, y

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        '<g id="axes" stroke="black" stroke-width="1">',
        f'<line x1="{MARGIN}" y1="{height - MARGIN}" x2="{width - MARGIN}" y2="{height - MARGIN}"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{height - MARGIN}"/>',
        "</g>",
        '<g id="ticks" font-family="sans-serif" font-size="10">',
        f'<text x="{MARGIN}" y="{height - MARGIN + 14}">{lo[0]:.3g}</text>',
        f'<text x="{width - MARGIN}" y="{height - MARGIN + 14}" text-anchor="end">{hi[0]:.3g}</text>',
        f'<text x="{MARGIN - 4}" y="{height - MARGIN}" text-anchor="end">{lo[1]:.3g}</text>',
        f'<text x="{MARGIN - 4}" y="{MARGIN + 8}" text-anchor="end">{hi[1]:.3g}</text>',
        "</g>",
    ]
    for d, st in zip(datasets, styles):
        color = st.get("color", DOMAIN_COLORS[d.domain])
        x, y = to_px(d.points)
        out.append(f'<g class="points" data-domain="{d.domain}" fill-opacity="0.6">')
        out.extend(_glyph(GLYPHS[int(c) % len(GLYPHS)], a, b, radius, color) for a, b, c in zip(x, y, d.labels))
        out.append("</g>")
    out.append('<g id="legend" font-family="sans-serif" font-size="11">')
    for i, (d, st) in enumerate(zip(datasets, styles)):
        color = st.get("color", DOMAIN_COLORS[d.domain])
        ly = MARGIN + 14 * i
        label = escape(str(st.get("label", d.domain)))
        out.append(
            f'<g class="legend-entry"><rect x="{width - MARGIN - 90}" y="{ly - 8}" width="8" height="8" '
            f'fill="{color}"/><text x="{width - MARGIN - 78}" y="{ly}">{label}</text></g>'
        )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_scatter_svg(datasets, path, styles=None, **kw) -> str:
    """Render and write atomically; returns the SVG text."""
    text = render_scatter_svg(datasets, styles, **kw)
    atomic_write(path, text)
    return text
