"""Static SVG 1.1 figures: node maps, rule graphs, bar histograms.

Output is a pure function of the inputs (no timestamps, no randomness), so
identical inputs give byte-identical documents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

SVG_NS = "http://www.w3.org/2000/svg"


@dataclass(frozen=True)
class ColorScale:
    """Piecewise-linear RGB gradient over [0, 1]."""

    anchors: tuple[tuple[float, tuple[int, int, int]], ...]

    def __post_init__(self):
        pos = [p for p, _ in self.anchors]
        if not pos or pos[0] != 0.0 or pos[-1] != 1.0:
            raise ValueError("anchors must start at 0 and end at 1")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("anchor positions must be strictly increasing")

    def rgb(self, t: float) -> tuple[int, int, int]:
        t = min(1.0, max(0.0, float(t)))
        for (p0, c0), (p1, c1) in zip(self.anchors, self.anchors[1:]):
            if t <= p1:
                f = (t - p0) / (p1 - p0)
                return tuple(int(round(a + (b - a) * f)) for a, b in zip(c0, c1))
        return self.anchors[-1][1]

    def hex(self, t: float) -> str:
        return "#{:02x}{:02x}{:02x}".format(*self.rgb(t))

    def reversed(self) -> ColorScale:
        return ColorScale(tuple((1.0 - p, c) for p, c in reversed(self.anchors)))


BLUE_RED = ColorScale(((0.0, (49, 54, 149)), (0.5, (255, 255, 191)), (1.0, (165, 0, 38))))
GRAYS = ColorScale(((0.0, (250, 250, 250)), (1.0, (40, 40, 40))))
PINK_RED = ColorScale(((0.0, (252, 205, 215)), (1.0, (200, 16, 46))))

LABEL_COLORS = ("#1a9850", "#4575b4", "#f46d43", "#a50026", "#762a83", "#000000")


def minmax_normalize(values) -> np.ndarray:
    """Scale to [0, 1]; a constant input maps to 0.5 everywhere."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return v
    lo, hi = np.nanmin(v), np.nanmax(v)
    if hi <= lo:
        return np.full_like(v, 0.5)
    return (v - lo) / (hi - lo)


def dense_rank(values) -> list[int]:
    distinct = sorted(set(values))
    pos = {v: i for i, v in enumerate(distinct)}
    return [pos[v] for v in values]


class _Doc:
    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.parts: list[str] = []

    def add(self, text: str) -> None:
        self.parts.append(text)

    def rect(self, x, y, w, h, fill, cls=None, stroke="#ffffff"):
        c = f' class="{cls}"' if cls else ""
        self.add(f'<rect{c} x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="{fill}" stroke="{stroke}"/>')

    def text(self, x, y, body, cls=None, size=10, anchor="start", fill="#000000", extra=""):
        c = f' class="{cls}"' if cls else ""
        self.add(
            f'<text{c} x="{x:.2f}" y="{y:.2f}" font-size="{size:g}" font-family="sans-serif" '
            f'text-anchor="{anchor}" fill="{fill}"{extra}>{escape(str(body))}</text>'
        )

    def line(self, x1, y1, x2, y2, cls=None, stroke="#999999", width=1.0):
        c = f' class="{cls}"' if cls else ""
        self.add(
            f'<line{c} x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            f'stroke="{stroke}" stroke-width="{width:g}"/>'
        )

    def render(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
            f'<svg xmlns="{SVG_NS}" version="1.1" width="{self.width:.0f}" height="{self.height:.0f}" '
            f'viewBox="0 0 {self.width:.0f} {self.height:.0f}">\n'
        )
        return head + "\n".join(self.parts) + "\n</svg>\n"


def render_node_map(
    values,
    rows: int,
    cols: int,
    overlay=None,
    scale: ColorScale = GRAYS,
    title: str = "",
    label_order: Sequence[str] | None = None,
    cell_width: float = 110.0,
) -> str:
    """One rectangle per node, node 1 bottom-left, node rows*cols top-right.

    ``overlay`` is a :class:`carmine.som.MapOverlay`; each member is written
    as a text line inside its node's cell, coloured by its label.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size != rows * cols:
        raise ValueError(f"expected {rows * cols} node values, got {values.size}")
    members = overlay.members if overlay is not None else {}
    line_h = 10.0
    most = max((len(v) for v in members.values()), default=0)
    cell_h = max(48.0, 16.0 + line_h * most)
    margin, top = 20.0, 34.0 if title else 16.0
    legend_h = 34.0
    doc = _Doc(2 * margin + cols * cell_width, top + rows * cell_h + legend_h + margin)
    if title:
        doc.text(margin, 22, title, cls="title", size=14)

    labels = label_order
    if labels is None:
        labels = sorted({lb for items in members.values() for _, lb in items if lb is not None})
    palette = {lb: LABEL_COLORS[i % len(LABEL_COLORS)] for i, lb in enumerate(labels)}

    norm = minmax_normalize(values)
    for node in range(1, rows * cols + 1):
        r, c = divmod(node - 1, cols)
        x = margin + c * cell_width
        y = top + (rows - 1 - r) * cell_h
        doc.rect(x, y, cell_width, cell_h, scale.hex(norm[node - 1]), cls="node")
        doc.text(x + cell_width - 3, y + 10, node, cls="node-id", size=7, anchor="end", fill="#666666")
        for k, (rid, lb) in enumerate(members.get(node, ())):
            doc.text(
                x + 3,
                y + 12 + (k + 1) * line_h - 2,
                rid,
                cls="label",
                size=8,
                fill=palette.get(lb, "#000000"),
            )

    # gradient legend
    ly = top + rows * cell_h + 10
    steps = 20
    w = cols * cell_width / 2 / steps
    for i in range(steps):
        doc.rect(margin + i * w, ly, w, 10, scale.hex(i / (steps - 1)), cls="legend", stroke="none")
    finite = values[np.isfinite(values)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 0.0
    doc.text(margin, ly + 22, f"{lo:.3g}", cls="legend", size=9)
    doc.text(margin + steps * w, ly + 22, f"{hi:.3g}", cls="legend", size=9, anchor="end")
    for i, lb in enumerate(labels):
        doc.text(margin + steps * w + 20 + i * 70, ly + 9, lb, cls="legend", size=9, fill=palette[lb])
    return doc.render()


def render_rule_graph(
    rules: Sequence,
    title: str = "",
    size: float = 640.0,
    r_min: float = 5.0,
    r_max: float = 18.0,
) -> str:
    """Circular rule graph: items on the outer ring, rules on the inner ring.

    Items are placed alphabetically; rules keep their given order and carry
    ``id="rule-<i>"``. Rule radius grows with the dense rank of lift, fill
    intensity with the dense rank of confidence.
    """
    doc = _Doc(size, size + (24 if title else 0))
    off = 24.0 if title else 0.0
    if title:
        doc.text(10, 18, title, cls="title", size=14)
    cx, cy = size / 2, size / 2 + off
    outer, inner = size * 0.40, size * 0.22

    items = sorted({it for r in rules for it in (*r.antecedent_items, r.consequent_item)}, key=lambda i: i.name())
    consequents = {r.consequent_item for r in rules}
    item_pos = {}
    for k, it in enumerate(items):
        a = 2 * math.pi * k / len(items) - math.pi / 2
        item_pos[it] = (cx + outer * math.cos(a), cy + outer * math.sin(a))

    rule_pos = []
    for k in range(len(rules)):
        a = 2 * math.pi * k / len(rules) - math.pi / 2
        rule_pos.append((cx + inner * math.cos(a), cy + inner * math.sin(a)))

    lift_rank = dense_rank([r.lift for r in rules])
    conf_rank = dense_rank([r.confidence for r in rules])
    n_lift = max(lift_rank, default=0)
    n_conf = max(conf_rank, default=0)

    for k, r in enumerate(rules):
        x, y = rule_pos[k]
        for it in r.antecedent_items:
            ix, iy = item_pos[it]
            doc.line(ix, iy, x, y, cls="edge")
        ix, iy = item_pos[r.consequent_item]
        doc.line(x, y, ix, iy, cls="edge-consequent", stroke="#2ca25f", width=1.5)

    for k, r in enumerate(rules):
        x, y = rule_pos[k]
        radius = r_max if n_lift == 0 else r_min + (r_max - r_min) * lift_rank[k] / n_lift
        fill = PINK_RED.hex(1.0 if n_conf == 0 else conf_rank[k] / n_conf)
        tip = escape(
            ", ".join(r.antecedent_names()) + f" => {r.consequent_item.name()} "
            f"(support {r.support:.3f}, confidence {r.confidence:.3f}, lift {r.lift:.3f})"
        )
        doc.add(
            f'<circle id="rule-{k}" class="rule" cx="{x:.3f}" cy="{y:.3f}" r="{radius:.3f}" '
            f'fill="{fill}" stroke="#7f0000"><title>{tip}</title></circle>'
        )

    for it in items:
        x, y = item_pos[it]
        cls = "item consequent" if it in consequents else "item"
        fill = "#74c476" if it in consequents else "#c7e9c0"
        doc.add(f'<circle class="{cls}" cx="{x:.3f}" cy="{y:.3f}" r="6.000" fill="{fill}" stroke="#238b45"/>')
        anchor = "start" if x >= cx else "end"
        dx = 9 if x >= cx else -9
        doc.text(x + dx, y + 3, it.name(), cls="item-label", size=9, anchor=anchor)
    return doc.render()


def render_histogram(counts: Mapping[str, int], title: str = "", width: float = 480.0, height: float = 300.0) -> str:
    """Vertical bars in the mapping's order, heights proportional to counts."""
    doc = _Doc(width, height)
    left, right, top, bottom = 44.0, 12.0, 32.0, 70.0
    plot_w, plot_h = width - left - right, height - top - bottom
    if title:
        doc.text(left, 20, title, cls="title", size=13)
    base = top + plot_h
    doc.line(left, top, left, base, cls="axis", stroke="#000000")
    doc.line(left, base, left + plot_w, base, cls="axis", stroke="#000000")
    labels = list(counts)
    peak = max(counts.values(), default=0)
    if labels and peak > 0:
        slot = plot_w / len(labels)
        bar_w = slot * 0.7
        for k, lb in enumerate(labels):
            h = plot_h * counts[lb] / peak
            x = left + k * slot + (slot - bar_w) / 2
            doc.rect(x, base - h, bar_w, h, "#4575b4", cls="bar", stroke="#313695")
            doc.text(x + bar_w / 2, base - h - 3, counts[lb], cls="count", size=9, anchor="middle")
            tx, ty = x + bar_w / 2, base + 12
            doc.text(tx, ty, lb, cls="tick", size=9, anchor="end", extra=f' transform="rotate(-40 {tx:.2f} {ty:.2f})"')
        doc.text(left - 6, top + 4, peak, cls="axis-label", size=9, anchor="end")
    doc.text(left - 6, base, 0, cls="axis-label", size=9, anchor="end")
    return doc.render()


def figure_name(run_id: str, kind: str, attribute: str) -> str:
    """``<run-id>_<figure-kind>_<attribute>.svg`` with path-safe parts."""

    def safe(s):
        return "".join(ch if ch.isalnum() or ch in "-." else "-" for ch in str(s))

    return f"{safe(run_id)}_{safe(kind)}_{safe(attribute)}.svg"


__all__ = [
    "BLUE_RED",
    "GRAYS",
    "ColorScale",
    "dense_rank",
    "figure_name",
    "minmax_normalize",
    "render_histogram",
    "render_node_map",
    "render_rule_graph",
]
