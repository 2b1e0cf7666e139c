import xml.etree.ElementTree as ET

import numpy as np
import pytest

from carmine import render, rules, som
from oracles import high_dpm_rules

NS = {"s": render.SVG_NS}


def parse(svg):
    root = ET.fromstring(svg.encode())
    assert root.tag == f"{{{render.SVG_NS}}}svg"
    return root


def by_class(root, tag, cls):
    return [e for e in root.iter(f"{{{render.SVG_NS}}}{tag}") if cls in (e.get("class") or "").split()]


def test_color_scale():
    assert render.GRAYS.rgb(0) == (250, 250, 250) and render.GRAYS.rgb(1) == (40, 40, 40)
    assert render.BLUE_RED.hex(0.5) == "#ffffbf"
    assert render.GRAYS.reversed().rgb(0) == (40, 40, 40)
    with pytest.raises(ValueError):
        render.ColorScale(((0.2, (0, 0, 0)), (1.0, (1, 1, 1))))


def test_dense_rank_and_normalize():
    assert render.dense_rank([3.0, 1.0, 3.0, 2.0]) == [2, 0, 2, 1]
    assert render.minmax_normalize([2, 2]).tolist() == [0.5, 0.5]
    assert render.minmax_normalize([0, 5, 10]).tolist() == [0, 0.5, 1]


def test_node_map_has_one_rect_per_node():
    root = parse(render.render_node_map(np.arange(64.0), 8, 8))
    assert len(by_class(root, "rect", "node")) == 64
    ids = [int(t.text) for t in by_class(root, "text", "node-id")]
    assert sorted(ids) == list(range(1, 65))


def test_constant_values_share_one_fill():
    root = parse(render.render_node_map(np.full(9, 3.0), 3, 3))
    assert len({r.get("fill") for r in by_class(root, "rect", "node")}) == 1


def test_overlay_labels_sit_inside_their_cells():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(162, 3))
    g = som.init_som(8, 8, 3, 42, data)
    ids = [f"c{i:03d}" for i in range(162)]
    overlay = som.map_samples(g, data, ids, ["high" if i % 3 else "low" for i in range(162)])
    root = parse(render.render_node_map(som.u_matrix(g), 8, 8, overlay, label_order=["low", "high"]))
    rects = by_class(root, "rect", "node")
    node_ids = [int(t.text) for t in by_class(root, "text", "node-id")]
    cells = {n: r for n, r in zip(node_ids, rects)}
    labels = by_class(root, "text", "label")
    assert len(labels) == 162
    node_of = overlay.node_of()
    for t in labels:
        r = cells[node_of[t.text]]
        x0, y0 = float(r.get("x")), float(r.get("y"))
        assert x0 <= float(t.get("x")) <= x0 + float(r.get("width"))
        assert y0 <= float(t.get("y")) <= y0 + float(r.get("height"))


def test_node_one_is_bottom_left():
    root = parse(render.render_node_map(np.zeros(6), 2, 3))
    rects = by_class(root, "rect", "node")
    ys = [float(r.get("y")) for r in rects]
    xs = [float(r.get("x")) for r in rects]
    assert ys[0] == max(ys) and xs[0] == min(xs)
    assert ys[-1] == min(ys) and xs[-1] == max(xs)


def _radii(root):
    circles = by_class(root, "circle", "rule")
    return {int(c.get("id").split("-")[1]): float(c.get("r")) for c in circles}


def test_rule_graph_eleven_rules():
    rs = high_dpm_rules()
    root = parse(render.render_rule_graph(rs, title="DpM=high"))
    radii = _radii(root)
    assert len(radii) == 11
    lifts = [r.lift for r in rs]
    best = max(range(11), key=lambda k: lifts[k])
    assert radii[best] == max(radii.values())
    order = sorted(range(11), key=lambda k: lifts[k])
    assert all(radii[a] <= radii[b] for a, b in zip(order, order[1:]))
    consequents = by_class(root, "circle", "consequent")
    assert len(consequents) == 1


def test_rule_graph_empty_and_ties():
    root = parse(render.render_rule_graph([]))
    assert by_class(root, "circle", "rule") == []
    y = rules.Item("Y", "y")
    a, b = rules.Item("A", "1"), rules.Item("B", "1")
    same = [rules.ClassRule((0,), 2, 5, 5, 10, 20, (a,), y), rules.ClassRule((1,), 2, 5, 5, 10, 20, (b,), y)]
    radii = _radii(parse(render.render_rule_graph(same)))
    assert radii[0] == radii[1]


def test_rule_fill_tracks_confidence():
    y = rules.Item("Y", "y")
    rs = [rules.ClassRule((i,), 9, 5 + i, 10, 10, 20, (rules.Item(f"A{i}", "1"),), y) for i in range(4)]
    fills = [c.get("fill") for c in by_class(parse(render.render_rule_graph(rs)), "circle", "rule")]
    reds = [int(f[3:5], 16) for f in fills]
    assert reds == sorted(reds, reverse=True) and len(set(fills)) == 4


def test_histogram_bars_proportional():
    root = parse(render.render_histogram({"L": 2, "M": 1, "H": 1}))
    bars = by_class(root, "rect", "bar")
    heights = [float(b.get("height")) for b in bars]
    assert len(bars) == 3
    assert heights[0] == pytest.approx(2 * heights[1], abs=0.01) and heights[1] == heights[2]
    empty = parse(render.render_histogram({}))
    assert by_class(empty, "rect", "bar") == [] and len(by_class(empty, "line", "axis")) == 2


def test_antecedent_histogram_of_listed_rules():
    hist = rules.antecedent_histogram(high_dpm_rules())
    counts = {it.name(): c for it, c in hist.items()}
    assert list(counts) == sorted(counts)
    assert counts["Smoking.Female=H"] == 7 and counts["Age_1=L"] == 7
    root = parse(render.render_histogram(counts))
    ticks = [t.text for t in by_class(root, "text", "tick")]
    assert ticks == sorted(counts)


def test_text_is_escaped():
    root = parse(render.render_histogram({"a<b & c": 1}, title="x > y"))
    assert by_class(root, "text", "tick")[0].text == "a<b & c"


def test_identical_inputs_give_identical_bytes():
    rs = high_dpm_rules()
    assert render.render_rule_graph(rs) == render.render_rule_graph(list(rs))


def test_figure_name():
    assert render.figure_name("run 1", "plane-covid", "Lung_Disease") == "run-1_plane-covid_Lung-Disease.svg"
