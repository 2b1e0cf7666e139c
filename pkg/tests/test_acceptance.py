"""Acceptance suite: one PASS/FAIL (or WARN/SKIP) line per headline criterion.

Run ``pytest tests/test_acceptance.py -v -s`` to see the verdict lines inline;
they are also echoed in the terminal summary.
"""

import json
import math
import os
import time
import warnings
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from carmine import discretizer as dz
from carmine import render, rules, som, stats, tabular
from carmine.pipeline import RunConfig, bundled, run_pipeline
from oracles import brute_force_frequent, random_class_instance, random_itemsets, random_rule_set

VERDICTS: list[str] = []


def verdict(name: str, ok: bool, detail: str = "", status: str | None = None) -> None:
    line = f"[{status or ('PASS' if ok else 'FAIL')}] {name}: {detail}"
    VERDICTS.append(line)
    print(line)


# -- 1 ------------------------------------------------------------------------------------------


def test_apriori_oracle_equivalence():
    rng = np.random.default_rng(20210601)
    start = time.perf_counter()
    mismatches = 0
    for k in range(200):
        txs, universe = random_itemsets(rng, max_items=15, max_tx=40)
        min_support = (0.1, 0.25, 0.5)[k % 3]
        ts = rules.TransactionSet.from_itemsets(txs)
        got = {frozenset(ts.dictionary.items[i].attribute for i in s): c
               for s, c in rules.apriori_frequent(ts, min_support, 15).items()}
        present = [u for u in universe if any(u in t for t in txs)]
        expect = brute_force_frequent(txs, present, min_support) if present else {}
        mismatches += got != expect
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10.0
    verdict("apriori oracle equivalence", ok, f"200 instances, {mismatches} mismatches, {elapsed:.2f}s (< 10s)")
    assert ok


# -- 2 ------------------------------------------------------------------------------------------


def test_rule_metric_identities():
    worst_conf = worst_lift = 0.0
    n_rules = bad_unit = 0
    for seed in range(50):
        ts = random_class_instance(np.random.default_rng(seed), n_attrs=5, n_rows=60)
        params = rules.MiningParams(min_support=0.03, min_confidence=0.0, min_len=2, max_len=5, consequent="Y")
        for r in rules.generate_cars(ts, params):
            n_rules += 1
            s_x, s_y = r.antecedent_count / r.n, r.consequent_count / r.n
            worst_conf = max(worst_conf, abs(r.confidence * s_x - r.support))
            worst_lift = max(worst_lift, abs(r.lift * s_y - r.confidence))
            independent = r.support_count * r.n == r.antecedent_count * r.consequent_count
            bad_unit += independent != (r.lift == 1.0)
    ok = n_rules > 0 and worst_conf <= 1e-12 and worst_lift <= 1e-12 and bad_unit == 0
    verdict("rule-metric identities", ok,
            f"{n_rules} rules; max |c*s(X)-s(XY)|={worst_conf:.1e}, max |lift*s(Y)-c|={worst_lift:.1e}, "
            f"lift==1 mismatches={bad_unit}")
    assert ok


# -- 3 ------------------------------------------------------------------------------------------


def _chi2_tail_by_quadrature(x, k):
    def pdf(t):
        if t <= 0:
            return 0.0
        return math.exp((k / 2 - 1) * math.log(t) - t / 2 - (k / 2) * math.log(2) - math.lgamma(k / 2))

    return 1.0 - integrate.quad(pdf, 0, x, limit=200)[0]


def test_chi_square_correctness():
    checks = {}
    checks["[[10,10],[10,10]] == 0"] = stats.chi_square(
        stats.ContingencyTable.from_counts([[10, 10], [10, 10]])).statistic == 0.0
    checks["[[20,0],[0,20]] ~ 40"] = abs(
        stats.chi_square(stats.ContingencyTable.from_counts([[20, 0], [0, 20]])).statistic - 40) <= 1e-9
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        a, b, c, d = (int(v) for v in rng.integers(1, 1000, size=4))
        n = a + b + c + d
        closed = n * (a * d - b * c) ** 2 / ((a + b) * (c + d) * (a + c) * (b + d))
        got = stats.chi_square(stats.ContingencyTable.from_counts([[a, b], [c, d]])).statistic
        rel = abs(got - closed) / closed if closed else abs(got)
        worst = max(worst, rel)
    checks["1000 random 2x2 vs closed form"] = worst <= 1e-9
    p = stats.chi_sq_sf(12.592, 6)
    oracle = _chi2_tail_by_quadrature(12.592, 6)
    checks["sf(12.592, 6) = 0.05 +- 1e-3"] = abs(p - 0.05) <= 1e-3 and abs(p - oracle) <= 1e-3
    checks["sf(0, k) = 1 for k in 1..20"] = all(stats.chi_sq_sf(0.0, k) == 1.0 for k in range(1, 21))
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    verdict("chi-square correctness", ok,
            f"2x2 worst rel err {worst:.1e}; sf(12.592,6)={p:.6f} (quad {oracle:.6f})"
            + (f"; failed: {failed}" if failed else ""))
    assert ok


# -- 4 ------------------------------------------------------------------------------------------


def _snapshot_matrix(features):
    table, _ = tabular.load_csv(bundled("demo_snapshot.csv"), tabular.load_schema(bundled("schema.json")))
    table, _ = tabular.drop_invalid_rows(table, tabular.load_blocklist(bundled("blocklist.txt")))
    table, _ = tabular.remove_outliers(table, ["TpM"], 1.5)
    z = tabular.zscore_normalize(table)
    data, _, _ = som.complete_rows(z.table, features)
    return data


def test_som_contracts():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        rows, cols, dim = (int(v) for v in rng.integers(1, 6, size=3))
        g = som.SomGrid(rows, cols, dim, rng.normal(size=(rows * cols, dim)))
        x = rng.normal(size=dim)
        new, step = som.apply_update(g, x, float(rng.uniform(0.01, 1.0)), float(rng.uniform(0.2, 3.0)))
        before = np.linalg.norm(g.codebooks - x, axis=1)
        after = np.linalg.norm(new.codebooks - x, axis=1)
        worst = max(worst, float(np.max(np.abs(after - (1 - step) * before))))
    contraction_ok = worst <= 1e-12

    data = rng.normal(size=(162, 3))
    g = som.init_som(8, 8, 3, 42, data)
    frozen, _ = som.train(g, data, som.TrainingSchedule(epochs=5, eta0=0.0, sigma0=4.0))
    eta0_ok = frozen.codebooks.tobytes() == g.codebooks.tobytes()

    sched = som.TrainingSchedule.default(8, 8, 162, epochs=50)
    outs = {w: som.train(g, data, sched, workers=w) for w in (1, 2, 8)}
    threads_ok = all(outs[w][0].codebooks.tobytes() == outs[1][0].codebooks.tobytes() for w in (2, 8))

    qe_ok = True
    qe_notes = []
    for feats in (["DpM", "CpM", "TpM"], None):
        names = feats or [a.name for a in tabular.load_schema(bundled("schema.json")) if a.role != "identifier"]
        snap = _snapshot_matrix(names)
        grid = som.init_som(8, 8, len(names), 42, snap, names)
        _, qe = som.train(grid, snap, som.TrainingSchedule.default(8, 8, len(snap)))
        qe_ok &= bool(qe[-1] <= qe[0])
        qe_notes.append(f"{len(names)}-d qe {qe[0]:.3f}->{qe[-1]:.3f}")
    ok = contraction_ok and eta0_ok and threads_ok and qe_ok
    verdict("SOM contracts", ok,
            f"contraction worst {worst:.1e}; eta=0 identical={eta0_ok}; 1/2/8 workers identical={threads_ok}; "
            + ", ".join(qe_notes))
    assert ok


# -- 5 ------------------------------------------------------------------------------------------


BUNDLED_BINS = dz.ThresholdConfig.load(bundled("thresholds.json"))


def test_discretization_fidelity():
    failures = []
    for attr, bins in BUNDLED_BINS.items():
        probes = [(c, bins.labels[k]) for k, c in enumerate(bins.cuts)]
        probes += [(np.nextafter(c, np.inf), bins.labels[k + 1]) for k, c in enumerate(bins.cuts)]
        for value, expect in probes:
            got = dz.bin_value(float(value), bins.cuts, bins.labels)
            if got != expect:
                failures.append(f"{attr} {value!r}: {got} != {expect}")
    named = [("Obesity", 8.5, "L"), ("DpM", 600, "high"), ("TpM", 15000, "Minor"), ("Lung_Disease", 5, "L"),
             ("Lung_Disease", 20, "M"), ("Lung_Disease", 40, "H")]
    for attr, value, expect in named:
        got = dz.bin_value(value, BUNDLED_BINS[attr].cuts, BUNDLED_BINS[attr].labels)
        if got != expect:
            failures.append(f"{attr} {value}: {got} != {expect}")

    rng = np.random.default_rng(99)
    configs = list(BUNDLED_BINS.values())
    non_monotone = 0
    for _ in range(10_000):
        bins = configs[int(rng.integers(len(configs)))]
        span = bins.cuts[-1] * 2 + 10
        v = float(rng.uniform(-span * 0.1, span))
        w = v + float(rng.exponential(span / 4))
        order = {lb: i for i, lb in enumerate(bins.labels)}
        non_monotone += order[dz.bin_value(v, bins.cuts, bins.labels)] > order[dz.bin_value(w, bins.cuts, bins.labels)]
    ok = not failures and non_monotone == 0
    verdict("discretization fidelity", ok,
            f"{len(BUNDLED_BINS)} attributes' boundaries checked, {len(failures)} failures; "
            f"10000 monotonicity draws, {non_monotone} violations")
    assert ok, failures[:5]


# -- 6 ------------------------------------------------------------------------------------------


def test_redundancy_pruning():
    rng = np.random.default_rng(5)
    not_idempotent = order_dependent = 0
    for _ in range(100):
        rs = random_rule_set(rng, n_items=7, n_rules=int(rng.integers(5, 40)))
        once = rules.prune_redundant(rs)
        not_idempotent += rules.prune_redundant(once) != once
        shuffled = [rs[i] for i in rng.permutation(len(rs))]
        order_dependent += [r.antecedent for r in rules.prune_redundant(shuffled)] != [r.antecedent for r in once]
    y = rules.Item("Y", "y")
    a, b = rules.Item("A", "1"), rules.Item("B", "1")
    short = rules.ClassRule((0,), 9, 19, 20, 30, 60, (a,), y)
    long_ = rules.ClassRule((0, 1), 9, 19, 20, 30, 60, (a, b), y)
    pair_ok = rules.prune_redundant([long_, short]) == [short] and rules.prune_redundant([short, long_]) == [short]
    ok = not_idempotent == 0 and order_dependent == 0 and pair_ok
    verdict("redundancy pruning", ok,
            f"100 random sets: non-idempotent={not_idempotent}, order-dependent={order_dependent}; "
            f"equal-confidence longer rule dropped={pair_ok}")
    assert ok


# -- 7 ------------------------------------------------------------------------------------------


SNAPSHOT_ENV = "CARMINE_SNAPSHOT"


def test_conditional_snapshot_checks(tmp_path):
    """Reference-study numbers, checked only against the real supplementary dataset.

    Point CARMINE_SNAPSHOT at that CSV (same columns as the bundled schema) to
    enable it. Misses are reported as warnings with a diff, never as failures.
    """
    path = os.environ.get(SNAPSHOT_ENV)
    if not path or not Path(path).is_file():
        verdict("conditional snapshot checks", True, f"supplementary dataset absent (set {SNAPSHOT_ENV})", "SKIP")
        pytest.skip(f"set {SNAPSHOT_ENV} to the supplementary dataset to run these checks")
    cfg = RunConfig(input=Path(path), som={**RunConfig().som, "epochs": 5}, target_classes=["high"])
    run_pipeline(cfg, tmp_path)
    chi = {(e["x"], e["y"]): e["statistic"] for e in json.loads((tmp_path / "chi2.json").read_text())}
    mined = rules.rules_from_json((tmp_path / "rules_DpM-high.json").read_text())
    hist = rules.antecedent_histogram(mined)
    top = max(hist.values(), default=0)
    leaders = sorted(it.name() for it, c in hist.items() if c == top)
    diffs = []
    for pair, target in ((("DpM", "CpM"), 162.19), (("TpM", "CpM"), 69.46)):
        got = chi.get(pair)
        if got is None or abs(got - target) > 0.02 * target:
            diffs.append(f"chi2 {pair}: expected {target} +-2%, got {got}")
    low_lift = [r for r in mined if not r.lift > 3.6]
    if low_lift:
        diffs.append(f"{len(low_lift)} rules with lift <= 3.6 (min {min(r.lift for r in low_lift):.3f})")
    # the reference rule table ties Smoking.Female=H with Age_1=L, so sharing the top spot counts
    if "Smoking.Female=H" not in leaders:
        diffs.append(f"top antecedent item(s) {leaders} (count {top}), expected Smoking.Female=H")
    if diffs:
        warnings.warn("snapshot checks differ from the expected values:\n  " + "\n  ".join(diffs))
        verdict("conditional snapshot checks", True, "; ".join(diffs), "WARN")
    else:
        verdict("conditional snapshot checks", True, f"chi2 {chi[('DpM', 'CpM')]:.2f}/{chi[('TpM', 'CpM')]:.2f}, "
                f"{len(mined)} rules, top item(s) {leaders}")


# -- 8 ------------------------------------------------------------------------------------------


def _rule_radii(svg_text):
    root = ET.fromstring(svg_text.encode())
    return {int(c.get("id").split("-")[1]): float(c.get("r"))
            for c in root.iter(f"{{{render.SVG_NS}}}circle") if c.get("class") == "rule"}


def test_render_validity(tmp_path):
    cfg = RunConfig(som={**RunConfig().som, "epochs": 30})
    a, b = tmp_path / "a", tmp_path / "b"
    run_pipeline(cfg, a)
    run_pipeline(cfg, b)
    svgs = sorted(a.glob("*.svg"))
    malformed = []
    for f in svgs:
        try:
            ET.parse(f)
        except ET.ParseError as exc:
            malformed.append(f"{f.name}: {exc}")
    identical = all((b / f.name).read_bytes() == f.read_bytes() for f in svgs)
    same_set = sorted(p.name for p in b.glob("*.svg")) == [f.name for f in svgs]

    non_monotone = 0
    checked = 0
    for rules_file in sorted(a.glob("rules_*.json")):
        mined = rules.rules_from_json(rules_file.read_text())
        svg = (a / render.figure_name(cfg.run_id, "rulegraph", rules_file.stem[len("rules_"):])).read_text()
        radii = _rule_radii(svg)
        for i, ri in enumerate(mined):
            for j, rj in enumerate(mined):
                if ri.lift < rj.lift:
                    checked += 1
                    non_monotone += not radii[i] < radii[j]
                elif ri.lift == rj.lift:
                    non_monotone += radii[i] != radii[j]
    ok = bool(svgs) and not malformed and identical and same_set and non_monotone == 0
    verdict("render validity", ok,
            f"{len(svgs)} SVGs well-formed={not malformed}; radius/lift pairs checked={checked}, "
            f"violations={non_monotone}; rerun byte-identical={identical and same_set}")
    assert ok, malformed[:3]
