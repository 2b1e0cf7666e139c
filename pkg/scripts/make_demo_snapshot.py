"""Regenerate the synthetic demo snapshot shipped in carmine/data/.

The values are drawn from a seeded latent-factor model: one "development"
factor drives age structure, physicians, smoking, poverty and COVID outcomes,
so the demo run has real associations to find. No value describes a real
country.

    python scripts/make_demo_snapshot.py [--seed 2021] [--out PATH]
"""

import argparse
import csv
import json
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parents[1] / "src" / "carmine" / "data"
N_COUNTRIES = 162
AGGREGATES = ["Asian countries", "World", "High income"]


def simulate(rng, n):
    dev = rng.normal(0.0, 1.0, n)
    warm = rng.normal(0.0, 1.0, n)
    smoke_f = rng.normal(0.0, 1.0, n)

    def noise(scale):
        return rng.normal(0.0, scale, n)

    age1 = np.clip(27 - 9 * dev + noise(3.0), 11, 50)
    age3 = np.clip(8 + 5.5 * dev + noise(1.8), 1, 28)
    age2 = np.clip(100 - age1 - age3 + noise(0.5), 45, 85)
    sf = np.clip(7 + 6 * dev + 5 * smoke_f + noise(1.5), 0.1, 45)
    cols = {
        "Lung_Disease": np.clip(np.exp(3.0 - 0.3 * dev + noise(0.5)), 1, 200),
        "Hypertension": np.clip(np.exp(2.5 - 0.4 * dev + noise(0.6)), 0.5, 120),
        "Population.Density": np.exp(4.3 + noise(1.2)),
        "Female": 50.2 + 0.6 * dev + noise(1.1),
        "Age_1": age1,
        "Age_2": age2,
        "Age_3": age3,
        "Beds": np.clip(np.exp(0.8 + 0.6 * dev + noise(0.5)), 0.1, 14),
        "Air.Pollution": np.clip(np.exp(3.0 - 0.5 * dev + noise(0.4)), 5, 100),
        "Mortality.rate_AP": np.clip(np.exp(4.3 - 0.8 * dev + noise(0.4)), 7, 330),
        "Poverty.Ratio": np.clip(np.exp(1.0 - 2.0 * dev + noise(0.8)), 0.05, 78),
        "Employment.ratio": np.clip(57 + noise(7.0), 30, 88),
        "Smoking.Male": np.clip(27 + 3 * dev + noise(9.0), 2, 70),
        "Smoking.Female": sf,
        "Diabetes.prevalence": np.clip(7.5 + noise(2.5), 1, 22),
        "Mortality_Diab_CVD": np.clip(19 - 2.5 * dev + noise(3.5), 8, 40),
        "Literacy.Rate": np.clip(88 + 9 * dev + noise(5.0), 20, 100),
        "Phys_rate": np.clip(np.exp(0.3 + 0.95 * dev + noise(0.35)), 0.02, 8),
        "Health.Exped": np.clip(6.2 + 1.6 * dev + noise(1.6), 1, 17),
        "Forest.Area": np.clip(32 + noise(20.0), 0, 95),
        "Handwash": np.clip(70 + 25 * dev + noise(10.0), 2, 100),
        "Obesity": np.clip(17 + 5 * dev + noise(5.0), 2, 45),
        "Avg.Temp": np.clip(17 - 4 * dev + 5 * warm, -5, 30),
    }
    log_dpm = 4.7 + 1.6 * dev + 0.55 * smoke_f + noise(0.5)
    dpm = np.exp(log_dpm)
    cpm = dpm * np.exp(3.9 - 0.2 * dev + noise(0.45))
    tpm = cpm * np.exp(2.3 + 0.25 * dev + noise(0.55))
    cols["DpM"] = dpm
    cols["CpM"] = cpm
    cols["TpM"] = tpm
    return cols


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=2021)
    ap.add_argument("--out", type=Path, default=DATA / "demo_snapshot.csv")
    args = ap.parse_args()

    schema = json.loads((DATA / "schema.json").read_text())
    names = [a["name"] for a in schema if a["role"] != "identifier"]
    rng = np.random.default_rng(args.seed)
    cols = simulate(rng, N_COUNTRIES + len(AGGREGATES))
    ids = [f"C{i:03d}" for i in range(1, N_COUNTRIES + 1)] + AGGREGATES

    table = np.column_stack([cols[n] for n in names])
    text = [[f"{v:.4g}" for v in row] for row in table]
    # sprinkle missing and malformed cells the cleaning stage must handle
    demo_cols = [j for j, n in enumerate(names) if n not in ("DpM", "CpM", "TpM")]
    for i in rng.choice(N_COUNTRIES, 14, replace=False):
        text[i][int(rng.choice(demo_cols))] = ""
    for i in rng.choice(N_COUNTRIES, 3, replace=False):
        text[i][int(rng.choice(demo_cols))] = "n/a"

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Country", *names])
        for rid, row in zip(ids, text):
            w.writerow([rid, *row])
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
