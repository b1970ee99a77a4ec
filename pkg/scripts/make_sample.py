"""Regenerate the bundled sample dataset, configs, and golden CLI outputs.

Run from the repository root:  python3 scripts/make_sample.py
"""

import math
import shutil
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

import numpy as np  # noqa: E402

from clusterpanel.panel import PanelDataset, save_csv  # noqa: E402
from clusterpanel.simstudy import DgpConfig, generate_panel  # noqa: E402

SEED = 20240901


def build_panel() -> PanelDataset:
    cfg = DgpConfig(
        n_regions=30,
        n_years=18,
        beta_true=0.5,
        countries=5,
        predictor_sharing="country_year",
        predictor_shared_weight=0.6,
        noise_sharing="country_year",
        noise_shared_weight=0.6,
        noise_scale=0.8,
    )
    ds = generate_panel(cfg, SEED)
    xbar = {r: float(np.mean([ds.predictor_value(r, y, "x") for y in ds.years])) for r in ds.regions}
    bloc = {"C00", "C01"}
    observations = []
    for o in ds.observations:
        observations.append(
            replace(
                o,
                predictors={"x": o.predictors["x"], "xbar": xbar[o.region_id]},
                groups=frozenset({"bloc_a"}) if o.country_id in bloc else frozenset(),
                custom={"year_str": str(o.year)},
            )
        )
    return PanelDataset(observations, predictor_names=("x", "xbar"))


def build_scenarios(ds: PanelDataset):
    """Two future predictor paths sharing 2018-2020 history for lag spin-up."""
    xbar = {r: ds.predictor_value(r, ds.years[0], "xbar") for r in ds.regions}

    def scenario(ramp_per_year: float) -> PanelDataset:
        observations = []
        for r in ds.regions:
            for year in range(2018, 2031):
                x = ramp_per_year * max(0, year - 2022)
                observations.append(
                    replace(
                        ds.observations[0],
                        region_id=r,
                        country_id=ds.country_of(r),
                        year=year,
                        outcome=math.nan,
                        predictors={"x": x, "xbar": xbar[r]},
                        centroid=ds.centroid_of(r),
                        groups=ds.groups_of(r),
                        custom={"year_str": str(year)},
                    )
                )
        return PanelDataset(observations, predictor_names=("x", "xbar"))

    return scenario(0.0), scenario(0.4)


CONFIG = """\
seed: 11
out: out

data:
  path: sample/panel.csv
  delimiter: ","
  columns:
    region: region
    country: country
    year: year
    outcome: outcome
    lat: lat
    lon: lon
  predictors:
    x: x
    xbar: xbar
  group_columns: [groups]
  custom_columns:
    year_str: year_str

model:
  intercept: true
  fixed_effects: [region, year]
  moderator_alignment: contemporaneous
  terms:
    - {variable: x, differenced: true, moderator: xbar, max_lag: 2}

fit:
  schemes: [region, country_year]
  correction: CR1
  level: 0.95

corr:
  min_overlap: 10
  groups:
    - {label: all, kind: spatial}
    - {label: same country, kind: spatial, same_country: true}
    - {label: different country, kind: spatial, different_country: true}
    - {label: bloc_a, kind: spatial, group: bloc_a}
    - {label: "<1000km same country", kind: spatial, same_country: true, below_km: 1000}
    - {label: all, kind: temporal}
    - {label: consecutive, kind: temporal, consecutive: true}

cv:
  schemes: [region, country, year]
  k: 4
  direction: forward
  candidates:
    - {variable: x, differenced: true, max_lag: 2}

ic:
  block_scheme: country_year
  direction: forward
  criteria: [AIC, BIC]
  adjusted: [false, true]
  candidates:
    - {variable: x, differenced: true, max_lag: 2}

bootstrap:
  scheme: year
  b: 80
  levels: [0.9]

project:
  scheme: year
  b: 80
  alpha: 0.05
  levels: [0.65, 0.9]
  aggregation: mean
  scenarios:
    - {label: low, path: sample/scenario_low.csv}
    - {label: high, path: sample/scenario_high.csv}

simulate:
  study: coverage
  n_regions: 10
  n_years: 10
  beta_true: 1.0
  predictor_shared_weight: 0.75
  predictor_spatial_weight: 0.15
  noise_shared_weight: 0.9
  reps: 100
  level: 0.95
  schemes: [region, year]
"""


def main():
    sample = ROOT / "sample"
    sample.mkdir(exist_ok=True)
    ds = build_panel()
    save_csv(ds, sample / "panel.csv")
    low, high = build_scenarios(ds)
    save_csv(low, sample / "scenario_low.csv")
    save_csv(high, sample / "scenario_high.csv")
    (sample / "config.yaml").write_text(CONFIG, encoding="utf-8")

    golden = sample / "golden"
    if golden.exists():
        shutil.rmtree(golden)
    for command in ("fit", "corr", "cv", "ic", "bootstrap", "project", "simulate"):
        out = golden / command
        out.mkdir(parents=True)
        res = subprocess.run(
            [sys.executable, "-m", "clusterpanel.cli", command,
             "--config", "sample/config.yaml", "--out", str(out)],
            cwd=ROOT,
            capture_output=True,
            text=True,
        )
        if res.returncode != 0:
            raise SystemExit(f"{command} failed:\n{res.stdout}\n{res.stderr}")
        print(f"{command}: {res.stdout.strip()}")
    print(f"sample data and golden outputs written under {sample}")


if __name__ == "__main__":
    main()
