import json

import numpy as np
import pytest
import yaml

from clusterpanel.panel import REGION, ColumnLabel
from clusterpanel.regression import CovarianceEstimate, FitResult
from clusterpanel.reports import (
    coefficient_table,
    fmt,
    load_config,
    write_csv,
    write_json,
    write_manifest,
)


def test_fmt_edge_cases():
    assert fmt(None) == "NA"
    assert fmt(float("nan")) == "NA"
    assert fmt(float("inf")) == "NA"
    assert fmt(True) == "true" and fmt(False) == "false"
    assert fmt(0.1) == "0.1"
    assert fmt(np.float64(0.25)) == "0.25"
    assert fmt(np.int64(7)) == "7"
    assert fmt("year=2001") == "year=2001"


def test_write_csv_is_deterministic(tmp_path):
    rows = [["a", 1.5, None], ["b", float("nan"), 2]]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(p1, ["k", "x", "y"], rows)
    write_csv(p2, ["k", "x", "y"], rows)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text() == "k,x,y\na,1.5,NA\nb,NA,2\n"


def test_write_json_cleans_non_finite(tmp_path):
    p = tmp_path / "x.json"
    write_json(p, {"a": float("nan"), "b": [1.0, float("inf")], "c": (1, 2)})
    assert json.loads(p.read_text()) == {"a": None, "b": [1.0, None], "c": [1, 2]}


def test_coefficient_table_zero_se_yields_null_t():
    labels = (ColumnLabel(kind="intercept"),)
    fit = FitResult(beta=np.array([2.0]), residuals=np.zeros(5), fitted=np.zeros(5),
                    r_squared=0.0, n=5, p=1, column_labels=labels)
    cov = CovarianceEstimate(cov=np.array([[1.0]]), scheme=REGION, correction="CR0", G=5)
    zero = CovarianceEstimate(cov=np.array([[0.0]]), scheme=REGION, correction="CR0", G=5)
    table = coefficient_table(fit, {"a": cov}, level=0.9)
    assert table["coefficients"][0]["t"]["a"] == pytest.approx(2.0)
    # zero-variance covariance: the interval computation rejects it upstream,
    # so the table builder is only reachable with positive diagonals
    with pytest.raises(ValueError, match="nonpositive"):
        coefficient_table(fit, {"a": zero}, level=0.9)


def test_manifest_round_trip(tmp_path):
    config = {"data": {"path": "panel.csv"}, "seed": 4}
    path = write_manifest(tmp_path, "fit", seed=4, threads=2, config=config)
    loaded, command, seed, threads = load_config(path)
    assert (command, seed, threads) == ("fit", 4, 2)
    assert loaded == config
    # plain configs pass through untouched
    plain = tmp_path / "plain.yaml"
    plain.write_text(yaml.safe_dump(config))
    loaded2, command2, _, _ = load_config(plain)
    assert command2 is None and loaded2 == config


def test_load_config_rejects_non_mapping(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ValueError, match="not a mapping"):
        load_config(p)
