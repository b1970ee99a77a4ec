"""Shared builders for the test suite."""

import numpy as np
import pytest

from clusterpanel.panel import (
    ColumnLabel,
    DesignMatrix,
    PanelDataset,
    PanelObservation,
)


def obs(region, country, year, outcome, predictors=None, centroid=None, groups=(), custom=None):
    return PanelObservation(
        region_id=region,
        country_id=country,
        year=year,
        outcome=outcome,
        predictors=predictors or {},
        centroid=centroid,
        groups=frozenset(groups),
        custom=custom or {},
    )


def grid_dataset(values, outcome=None, countries=None, centroids=None, predictor="v"):
    """Rectangular dataset from {region: {year: value}}; outcome defaults to 0."""
    observations = []
    for region, series in values.items():
        country = (countries or {}).get(region, "C0")
        centroid = (centroids or {}).get(region)
        for year, v in series.items():
            y = 0.0 if outcome is None else outcome[region][year]
            observations.append(
                obs(region, country, year, y, {predictor: v}, centroid=centroid)
            )
    return PanelDataset(observations, predictor_names=(predictor,))


def design_from_arrays(X, y, cluster_keys=None, labels=None):
    """DesignMatrix around raw arrays; cluster_keys land in a custom column 'g'."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if labels is None:
        labels = tuple(ColumnLabel(kind="base", term=f"c{j}", lag=0) for j in range(p))
    row_index = tuple((f"R{i:04d}", 2000) for i in range(n))
    custom = {}
    if cluster_keys is not None:
        custom["g"] = tuple(str(k) for k in cluster_keys)
    return DesignMatrix(
        X=X,
        y=y,
        row_index=row_index,
        column_labels=tuple(labels),
        countries=tuple("C0" for _ in range(n)),
        custom=custom,
        fixed_effects=(),
        fe_levels={},
        dropped_rows=(),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
