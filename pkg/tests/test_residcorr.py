import itertools
import math

import numpy as np
import pytest

import clusterpanel.residcorr as rc
from clusterpanel.panel import build_design, haversine_km
from clusterpanel.regression import ols_fit
from clusterpanel.residcorr import (
    FilterResult,
    GroupSpec,
    RegionMeta,
    ResidualPanel,
    correlation_table,
    spatial_pair_correlations,
    summarize,
    temporal_pair_correlations,
)
from clusterpanel.simstudy import SLOPE_SPEC, DgpConfig, generate_panel


def panel_from_matrix(values, countries=None, centroids=None, groups=None, years=None):
    """ResidualPanel from a (region x year) matrix of residuals."""
    R, T = np.shape(values)
    years = years or [2000 + t for t in range(T)]
    data = {}
    meta = {}
    for i in range(R):
        region = f"R{i:03d}"
        meta[region] = RegionMeta(
            country=(countries or {}).get(region, "C0"),
            centroid=(centroids or {}).get(region),
            groups=frozenset((groups or {}).get(region, ())),
        )
        for t in range(T):
            data[(region, years[t])] = float(values[i][t])
    return ResidualPanel(data, meta)


# ---------------------------------------------------------------------------
# Pairwise correlations
# ---------------------------------------------------------------------------


def test_identical_series_correlate_fully(rng):
    base = rng.standard_normal(15)
    panel = panel_from_matrix([base, base, -base])
    res = spatial_pair_correlations(panel)
    by_pair = {(p.a, p.b): p.rho for p in res.pairs}
    assert by_pair[("R000", "R001")] == pytest.approx(1.0)
    assert by_pair[("R000", "R002")] == pytest.approx(-1.0)
    assert all(p.overlap == 15 for p in res.pairs)


def test_planted_common_factor_recovery():
    # residual_r = w * f + sqrt(1 - w^2) * noise gives pairwise rho = w^2;
    # a single 5x30 draw is dominated by the shared-factor realization, so
    # average the panel-level means over seeds
    w = 0.8
    T, R = 30, 5
    means = []
    for seed in range(10):
        gen = np.random.default_rng(seed)
        f = gen.standard_normal(T)
        rows = [w * f + math.sqrt(1 - w**2) * gen.standard_normal(T) for _ in range(R)]
        res = spatial_pair_correlations(panel_from_matrix(rows))
        assert len(res.pairs) == 10
        means.append(float(np.mean(res.rhos)))
    assert float(np.mean(means)) == pytest.approx(w**2, abs=0.1)


def test_minimum_overlap_excludes_and_counts(rng):
    data = {("R0", 2000 + t): float(rng.standard_normal()) for t in range(12)}
    data.update({("R1", 2000 + t): float(rng.standard_normal()) for t in range(5)})
    meta = {r: RegionMeta("C0", None, frozenset()) for r in ("R0", "R1")}
    res = spatial_pair_correlations(ResidualPanel(data, meta), min_overlap=10)
    assert res.pairs == []
    assert res.skipped == {rc.SKIP_SHORT_OVERLAP: 1}


def test_degenerate_series_skipped_not_zero(rng):
    rows = [np.zeros(12), rng.standard_normal(12)]
    res = spatial_pair_correlations(panel_from_matrix(rows))
    assert res.pairs == []
    assert res.skipped == {rc.SKIP_ZERO_VARIANCE: 1}


def test_temporal_identical_cross_sections(rng):
    col = rng.standard_normal(20)
    values = np.column_stack([col, col])
    res = temporal_pair_correlations(panel_from_matrix(values))
    assert len(res.pairs) == 1
    assert res.pairs[0].rho == pytest.approx(1.0)
    assert res.pairs[0].overlap == 20


def test_temporal_null_mean_near_zero(rng):
    values = rng.standard_normal((200, 20))
    res = temporal_pair_correlations(panel_from_matrix(values))
    assert len(res.pairs) == 190
    assert abs(float(np.mean(res.rhos))) < 0.02


def test_consecutive_filter_counts_pairs(rng):
    values = rng.standard_normal((15, 20))
    res = temporal_pair_correlations(panel_from_matrix(values), rc.consecutive_years())
    assert len(res.pairs) == 19


# ---------------------------------------------------------------------------
# Pair filters
# ---------------------------------------------------------------------------


def _meta(country="C0", centroid=None, groups=()):
    return RegionMeta(country=country, centroid=centroid, groups=frozenset(groups))


def test_same_country_filter():
    assert rc.same_country()(_meta("A"), _meta("A")) is FilterResult.PASS
    assert rc.same_country()(_meta("A"), _meta("B")) is FilterResult.REJECT
    assert rc.different_country()(_meta("A"), _meta("B")) is FilterResult.PASS
    assert rc.named_country("A")(_meta("A"), _meta("A")) is FilterResult.PASS
    assert rc.named_country("A")(_meta("A"), _meta("B")) is FilterResult.REJECT
    assert rc.same_group("EU")(_meta(groups=("EU",)), _meta(groups=("EU", "X"))) is FilterResult.PASS
    assert rc.same_group("EU")(_meta(groups=("EU",)), _meta()) is FilterResult.REJECT


def test_distance_filters():
    berlin, paris = (52.52, 13.405), (48.8566, 2.3522)
    far = (0.0, 100.0)
    assert rc.distance_below(1000.0)(_meta(centroid=berlin), _meta(centroid=paris)) is FilterResult.PASS
    assert rc.distance_below(1000.0)(_meta(centroid=berlin), _meta(centroid=far)) is FilterResult.REJECT
    assert rc.distance_above(1000.0)(_meta(centroid=berlin), _meta(centroid=far)) is FilterResult.PASS
    assert (
        rc.distance_below(1000.0)(_meta(centroid=None), _meta(centroid=paris))
        is FilterResult.SKIP_NO_COORDINATES
    )


def test_missing_centroid_counted_as_skip(rng):
    values = rng.standard_normal((3, 12))
    centroids = {"R000": (0.0, 0.0), "R001": (0.0, 1.0)}  # R002 has none
    panel = panel_from_matrix(values, centroids=centroids)
    res = spatial_pair_correlations(panel, rc.distance_below(500.0))
    assert len(res.pairs) == 1
    assert res.skipped == {rc.SKIP_NO_COORDINATES: 2}


def test_conjunction_against_brute_force(rng):
    R = 12
    countries = {f"R{i:03d}": f"C{i % 3}" for i in range(R)}
    centroids = {
        f"R{i:03d}": (float(rng.uniform(-40, 40)), float(rng.uniform(-90, 90))) for i in range(R)
    }
    values = rng.standard_normal((R, 15))
    panel = panel_from_matrix(values, countries=countries, centroids=centroids)
    filt = rc.all_of(rc.different_country(), rc.distance_below(4000.0))
    res = spatial_pair_correlations(panel, filt)
    got = {(p.a, p.b) for p in res.pairs}
    expected = set()
    for a, b in itertools.combinations(sorted(countries), 2):
        if countries[a] != countries[b] and haversine_km(centroids[a], centroids[b]) < 4000.0:
            expected.add((a, b))
    assert got == expected


def test_rejection_dominates_coordinate_skip():
    filt = rc.all_of(rc.same_country(), rc.distance_below(100.0))
    assert filt(_meta("A"), _meta("B")) is FilterResult.REJECT
    assert filt(_meta("A"), _meta("A")) is FilterResult.SKIP_NO_COORDINATES


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


def test_summarize_constant():
    s = summarize([1.0, 1.0, 1.0], "g", "spatial")
    assert (s.mean, s.q25, s.q75, s.pair_count) == (1.0, 1.0, 1.0, 3)


def test_summarize_linear_interpolation():
    s = summarize([-1.0, 0.0, 1.0])
    assert s.mean == 0.0
    assert s.q25 == pytest.approx(-0.5)
    assert s.q75 == pytest.approx(0.5)


def test_summarize_distributional_oracle(rng):
    draws = rng.uniform(-1.0, 1.0, size=10_000)
    s = summarize(draws)
    assert s.mean == pytest.approx(0.0, abs=0.02)
    assert s.q25 == pytest.approx(-0.5, abs=0.03)
    assert s.q75 == pytest.approx(0.5, abs=0.03)


def test_summarize_empty_is_explicit():
    s = summarize([], "empty group")
    assert s.is_empty and s.pair_count == 0
    assert s.mean is None and s.q25 is None and s.q75 is None


def test_permutation_invariance(rng):
    values = rng.standard_normal((8, 14))
    countries = {f"R{i:03d}": f"C{i % 2}" for i in range(8)}
    panel = panel_from_matrix(values, countries=countries)
    perm = rng.permutation(8)
    relabeled = panel_from_matrix(
        values[perm], countries={f"R{i:03d}": countries[f"R{j:03d}"] for i, j in enumerate(perm)}
    )
    groups = [GroupSpec("same", "spatial", spatial_filter=rc.same_country())]
    a = correlation_table(panel, groups)[0]
    b = correlation_table(relabeled, groups)[0]
    assert a.mean == pytest.approx(b.mean)
    assert a.pair_count == b.pair_count


# ---------------------------------------------------------------------------
# Calibration on generated panels
# ---------------------------------------------------------------------------


def _residual_panel(cfg, seed):
    ds = generate_panel(cfg, seed)
    design = build_design(ds, SLOPE_SPEC)
    fit = ols_fit(design)
    return ResidualPanel.from_fit(fit, design, ds)


def test_null_calibration_on_iid_residuals():
    cfg = DgpConfig(n_regions=200, n_years=20, noise_shared_weight=0.0,
                    predictor_shared_weight=0.5, countries=10, with_centroids=False)
    panel = _residual_panel(cfg, 31)
    for kind, filt in (
        ("spatial", None),
        ("spatial", rc.same_country()),
        ("spatial", rc.different_country()),
    ):
        res = spatial_pair_correlations(panel, filt)
        assert abs(float(np.mean(res.rhos))) < 0.02
    res = temporal_pair_correlations(panel)
    assert abs(float(np.mean(res.rhos))) < 0.02


def test_planted_within_country_factor_contrast():
    # within-country-year noise factor with variance share 0.65: same-country
    # region pairs correlate at 0.65, different-country pairs at 0
    cfg = DgpConfig(n_regions=120, n_years=30, countries=12,
                    predictor_shared_weight=0.5, noise_sharing="country_year",
                    noise_shared_weight=0.65, with_centroids=False)
    panel = _residual_panel(cfg, 8)
    same = spatial_pair_correlations(panel, rc.same_country())
    diff = spatial_pair_correlations(panel, rc.different_country())
    assert float(np.mean(same.rhos)) == pytest.approx(0.65, abs=0.05)
    assert float(np.mean(diff.rhos)) == pytest.approx(0.0, abs=0.05)


def test_correlation_table_shapes(rng):
    values = rng.standard_normal((6, 15))
    countries = {f"R{i:03d}": f"C{i % 2}" for i in range(6)}
    panel = panel_from_matrix(values, countries=countries)
    rows = correlation_table(
        panel,
        [
            GroupSpec("all", "spatial"),
            GroupSpec("same country", "spatial", spatial_filter=rc.same_country()),
            GroupSpec("all", "temporal"),
            GroupSpec("consecutive", "temporal", temporal_filter=rc.consecutive_years()),
        ],
        min_overlap=5,
    )
    assert [r.pair_count for r in rows] == [15, 6, 105, 14]
