"""Pairwise residual correlation diagnostics.

Spatial kind: one residual sequence per region, indexed by year; a Pearson
correlation per unordered region pair over their common years.  Temporal
kind: one sequence per year, indexed by region.  Pair filters select groups
(same country, distance bands, tag membership, ...) and group summaries
aggregate to mean and quartiles.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .panel import DesignMatrix, PanelDataset, haversine_km
from .regression import FitResult

DEFAULT_MIN_OVERLAP = 10

SKIP_NO_COORDINATES = "no_coordinates"
SKIP_SHORT_OVERLAP = "short_overlap"
SKIP_ZERO_VARIANCE = "zero_variance"


class FilterResult(enum.Enum):
    PASS = "pass"
    REJECT = "reject"
    SKIP_NO_COORDINATES = "skip_no_coordinates"


@dataclass(frozen=True)
class RegionMeta:
    country: str
    centroid: tuple[float, float] | None
    groups: frozenset[str]


PairFilter = Callable[[RegionMeta, RegionMeta], FilterResult]


def all_pairs() -> PairFilter:
    return lambda a, b: FilterResult.PASS


def same_country() -> PairFilter:
    return lambda a, b: FilterResult.PASS if a.country == b.country else FilterResult.REJECT


def different_country() -> PairFilter:
    return lambda a, b: FilterResult.PASS if a.country != b.country else FilterResult.REJECT


def named_country(country_id: str) -> PairFilter:
    def check(a: RegionMeta, b: RegionMeta) -> FilterResult:
        if a.country == country_id and b.country == country_id:
            return FilterResult.PASS
        return FilterResult.REJECT

    return check


def same_group(tag: str) -> PairFilter:
    def check(a: RegionMeta, b: RegionMeta) -> FilterResult:
        return FilterResult.PASS if tag in a.groups and tag in b.groups else FilterResult.REJECT

    return check


def _distance_filter(threshold_km: float, below: bool) -> PairFilter:
    def check(a: RegionMeta, b: RegionMeta) -> FilterResult:
        if a.centroid is None or b.centroid is None:
            return FilterResult.SKIP_NO_COORDINATES
        d = haversine_km(a.centroid, b.centroid)
        ok = d < threshold_km if below else d > threshold_km
        return FilterResult.PASS if ok else FilterResult.REJECT

    return check


def distance_below(threshold_km: float) -> PairFilter:
    return _distance_filter(threshold_km, below=True)


def distance_above(threshold_km: float) -> PairFilter:
    return _distance_filter(threshold_km, below=False)


def all_of(*filters: PairFilter) -> PairFilter:
    """Conjunction; a rejection by any member dominates a coordinate skip."""

    def check(a: RegionMeta, b: RegionMeta) -> FilterResult:
        result = FilterResult.PASS
        for f in filters:
            r = f(a, b)
            if r is FilterResult.REJECT:
                return FilterResult.REJECT
            if r is FilterResult.SKIP_NO_COORDINATES:
                result = r
        return result

    return check


class ResidualPanel:
    """Residuals indexed by (region, year) plus per-region metadata."""

    __slots__ = ("region_meta", "_region_series", "_year_series")

    def __init__(
        self,
        values: Mapping[tuple[str, int], float],
        region_meta: Mapping[str, RegionMeta],
    ):
        if not values:
            raise ValueError("residual panel is empty")
        by_region: dict[str, list[tuple[int, float]]] = {}
        by_year: dict[int, list[tuple[str, float]]] = {}
        for (region, year), v in values.items():
            if region not in region_meta:
                raise ValueError(f"no metadata for region {region!r}")
            by_region.setdefault(region, []).append((year, float(v)))
            by_year.setdefault(year, []).append((region, float(v)))
        self.region_meta = dict(region_meta)
        self._region_series = {
            r: (
                np.array([y for y, _ in sorted(items)], dtype=np.int64),
                np.array([v for _, v in sorted(items)], dtype=float),
            )
            for r, items in by_region.items()
        }
        self._year_series = {
            y: (
                np.array([r for r, _ in sorted(items)]),
                np.array([v for _, v in sorted(items)], dtype=float),
            )
            for y, items in by_year.items()
        }

    @classmethod
    def from_fit(cls, fit: FitResult, design: DesignMatrix, dataset: PanelDataset) -> "ResidualPanel":
        values = {key: float(r) for key, r in zip(design.row_index, fit.residuals)}
        regions = {key[0] for key in design.row_index}
        meta = {
            r: RegionMeta(
                country=dataset.country_of(r),
                centroid=dataset.centroid_of(r),
                groups=dataset.groups_of(r),
            )
            for r in regions
        }
        return cls(values, meta)

    @property
    def regions(self) -> tuple[str, ...]:
        return tuple(sorted(self._region_series))

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(sorted(self._year_series))

    def region_series(self, region: str):
        return self._region_series[region]

    def year_series(self, year: int):
        return self._year_series[year]


@dataclass(frozen=True)
class PairCorrelation:
    a: object
    b: object
    rho: float
    overlap: int


@dataclass
class PairCorrelations:
    pairs: list[PairCorrelation]
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def rhos(self) -> np.ndarray:
        return np.array([p.rho for p in self.pairs], dtype=float)

    @property
    def skipped_total(self) -> int:
        return sum(self.skipped.values())


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    """Pearson correlation; None when either series is degenerate."""
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        return None
    return float(np.clip(float(xc @ yc) / (sx * sy), -1.0, 1.0))


def spatial_pair_correlations(
    panel: ResidualPanel,
    pair_filter: PairFilter | None = None,
    min_overlap: int = DEFAULT_MIN_OVERLAP,
) -> PairCorrelations:
    """Correlations of region residual sequences over their common years.

    Pairs rejected by the filter are excluded silently; pairs the filter
    cannot evaluate (missing centroids) or that are short or degenerate are
    counted under ``skipped``.
    """
    out = PairCorrelations(pairs=[], skipped={})
    regs = panel.regions
    for i, ra in enumerate(regs):
        years_a, vals_a = panel.region_series(ra)
        meta_a = panel.region_meta[ra]
        for rb in regs[i + 1 :]:
            meta_b = panel.region_meta[rb]
            if pair_filter is not None:
                verdict = pair_filter(meta_a, meta_b)
                if verdict is FilterResult.REJECT:
                    continue
                if verdict is FilterResult.SKIP_NO_COORDINATES:
                    out.skipped[SKIP_NO_COORDINATES] = out.skipped.get(SKIP_NO_COORDINATES, 0) + 1
                    continue
            years_b, vals_b = panel.region_series(rb)
            common, ia, ib = np.intersect1d(
                years_a, years_b, assume_unique=True, return_indices=True
            )
            if len(common) < min_overlap:
                out.skipped[SKIP_SHORT_OVERLAP] = out.skipped.get(SKIP_SHORT_OVERLAP, 0) + 1
                continue
            rho = _pearson(vals_a[ia], vals_b[ib])
            if rho is None:
                out.skipped[SKIP_ZERO_VARIANCE] = out.skipped.get(SKIP_ZERO_VARIANCE, 0) + 1
                continue
            out.pairs.append(PairCorrelation(a=ra, b=rb, rho=rho, overlap=len(common)))
    return out


def consecutive_years() -> Callable[[int, int], bool]:
    return lambda a, b: abs(a - b) == 1


def temporal_pair_correlations(
    panel: ResidualPanel,
    pair_filter: Callable[[int, int], bool] | None = None,
    min_overlap: int = DEFAULT_MIN_OVERLAP,
) -> PairCorrelations:
    """Correlations of year residual cross-sections over their common regions."""
    out = PairCorrelations(pairs=[], skipped={})
    years = panel.years
    for i, ya in enumerate(years):
        regions_a, vals_a = panel.year_series(ya)
        for yb in years[i + 1 :]:
            if pair_filter is not None and not pair_filter(ya, yb):
                continue
            regions_b, vals_b = panel.year_series(yb)
            common, ia, ib = np.intersect1d(
                regions_a, regions_b, assume_unique=True, return_indices=True
            )
            if len(common) < min_overlap:
                out.skipped[SKIP_SHORT_OVERLAP] = out.skipped.get(SKIP_SHORT_OVERLAP, 0) + 1
                continue
            rho = _pearson(vals_a[ia], vals_b[ib])
            if rho is None:
                out.skipped[SKIP_ZERO_VARIANCE] = out.skipped.get(SKIP_ZERO_VARIANCE, 0) + 1
                continue
            out.pairs.append(PairCorrelation(a=ya, b=yb, rho=rho, overlap=len(common)))
    return out


@dataclass(frozen=True)
class CorrelationSummary:
    """Mean and quartiles of a group's pair correlations.

    An empty group yields pair_count = 0 and None statistics (an explicit
    "no pairs" result rather than NaN).
    """

    group_label: str
    kind: str
    mean: float | None
    q25: float | None
    q75: float | None
    pair_count: int
    skipped_count: int = 0

    @property
    def is_empty(self) -> bool:
        return self.pair_count == 0


def summarize(
    correlations: Sequence[float] | np.ndarray,
    group_label: str = "",
    kind: str = "spatial",
    skipped_count: int = 0,
) -> CorrelationSummary:
    """Aggregate pair correlations: mean plus quartiles by linear interpolation."""
    rhos = np.asarray(correlations, dtype=float)
    if rhos.size == 0:
        return CorrelationSummary(
            group_label=group_label,
            kind=kind,
            mean=None,
            q25=None,
            q75=None,
            pair_count=0,
            skipped_count=skipped_count,
        )
    q25, q75 = np.quantile(rhos, [0.25, 0.75])
    return CorrelationSummary(
        group_label=group_label,
        kind=kind,
        mean=float(rhos.mean()),
        q25=float(q25),
        q75=float(q75),
        pair_count=int(rhos.size),
        skipped_count=skipped_count,
    )


@dataclass(frozen=True)
class GroupSpec:
    """One summary row: a label, the kind, and the pair filter to apply."""

    label: str
    kind: str  # spatial | temporal
    spatial_filter: PairFilter | None = None
    temporal_filter: Callable[[int, int], bool] | None = None

    def __post_init__(self):
        if self.kind not in ("spatial", "temporal"):
            raise ValueError(f"unknown correlation kind {self.kind!r}")


def correlation_table(
    panel: ResidualPanel,
    groups: Sequence[GroupSpec],
    min_overlap: int = DEFAULT_MIN_OVERLAP,
) -> list[CorrelationSummary]:
    """Group summaries over the panel, one row per group spec."""
    rows = []
    for g in groups:
        if g.kind == "spatial":
            res = spatial_pair_correlations(panel, g.spatial_filter, min_overlap=min_overlap)
        else:
            res = temporal_pair_correlations(panel, g.temporal_filter, min_overlap=min_overlap)
        rows.append(
            summarize(res.rhos, group_label=g.label, kind=g.kind, skipped_count=res.skipped_total)
        )
    return rows
