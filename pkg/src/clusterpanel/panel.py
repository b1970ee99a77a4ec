"""Region-country-year panel data model, design matrices, and cluster assignment.

Datasets are rectangular region x year panels with country membership,
optional centroids, and free-form group tags.  Design matrices are built from
term specifications (first differences, distributed lags, moderator
interactions) plus fixed-effect dummies; every row keeps its (region, year)
provenance so residuals can be traced back to observations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0
DEFAULT_MAX_LAG_CEILING = 10

_MISSING_TOKENS = ("", "NA")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PanelObservation:
    """One region-year observation.

    ``outcome`` and predictor values use NaN for explicitly missing cells.
    ``custom`` holds free string columns usable as custom cluster keys.
    """

    region_id: str
    country_id: str
    year: int
    outcome: float
    predictors: Mapping[str, float]
    centroid: tuple[float, float] | None = None
    groups: frozenset[str] = frozenset()
    custom: Mapping[str, str] = field(default_factory=dict)


class PanelDataset:
    """Validated, canonically ordered collection of panel observations.

    Observations are sorted by (region_id, year).  Construction enforces:
    unique (region, year) keys, a single country per region, consistent
    centroids per region, and a uniform predictor-name set (missing values
    are stored as NaN, never absent).
    """

    __slots__ = (
        "observations",
        "predictor_names",
        "custom_names",
        "_by_region",
        "_region_country",
        "_region_centroid",
        "_region_groups",
    )

    def __init__(
        self,
        observations: Iterable[PanelObservation],
        predictor_names: Sequence[str] | None = None,
    ):
        obs = sorted(observations, key=lambda o: (o.region_id, o.year))
        if not obs:
            raise ValueError("dataset needs at least one observation")
        if predictor_names is None:
            names: set[str] = set()
            for o in obs:
                names.update(o.predictors)
            predictor_names = sorted(names)
        self.predictor_names = tuple(predictor_names)
        custom_names: set[str] = set()
        for o in obs:
            custom_names.update(o.custom)
        self.custom_names = tuple(sorted(custom_names))

        normalized = []
        seen: set[tuple[str, int]] = set()
        region_country: dict[str, str] = {}
        region_centroid: dict[str, tuple[float, float] | None] = {}
        region_groups: dict[str, frozenset[str]] = {}
        for o in obs:
            key = (o.region_id, o.year)
            if key in seen:
                raise ValueError(f"duplicate (region, year) observation: {key}")
            seen.add(key)
            prev_country = region_country.get(o.region_id)
            if prev_country is not None and prev_country != o.country_id:
                raise ValueError(
                    f"region {o.region_id!r} maps to multiple countries: "
                    f"{prev_country!r} and {o.country_id!r}"
                )
            region_country[o.region_id] = o.country_id
            if o.region_id in region_centroid:
                if region_centroid[o.region_id] != o.centroid:
                    raise ValueError(
                        f"region {o.region_id!r} carries inconsistent centroids"
                    )
            else:
                region_centroid[o.region_id] = o.centroid
            region_groups.setdefault(o.region_id, o.groups)
            if region_groups[o.region_id] != o.groups:
                raise ValueError(f"region {o.region_id!r} carries inconsistent group tags")
            preds = {name: float(o.predictors.get(name, math.nan)) for name in self.predictor_names}
            extra = set(o.predictors) - set(self.predictor_names)
            if extra:
                raise ValueError(f"unknown predictor names {sorted(extra)} on region {o.region_id!r}")
            custom = {name: o.custom.get(name, "") for name in self.custom_names}
            normalized.append(replace(o, predictors=preds, custom=custom))

        self.observations: tuple[PanelObservation, ...] = tuple(normalized)
        self._region_country = region_country
        self._region_centroid = region_centroid
        self._region_groups = region_groups
        by_region: dict[str, dict[int, PanelObservation]] = {}
        for o in self.observations:
            by_region.setdefault(o.region_id, {})[o.year] = o
        self._by_region = by_region

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    @property
    def regions(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_region))

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(sorted({o.year for o in self.observations}))

    def country_of(self, region_id: str) -> str:
        return self._region_country[region_id]

    def centroid_of(self, region_id: str) -> tuple[float, float] | None:
        return self._region_centroid[region_id]

    def groups_of(self, region_id: str) -> frozenset[str]:
        return self._region_groups[region_id]

    def observation(self, region_id: str, year: int) -> PanelObservation | None:
        return self._by_region.get(region_id, {}).get(year)

    def predictor_value(self, region_id: str, year: int, name: str) -> float:
        """Value of a predictor at (region, year); NaN when absent."""
        o = self.observation(region_id, year)
        if o is None:
            return math.nan
        return o.predictors[name]

    def predictor_median(self, name: str) -> float:
        """Median of a predictor over all non-missing cells."""
        vals = [o.predictors[name] for o in self.observations if math.isfinite(o.predictors[name])]
        if not vals:
            raise ValueError(f"predictor {name!r} has no finite values")
        return float(np.median(vals))

    def year_gaps(self) -> dict[str, tuple[int, ...]]:
        """Missing interior years per region (empty tuples omitted).

        Differences and lags align on calendar years, so these are the years
        whose absence makes neighboring derived values missing.
        """
        gaps: dict[str, tuple[int, ...]] = {}
        for region, series in self._by_region.items():
            years = sorted(series)
            missing = tuple(
                y for y in range(years[0], years[-1] + 1) if y not in series
            )
            if missing:
                gaps[region] = missing
        return gaps


@dataclass(frozen=True)
class TermSpec:
    """One regression term: a variable, optionally first-differenced, with a
    distributed lag 0..max_lag and an optional moderator interaction."""

    variable: str
    differenced: bool = True
    moderator: str | None = None
    max_lag: int = 0


@dataclass(frozen=True)
class ModelSpec:
    """Terms plus fixed effects and intercept.  An empty term list is the
    trivial model (intercept/fixed effects only)."""

    terms: tuple[TermSpec, ...] = ()
    fixed_effects: tuple[str, ...] = ()
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        fe = tuple(self.fixed_effects)
        bad = set(fe) - {"region", "year"}
        if bad:
            raise ValueError(f"unknown fixed effects {sorted(bad)}; use 'region' and/or 'year'")
        if len(set(fe)) != len(fe):
            raise ValueError("duplicate fixed effect")
        # canonical order: region before year
        object.__setattr__(
            self, "fixed_effects", tuple(e for e in ("region", "year") if e in fe)
        )


def term_label(term: TermSpec) -> str:
    """Canonical short label: 'd.<var>' for differenced variables, else '<var>'."""
    return f"d.{term.variable}" if term.differenced else term.variable


_SCHEME_KINDS = ("region", "region_year", "country", "country_year", "year", "custom")


@dataclass(frozen=True)
class ClusterScheme:
    """A rule partitioning design rows into clusters."""

    kind: str
    column: str | None = None

    def __post_init__(self):
        if self.kind not in _SCHEME_KINDS:
            raise ValueError(f"unknown cluster scheme {self.kind!r}; use one of {_SCHEME_KINDS}")
        if self.kind == "custom" and not self.column:
            raise ValueError("custom cluster scheme needs a column name")
        if self.kind != "custom" and self.column is not None:
            raise ValueError("column only applies to the custom scheme")

    @property
    def label(self) -> str:
        return f"custom:{self.column}" if self.kind == "custom" else self.kind

    @classmethod
    def parse(cls, text: str) -> "ClusterScheme":
        if text.startswith("custom:"):
            return cls("custom", text.split(":", 1)[1])
        return cls(text)


REGION = ClusterScheme("region")
REGION_YEAR = ClusterScheme("region_year")
COUNTRY = ClusterScheme("country")
COUNTRY_YEAR = ClusterScheme("country_year")
YEAR = ClusterScheme("year")


@dataclass(frozen=True)
class ColumnLabel:
    """Provenance of one design column."""

    kind: str  # intercept | base | interaction | dummy
    term: str | None = None
    lag: int | None = None
    moderator: str | None = None
    effect: str | None = None
    level: str | None = None

    @property
    def name(self) -> str:
        if self.kind == "intercept":
            return "intercept"
        if self.kind == "base":
            return f"{self.term}.l{self.lag}"
        if self.kind == "interaction":
            return f"{self.term}.l{self.lag}:{self.moderator}"
        return f"{self.effect}={self.level}"


@dataclass(frozen=True)
class DesignMatrix:
    """Built predictor matrix with row provenance.

    Rows requiring unavailable lagged or differenced values are dropped and
    recorded in ``dropped_rows``.  ``fe_levels`` keeps the dummy levels per
    effect, reference level first.
    """

    X: np.ndarray
    y: np.ndarray
    row_index: tuple[tuple[str, int], ...]
    column_labels: tuple[ColumnLabel, ...]
    countries: tuple[str, ...]
    custom: Mapping[str, tuple[str, ...]]
    fixed_effects: tuple[str, ...]
    fe_levels: Mapping[str, tuple]
    dropped_rows: tuple[tuple[str, int], ...]

    def __post_init__(self):
        self.X.setflags(write=False)
        self.y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(lab.name for lab in self.column_labels)

    @property
    def core_column_indices(self) -> tuple[int, ...]:
        """Indices of non-dummy columns (intercept and term columns)."""
        return tuple(j for j, lab in enumerate(self.column_labels) if lab.kind != "dummy")


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of design rows under a scheme; keys sorted canonically."""

    scheme: ClusterScheme
    keys: tuple
    row_cluster: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        self.row_cluster.setflags(write=False)
        self.sizes.setflags(write=False)

    @property
    def n_clusters(self) -> int:
        return len(self.keys)

    @property
    def n_rows(self) -> int:
        return len(self.row_cluster)

    def rows_by_cluster(self) -> list[np.ndarray]:
        order = np.argsort(self.row_cluster, kind="stable")
        bounds = np.searchsorted(self.row_cluster[order], np.arange(self.n_clusters + 1))
        return [order[bounds[g] : bounds[g + 1]] for g in range(self.n_clusters)]


# ---------------------------------------------------------------------------
# CSV input / output
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for CSV ingestion.

    ``predictors`` maps predictor names to CSV columns.  ``groups`` lists
    columns holding semicolon-separated tags.  ``custom`` maps custom key
    names to string columns.  ``outcome`` may be None for files without an
    outcome column (scenario predictor paths).
    """

    region: str
    country: str
    year: str
    outcome: str | None
    predictors: Mapping[str, str]
    lat: str | None = None
    lon: str | None = None
    groups: Sequence[str] = ()
    custom: Mapping[str, str] = field(default_factory=dict)
    delimiter: str = ","

    @classmethod
    def canonical(
        cls,
        predictor_names: Sequence[str],
        with_centroids: bool = False,
        with_groups: bool = False,
        custom_names: Sequence[str] = (),
    ) -> "CsvSchema":
        """Schema matching save_csv's canonical layout."""
        return cls(
            region="region",
            country="country",
            year="year",
            outcome="outcome",
            predictors={name: name for name in predictor_names},
            lat="lat" if with_centroids else None,
            lon="lon" if with_centroids else None,
            groups=("groups",) if with_groups else (),
            custom={name: name for name in custom_names},
        )


def _parse_float(cell: str, row_no: int, column: str) -> float:
    text = cell.strip()
    if text in _MISSING_TOKENS:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"unparseable numeric cell {cell!r} in column {column!r}, row {row_no}") from None


def load_csv(path, schema: CsvSchema) -> PanelDataset:
    """Load a panel from a delimited UTF-8 file with a header row.

    Missing numeric cells (empty or 'NA') become NaN.  Errors report the
    CSV row number (header is row 1).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=schema.delimiter)
        header = reader.fieldnames or []
        needed = [schema.region, schema.country, schema.year]
        if schema.outcome is not None:
            needed.append(schema.outcome)
        needed.extend(schema.predictors.values())
        if schema.lat is not None or schema.lon is not None:
            if schema.lat is None or schema.lon is None:
                raise ValueError("lat and lon must be mapped together")
            needed.extend([schema.lat, schema.lon])
        needed.extend(schema.groups)
        needed.extend(schema.custom.values())
        missing = [c for c in needed if c not in header]
        if missing:
            raise ValueError(f"columns missing from {path}: {missing}")

        observations = []
        for row_no, row in enumerate(reader, start=2):
            year_text = (row[schema.year] or "").strip()
            try:
                year = int(year_text)
            except ValueError:
                raise ValueError(
                    f"unparseable year {year_text!r} in row {row_no}"
                ) from None
            outcome = (
                _parse_float(row[schema.outcome], row_no, schema.outcome)
                if schema.outcome is not None
                else math.nan
            )
            predictors = {
                name: _parse_float(row[col], row_no, col)
                for name, col in schema.predictors.items()
            }
            centroid = None
            if schema.lat is not None:
                lat = _parse_float(row[schema.lat], row_no, schema.lat)
                lon = _parse_float(row[schema.lon], row_no, schema.lon)
                if math.isfinite(lat) != math.isfinite(lon):
                    raise ValueError(f"half-missing centroid in row {row_no}")
                if math.isfinite(lat):
                    _check_coordinates(lat, lon)
                    centroid = (lat, lon)
            tags: set[str] = set()
            for col in schema.groups:
                tags.update(t.strip() for t in (row[col] or "").split(";") if t.strip())
            custom = {name: (row[col] or "").strip() for name, col in schema.custom.items()}
            observations.append(
                PanelObservation(
                    region_id=(row[schema.region] or "").strip(),
                    country_id=(row[schema.country] or "").strip(),
                    year=year,
                    outcome=outcome,
                    predictors=predictors,
                    centroid=centroid,
                    groups=frozenset(tags),
                    custom=custom,
                )
            )
    return PanelDataset(observations, predictor_names=tuple(schema.predictors))


def _fmt(x: float) -> str:
    return "NA" if not math.isfinite(x) else repr(float(x))


def save_csv(dataset: PanelDataset, path, delimiter: str = ",") -> CsvSchema:
    """Write a dataset in the canonical column layout; returns the matching schema.

    Floats are written with full repr precision so save/load round-trips
    bit-identically.
    """
    with_centroids = any(dataset.centroid_of(r) is not None for r in dataset.regions)
    with_groups = any(dataset.groups_of(r) for r in dataset.regions)
    schema = replace(
        CsvSchema.canonical(
            dataset.predictor_names,
            with_centroids=with_centroids,
            with_groups=with_groups,
            custom_names=dataset.custom_names,
        ),
        delimiter=delimiter,
    )
    header = ["region", "country", "year", "outcome", *dataset.predictor_names]
    if with_centroids:
        header += ["lat", "lon"]
    if with_groups:
        header += ["groups"]
    header += list(dataset.custom_names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(header)
        for o in dataset.observations:
            row = [o.region_id, o.country_id, str(o.year), _fmt(o.outcome)]
            row += [_fmt(o.predictors[name]) for name in dataset.predictor_names]
            if with_centroids:
                if o.centroid is None:
                    row += ["NA", "NA"]
                else:
                    row += [_fmt(o.centroid[0]), _fmt(o.centroid[1])]
            if with_groups:
                row += [";".join(sorted(o.groups))]
            row += [o.custom[name] for name in dataset.custom_names]
            writer.writerow(row)
    return schema


# ---------------------------------------------------------------------------
# Design matrix construction
# ---------------------------------------------------------------------------


def _validate_spec(dataset: PanelDataset, spec: ModelSpec, max_lag_ceiling: int) -> None:
    known = set(dataset.predictor_names)
    for term in spec.terms:
        if term.variable not in known:
            raise ValueError(f"unknown predictor {term.variable!r} in term spec")
        if term.moderator is not None and term.moderator not in known:
            raise ValueError(f"unknown moderator {term.moderator!r} in term spec")
        if not 0 <= term.max_lag <= max_lag_ceiling:
            raise ValueError(
                f"max_lag {term.max_lag} outside 0..{max_lag_ceiling} for {term.variable!r}"
            )


def _base_value(dataset: PanelDataset, term: TermSpec, region: str, year: int) -> float:
    """Term base value at (region, year): the raw variable, or its first
    difference against calendar year-1 (gaps make the value missing)."""
    v = dataset.predictor_value(region, year, term.variable)
    if not term.differenced:
        return v
    prev = dataset.predictor_value(region, year - 1, term.variable)
    return v - prev


def fixed_effect_dummies(
    regions: Sequence[str],
    years: Sequence[int],
    effects: Sequence[str],
    levels: Mapping[str, tuple] | None = None,
    restrict_to_present: bool = False,
):
    """Dummy-encode fixed effects with the first level (sort order) as reference.

    With ``levels`` given, encodes against that template: rows whose level is
    not in the template get all-zero dummies for that effect and are counted
    as unseen.  With ``restrict_to_present`` the template is filtered to the
    levels actually present (refit on resampled rows); if the template's
    reference level is absent the effect is re-referenced to the first
    present level and reported in ``re_referenced``.

    Returns (matrix, labels, levels_out, unseen_count, re_referenced).
    """
    n = len(regions)
    columns: list[np.ndarray] = []
    labels: list[ColumnLabel] = []
    levels_out: dict[str, tuple] = {}
    unseen = 0
    re_referenced: list[str] = []
    for effect in effects:
        values = regions if effect == "region" else years
        if levels is None:
            lv = tuple(sorted(set(values)))
        else:
            lv = tuple(levels[effect])
            if restrict_to_present:
                present = set(values)
                kept = [x for x in lv if x in present]
                if not kept:
                    raise ValueError(f"no known {effect} level present in rows")
                if kept[0] != lv[0]:
                    re_referenced.append(effect)
                lv = tuple(sorted(kept)) if kept[0] != lv[0] else tuple(kept)
        levels_out[effect] = lv
        arr = np.asarray(values)
        for x in lv[1:]:
            columns.append((arr == x).astype(float))
            labels.append(ColumnLabel(kind="dummy", effect=effect, level=str(x)))
        if levels is not None and not restrict_to_present:
            known = set(lv)
            unseen += sum(1 for v in values if v not in known)
    matrix = np.column_stack(columns) if columns else np.empty((n, 0))
    return matrix, labels, levels_out, unseen, tuple(re_referenced)


def build_design(
    dataset: PanelDataset,
    spec: ModelSpec,
    *,
    moderator_alignment: str = "contemporaneous",
    max_lag_ceiling: int = DEFAULT_MAX_LAG_CEILING,
    keep_rows: Iterable[tuple[str, int]] | None = None,
    require_outcome: bool = True,
) -> DesignMatrix:
    """Build the design matrix for a model spec.

    Per term, columns are the base value at lags 0..max_lag and, when a
    moderator is given, the base value times the moderator.  The moderator
    enters undifferenced; ``moderator_alignment`` picks its year: the row's
    own year ("contemporaneous", default) or the lagged year ("lag_aligned").
    Rows with any missing required value are dropped and recorded.
    ``keep_rows`` restricts the result to a caller-chosen subset of
    (region, year) keys without recording the exclusions as drops.
    """
    if moderator_alignment not in ("contemporaneous", "lag_aligned"):
        raise ValueError(f"unknown moderator_alignment {moderator_alignment!r}")
    _validate_spec(dataset, spec, max_lag_ceiling)
    keep = None if keep_rows is None else set(keep_rows)

    labels: list[ColumnLabel] = []
    if spec.intercept:
        labels.append(ColumnLabel(kind="intercept"))
    for term in spec.terms:
        lbl = term_label(term)
        for lag in range(term.max_lag + 1):
            labels.append(ColumnLabel(kind="base", term=lbl, lag=lag, moderator=term.moderator))
        if term.moderator is not None:
            for lag in range(term.max_lag + 1):
                labels.append(
                    ColumnLabel(kind="interaction", term=lbl, lag=lag, moderator=term.moderator)
                )

    rows: list[list[float]] = []
    y_vals: list[float] = []
    row_index: list[tuple[str, int]] = []
    countries: list[str] = []
    custom_rows: list[Mapping[str, str]] = []
    dropped: list[tuple[str, int]] = []

    for o in dataset.observations:
        key = (o.region_id, o.year)
        if keep is not None and key not in keep:
            continue
        ok = not (require_outcome and not math.isfinite(o.outcome))
        vec: list[float] = [1.0] if spec.intercept else []
        if ok:
            for term in spec.terms:
                base_vals = []
                for lag in range(term.max_lag + 1):
                    b = _base_value(dataset, term, o.region_id, o.year - lag)
                    if not math.isfinite(b):
                        ok = False
                        break
                    base_vals.append(b)
                if not ok:
                    break
                vec.extend(base_vals)
                if term.moderator is not None:
                    for lag in range(term.max_lag + 1):
                        if moderator_alignment == "contemporaneous":
                            m = o.predictors[term.moderator]
                        else:
                            m = dataset.predictor_value(o.region_id, o.year - lag, term.moderator)
                        if not math.isfinite(m):
                            ok = False
                            break
                        vec.append(base_vals[lag] * m)
                    if not ok:
                        break
        if not ok:
            dropped.append(key)
            continue
        rows.append(vec)
        y_vals.append(o.outcome)
        row_index.append(key)
        countries.append(o.country_id)
        custom_rows.append(o.custom)

    if not rows:
        raise ValueError("empty design after lag trimming")

    X_core = np.asarray(rows, dtype=float)
    if X_core.ndim == 1:
        X_core = X_core.reshape(len(rows), 0)
    y = np.asarray(y_vals, dtype=float)

    fe = spec.fixed_effects
    D, fe_labels, fe_levels, _, _ = fixed_effect_dummies(
        [r for r, _ in row_index], [t for _, t in row_index], fe
    )
    X = np.hstack([X_core, D]) if D.shape[1] else X_core
    labels.extend(fe_labels)

    custom = {
        name: tuple(c[name] for c in custom_rows) for name in dataset.custom_names
    }
    return DesignMatrix(
        X=X,
        y=y,
        row_index=tuple(row_index),
        column_labels=tuple(labels),
        countries=tuple(countries),
        custom=custom,
        fixed_effects=fe,
        fe_levels=fe_levels,
        dropped_rows=tuple(dropped),
    )


def assign_clusters(design: DesignMatrix, scheme: ClusterScheme) -> ClusterAssignment:
    """Partition design rows into clusters under a scheme.

    Deterministic: cluster keys are sorted and indexed canonically.
    """
    if design.n == 0:
        raise ValueError("design is empty")
    if scheme.kind == "region":
        keys = [r for r, _ in design.row_index]
    elif scheme.kind == "region_year":
        keys = list(design.row_index)
    elif scheme.kind == "country":
        keys = list(design.countries)
    elif scheme.kind == "country_year":
        keys = [(c, t) for c, (_, t) in zip(design.countries, design.row_index)]
    elif scheme.kind == "year":
        keys = [t for _, t in design.row_index]
    else:
        if scheme.column not in design.custom:
            raise ValueError(f"custom cluster column {scheme.column!r} not in dataset")
        keys = list(design.custom[scheme.column])
    uniq = sorted(set(keys))
    index = {k: i for i, k in enumerate(uniq)}
    row_cluster = np.fromiter((index[k] for k in keys), dtype=np.intp, count=len(keys))
    sizes = np.bincount(row_cluster, minlength=len(uniq))
    return ClusterAssignment(
        scheme=scheme, keys=tuple(uniq), row_cluster=row_cluster, sizes=sizes
    )


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def _check_coordinates(lat: float, lon: float) -> None:
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"latitude {lat} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise ValueError(f"longitude {lon} outside [-180, 180]")


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in km between (lat, lon) points, R = 6371 km."""
    lat1, lon1 = a
    lat2, lon2 = b
    _check_coordinates(lat1, lon1)
    _check_coordinates(lat2, lon2)
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))
