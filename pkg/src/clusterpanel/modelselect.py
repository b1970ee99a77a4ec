"""Cluster-respecting cross-validation and correlation-adjusted information criteria.

Folds keep whole clusters together.  The adjusted AIC/BIC replace the iid
Gaussian log-likelihood with an equicorrelated block covariance (variance
sigma^2 on the diagonal, covariance rho within a block, blocks independent)
whose log-determinant and quadratic form have closed per-block forms, and
estimate rho by one-dimensional golden-section search with the coefficients
and sigma^2 held at their least squares values.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .panel import (
    ClusterAssignment,
    ClusterScheme,
    ModelSpec,
    PanelDataset,
    TermSpec,
    assign_clusters,
    build_design,
    fixed_effect_dummies,
    term_label,
)
from .regression import FitResult, RankDeficientError, ols_fit

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# Folds and cross-validated loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    K: int
    assignment: dict
    seed: int

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.K
        for f in self.assignment.values():
            sizes[f] += 1
        return sizes


def make_folds(clusters: ClusterAssignment, K: int, seed: int) -> FoldPlan:
    """Shuffle cluster keys with a seeded RNG and deal them round-robin.

    Fold sizes (in clusters) differ by at most one.
    """
    G = clusters.n_clusters
    if K < 2:
        raise ValueError(f"K must be at least 2, got {K}")
    if K > G:
        raise ValueError(f"K={K} exceeds the number of clusters G={G}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(G)
    assignment = {clusters.keys[g]: int(i % K) for i, g in enumerate(order)}
    return FoldPlan(K=K, assignment=assignment, seed=seed)


@dataclass(frozen=True)
class CvResult:
    loss: float
    n_validation: int
    unseen_levels: int
    rank_deficient: bool
    fold_losses: tuple[float, ...]


def _lstsq_fit(X: np.ndarray, y: np.ndarray):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    return beta, int(rank)


def cv_loss(
    dataset: PanelDataset,
    spec: ModelSpec,
    scheme: ClusterScheme,
    K: int,
    seed: int,
    *,
    keep_rows: Iterable[tuple[str, int]] | None = None,
    moderator_alignment: str = "contemporaneous",
    allow_rank_deficient: bool = False,
) -> CvResult:
    """Mean squared validation loss under cluster-respecting K-fold CV.

    Fixed-effect dummies are rebuilt on each training split; validation rows
    with a level unseen in training predict through the reference level and
    are counted in ``unseen_levels``.  Rank-deficient training designs raise
    (naming the fold) unless ``allow_rank_deficient``, in which case the
    minimum-norm solution is used and the result is flagged.
    """
    core_spec = ModelSpec(terms=spec.terms, fixed_effects=(), intercept=spec.intercept)
    core = build_design(
        dataset, core_spec, moderator_alignment=moderator_alignment, keep_rows=keep_rows
    )
    clusters = assign_clusters(core, scheme)
    plan = make_folds(clusters, K, seed)
    fold_by_cluster = np.array([plan.assignment[k] for k in clusters.keys])
    row_folds = fold_by_cluster[clusters.row_cluster]

    regions = np.array([r for r, _ in core.row_index])
    years = np.array([t for _, t in core.row_index])

    sse = 0.0
    n_val_total = 0
    unseen = 0
    rank_flag = False
    fold_losses = []
    for k in range(K):
        va = row_folds == k
        tr = ~va
        if not va.any():
            raise ValueError(f"empty validation fold {k}")
        D_tr, _, levels, _, _ = fixed_effect_dummies(
            list(regions[tr]), list(years[tr]), spec.fixed_effects
        )
        X_tr = np.hstack([core.X[tr], D_tr]) if D_tr.shape[1] else core.X[tr]
        beta, rank = _lstsq_fit(X_tr, core.y[tr])
        if rank < X_tr.shape[1]:
            if not allow_rank_deficient:
                raise ValueError(f"rank-deficient training design in fold {k}")
            rank_flag = True
        D_va, _, _, fold_unseen, _ = fixed_effect_dummies(
            list(regions[va]), list(years[va]), spec.fixed_effects, levels=levels
        )
        X_va = np.hstack([core.X[va], D_va]) if D_va.shape[1] else core.X[va]
        unseen += fold_unseen
        pred = X_va @ beta
        err = core.y[va] - pred
        sse += float(err @ err)
        n_val = int(va.sum())
        n_val_total += n_val
        fold_losses.append(float(err @ err) / n_val)
    return CvResult(
        loss=sse / n_val_total,
        n_validation=n_val_total,
        unseen_levels=unseen,
        rank_deficient=rank_flag,
        fold_losses=tuple(fold_losses),
    )


# ---------------------------------------------------------------------------
# Forward / backward scans
# ---------------------------------------------------------------------------


def term_display(term: TermSpec) -> str:
    lbl = term_label(term)
    return f"{lbl}*{term.moderator}" if term.moderator else lbl


@dataclass(frozen=True)
class ScanEntry:
    term: str
    lag_depth: int | None  # None marks full removal of the term
    loss: float
    delta_loss: float
    collinear: bool


@dataclass(frozen=True)
class ScanResult:
    reference_loss: float
    entries: tuple[ScanEntry, ...]
    rows_used: int


def _common_rows(dataset, spec, moderator_alignment):
    design = build_design(dataset, spec, moderator_alignment=moderator_alignment)
    return design.row_index


def forward_scan(
    dataset: PanelDataset,
    base: ModelSpec,
    candidates: Sequence[TermSpec],
    scheme: ClusterScheme,
    K: int,
    seed: int,
    *,
    moderator_alignment: str = "contemporaneous",
) -> ScanResult:
    """Delta CV loss of adding each candidate term to the base model, at every
    lag depth 0..max_lag.

    All models (base included) are evaluated on the common row set usable
    under the deepest candidate, so deltas are not confounded by lag
    trimming; folds are shared across models for the same reason.
    """
    union = ModelSpec(
        terms=base.terms + tuple(candidates),
        fixed_effects=base.fixed_effects,
        intercept=base.intercept,
    )
    keep = _common_rows(dataset, union, moderator_alignment)
    base_cv = cv_loss(
        dataset, base, scheme, K, seed,
        keep_rows=keep, moderator_alignment=moderator_alignment, allow_rank_deficient=True,
    )
    entries = []
    for cand in candidates:
        for depth in range(cand.max_lag + 1):
            spec = ModelSpec(
                terms=base.terms + (replace(cand, max_lag=depth),),
                fixed_effects=base.fixed_effects,
                intercept=base.intercept,
            )
            cv = cv_loss(
                dataset, spec, scheme, K, seed,
                keep_rows=keep, moderator_alignment=moderator_alignment,
                allow_rank_deficient=True,
            )
            entries.append(
                ScanEntry(
                    term=term_display(cand),
                    lag_depth=depth,
                    loss=cv.loss,
                    delta_loss=cv.loss - base_cv.loss,
                    collinear=cv.rank_deficient,
                )
            )
    return ScanResult(reference_loss=base_cv.loss, entries=tuple(entries), rows_used=len(keep))


def backward_scan(
    dataset: PanelDataset,
    full: ModelSpec,
    scheme: ClusterScheme,
    K: int,
    seed: int,
    *,
    moderator_alignment: str = "contemporaneous",
) -> ScanResult:
    """Delta CV loss of truncating each term of the full model stepwise toward
    removal, plus a final all-terms-removed (trivial) entry.

    Evaluated on the full model's usable rows with shared folds.
    """
    if not full.terms:
        raise ValueError("backward scan needs a model with at least one term")
    keep = _common_rows(dataset, full, moderator_alignment)
    full_cv = cv_loss(
        dataset, full, scheme, K, seed,
        keep_rows=keep, moderator_alignment=moderator_alignment, allow_rank_deficient=True,
    )
    entries = []
    for i, term in enumerate(full.terms):
        others = full.terms[:i] + full.terms[i + 1 :]
        for depth in range(term.max_lag - 1, -1, -1):
            spec = ModelSpec(
                terms=full.terms[:i] + (replace(term, max_lag=depth),) + full.terms[i + 1 :],
                fixed_effects=full.fixed_effects,
                intercept=full.intercept,
            )
            cv = cv_loss(
                dataset, spec, scheme, K, seed,
                keep_rows=keep, moderator_alignment=moderator_alignment,
                allow_rank_deficient=True,
            )
            entries.append(
                ScanEntry(
                    term=term_display(term),
                    lag_depth=depth,
                    loss=cv.loss,
                    delta_loss=cv.loss - full_cv.loss,
                    collinear=cv.rank_deficient,
                )
            )
        spec = ModelSpec(terms=others, fixed_effects=full.fixed_effects, intercept=full.intercept)
        cv = cv_loss(
            dataset, spec, scheme, K, seed,
            keep_rows=keep, moderator_alignment=moderator_alignment, allow_rank_deficient=True,
        )
        entries.append(
            ScanEntry(
                term=term_display(term),
                lag_depth=None,
                loss=cv.loss,
                delta_loss=cv.loss - full_cv.loss,
                collinear=cv.rank_deficient,
            )
        )
    trivial = ModelSpec(terms=(), fixed_effects=full.fixed_effects, intercept=full.intercept)
    cv = cv_loss(
        dataset, trivial, scheme, K, seed,
        keep_rows=keep, moderator_alignment=moderator_alignment, allow_rank_deficient=True,
    )
    entries.append(
        ScanEntry(
            term="(trivial)",
            lag_depth=None,
            loss=cv.loss,
            delta_loss=cv.loss - full_cv.loss,
            collinear=cv.rank_deficient,
        )
    )
    return ScanResult(reference_loss=full_cv.loss, entries=tuple(entries), rows_used=len(keep))


# ---------------------------------------------------------------------------
# Gaussian log-likelihoods
# ---------------------------------------------------------------------------

_LOG_2PI = math.log(2.0 * math.pi)


def loglik_iid(residuals: np.ndarray, sigma2: float | None = None) -> float:
    """Maximized iid Gaussian log-likelihood -(n/2)(log 2pi + log sigma^2 + 1)
    with sigma^2 the mean squared residual.

    A supplied sigma2 is checked for consistency with the residuals.
    """
    r = np.asarray(residuals, dtype=float)
    n = r.size
    if n < 1:
        raise ValueError("need at least one residual")
    s2 = float(r @ r) / n
    if sigma2 is not None:
        if sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        if abs(sigma2 - s2) > 1e-8 * max(abs(s2), 1e-300):
            raise ValueError(f"sigma2={sigma2} inconsistent with mean squared residual {s2}")
    if s2 <= 0.0:
        raise ValueError("zero residual variance; log-likelihood undefined")
    return -0.5 * n * (_LOG_2PI + math.log(s2) + 1.0)


@dataclass(frozen=True)
class EquicorrParams:
    """Equicorrelated block covariance: sigma^2 on the diagonal, rho within a
    block.  a = sigma^2 - rho; every block of size s needs a > 0 and
    1 + s*rho/a > 0 for positive definiteness."""

    sigma2: float
    rho: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.a <= 0:
            raise ValueError(f"rho={self.rho} must be below sigma2={self.sigma2}")

    @property
    def a(self) -> float:
        return self.sigma2 - self.rho

    def check_blocks(self, n_max: int) -> None:
        if 1.0 + n_max * self.rho / self.a <= 0.0:
            raise ValueError(
                f"covariance not positive definite for block size {n_max} "
                f"(sigma2={self.sigma2}, rho={self.rho})"
            )


def loglik_equicorr(
    residuals: np.ndarray, clusters: ClusterAssignment, params: EquicorrParams
) -> float:
    """Gaussian log-likelihood under the equicorrelated block covariance,
    evaluated with per-block closed forms.

    log det Sigma = sum_b [log(1 + s_b rho/a) + s_b log a] and
    r' Sigma^-1 r = sum_b [||r_b||^2/a - (rho/a^2) (1'r_b)^2 / (1 + s_b rho/a)],
    so the cost is linear in n.
    """
    r = np.asarray(residuals, dtype=float)
    n = r.size
    if clusters.n_rows != n:
        raise ValueError("residuals and clusters disagree on the row count")
    sizes = clusters.sizes.astype(float)
    params.check_blocks(int(sizes.max()))
    a = params.a
    rho = params.rho
    block_sums = np.bincount(clusters.row_cluster, weights=r, minlength=clusters.n_clusters)
    block_sqsums = np.bincount(clusters.row_cluster, weights=r * r, minlength=clusters.n_clusters)
    denom = 1.0 + sizes * rho / a
    logdet = float(np.sum(np.log(denom) + sizes * math.log(a)))
    quad = float(np.sum(block_sqsums / a - (rho / a**2) * block_sums**2 / denom))
    return -0.5 * n * _LOG_2PI - 0.5 * logdet - 0.5 * quad


@dataclass(frozen=True)
class RhoFit:
    """Result of the rho-only likelihood maximization.

    ``rho_hat`` is None when every block has size one, where the likelihood
    does not depend on rho at all.
    """

    rho_hat: float | None
    loglik: float
    identified: bool
    at_boundary: bool
    sigma2: float
    n_max: int


def _golden_max(f, lo: float, hi: float, xtol: float):
    a, b = lo, hi
    h = b - a
    c = b - _INVPHI * h
    d = a + _INVPHI * h
    fc, fd = f(c), f(d)
    while h > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            h = b - a
            c = b - _INVPHI * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + _INVPHI * h
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def fit_rho(
    residuals: np.ndarray, clusters: ClusterAssignment, sigma2: float | None = None
) -> RhoFit:
    """Maximize the equicorrelated block log-likelihood over rho alone.

    sigma2 defaults to the mean squared residual (its least squares value).
    The search runs by golden section over the open admissible interval
    (-sigma2/(n_max - 1), sigma2), shrunk by 1e-9 at both ends, to an
    absolute tolerance of 1e-8 * sigma2; proximity to an endpoint is warned.
    """
    r = np.asarray(residuals, dtype=float)
    if sigma2 is None:
        sigma2 = float(r @ r) / r.size
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    n_max = int(clusters.sizes.max())
    if n_max == 1:
        warnings.warn("all blocks have size one; rho is unidentified")
        return RhoFit(
            rho_hat=None,
            loglik=loglik_iid(r),
            identified=False,
            at_boundary=False,
            sigma2=sigma2,
            n_max=1,
        )
    eps = 1e-9
    lo = -sigma2 / (n_max - 1) * (1.0 - eps)
    hi = sigma2 * (1.0 - eps)

    def objective(rho: float) -> float:
        return loglik_equicorr(r, clusters, EquicorrParams(sigma2=sigma2, rho=rho))

    xtol = 1e-8 * sigma2
    rho_hat, ll = _golden_max(objective, lo, hi, xtol)
    ll_zero = objective(0.0)
    if ll_zero >= ll:
        rho_hat, ll = 0.0, ll_zero
    boundary = min(rho_hat - lo, hi - rho_hat) <= 10.0 * xtol
    if boundary:
        warnings.warn(f"rho estimate {rho_hat:.6g} is at the admissible boundary")
    return RhoFit(
        rho_hat=float(rho_hat),
        loglik=float(ll),
        identified=True,
        at_boundary=boundary,
        sigma2=sigma2,
        n_max=n_max,
    )


# ---------------------------------------------------------------------------
# Information criteria
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ICResult:
    criterion: str
    adjusted: bool
    value: float
    k: int
    log_lik: float
    rho_hat: float | None
    sigma2: float


def information_criterion(
    fit: FitResult,
    clusters: ClusterAssignment | None = None,
    criterion: str = "AIC",
    adjusted: bool = False,
    count_variance_params: bool = True,
) -> ICResult:
    """AIC/BIC value gamma(n) * k - 2 * log L, optionally correlation-adjusted.

    Non-adjusted uses the iid log-likelihood; adjusted estimates rho on the
    given blocks and evaluates the equicorrelated likelihood.  k counts the
    regression coefficients plus, by default, sigma^2 (and rho when
    adjusted); ``count_variance_params=False`` counts coefficients only.
    """
    if criterion not in ("AIC", "BIC"):
        raise ValueError(f"unknown criterion {criterion!r}; use 'AIC' or 'BIC'")
    if adjusted and clusters is None:
        raise ValueError("adjusted criteria need a cluster assignment for the blocks")
    n = fit.n
    gamma = 2.0 if criterion == "AIC" else math.log(n)
    r = fit.residuals
    s2 = float(r @ r) / n
    rho_hat: float | None = None
    if adjusted:
        rf = fit_rho(r, clusters, s2)
        rho_hat = rf.rho_hat
        if rho_hat is None or rho_hat == 0.0:
            ll = loglik_iid(r)
        else:
            ll = loglik_equicorr(r, clusters, EquicorrParams(sigma2=s2, rho=rho_hat))
    else:
        ll = loglik_iid(r)
    k = fit.p
    if count_variance_params:
        k += 1
        if adjusted:
            k += 1
    return ICResult(
        criterion=criterion,
        adjusted=adjusted,
        value=gamma * k - 2.0 * ll,
        k=k,
        log_lik=ll,
        rho_hat=rho_hat,
        sigma2=s2,
    )


@dataclass(frozen=True)
class ICScanEntry:
    term: str
    lag_depth: int | None
    criterion: str
    adjusted: bool
    value: float
    delta: float
    rho_hat: float | None
    collinear: bool


@dataclass(frozen=True)
class ICScanResult:
    reference: dict
    entries: tuple[ICScanEntry, ...]
    rows_used: int


def _spec_ic(dataset, spec, block_scheme, criteria, adjusted_flags, keep, moderator_alignment,
             count_variance_params):
    design = build_design(dataset, spec, moderator_alignment=moderator_alignment, keep_rows=keep)
    try:
        fit = ols_fit(design)
    except RankDeficientError:
        return None, None
    clusters = assign_clusters(design, block_scheme)
    out = {}
    for adj in adjusted_flags:
        for crit in criteria:
            out[(crit, adj)] = information_criterion(
                fit, clusters, criterion=crit, adjusted=adj,
                count_variance_params=count_variance_params,
            )
    return fit, out


def ic_scan(
    dataset: PanelDataset,
    base: ModelSpec,
    candidates: Sequence[TermSpec],
    block_scheme: ClusterScheme,
    *,
    direction: str = "forward",
    criteria: Sequence[str] = ("AIC", "BIC"),
    adjusted_flags: Sequence[bool] = (False, True),
    moderator_alignment: str = "contemporaneous",
    count_variance_params: bool = True,
) -> ICScanResult:
    """Information criteria over the same model sequence as the CV scans.

    Forward: base plus each candidate at lag depths 0..max_lag.  Backward:
    ``base`` is the full model; each term is truncated stepwise toward
    removal and a trivial entry is appended.  All models are fitted on the
    common row set; rank-deficient fits are flagged collinear with NaN
    values.  Deltas are against the base (forward) or full (backward) model.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown scan direction {direction!r}")
    if direction == "forward":
        union = ModelSpec(
            terms=base.terms + tuple(candidates),
            fixed_effects=base.fixed_effects,
            intercept=base.intercept,
        )
        variants = [
            (term_display(c), depth,
             ModelSpec(terms=base.terms + (replace(c, max_lag=depth),),
                       fixed_effects=base.fixed_effects, intercept=base.intercept))
            for c in candidates
            for depth in range(c.max_lag + 1)
        ]
    else:
        if not base.terms:
            raise ValueError("backward scan needs a model with at least one term")
        union = base
        variants = []
        for i, term in enumerate(base.terms):
            for depth in range(term.max_lag - 1, -1, -1):
                variants.append(
                    (term_display(term), depth,
                     ModelSpec(terms=base.terms[:i] + (replace(term, max_lag=depth),) + base.terms[i + 1 :],
                               fixed_effects=base.fixed_effects, intercept=base.intercept))
                )
            variants.append(
                (term_display(term), None,
                 ModelSpec(terms=base.terms[:i] + base.terms[i + 1 :],
                           fixed_effects=base.fixed_effects, intercept=base.intercept))
            )
        variants.append(
            ("(trivial)", None,
             ModelSpec(terms=(), fixed_effects=base.fixed_effects, intercept=base.intercept))
        )
    keep = _common_rows(dataset, union, moderator_alignment)
    _, ref = _spec_ic(
        dataset, base, block_scheme, criteria, adjusted_flags, keep,
        moderator_alignment, count_variance_params,
    )
    if ref is None:
        raise RankDeficientError(["<reference model>"])
    entries = []
    for name, depth, spec in variants:
        _, res = _spec_ic(
            dataset, spec, block_scheme, criteria, adjusted_flags, keep,
            moderator_alignment, count_variance_params,
        )
        for adj in adjusted_flags:
            for crit in criteria:
                if res is None:
                    entries.append(
                        ICScanEntry(term=name, lag_depth=depth, criterion=crit, adjusted=adj,
                                    value=math.nan, delta=math.nan, rho_hat=None, collinear=True)
                    )
                else:
                    ic = res[(crit, adj)]
                    entries.append(
                        ICScanEntry(
                            term=name, lag_depth=depth, criterion=crit, adjusted=adj,
                            value=ic.value, delta=ic.value - ref[(crit, adj)].value,
                            rho_hat=ic.rho_hat, collinear=False,
                        )
                    )
    reference = {(crit, adj): ref[(crit, adj)].value for adj in adjusted_flags for crit in criteria}
    return ICScanResult(reference=reference, entries=tuple(entries), rows_used=len(keep))
