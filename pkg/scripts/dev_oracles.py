"""Independent dense-formula oracle runs behind the frozen reference values in
tests/test_acceptance.py.  Uses pinv/dense sandwich arithmetic only, none of
the package's own covariance or simulation code.

Run from the repository root:  python3 scripts/dev_oracles.py
"""

import math
import time

import numpy as np
from scipy import stats


def gen(seed_pair, R=10, T=10, beta=1.0, w_region=0.75, w_year=0.15, we=0.9, scale=1.0):
    """Panel draw: predictor with a persistent region component plus a small
    within-year component; noise shared within years."""
    rng = np.random.default_rng(seed_pair)
    u = rng.standard_normal(R)
    g = rng.standard_normal(T) if w_year > 0 else np.zeros(T)
    idio_x = rng.standard_normal((R, T))
    x = (
        math.sqrt(w_region) * u[:, None]
        + math.sqrt(w_year) * g[None, :]
        + math.sqrt(1.0 - w_region - w_year) * idio_x
    )
    v = rng.standard_normal(T)
    idio_e = rng.standard_normal((R, T))
    e = scale * (math.sqrt(we) * v[None, :] + math.sqrt(1.0 - we) * idio_e)
    return x, beta * x + e


def dense_cluster_ci(X, y, groups, level=0.95, correction="CR1"):
    n, p = X.shape
    beta = np.linalg.pinv(X) @ y
    r = y - X @ beta
    bread = np.linalg.inv(X.T @ X)
    keys = sorted(set(groups))
    G = len(keys)
    meat = np.zeros((p, p))
    ga = np.asarray(groups)
    for g in keys:
        m = ga == g
        s = X[m].T @ r[m]
        meat += np.outer(s, s)
    if correction == "CR1" and G > 1:
        meat *= G / (G - 1) * (n - 1) / (n - p)
    cov = bread @ meat @ bread
    q = stats.t.ppf(0.5 + level / 2, G - 1)
    half = q * np.sqrt(np.diag(cov))
    return beta, np.column_stack([beta - half, beta + half])


def coverage_oracle(reps=1000, seed=777, R=10, T=10):
    hits = {"year": 0, "region": 0}
    for rep in range(reps):
        x, y = gen((seed, rep), R=R, T=T)
        X = np.column_stack([np.ones(R * T), x.ravel()])
        yy = y.ravel()
        regions = np.repeat(np.arange(R), T)
        years = np.tile(np.arange(T), R)
        for name, groups in (("year", years), ("region", regions)):
            _, ci = dense_cluster_ci(X, yy, list(groups))
            hits[name] += ci[1, 0] <= 1.0 <= ci[1, 1]
    for name in hits:
        print(f"coverage[{name}] = {hits[name] / reps:.4f}")
    return hits["year"] / reps, hits["region"] / reps


def bias_oracle(reps=4000, seed=555, R=10, T=10):
    betas, variances = [], []
    for rep in range(reps):
        x, y = gen((seed, rep), R=R, T=T, w_region=0.9, w_year=0.0, we=0.0)
        X = np.column_stack([np.ones(R * T), x.ravel()])
        yy = y.ravel()
        years = np.tile(np.arange(T), R)
        beta = np.linalg.pinv(X) @ yy
        r = yy - X @ beta
        bread = np.linalg.inv(X.T @ X)
        meat = np.zeros((2, 2))
        for g in range(T):
            m = years == g
            s = X[m].T @ r[m]
            meat += np.outer(s, s)
        cov = bread @ meat @ bread  # CR0
        betas.append(beta[1])
        variances.append(cov[1, 1])
    ratio = np.mean(variances) / np.var(betas, ddof=1)
    print(f"bias ratio (CR0, year clusters, {reps} reps): {ratio:.4f}")
    return ratio


if __name__ == "__main__":
    t0 = time.perf_counter()
    coverage_oracle()
    bias_oracle()
    print(f"elapsed {time.perf_counter() - t0:.1f}s")
