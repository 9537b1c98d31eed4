"""Regression and test statistics used by the analysis layer.

Everything here works on plain numpy arrays or on a pandas DataFrame of
metric rows.  Distribution functions come from :mod:`scipy.special`; the
estimators themselves are written out so their conventions are explicit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from scipy import special


# -- distributions -----------------------------------------------------------


def t_two_sided_p(t, df):
    """Two-sided p-value of Student's t; normal tail above 1e6 degrees of freedom."""
    t = np.abs(np.asarray(t, dtype=float))
    if df > 1e6:
        return 2.0 * special.ndtr(-t)
    return special.betainc(df / 2.0, 0.5, df / (df + t * t))


def t_quantile(q: float, df: float) -> float:
    if df > 1e6:
        return float(special.ndtri(q))
    return float(special.stdtrit(df, q))


def normal_two_sided_p(z):
    return 2.0 * special.ndtr(-np.abs(z))


# -- design ------------------------------------------------------------------


@dataclass
class ModelSpec:
    """Outcome, predictors, pairwise interactions and fixed-effect keys."""

    outcome: str
    predictors: list[str]
    interactions: list[tuple[str, str]] = field(default_factory=list)
    fixed_effects: list[str] = field(default_factory=list)

    @property
    def variables(self) -> list[str]:
        cols = [self.outcome, *self.predictors]
        for a, b in self.interactions:
            cols += [a, b]
        cols += self.fixed_effects
        return list(dict.fromkeys(cols))

    @classmethod
    def parse(cls, outcome: str, predictors: str, interactions: str = "", fixed_effects: str = "") -> "ModelSpec":
        """Build from comma-separated strings; interactions written ``a:b``."""

        def split(s):
            return [x.strip() for x in s.split(",") if x.strip()]

        inter = []
        for term in split(interactions):
            a, sep, b = term.partition(":")
            if not sep or not a.strip() or not b.strip():
                raise ValueError(f"interaction {term!r} must look like 'a:b'")
            inter.append((a.strip(), b.strip()))
        return cls(outcome.strip(), split(predictors), inter, split(fixed_effects))


@dataclass
class Design:
    X: np.ndarray
    y: np.ndarray
    columns: list[str]
    spec: ModelSpec
    row_index: np.ndarray
    n_dropped: int
    fe_levels: dict[str, int]
    fe_codes: dict[str, np.ndarray]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]


def build_design(rows: pd.DataFrame, spec: ModelSpec, intercept: bool = True) -> Design:
    """Numeric design matrix with interaction products and FE dummies.

    Rows missing any used variable are dropped.  Each FE key contributes one
    dummy per level except the first (sorted) level.
    """
    missing = [c for c in spec.variables if c not in rows.columns]
    if missing:
        raise KeyError(f"columns not found: {', '.join(missing)}")
    terms = list(spec.predictors) + [f"{a}:{b}" for a, b in spec.interactions]
    dupes = sorted({t for t in terms if terms.count(t) > 1})
    if dupes:
        raise ValueError(f"duplicate terms: {', '.join(dupes)}")

    used = rows[spec.variables]
    keep = used.notna().all(axis=1).to_numpy()
    data = used[keep]
    n_dropped = int((~keep).sum())

    cols: list[np.ndarray] = []
    names: list[str] = []
    if intercept:
        cols.append(np.ones(len(data)))
        names.append("Intercept")
    for p in spec.predictors:
        cols.append(data[p].to_numpy(dtype=float))
        names.append(p)
    for a, b in spec.interactions:
        cols.append(data[a].to_numpy(dtype=float) * data[b].to_numpy(dtype=float))
        names.append(f"{a}:{b}")

    fe_levels, fe_codes = {}, {}
    for key in spec.fixed_effects:
        codes, levels = pd.factorize(data[key], sort=True)
        fe_levels[key] = len(levels)
        fe_codes[key] = codes
        counts = np.bincount(codes, minlength=len(levels))
        thin = [str(levels[i]) for i in np.flatnonzero(counts < 2)]
        if thin:
            warnings.warn(f"fixed effect {key!r}: levels with <2 rows: {', '.join(thin[:10])}", stacklevel=2)
        for j in range(1, len(levels)):
            cols.append((codes == j).astype(float))
            names.append(f"{key}[{levels[j]}]")

    X = np.column_stack(cols) if cols else np.empty((len(data), 0))
    # identical columns are reported by name before any solve
    seen: dict[bytes, str] = {}
    same = []
    for j, name in enumerate(names):
        k = np.ascontiguousarray(X[:, j]).tobytes()
        if k in seen:
            same.append(f"{seen[k]} == {name}")
        else:
            seen[k] = name
    if same and len(data) > 0:
        raise ValueError(f"collinear duplicate terms: {'; '.join(same)}")

    return Design(
        X=X,
        y=data[spec.outcome].to_numpy(dtype=float),
        columns=names,
        spec=spec,
        row_index=np.flatnonzero(keep),
        n_dropped=n_dropped,
        fe_levels=fe_levels,
        fe_codes=fe_codes,
    )


# -- OLS ---------------------------------------------------------------------


class RankDeficientError(ValueError):
    def __init__(self, columns: list[str]):
        super().__init__(f"design is rank deficient; dependent columns: {', '.join(columns)}")
        self.columns = columns


@dataclass
class RegressionResult:
    terms: list[str]
    coef: np.ndarray
    se: np.ndarray
    tstat: np.ndarray
    pvalue: np.ndarray
    cov: np.ndarray
    r2: float
    n: int
    df_resid: int
    se_type: str = "classical"
    fe_levels: dict[str, int] = field(default_factory=dict)
    n_dropped: int = 0
    column_means: dict[str, float] = field(default_factory=dict)
    spec: ModelSpec | None = None

    def __getitem__(self, term: str) -> float:
        return float(self.coef[self.terms.index(term)])

    def stderr(self, term: str) -> float:
        return float(self.se[self.terms.index(term)])

    def p(self, term: str) -> float:
        return float(self.pvalue[self.terms.index(term)])

    def conf_int(self, term: str, level: float = 0.95) -> tuple[float, float]:
        q = t_quantile(0.5 + level / 2, self.df_resid)
        b, s = self[term], self.stderr(term)
        return b - q * s, b + q * s

    def table(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"term": self.terms, "beta": self.coef, "se": self.se, "t": self.tstat, "p": self.pvalue}
        )

    def summary(self) -> dict:
        return {
            "n": self.n,
            "r2": self.r2,
            "df_resid": self.df_resid,
            "se_type": self.se_type,
            "n_dropped": self.n_dropped,
            "fixed_effect_levels": self.fe_levels,
        }


def _qr_solve(X: np.ndarray, y: np.ndarray, names: Sequence[str]):
    n, k = X.shape
    if n <= k:
        raise ValueError(f"need more rows than columns (n={n}, k={k})")
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(n, k) * np.finfo(float).eps * 10 if k else 0.0
    rank = int((diag > tol).sum())
    if rank < k:
        raise RankDeficientError(sorted(names[j] for j in piv[rank:]))
    beta_p = scipy.linalg.solve_triangular(R, Q.T @ y)
    Rinv = scipy.linalg.solve_triangular(R, np.eye(k))
    xtx_inv_p = Rinv @ Rinv.T
    beta = np.empty(k)
    beta[piv] = beta_p
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = xtx_inv_p
    return beta, xtx_inv


def _finish(X, y, beta, xtx_inv, names, df_resid, tss, se_type, **extra) -> RegressionResult:
    resid = y - X @ beta
    rss = float(resid @ resid)
    if se_type == "classical":
        cov = xtx_inv * (rss / df_resid)
    elif se_type == "hc1":
        meat = (X * (resid**2)[:, None]).T @ X
        cov = xtx_inv @ meat @ xtx_inv * (len(y) / df_resid)
    else:
        raise ValueError(f"unknown se_type {se_type!r}")
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = beta / se
    r2 = 1.0 - rss / tss if tss > 0 else float("nan")
    return RegressionResult(
        terms=list(names),
        coef=beta,
        se=se,
        tstat=tstat,
        pvalue=np.asarray(t_two_sided_p(tstat, df_resid)),
        cov=cov,
        r2=float(min(max(r2, 0.0), 1.0)) if math.isfinite(r2) else r2,
        n=len(y),
        df_resid=int(df_resid),
        se_type=se_type,
        **extra,
    )


def ols_fit(design: Design, se_type: str = "classical") -> RegressionResult:
    """Least squares on a :class:`Design` (dummy-encoded fixed effects)."""
    X, y = design.X, design.y
    beta, xtx_inv = _qr_solve(X, y, design.columns)
    n, k = X.shape
    has_const = "Intercept" in design.columns
    tss = float(((y - y.mean()) ** 2).sum()) if has_const else float(y @ y)
    return _finish(
        X, y, beta, xtx_inv, design.columns, n - k, tss, se_type,
        fe_levels=dict(design.fe_levels),
        n_dropped=design.n_dropped,
        column_means=dict(zip(design.columns, X.mean(axis=0))),
        spec=design.spec,
    )


def demean_by_groups(A: np.ndarray, codes: Sequence[np.ndarray], tol: float = 1e-13, max_iter: int = 10_000) -> np.ndarray:
    """Project out group means for one or more FE keys by alternating projections."""
    A = np.array(A, dtype=float, copy=True)
    squeeze = A.ndim == 1
    if squeeze:
        A = A[:, None]
    counts = [np.bincount(c) for c in codes]
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    for _ in range(max_iter):
        delta = 0.0
        for c, cnt in zip(codes, counts):
            means = np.zeros((len(cnt), A.shape[1]))
            np.add.at(means, c, A)
            means /= cnt[:, None]
            A -= means[c]
            delta = max(delta, float(np.abs(means).max(initial=0.0)))
        if len(codes) < 2 or delta < tol * scale:
            break
    return A[:, 0] if squeeze else A


def ols_fit_absorbed(design: Design, se_type: str = "classical") -> RegressionResult:
    """Within-transformed fit that absorbs the design's fixed effects.

    Gives the same slope coefficients as :func:`ols_fit` on the dummy design;
    the intercept and dummy terms are not reported.
    """
    keys = design.spec.fixed_effects
    if not keys:
        raise ValueError("model has no fixed effects to absorb")
    slope_cols = [j for j, c in enumerate(design.columns) if c != "Intercept" and not any(c.startswith(f"{k}[") for k in keys)]
    names = [design.columns[j] for j in slope_cols]
    codes = [design.fe_codes[k] for k in keys]
    Xd = demean_by_groups(design.X[:, slope_cols], codes)
    yd = demean_by_groups(design.y, codes)
    beta, xtx_inv = _qr_solve(Xd, yd, names)
    n = design.n
    absorbed = sum(design.fe_levels.values()) - (len(keys) - 1)
    df_resid = n - len(names) - absorbed
    tss = float(((design.y - design.y.mean()) ** 2).sum())
    res = _finish(Xd, yd, beta, xtx_inv, names, df_resid, tss, se_type, fe_levels=dict(design.fe_levels), spec=design.spec)
    return res


def fit_model(rows: pd.DataFrame, spec: ModelSpec, se_type: str = "classical") -> RegressionResult:
    return ols_fit(build_design(rows, spec), se_type=se_type)


# -- margins -----------------------------------------------------------------


def marginal_slope(result: RegressionResult, focal: str, moderator: str, level: float) -> float:
    """d yhat / d focal at a moderator value, from the main and interaction terms."""
    slope = result[focal]
    for name in (f"{focal}:{moderator}", f"{moderator}:{focal}"):
        if name in result.terms:
            slope += result[name] * level
    return slope


def predict_margins(
    result: RegressionResult,
    focal: str,
    grid: Sequence[float],
    moderator: str | None = None,
    levels: Sequence[float] = (),
    level: float = 0.95,
) -> pd.DataFrame:
    """Predictions over ``grid`` at each moderator level, other terms at sample means.

    Interaction columns are recomputed from their components' evaluation
    values.  Confidence bands use the delta method with the t quantile.
    """
    if focal not in result.terms:
        raise KeyError(f"{focal!r} is not a term of the fitted model")
    if moderator is not None and moderator not in result.terms:
        raise KeyError(f"{moderator!r} is not a term of the fitted model")
    means = dict(result.column_means)
    base = {t: means.get(t, 0.0) for t in result.terms}
    q = t_quantile(0.5 + level / 2, result.df_resid)
    mods = list(levels) if moderator is not None else [None]
    out = []
    for m in mods:
        for g in grid:
            vals = dict(base)
            vals[focal] = g
            if moderator is not None:
                vals[moderator] = m
            x = np.empty(len(result.terms))
            for j, t in enumerate(result.terms):
                a, sep, b = t.partition(":")
                x[j] = vals[a] * vals[b] if sep else vals[t]
            yhat = float(x @ result.coef)
            se = float(np.sqrt(x @ result.cov @ x))
            out.append({"moderator": m, focal: g, "yhat": yhat, "se": se, "lo": yhat - q * se, "hi": yhat + q * se})
    return pd.DataFrame(out)


# -- rank statistics ---------------------------------------------------------


def average_ranks(x) -> np.ndarray:
    """1-based ranks, ties sharing the mean of their positions."""
    x = np.asarray(x)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    n = len(x)
    starts = np.r_[0, np.flatnonzero(xs[1:] != xs[:-1]) + 1]
    ends = np.r_[starts[1:], n]
    ranks_sorted = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    ranks = np.empty(n)
    ranks[order] = ranks_sorted
    return ranks


def spearman(x, y) -> tuple[float | None, float | None]:
    """Rank correlation with a t-approximation p-value."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    n = len(x)
    if n < 3:
        raise ValueError("spearman needs at least 3 pairs")
    rx, ry = average_ranks(x), average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0:
        return None, None
    rho = float(rx @ ry) / denom
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1 - rho * rho))
    return rho, float(t_two_sided_p(t, n - 2))


def mann_whitney_u(a, b) -> tuple[float, float]:
    """U for sample ``a`` and a two-sided p from the tie-corrected normal approximation.

    The p-value applies a 0.5 continuity correction; it is an approximation
    and not exact for very small samples.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        raise ValueError("both samples need at least one value")
    ranks = average_ranks(np.concatenate([a, b]))
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    n = n1 + n2
    _, counts = np.unique(np.concatenate([a, b]), return_counts=True)
    tie = float((counts**3 - counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return u, 1.0
    z = max(abs(u - n1 * n2 / 2.0) - 0.5, 0.0) / math.sqrt(var)
    return u, float(normal_two_sided_p(z))


def t_test_independent(a, b) -> tuple[float, float | None, float]:
    """Welch's t-test: statistic, two-sided p, Welch-Satterthwaite df."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("both samples need at least two values")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    diff = a.mean() - b.mean()
    if va + vb == 0:
        return (0.0 if diff == 0 else math.copysign(math.inf, diff)), None, float("nan")
    t = diff / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    return float(t), float(t_two_sided_p(t, df)), float(df)


# -- binned fit --------------------------------------------------------------


@dataclass
class BinnedFit:
    x_means: np.ndarray
    y_means: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    r2: float

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bin": np.arange(1, self.n_bins + 1), "x_mean": self.x_means, "y_mean": self.y_means, "n": self.counts})


def binned_means_fit(x, y, n_bins: int) -> BinnedFit:
    """Equal-count bins along ``x``, per-bin means, and a line through the means.

    Tied ``x`` values never straddle a bin edge: a tie run is moved into the
    bin of its first member, so fewer than ``n_bins`` bins may result.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    n = len(x)
    if not 2 <= n_bins <= n:
        raise ValueError(f"need n >= n_bins >= 2 (n={n}, n_bins={n_bins})")
    order = np.argsort(x, kind="mergesort")
    xs, ys = x[order], y[order]
    labels = np.arange(n) * n_bins // n
    first = np.r_[0, np.flatnonzero(xs[1:] != xs[:-1]) + 1]
    run_id = np.cumsum(np.r_[0, (xs[1:] != xs[:-1]).astype(int)])
    labels = labels[first][run_id]
    _, labels = np.unique(labels, return_inverse=True)
    counts = np.bincount(labels)
    xm = np.bincount(labels, xs) / counts
    ym = np.bincount(labels, ys) / counts
    if len(counts) < 2:
        return BinnedFit(xm, ym, counts, float("nan"), float("nan"), float("nan"))
    A = np.column_stack([np.ones_like(xm), xm])
    (b0, b1), *_ = np.linalg.lstsq(A, ym, rcond=None)
    resid = ym - (b0 + b1 * xm)
    tss = float(((ym - ym.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else float("nan")
    return BinnedFit(xm, ym, counts, float(b1), float(b0), r2)


# -- logistic regression -----------------------------------------------------


@dataclass
class LogisticResult:
    coef: np.ndarray
    converged: bool
    n_iter: int

    def predict(self, X) -> np.ndarray:
        return special.expit(np.asarray(X, dtype=float) @ self.coef)


def logistic_fit(X, y, tol: float = 1e-8, max_iter: int = 100) -> LogisticResult:
    """Maximum likelihood logit by iteratively reweighted least squares.

    Stops when the largest coefficient change drops below ``tol``.  Under
    complete separation the iterate diverges; the last iterate is returned
    with ``converged=False`` and a warning.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("outcome must be 0/1")
    if y.min() == y.max():
        raise ValueError("outcome has a single class")
    beta = np.zeros(X.shape[1])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        p = special.expit(eta)
        w = np.clip(p * (1 - p), 1e-12, None)
        z = eta + (y - p) / w
        XtW = X.T * w
        new = np.linalg.solve(XtW @ X, XtW @ z)
        step = float(np.abs(new - beta).max())
        beta = new
        if not np.all(np.isfinite(beta)):
            break
        if step < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"logistic IRLS did not converge in {it} iterations (possible separation)", stacklevel=2)
    return LogisticResult(beta, converged, it)


# -- kernel density ----------------------------------------------------------


def silverman_bandwidth(values) -> float:
    x = np.asarray(values, dtype=float)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * len(x) ** (-0.2)


def gaussian_kde(values, grid, bandwidth: float | None = None) -> np.ndarray:
    """Gaussian kernel density on ``grid`` with Silverman's rule-of-thumb bandwidth."""
    x = np.asarray(values, dtype=float)
    g = np.asarray(grid, dtype=float)
    if len(x) < 2:
        raise ValueError("kde needs at least 2 values")
    h = silverman_bandwidth(x) if bandwidth is None else bandwidth
    if not h > 0:
        raise ValueError("kde input has zero spread")
    out = np.zeros(len(g))
    norm = 1.0 / (len(x) * h * math.sqrt(2 * math.pi))
    for start in range(0, len(g), 256):
        block = g[start : start + 256]
        u = (block[:, None] - x[None, :]) / h
        out[start : start + 256] = np.exp(-0.5 * u * u).sum(axis=1) * norm
    return out
