"""Propensity score matching, pre/post comparisons and mediation analysis."""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy import special

from . import stats
from .stats import ModelSpec

# -- bootstrap ---------------------------------------------------------------


def bootstrap_replicates(
    stat: Callable[[np.ndarray], float], n: int, n_bootstrap: int, seed: int, workers: int = 1
) -> np.ndarray:
    """Evaluate ``stat`` on ``n_bootstrap`` resample-count vectors.

    Replicate ``i`` draws from its own generator spawned from ``seed``, so the
    output does not depend on ``workers``.  ``stat`` receives the number of
    times each of the ``n`` units was drawn.
    """
    children = np.random.SeedSequence(seed).spawn(n_bootstrap)

    def one(ss):
        idx = np.random.default_rng(ss).integers(0, n, size=n)
        return stat(np.bincount(idx, minlength=n).astype(float))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.fromiter(pool.map(one, children), dtype=float, count=n_bootstrap)
    return np.fromiter(map(one, children), dtype=float, count=n_bootstrap)


def percentile_ci(reps: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    lo, hi = np.quantile(reps, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def bootstrap_p(reps: np.ndarray) -> float:
    """Two-sided p for a zero effect from the sign balance of the replicates."""
    below = int((reps <= 0).sum())
    above = int((reps >= 0).sum())
    return min(1.0, (1 + 2 * min(below, above)) / (len(reps) + 1))


# -- groups and scores -------------------------------------------------------


def quantile_groups(values: Sequence[float], k: int, ids: Sequence | None = None) -> np.ndarray:
    """Equal-count quantile labels ``1..k``.

    Sorting is by value, then by ``ids`` (or input position), so tied values
    are split deterministically across bin edges.
    """
    x = np.asarray(values, dtype=float)
    n = len(x)
    if k < 1 or n < k:
        raise ValueError(f"need n >= k >= 1 (n={n}, k={k})")
    if np.isnan(x).any():
        raise ValueError("values contain NaN")
    tiebreak = np.arange(n) if ids is None else np.asarray(ids)
    order = np.lexsort((tiebreak, x))
    labels = np.empty(n, dtype=int)
    labels[order] = np.arange(n) * k // n + 1
    return labels


def propensity_scores(X: np.ndarray, treated: np.ndarray) -> tuple[np.ndarray, stats.LogisticResult]:
    """Fitted treatment probabilities from a logit on ``X`` (intercept added)."""
    X = np.asarray(X, dtype=float)
    A = np.column_stack([np.ones(len(X)), X])
    fit = stats.logistic_fit(A, np.asarray(treated, dtype=float))
    return fit.predict(A), fit


def _standardize_columns(X: np.ndarray) -> np.ndarray:
    """Z-score each column; constant columns carry no information and are dropped."""
    sd = X.std(axis=0)
    keep = sd > 0
    return (X[:, keep] - X[:, keep].mean(axis=0)) / sd[keep]


# -- matching ----------------------------------------------------------------


@dataclass
class Matching:
    treated: np.ndarray  # positions into the treated array
    control: np.ndarray  # positions into the control array
    gaps: np.ndarray
    unmatched: np.ndarray


def _next_free(parent: np.ndarray, i: int) -> int:
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


def nn_match(
    treated_scores: Sequence[float],
    control_scores: Sequence[float],
    caliper: float | None = None,
) -> Matching:
    """Greedy 1:1 nearest-neighbour matching without replacement.

    Treated units are processed by descending score (input order on ties);
    each takes the closest unused control, the lower-scored one on an exact
    tie in distance.  ``caliper`` is an absolute bound on the logit-score gap;
    treated units without a control inside it stay unmatched.
    """
    ts = np.asarray(treated_scores, dtype=float)
    cs = np.asarray(control_scores, dtype=float)
    if len(cs) == 0:
        raise ValueError("control pool is empty")
    corder = np.lexsort((np.arange(len(cs)), cs))
    csorted = cs[corder]
    m = len(cs)
    # two skip lists over sorted positions: nearest free at or left / at or right
    left = np.arange(m + 1)  # slot 0 is a sentinel for "none on the left"
    right = np.arange(m + 1)  # slot m is a sentinel for "none on the right"
    tlogit = special.logit(np.clip(ts, 1e-15, 1 - 1e-15))
    clogit = special.logit(np.clip(csorted, 1e-15, 1 - 1e-15))

    t_idx, c_idx, gaps, unmatched = [], [], [], []
    for i in np.lexsort((np.arange(len(ts)), -ts)):
        s = ts[i]
        pos = int(np.searchsorted(csorted, s, side="right"))
        lpos = _next_free(left, pos) - 1  # free position < pos, or -1
        rpos = _next_free(right, pos)  # free position >= pos, or m
        best = -1
        if lpos >= 0:
            best = lpos
        if rpos < m and (best < 0 or csorted[rpos] - s < s - csorted[best]):
            best = rpos
        if best < 0 or (caliper is not None and abs(tlogit[i] - clogit[best]) > caliper):
            unmatched.append(i)
            continue
        left[best + 1] = best
        right[best] = best + 1
        t_idx.append(i)
        c_idx.append(int(corder[best]))
        gaps.append(abs(s - csorted[best]))
    return Matching(np.array(t_idx, dtype=int), np.array(c_idx, dtype=int), np.array(gaps), np.array(unmatched, dtype=int))


def smd(treated, control) -> float | None:
    """(mean_T - mean_C) / sqrt((var_T + var_C) / 2); ``None`` if the pooled sd is 0."""
    t, c = np.asarray(treated, dtype=float), np.asarray(control, dtype=float)
    pooled = math.sqrt((t.var(ddof=1) + c.var(ddof=1)) / 2) if len(t) > 1 and len(c) > 1 else 0.0
    if pooled == 0:
        return None
    return float((t.mean() - c.mean()) / pooled)


def smd_balance(
    treated: pd.DataFrame, control: pd.DataFrame, matching: Matching, covariates: Sequence[str]
) -> pd.DataFrame:
    rows = []
    for cov in covariates:
        before = smd(treated[cov], control[cov])
        after = smd(treated[cov].to_numpy()[matching.treated], control[cov].to_numpy()[matching.control])
        rows.append({"covariate": cov, "smd_before": before, "smd_after": after})
    return pd.DataFrame(rows)


@dataclass
class ATTEstimate:
    att: float
    ci_low: float
    ci_high: float
    p: float
    n_pairs: int


def att_estimate(diffs: Sequence[float], n_bootstrap: int = 1000, seed: int = 0, workers: int = 1) -> ATTEstimate:
    """Mean matched-pair difference with a percentile bootstrap over pairs."""
    d = np.asarray(diffs, dtype=float)
    if len(d) == 0:
        raise ValueError("no matched pairs")
    if len(d) < 30:
        warnings.warn(f"only {len(d)} matched pairs; bootstrap CI may be unreliable", stacklevel=2)
    n = len(d)
    reps = bootstrap_replicates(lambda w: float(w @ d) / n, n, n_bootstrap, seed, workers)
    lo, hi = percentile_ci(reps)
    att = float(d.mean())
    return ATTEstimate(att, min(lo, att), max(hi, att), bootstrap_p(reps), n)


@dataclass
class MatchReport:
    pairs: pd.DataFrame
    balance: pd.DataFrame
    att: ATTEstimate
    n_treated: int
    n_control: int
    n_matched: int
    n_unmatched: int
    converged: bool
    label: str = ""

    @property
    def balanced(self) -> bool:
        after = self.balance["smd_after"].dropna()
        return bool((after.abs() < 0.1).all())

    def summary(self) -> dict:
        return {
            "label": self.label,
            "att": self.att.att,
            "ci": [self.att.ci_low, self.att.ci_high],
            "p": self.att.p,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "n_matched": self.n_matched,
            "n_unmatched": self.n_unmatched,
            "propensity_converged": self.converged,
            "balanced": self.balanced,
            "smd": [
                {k: (None if v is None or (isinstance(v, float) and math.isnan(v)) else v) for k, v in r.items()}
                for r in self.balance.to_dict("records")
            ],
        }


def _covariate_matrix(rows: pd.DataFrame, covariates: Sequence[str], fixed_effects: Sequence[str]) -> np.ndarray:
    cols = [rows[c].to_numpy(dtype=float) for c in covariates]
    for key in fixed_effects:
        codes, levels = pd.factorize(rows[key], sort=True)
        cols += [(codes == j).astype(float) for j in range(1, len(levels))]
    return np.column_stack(cols) if cols else np.empty((len(rows), 0))


def psm(
    treated: pd.DataFrame,
    control: pd.DataFrame,
    outcome: str,
    covariates: Sequence[str],
    fixed_effects: Sequence[str] = (),
    caliper_sd: float | None = None,
    n_bootstrap: int = 1000,
    seed: int = 0,
    workers: int = 1,
    id_column: str = "paper_id",
    label: str = "",
) -> MatchReport:
    """Full matching pipeline for a treated and a control frame."""
    if len(control) == 0:
        raise ValueError("control pool is empty")
    both = pd.concat([treated, control], ignore_index=True)
    X = _standardize_columns(_covariate_matrix(both, covariates, fixed_effects))
    z = np.r_[np.ones(len(treated)), np.zeros(len(control))]
    scores, fit = propensity_scores(X, z)
    ts, cs = scores[: len(treated)], scores[len(treated) :]
    caliper = None
    if caliper_sd is not None:
        caliper = caliper_sd * float(special.logit(np.clip(scores, 1e-15, 1 - 1e-15)).std(ddof=1))
    m = nn_match(ts, cs, caliper)
    if len(m.treated) == 0:
        hint = "" if fit.converged else "; the propensity logit did not converge (covariates separate the groups)"
        raise ValueError(f"no matched pairs{' within the caliper' if caliper is not None else ''}{hint}")
    y_t = treated[outcome].to_numpy(dtype=float)[m.treated]
    y_c = control[outcome].to_numpy(dtype=float)[m.control]
    ids_t = treated[id_column].to_numpy()[m.treated] if id_column in treated else m.treated
    ids_c = control[id_column].to_numpy()[m.control] if id_column in control else m.control
    pairs = pd.DataFrame({"treated_id": ids_t, "control_id": ids_c, "score_gap": m.gaps})
    balance = smd_balance(treated, control, m, covariates)
    att = att_estimate(y_t - y_c, n_bootstrap, seed, workers)
    return MatchReport(pairs, balance, att, len(treated), len(control), len(m.treated), len(m.unmatched), fit.converged, label)


def psm_by_quantile(
    rows: pd.DataFrame,
    exposure: str,
    outcome: str,
    covariates: Sequence[str],
    k: int = 4,
    top: int | None = None,
    bottom: int = 1,
    **kwargs,
) -> MatchReport:
    """Treat quantile ``top`` (default the highest) against quantile ``bottom`` of ``exposure``."""
    ids = rows["paper_id"].to_numpy() if "paper_id" in rows else None
    g = quantile_groups(rows[exposure].to_numpy(dtype=float), k, ids)
    top = k if top is None else top
    kwargs.setdefault("label", f"q{top}_vs_q{bottom}")
    return psm(rows[g == top], rows[g == bottom], outcome, covariates, **kwargs)


def psm_decile_sweep(rows: pd.DataFrame, exposure: str, outcome: str, covariates: Sequence[str], **kwargs) -> list[MatchReport]:
    """Symmetric decile pairs d1 (10 vs 1) through d5 (6 vs 5)."""
    ids = rows["paper_id"].to_numpy() if "paper_id" in rows else None
    g = quantile_groups(rows[exposure].to_numpy(dtype=float), 10, ids)
    out = []
    for d in range(1, 6):
        hi, lo = 11 - d, d
        out.append(psm(rows[g == hi], rows[g == lo], outcome, covariates, label=f"d{d}", **kwargs))
    return out


# -- pre/post ----------------------------------------------------------------


@dataclass
class PrePostReport:
    cc_distribution: pd.DataFrame
    kde: pd.DataFrame
    summary: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True)


def prepost_report(
    rows: pd.DataFrame,
    pre_range: tuple[int, int] = (2010, 2011),
    post_range: tuple[int, int] = (2012, 2013),
    cc: str = "cc_count",
    sd: str = "sd",
    outcome: str = "cd_norm",
    year: str = "year",
    grid_points: int = 200,
) -> PrePostReport:
    """Compare team structure and disruption between two year ranges."""
    periods = {
        "pre": rows[(rows[year] >= pre_range[0]) & (rows[year] <= pre_range[1])],
        "post": rows[(rows[year] >= post_range[0]) & (rows[year] <= post_range[1])],
    }
    for name, part in periods.items():
        if len(part) == 0:
            raise ValueError(f"{name} period is empty")
    pre, post = periods["pre"], periods["post"]

    dist = []
    for name, part in periods.items():
        counts = part[cc].value_counts().sort_index()
        for k, v in counts.items():
            dist.append({"period": name, "cc": int(k), "n": int(v), "pct": 100.0 * v / len(part)})
    dist_df = pd.DataFrame(dist)

    sd_all = pd.concat([pre[sd], post[sd]]).to_numpy(dtype=float)
    lo, hi = float(sd_all.min()), float(sd_all.max())
    pad = 0.1 * (hi - lo or 1.0)
    grid = np.linspace(lo - pad, hi + pad, grid_points)
    kde = pd.DataFrame({"sd": grid})
    for name, part in periods.items():
        kde[name] = stats.gaussian_kde(part[sd].to_numpy(dtype=float), grid)

    u_cc, p_cc = stats.mann_whitney_u(post[cc], pre[cc])
    u_sd, p_sd = stats.mann_whitney_u(post[sd], pre[sd])
    t_cc, pt_cc, _ = stats.t_test_independent(post[cc], pre[cc])
    y_pre, y_post = pre[outcome].dropna(), post[outcome].dropna()
    t_cd, p_cd, df_cd = stats.t_test_independent(y_post, y_pre)
    summary = {
        "pre_range": list(pre_range),
        "post_range": list(post_range),
        "n_pre": len(pre),
        "n_post": len(post),
        "mean_cc": {"pre": float(pre[cc].mean()), "post": float(post[cc].mean())},
        "mean_sd": {"pre": float(pre[sd].mean()), "post": float(post[sd].mean())},
        "mean_outcome": {"pre": float(y_pre.mean()), "post": float(y_post.mean())},
        "mwu_cc": {"u": u_cc, "p": p_cc},
        "ttest_cc": {"t": t_cc, "p": pt_cc},
        "mwu_sd": {"u": u_sd, "p": p_sd},
        "ttest_outcome": {"t": t_cd, "p": p_cd, "df": df_cd, "outcome": outcome},
    }
    return PrePostReport(dist_df, kde, summary)


# -- mediation ---------------------------------------------------------------


@dataclass
class MediationResult:
    a: float
    b: float
    total: float
    direct: float
    indirect: float
    proportion: float | None
    indirect_ci: tuple[float, float]
    indirect_p: float
    a_p: float
    b_p: float
    total_p: float
    direct_p: float
    n: int
    n_bootstrap: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["indirect_ci"] = list(self.indirect_ci)
        return d


def _wls_coef(X: np.ndarray, y: np.ndarray, w: np.ndarray, j: Sequence[int]) -> np.ndarray:
    Xw = X * w[:, None]
    return np.linalg.solve(Xw.T @ X, Xw.T @ y)[list(j)]


def mediation_analysis(
    rows: pd.DataFrame,
    exposure: str,
    mediator: str,
    outcome: str,
    controls: Sequence[str] = (),
    fixed_effects: Sequence[str] = (),
    n_bootstrap: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> MediationResult:
    """Product-of-coefficients mediation from three nested linear models.

    ``mediator ~ exposure + controls`` gives ``a``; ``outcome ~ exposure +
    mediator + controls`` gives ``b`` and the direct effect; ``outcome ~
    exposure + controls`` gives the total effect.  All three fits use the same
    complete-case rows, so ``total == direct + a * b`` up to rounding.
    """
    spec_y = ModelSpec(outcome, [exposure, mediator, *controls], [], list(fixed_effects))
    design = stats.build_design(rows, spec_y)
    sub = rows.iloc[design.row_index]
    fit_m = stats.ols_fit(stats.build_design(sub, ModelSpec(mediator, [exposure, *controls], [], list(fixed_effects))))
    fit_y = stats.ols_fit(design)
    fit_c = stats.ols_fit(stats.build_design(sub, ModelSpec(outcome, [exposure, *controls], [], list(fixed_effects))))
    a, b = fit_m[exposure], fit_y[mediator]
    direct, total = fit_y[exposure], fit_c[exposure]
    indirect = a * b
    proportion = indirect / total if abs(total) >= 1e-10 else None

    X_y = design.X
    jx, jm = design.columns.index(exposure), design.columns.index(mediator)
    X_m = np.delete(X_y, jm, axis=1)
    jx_m = jx if jx < jm else jx - 1
    m_vals = sub[mediator].to_numpy(dtype=float)
    y_vals = design.y

    def stat(w):
        a_b = _wls_coef(X_m, m_vals, w, [jx_m])[0]
        b_b = _wls_coef(X_y, y_vals, w, [jm])[0]
        return a_b * b_b

    reps = bootstrap_replicates(stat, design.n, n_bootstrap, seed, workers)
    return MediationResult(
        a=a, b=b, total=total, direct=direct, indirect=indirect, proportion=proportion,
        indirect_ci=percentile_ci(reps), indirect_p=bootstrap_p(reps),
        a_p=fit_m.p(exposure), b_p=fit_y.p(mediator), total_p=fit_c.p(exposure), direct_p=fit_y.p(exposure),
        n=design.n, n_bootstrap=n_bootstrap,
    )
