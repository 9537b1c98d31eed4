"""Corpus -> per-paper metric table (the hand-off between metrics and statistics)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from . import content
from .corpus import (
    Corpus,
    build_author_profiles,
    check_window,
    filter_research_articles,
    filter_traceable_history,
    map_discipline_group,
)
from .graphs import build_citation_graph, build_collab_graph, prior_subnetwork
from .innovation import cd_detail, disciplinary_integration, field_normalize
from .team import standardize_sd, team_metrics

logger = logging.getLogger(__name__)

METRIC_ROWS_VERSION = 1
METRIC_COLUMNS = [
    "paper_id", "year", "discipline", "discipline_group", "nsf_funded",
    "team_size", "log_team_size", "cc_count", "sd", "sd_std",
    "freshness", "edge_density", "clustering",
    "cd_raw", "cd_norm", "cd_citers", "cd_no_references",
    "di", "di_known_refs", "di_unknown_refs",
    "title_word_count", "flesch", "promo_pct",
    "career_age", "career_age_sq", "inst_h_index", "inst_h_index_missing", "pub_count", "log_pub_count",
]

# Regression controls; the PSM and mediation defaults derive from them.
BASELINE_CONTROLS = [
    "title_word_count", "flesch", "promo_pct",
    "log_team_size", "freshness", "career_age", "career_age_sq", "inst_h_index", "log_pub_count",
]


@dataclass
class MetricOptions:
    window_years: int = 5
    cd_window: int = 5
    team_size_cap: int = 500
    lexicon: frozenset[str] | None = None
    h_index: Mapping[str, int] = field(default_factory=dict)
    disciplines: tuple[str, ...] | None = None
    nsf_only: bool = False
    year_range: tuple[int, int] | None = None


@dataclass
class MetricRun:
    rows: pd.DataFrame
    counts: dict


def compute_metric_rows(corpus: Corpus, options: MetricOptions | None = None) -> MetricRun:
    """Compute every per-paper metric for the analysis sample.

    Graphs and author profiles use the whole corpus (all article types); the
    analysis sample is research articles with traceable author history, then
    any discipline / NSF / year filters.  ``sd_std`` and ``cd_norm`` are
    standardized over that sample.
    """
    opt = options or MetricOptions()
    check_window(opt.window_years)
    lexicon = opt.lexicon if opt.lexicon is not None else content.default_lexicon()

    profiles = build_author_profiles(corpus, opt.h_index)
    citations = build_citation_graph(corpus.records)
    collab = build_collab_graph(corpus.records, opt.team_size_cap)
    disc_of = {r.paper_id: r.discipline for r in corpus.records}

    research = filter_research_articles(corpus)
    sample = filter_traceable_history(research, profiles, opt.window_years).records
    if opt.disciplines is not None:
        keep = set(opt.disciplines)
        sample = [r for r in sample if r.discipline in keep]
    if opt.nsf_only:
        sample = [r for r in sample if r.nsf_funded]
    if opt.year_range is not None:
        lo, hi = opt.year_range
        sample = [r for r in sample if lo <= r.year <= hi]

    out = []
    for rec in sample:
        prior = prior_subnetwork(collab, rec.author_ids, rec.year, opt.window_years)
        tm = team_metrics(prior)
        cd = cd_detail(rec.paper_id, citations, opt.cd_window)
        ref_discs = [disc_of.get(r) for r in rec.references]
        known = sum(d is not None for d in ref_discs)
        last = rec.last_author
        prof = profiles[last.author_id]
        h = opt.h_index.get(last.institution_id) if last.institution_id is not None else None
        career = prof.career_age(rec.year)
        pubs = prof.count_through(rec.year)
        out.append(
            {
                "paper_id": rec.paper_id,
                "year": rec.year,
                "discipline": rec.discipline,
                "discipline_group": map_discipline_group(rec.discipline) if rec.discipline else None,
                "nsf_funded": rec.nsf_funded,
                "team_size": tm.team_size,
                "log_team_size": math.log(tm.team_size),
                "cc_count": tm.cc_count,
                "sd": tm.sd,
                "freshness": tm.freshness,
                "edge_density": tm.edge_density,
                "clustering": tm.clustering,
                "cd_raw": cd.value,
                "cd_citers": cd.n_citers,
                "cd_no_references": cd.no_references,
                "di": disciplinary_integration(ref_discs),
                "di_known_refs": known,
                "di_unknown_refs": len(ref_discs) - known,
                "title_word_count": content.title_word_count(rec.title),
                "flesch": content.flesch_reading_ease(rec.title),
                "promo_pct": content.promotional_fraction(rec.title, lexicon),
                "career_age": career,
                "career_age_sq": career * career,
                "inst_h_index": h or 0,
                "inst_h_index_missing": h is None,
                "pub_count": pubs,
                "log_pub_count": math.log1p(pubs),
            }
        )
    df = pd.DataFrame(out, columns=[c for c in METRIC_COLUMNS if c not in ("sd_std", "cd_norm")])
    if len(df) >= 2 and df["sd"].std(ddof=1) > 0:
        df["sd_std"] = standardize_sd(df["sd"].to_numpy())
    else:
        df["sd_std"] = np.nan
    keys = list(zip(df["year"], df["discipline"]))
    cd_vals = [None if pd.isna(v) else float(v) for v in df["cd_raw"]]
    norm = field_normalize(cd_vals, [k if k[1] is not None else None for k in keys])
    df["cd_norm"] = [None if k[1] is None else v for k, v in zip(keys, norm)]
    df = df[METRIC_COLUMNS]
    for col in ("edge_density", "clustering", "cd_raw", "cd_norm", "di", "flesch", "sd_std"):
        df[col] = df[col].astype(float)
    counts = {
        "records": len(corpus),
        "rejects": len(corpus.rejects),
        "research_articles": len(research),
        "analysis_sample": len(df),
        "citation_year_anomalies": citations.year_anomalies,
        "dangling_references": len(citations.dangling),
        "hyper_authorship_skipped": len(collab.skipped),
        "h_index_missing": int(df["inst_h_index_missing"].sum()) if len(df) else 0,
        "cd_missing": int(df["cd_raw"].isna().sum()) if len(df) else 0,
        "cd_no_references": int(df["cd_no_references"].sum()) if len(df) else 0,
        "warnings": dict(corpus.warnings),
    }
    return MetricRun(df, counts)


def write_metric_rows(df: pd.DataFrame, path) -> None:
    """CSV with missing values as empty fields and fixed float formatting."""
    df.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


def read_metric_rows(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"paper_id": str, "discipline": str, "discipline_group": str}, keep_default_na=False, na_values=[""])
    for col in ("nsf_funded", "cd_no_references", "inst_h_index_missing"):
        if col in df:
            df[col] = df[col].astype(str).str.lower().eq("true")
    return df


def restandardize(df: pd.DataFrame, column: str = "sd", out: str = "sd_std", mask: Iterable[bool] | None = None) -> pd.DataFrame:
    """Recompute ``out`` as the z-score of ``column`` over the masked rows (others NaN)."""
    df = df.copy()
    m = np.ones(len(df), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    vals = np.full(len(df), np.nan)
    vals[m] = standardize_sd(df.loc[m, column].to_numpy(dtype=float))
    df[out] = vals
    return df
