import numpy as np
import pytest

from teamsd.corpus import AuthorRef, Corpus
from teamsd.pipeline import (
    METRIC_COLUMNS,
    MetricOptions,
    compute_metric_rows,
    read_metric_rows,
    restandardize,
    write_metric_rows,
)
from teamsd.synth import SynthConfig, generate_corpus

from conftest import rec


def small_corpus():
    return Corpus([
        rec("h1", 1998, [AuthorRef("A", "I1"), AuthorRef("B")], kind="other"),
        rec("h2", 1999, ["C"], kind="other"),
        rec("h3", 1999, ["D"], kind="other", discipline="Biology"),
        rec("f1", 2000, ["A", "B", "C"], refs=["h2", "h3"], title="A unique team", discipline="Physics"),
        rec("f2", 2000, ["C", "D"], refs=["h2"], discipline="Physics"),
        rec("c1", 2001, ["Z"], refs=["f1"], kind="review"),
    ])


def test_rows_for_small_corpus():
    run = compute_metric_rows(small_corpus(), MetricOptions(h_index={"I1": 12}))
    df = run.rows.set_index("paper_id")
    assert list(run.rows.columns) == METRIC_COLUMNS
    assert list(df.index) == ["f1", "f2"]
    f1 = df.loc["f1"]
    assert (f1["team_size"], f1["cc_count"]) == (3, 2)
    assert f1["sd"] == pytest.approx(2 / 3) and f1["freshness"] == pytest.approx(1 / 3)
    assert f1["cd_raw"] == 1.0 and f1["di"] == 0.5
    assert f1["promo_pct"] == pytest.approx(100 / 3)
    # last author C: h2 (1999), f1 and f2 (2000)
    assert f1["career_age"] == 1 and f1["pub_count"] == 3
    assert df.loc["f2", "cd_raw"] != df.loc["f2", "cd_raw"]  # no citers -> NaN
    assert run.counts["analysis_sample"] == 2 and run.counts["cd_missing"] == 1


def test_inst_h_index_from_last_author():
    corpus = Corpus([
        rec("h", 1999, [AuthorRef("A"), AuthorRef("B", "I9")], kind="other"),
        rec("f", 2000, [AuthorRef("A"), AuthorRef("B", "I9")]),
    ])
    df = compute_metric_rows(corpus, MetricOptions(h_index={"I9": 7})).rows
    assert df["inst_h_index"].tolist() == [7] and not df["inst_h_index_missing"].iloc[0]


def test_csv_round_trip(tmp_path):
    records, _, h = generate_corpus(SynthConfig(seed=3, n_papers=300))
    df = compute_metric_rows(Corpus(records), MetricOptions(h_index=h)).rows
    path = tmp_path / "rows.csv"
    write_metric_rows(df, path)
    back = read_metric_rows(path)
    assert list(back.columns) == METRIC_COLUMNS
    for col in ("sd", "cd_norm", "flesch", "sd_std"):
        assert np.allclose(back[col], df[col], equal_nan=True, rtol=1e-11)
    assert back["nsf_funded"].dtype == bool
    write_metric_rows(back, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_filters_and_restandardize():
    records, _, h = generate_corpus(SynthConfig(seed=4, n_papers=400))
    full = compute_metric_rows(Corpus(records), MetricOptions(h_index=h)).rows
    nsf = compute_metric_rows(Corpus(records), MetricOptions(h_index=h, nsf_only=True)).rows
    years = compute_metric_rows(Corpus(records), MetricOptions(h_index=h, year_range=(2005, 2008))).rows
    assert nsf["nsf_funded"].all() and len(nsf) < len(full)
    assert years["year"].between(2005, 2008).all()
    assert abs(nsf["sd_std"].mean()) < 1e-9
    sub = restandardize(full, mask=full["discipline_group"] == "NaturalSciences")
    m = full["discipline_group"] == "NaturalSciences"
    assert abs(sub.loc[m, "sd_std"].mean()) < 1e-9 and sub.loc[~m, "sd_std"].isna().all()


def test_cd_norm_groups():
    records, _, h = generate_corpus(SynthConfig(seed=5, n_papers=800, disciplines=("Physics", "Biology")))
    df = compute_metric_rows(Corpus(records), MetricOptions(h_index=h)).rows
    for _, g in df.dropna(subset=["cd_norm"]).groupby(["year", "discipline"]):
        if len(g) >= 2:
            assert abs(g["cd_norm"].mean()) < 1e-9
            assert g["cd_norm"].std(ddof=1) == pytest.approx(1.0, abs=1e-9)
