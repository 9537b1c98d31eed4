import json
import subprocess
import sys

import pytest

from teamsd.cli import EXIT_IMBALANCED, run

CONFIG = """\
[synth]
seed = 21
n_papers = 1500
year_min = 2008
year_max = 2015
beta_sd = 0.2
a_path = 0.4
b_path = 0.3
team_size_lambda = 4.0
team_size_min = 3

[metrics]
window_years = 5

[regress]
interactions = sd_std:log_team_size
moderator = log_team_size
moderator_levels = 0.7, 1.4, 2.0
by_discipline = false

[regress.plain]
predictors = sd_std
fixed_effects = year

[psm]
n_bootstrap = 100
fixed_effects = year
decile_sweep = true

[mediate]
n_bootstrap = 100
"""

PIPELINE = ["synth", "metrics", "regress", "bin-fit", "psm", "prepost", "mediate"]


def run_pipeline(tmp_path, name):
    cfg = tmp_path / f"{name}.ini"
    cfg.write_text(CONFIG, encoding="utf-8")
    out = tmp_path / name
    for cmd in PIPELINE:
        assert run([cmd, "--config", str(cfg), "--out", str(out)]) == 0, cmd
    return out


@pytest.fixture(scope="module")
def pipeline_dirs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    return run_pipeline(base, "first"), run_pipeline(base, "second")


def test_outputs_written(pipeline_dirs):
    out, _ = pipeline_dirs
    names = {p.name for p in out.iterdir()}
    for f in ["corpus.jsonl", "truth.json", "h_index.tsv", "metric_rows.csv", "rejects.tsv", "metrics_counts.json",
              "regress_main.csv", "regress_main.json", "regress_main_margins.csv", "regress_plain.csv",
              "binfit.csv", "psm_report.json", "psm_pairs.csv", "psm_balance.csv", "psm_deciles.csv", "prepost_report.json",
              "prepost_kde.csv", "mediation.json", "manifest.json"]:
        assert f in names
    assert not [n for n in names if n.endswith(".partial")]


def test_manifest_chain(pipeline_dirs):
    out, _ = pipeline_dirs
    m = json.loads((out / "manifest.json").read_text())
    runs = m["runs"]
    assert set(runs) == set(PIPELINE)
    assert runs["synth"]["upstream"] is None
    assert runs["metrics"]["upstream"] == {"command": "synth", "run_id": runs["synth"]["run_id"]}
    for cmd in PIPELINE[2:]:
        assert runs[cmd]["upstream"] == {"command": "metrics", "run_id": runs["metrics"]["run_id"]}
    assert len({r["config_hash"] for r in runs.values()}) == 1
    assert runs["metrics"]["inputs"]["corpus"] == runs["synth"]["outputs"]["corpus.jsonl"]
    assert runs["synth"]["seed"] == 21


def test_end_to_end_determinism(pipeline_dirs):
    a, b = pipeline_dirs
    files = sorted(p.name for p in a.iterdir() if p.name != "first.ini")
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_manifest_digests_match_files(pipeline_dirs):
    import hashlib

    out, _ = pipeline_dirs
    runs = json.loads((out / "manifest.json").read_text())["runs"]
    for entry in runs.values():
        for name, digest in entry["outputs"].items():
            assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


def test_margins_slopes_reported(pipeline_dirs):
    out, _ = pipeline_dirs
    summary = json.loads((out / "regress_main.json").read_text())
    assert set(summary["marginal_slopes"]) == {"0.7", "1.4", "2.0"}


def test_regress_without_metrics(tmp_path, capsys):
    assert run(["regress", "--out", str(tmp_path)]) == 2
    assert "run metrics first" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == []


def test_metrics_without_corpus(tmp_path, capsys):
    assert run(["metrics", "--out", str(tmp_path)]) == 2
    assert "run synth first" in capsys.readouterr().err


def test_failure_leaves_no_partial_outputs(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[synth]\nseed = 1\nn_papers = 50\n[metrics]\nwindow_years = 9\n", encoding="utf-8")
    out = tmp_path / "out"
    assert run(["synth", "--config", str(cfg), "--out", str(out)]) == 0
    before = sorted(p.name for p in out.iterdir())
    assert run(["metrics", "--config", str(cfg), "--out", str(out)]) == 1
    assert "window_years" in capsys.readouterr().err
    assert sorted(p.name for p in out.iterdir()) == before


def test_seed_flag_changes_hash(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[synth]\nseed = 1\nn_papers = 30\n", encoding="utf-8")
    run(["synth", "--config", str(cfg), "--out", str(tmp_path / "a")])
    run(["synth", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"])
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())["runs"]["synth"]
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())["runs"]["synth"]
    assert ma["config_hash"] != mb["config_hash"] and mb["seed"] == 2


def test_require_balance_exit_code(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(
        "[synth]\nseed = 3\nn_papers = 800\nconfounder_strength = 2.0\nconfounder_effect = 0.5\n"
        "[psm]\nn_bootstrap = 20\ncovariates = freshness, log_team_size\n",
        encoding="utf-8",
    )
    out = str(tmp_path / "o")
    for cmd in ("synth", "metrics"):
        assert run([cmd, "--config", str(cfg), "--out", out]) == 0
    assert run(["psm", "--config", str(cfg), "--out", out]) == 0
    report = json.loads((tmp_path / "o" / "psm_report.json").read_text())
    code = run(["psm", "--config", str(cfg), "--out", out, "--require-balance"])
    assert code == (0 if report["balanced"] else EXIT_IMBALANCED)
    assert not report["balanced"]


def test_console_entry_point_version():
    proc = subprocess.run([sys.executable, "-m", "teamsd.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
