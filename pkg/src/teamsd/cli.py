"""Command line entry point: ``teamsd <subcommand> --config run.ini``.

Subcommands share one INI config and one output directory.  Each run writes
its artifacts atomically (nothing is left behind on failure) and records a
manifest entry with the config hash, seed, code version and output digests,
linked to the manifest entry of the run it consumed.

Config sections (all optional)::

    [paths]    out_dir, corpus, h_index, lexicon, mapping
    [synth]    any SynthConfig field, e.g. n_papers = 20000
    [metrics]  window_years, cd_window, team_size_cap, disciplines,
               nsf_only, year_min, year_max
    [regress]  outcome, predictors, interactions, fixed_effects, se_type,
               moderator, moderator_levels, focal, grid, by_discipline
    [regress.NAME]  further models, written as regress_NAME.*
    [bin-fit]  predictors, outcome, n_bins
    [psm]      exposure, outcome, covariates, fixed_effects, quantiles,
               caliper_sd, n_bootstrap, decile_sweep
    [prepost]  pre_years, post_years, outcome
    [mediate]  exposure, mediator, outcome, controls, fixed_effects, n_bootstrap
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, causal, content, stats
from .corpus import ConfigError, FieldMapping, check_window, read_corpus, read_h_index_table, write_rejects
from .pipeline import (
    METRIC_ROWS_VERSION,
    BASELINE_CONTROLS,
    MetricOptions,
    compute_metric_rows,
    read_metric_rows,
    write_metric_rows,
)
from .synth import SynthConfig, write_synthetic

logger = logging.getLogger("teamsd")

METRIC_ROWS = "metric_rows.csv"
MANIFEST = "manifest.json"
EXIT_IMBALANCED = 3

# which earlier subcommand produced each run's input
UPSTREAM = {"metrics": "synth", "regress": "metrics", "bin-fit": "metrics", "psm": "metrics", "prepost": "metrics", "mediate": "metrics"}


class PrerequisiteError(RuntimeError):
    pass


# -- config ------------------------------------------------------------------


def load_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.optionxform = str
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg.read(path, encoding="utf-8")
    return cfg


def config_hash(cfg: configparser.ConfigParser, seed: int | None) -> str:
    """Digest of the normalized config (sorted sections and keys) plus the seed flag."""
    norm = {s: dict(sorted(cfg[s].items())) for s in sorted(cfg.sections())}
    blob = json.dumps({"config": norm, "seed": seed}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _section(cfg, name) -> dict[str, str]:
    return dict(cfg[name]) if cfg.has_section(name) else {}


def _list(raw: str | None, default=()) -> list[str]:
    if raw is None:
        return list(default)
    return [x.strip() for x in raw.split(",") if x.strip()]


def _bool(raw: str | None, default=False) -> bool:
    if raw is None:
        return default
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def _years(raw: str | None, default: tuple[int, int]) -> tuple[int, int]:
    if raw is None:
        return default
    parts = [int(x) for x in raw.replace("-", ",").split(",") if x.strip()]
    if len(parts) != 2 or parts[0] > parts[1]:
        raise ConfigError(f"year range must look like 2010-2011, got {raw!r}")
    return parts[0], parts[1]


def _existing(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file not found: {p}")
    return p


# -- output handling ---------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _clean(obj):
    """JSON-safe copy: NaN becomes null, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


class Outputs:
    """Stage files as ``*.partial`` and rename them only when the run succeeds."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.staged: dict[str, Path] = {}

    def path(self, name: str) -> Path:
        tmp = self.out_dir / f"{name}.partial"
        self.staged[name] = tmp
        return tmp

    def text(self, name: str, text: str) -> None:
        _write_text(self.path(name), text)

    def csv(self, name: str, df: pd.DataFrame) -> None:
        df.to_csv(self.path(name), index=False, float_format="%.12g", lineterminator="\n")

    def commit(self) -> dict[str, str]:
        digests = {}
        for name, tmp in self.staged.items():
            final = self.out_dir / name
            os.replace(tmp, final)
            digests[name] = _sha256(final)
        return digests

    def discard(self) -> None:
        for tmp in self.staged.values():
            tmp.unlink(missing_ok=True)


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read_manifest(out_dir: Path) -> dict:
    p = out_dir / MANIFEST
    if not p.is_file():
        return {"runs": {}}
    return json.loads(p.read_text(encoding="utf-8"))


def _record_run(out_dir: Path, command: str, chash: str, seed, outputs: dict, inputs: dict) -> dict:
    manifest = _read_manifest(out_dir)
    entry = {
        "command": command,
        "config_hash": chash,
        "seed": seed,
        "version": __version__,
        "metric_rows_version": METRIC_ROWS_VERSION,
        "syllable_heuristic": content.SYLLABLE_HEURISTIC_VERSION,
        "inputs": inputs,
        "outputs": outputs,
        "upstream": None,
    }
    up = UPSTREAM.get(command)
    if up and up in manifest["runs"]:
        prior = manifest["runs"][up]
        # link only if we actually consumed one of its outputs
        if set(prior["outputs"].values()) & set(inputs.values()):
            entry["upstream"] = {"command": up, "run_id": prior["run_id"]}
    entry["run_id"] = hashlib.sha256(json.dumps(entry, sort_keys=True).encode()).hexdigest()
    manifest["runs"][command] = entry
    manifest["config_hash"] = chash
    _write_text(out_dir / (MANIFEST + ".partial"), _dump_json(manifest))
    os.replace(out_dir / (MANIFEST + ".partial"), out_dir / MANIFEST)
    return entry


# -- subcommands -------------------------------------------------------------


def _seed(args, section: dict, default: int = 0) -> int:
    if args.seed is not None:
        return args.seed
    return int(section.get("seed", default))


def cmd_synth(args, cfg, out: Outputs, inputs: dict) -> tuple[int, int]:
    values = _section(cfg, "synth")
    values["seed"] = str(_seed(args, values))
    sc = SynthConfig.from_mapping(values)
    sc.validate()
    tmp_dir = out.out_dir / ".synth.partial"
    tmp_dir.mkdir(exist_ok=True)
    try:
        paths = write_synthetic(sc, tmp_dir)
        for p in paths.values():
            os.replace(p, out.path(p.name))
    finally:
        for p in tmp_dir.iterdir():
            p.unlink()
        tmp_dir.rmdir()
    return 0, sc.seed


def _metric_rows(out: Outputs, inputs: dict) -> pd.DataFrame:
    path = out.out_dir / METRIC_ROWS
    if not path.is_file():
        raise PrerequisiteError(f"{path} not found: run metrics first")
    inputs[METRIC_ROWS] = _sha256(path)
    return read_metric_rows(path)


def cmd_metrics(args, cfg, out: Outputs, inputs: dict) -> tuple[int, None]:
    paths = _section(cfg, "paths")
    m = _section(cfg, "metrics")
    corpus_path = paths.get("corpus")
    if corpus_path is None:
        default = out.out_dir / "corpus.jsonl"
        if not default.is_file():
            raise PrerequisiteError(f"no [paths] corpus configured and {default} missing: run synth first")
        corpus_path = str(default)
    corpus_path = _existing(corpus_path, "corpus")
    h_path = paths.get("h_index")
    if h_path is None and (out.out_dir / "h_index.tsv").is_file():
        h_path = str(out.out_dir / "h_index.tsv")
    h_path = _existing(h_path, "h-index")
    lex_path = _existing(paths.get("lexicon"), "lexicon")
    map_path = _existing(paths.get("mapping"), "field mapping")

    window = check_window(int(m.get("window_years", 5)))
    year_range = None
    if "year_min" in m or "year_max" in m:
        year_range = (int(m.get("year_min", 0)), int(m.get("year_max", 9999)))
    opts = MetricOptions(
        window_years=window,
        cd_window=int(m.get("cd_window", 5)),
        team_size_cap=int(m.get("team_size_cap", 500)),
        lexicon=content.load_lexicon(lex_path),
        h_index=read_h_index_table(h_path) if h_path else {},
        disciplines=tuple(_list(m["disciplines"])) if "disciplines" in m else None,
        nsf_only=_bool(m.get("nsf_only")),
        year_range=year_range,
    )
    if opts.cd_window < 1:
        raise ConfigError("cd_window must be >= 1")

    kwargs = {"workers": args.threads}
    if map_path:
        kwargs["mapping"] = FieldMapping.from_file(map_path)
    corpus = read_corpus(corpus_path, **kwargs)
    for name, p in (("corpus", corpus_path), ("h_index", h_path), ("lexicon", lex_path), ("mapping", map_path)):
        if p is not None:
            inputs[name] = _sha256(p)

    run = compute_metric_rows(corpus, opts)
    write_metric_rows(run.rows, out.path(METRIC_ROWS))
    write_rejects(corpus, out.path("rejects.tsv"))
    counts = dict(run.counts, window_years=window, cd_window=opts.cd_window, metric_rows_version=METRIC_ROWS_VERSION)
    out.text("metrics_counts.json", _dump_json(counts))
    return 0, None


def _model_sections(cfg) -> list[tuple[str, dict]]:
    named = [(s.split(".", 1)[1], dict(cfg[s])) for s in cfg.sections() if s.startswith("regress.")]
    if cfg.has_section("regress") or not named:
        named.insert(0, ("main", _section(cfg, "regress")))
    return named


def _regress_one(rows: pd.DataFrame, sec: dict) -> tuple[stats.RegressionResult, dict]:
    spec = stats.ModelSpec.parse(
        sec.get("outcome", "cd_norm"),
        sec.get("predictors", ",".join(["sd_std", *BASELINE_CONTROLS])),
        sec.get("interactions", ""),
        sec.get("fixed_effects", "year,discipline"),
    )
    res = stats.fit_model(rows, spec, se_type=sec.get("se_type", "classical"))
    summary = dict(res.summary(), outcome=spec.outcome, predictors=spec.predictors,
                   interactions=[f"{a}:{b}" for a, b in spec.interactions], fixed_effects=spec.fixed_effects)
    return res, summary


def cmd_regress(args, cfg, out: Outputs, inputs: dict) -> tuple[int, None]:
    rows = _metric_rows(out, inputs)
    for name, sec in _model_sections(cfg):
        res, summary = _regress_one(rows, sec)
        out.csv(f"regress_{name}.csv", res.table())
        moderator = sec.get("moderator")
        if moderator:
            focal = sec.get("focal", "sd_std")
            levels = [float(x) for x in _list(sec.get("moderator_levels"))] or list(
                np.quantile(rows[moderator].dropna(), [0.1, 0.5, 0.9])
            )
            grid = [float(x) for x in _list(sec.get("grid"))] or list(np.linspace(-2, 2, 9))
            out.csv(f"regress_{name}_margins.csv", stats.predict_margins(res, focal, grid, moderator, levels))
            summary["marginal_slopes"] = {str(lv): stats.marginal_slope(res, focal, moderator, lv) for lv in levels}
        if _bool(sec.get("by_discipline")):
            focal = sec.get("focal", "sd_std")
            sweep = []
            for disc in sorted(rows["discipline"].dropna().unique()):
                sub = rows[rows["discipline"] == disc]
                try:
                    r, _ = _regress_one(sub, sec)
                except (stats.RankDeficientError, ValueError) as exc:
                    logger.warning("discipline %s skipped: %s", disc, exc)
                    continue
                lo, hi = r.conf_int(focal)
                sweep.append({"discipline": disc, "n": r.n, "beta": r[focal], "se": r.stderr(focal), "p": r.p(focal), "ci_low": lo, "ci_high": hi})
            out.csv(f"regress_{name}_by_discipline.csv", pd.DataFrame(sweep))
        out.text(f"regress_{name}.json", _dump_json(dict(summary, model=name)))
    return 0, None


def cmd_bin_fit(args, cfg, out: Outputs, inputs: dict) -> tuple[int, None]:
    rows = _metric_rows(out, inputs)
    sec = _section(cfg, "bin-fit")
    y = sec.get("outcome", "cd_norm")
    n_bins = int(sec.get("n_bins", 20))
    frames, summary = [], {"outcome": y, "n_bins": n_bins, "fits": {}}
    for x in _list(sec.get("predictors"), ("sd", "freshness", "edge_density")):
        sub = rows[[x, y]].dropna()
        fit = stats.binned_means_fit(sub[x], sub[y], n_bins)
        frames.append(fit.frame().assign(predictor=x))
        summary["fits"][x] = {"r2": fit.r2, "slope": fit.slope, "intercept": fit.intercept, "bins": fit.n_bins, "n": len(sub)}
    out.csv("binfit.csv", pd.concat(frames, ignore_index=True)[["predictor", "bin", "x_mean", "y_mean", "n"]])
    out.text("binfit.json", _dump_json(summary))
    return 0, None


def cmd_psm(args, cfg, out: Outputs, inputs: dict) -> tuple[int, int]:
    rows = _metric_rows(out, inputs)
    sec = _section(cfg, "psm")
    seed = _seed(args, sec)
    exposure = sec.get("exposure", "sd")
    outcome = sec.get("outcome", "cd_norm")
    covariates = _list(sec.get("covariates"), BASELINE_CONTROLS)
    kwargs = dict(
        fixed_effects=_list(sec.get("fixed_effects")),
        caliper_sd=float(sec["caliper_sd"]) if sec.get("caliper_sd") else None,
        n_bootstrap=int(sec.get("n_bootstrap", 1000)),
        seed=seed,
        workers=args.threads,
    )
    used = rows.dropna(subset=[exposure, outcome, *covariates])
    report = causal.psm_by_quantile(used, exposure, outcome, covariates, k=int(sec.get("quantiles", 4)), **kwargs)
    result = {"main": report.summary(), "exposure": exposure, "outcome": outcome, "covariates": covariates, "seed": seed,
              "caliper_sd": kwargs["caliper_sd"], "n_bootstrap": kwargs["n_bootstrap"], "n_rows_dropped": len(rows) - len(used)}
    out.csv("psm_pairs.csv", report.pairs)
    out.csv("psm_balance.csv", report.balance)
    balanced = report.balanced
    if _bool(sec.get("decile_sweep")):
        sweep = causal.psm_decile_sweep(used, exposure, outcome, covariates, **kwargs)
        result["decile_sweep"] = [r.summary() for r in sweep]
        out.csv("psm_deciles.csv", pd.DataFrame(
            [{"label": r.label, "att": r.att.att, "ci_low": r.att.ci_low, "ci_high": r.att.ci_high, "p": r.att.p,
              "n_matched": r.n_matched, "balanced": r.balanced} for r in sweep]
        ))
        balanced = balanced and all(r.balanced for r in sweep)
    result["balanced"] = balanced
    out.text("psm_report.json", _dump_json(result))
    if args.require_balance and not balanced:
        logger.error("covariate balance not reached (|SMD| >= 0.1 after matching)")
        return EXIT_IMBALANCED, seed
    return 0, seed


def cmd_prepost(args, cfg, out: Outputs, inputs: dict) -> tuple[int, None]:
    rows = _metric_rows(out, inputs)
    sec = _section(cfg, "prepost")
    rep = causal.prepost_report(
        rows,
        pre_range=_years(sec.get("pre_years"), (2010, 2011)),
        post_range=_years(sec.get("post_years"), (2012, 2013)),
        outcome=sec.get("outcome", "cd_norm"),
    )
    out.text("prepost_report.json", _dump_json(rep.summary))
    out.csv("prepost_cc_distribution.csv", rep.cc_distribution)
    out.csv("prepost_kde.csv", rep.kde)
    return 0, None


# controls for mediation: the regression controls without team freshness
MEDIATION_CONTROLS = [c for c in BASELINE_CONTROLS if c != "freshness"]


def cmd_mediate(args, cfg, out: Outputs, inputs: dict) -> tuple[int, int]:
    rows = _metric_rows(out, inputs)
    sec = _section(cfg, "mediate")
    seed = _seed(args, sec)
    res = causal.mediation_analysis(
        rows,
        sec.get("exposure", "sd_std"),
        sec.get("mediator", "di"),
        sec.get("outcome", "cd_norm"),
        controls=_list(sec.get("controls"), MEDIATION_CONTROLS),
        fixed_effects=_list(sec.get("fixed_effects"), ("year", "discipline")),
        n_bootstrap=int(sec.get("n_bootstrap", 1000)),
        seed=seed,
        workers=args.threads,
    )
    out.text("mediation.json", _dump_json(dict(res.to_dict(), seed=seed)))
    return 0, seed


COMMANDS = {
    "synth": (cmd_synth, "generate a seeded synthetic corpus with planted effects"),
    "metrics": (cmd_metrics, "compute the per-paper metric table"),
    "regress": (cmd_regress, "fixed-effects OLS models, margins and discipline sweeps"),
    "bin-fit": (cmd_bin_fit, "equal-count binned fits of the outcome on team metrics"),
    "psm": (cmd_psm, "propensity score matching on SD quantiles"),
    "prepost": (cmd_prepost, "pre/post period comparison"),
    "mediate": (cmd_mediate, "SD -> DI -> CD mediation with bootstrap CI"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--out", help="output directory (overrides [paths] out_dir)")
    common.add_argument("--threads", type=int, default=1, help="worker count for parsing and bootstrap")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--require-balance", action="store_true", help="exit nonzero if matching leaves |SMD| >= 0.1")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="teamsd", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except (ConfigError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out or _section(cfg, "paths").get("out_dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg, args.seed)
    func = COMMANDS[args.command][0]
    out = Outputs(out_dir)
    inputs: dict = {}
    try:
        status, seed = func(args, cfg, out, inputs)
    except PrerequisiteError as exc:
        out.discard()
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        out.discard()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        out.discard()
        raise
    digests = out.commit()
    _record_run(out_dir, args.command, chash, seed, digests, inputs)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
