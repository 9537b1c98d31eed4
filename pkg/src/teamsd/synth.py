"""Seeded synthetic data with planted team structure and effects.

Two outputs share one latent draw:

* :func:`generate_rows` returns metric rows directly on the latent scale
  (``cd_norm`` is the latent outcome, ``di`` the latent mediator).  Used for
  large-sample checks of the statistical layer.
* :func:`generate_corpus` realizes the same draw as bibliographic records:
  prior co-authorship papers reproduce each team's planned components,
  private references carry the planned discipline mix, and shared "hub"
  citers reproduce the planned CD value exactly.

Latent model per analysed paper::

    di  = a_path * sd_std + noise_di * e1                    (rows)
    z   = beta_sd * sd_std + beta_interaction * sd_std * log(n)
          + beta_log_team_size * log(n) + b_path * di
          + confounder_effect * u + att_step * [top SD quartile]
          + shock_cd_shift * [year >= shock_year] + noise * e2

``u`` is the standardized career age of the last author, so the confounder is
observed.  Each member is isolated (no prior tie to the team) with
probability ``fresh_prob``; the other ``m`` members form ``1 + Binomial(m // 2
- 1, split_prob)`` components of two or more.  ``confounder_strength`` shifts
both probabilities on the logit scale by ``confounder_strength * u``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import optimize, special

from . import content
from .corpus import DISCIPLINES, AuthorRef, PaperRecord, write_corpus
from .graphs import PriorNetwork
from .team import clustering_coefficient

VOCAB = (
    "network", "model", "analysis", "protein", "quantum", "dynamics", "structure", "learning",
    "cell", "theory", "data", "field", "energy", "signal", "growth", "method", "evidence",
    "system", "response", "transport", "market", "policy", "climate", "genome", "surface",
    "optical", "statistical", "molecular", "regional", "social", "neural", "temporal",
    "of", "in", "and", "for", "the", "a", "on", "with",
)
PROMO = ("unique", "crucial", "unprecedented")


class SynthConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    seed: int
    n_papers: int = 1000
    year_min: int = 2000
    year_max: int = 2015
    disciplines: tuple[str, ...] = DISCIPLINES
    team_size_law: str = "poisson"
    team_size_lambda: float = 2.5
    team_size_min: int = 1
    team_size_max: int = 15
    fresh_prob: float = 0.25
    split_prob: float = 0.3
    prior_density: float = 0.3
    window_years: int = 5
    cd_window: int = 5
    career_lambda: float = 7.0
    confounder_strength: float = 0.0
    confounder_effect: float = 0.0
    beta_sd: float = 0.0
    beta_interaction: float = 0.0
    beta_log_team_size: float = 0.0
    a_path: float = 0.0
    b_path: float = 0.0
    att_step: float = 0.0
    noise_di: float = 1.0
    noise_cd: float | None = None
    shock_year: int | None = None
    shock_cc_shift: float = 0.0
    shock_cd_shift: float = 0.0
    nsf_fraction: float = 0.2
    traceable_fraction: float = 1.0
    review_fraction: float = 0.0
    n_citers: int = 20
    cd_scale: float = 0.25
    n_references: int = 10
    hubs_per_year: int = 60
    promo_rate: float = 0.05
    n_institutions: int = 300

    def validate(self) -> None:
        if self.seed is None:
            raise SynthConfigError("seed is mandatory")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise SynthConfigError(f"{f.name} must be finite")
        if self.n_papers < 0:
            raise SynthConfigError("n_papers must be >= 0")
        if self.year_min > self.year_max:
            raise SynthConfigError("year_min > year_max")
        for name in ("prior_density", "split_prob", "fresh_prob", "nsf_fraction", "traceable_fraction", "review_fraction", "promo_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SynthConfigError(f"{name} must be within [0, 1]")
        if not 0.0 < self.split_prob < 1.0 and self.confounder_strength != 0:
            raise SynthConfigError("split_prob must be strictly inside (0, 1) with confounding")
        if not 2 <= self.window_years <= 7:
            raise SynthConfigError("window_years must be in [2, 7]")
        if self.team_size_law not in ("poisson", "geometric"):
            raise SynthConfigError(f"unknown team_size_law {self.team_size_law!r}")
        if not 1 <= self.team_size_min <= self.team_size_max:
            raise SynthConfigError("need 1 <= team_size_min <= team_size_max")
        if self.n_citers < 1 or self.n_references < 1:
            raise SynthConfigError("n_citers and n_references must be >= 1")
        if self.n_citers > self.hubs_per_year * self.cd_window:
            raise SynthConfigError("n_citers exceeds the hub pool (hubs_per_year * cd_window)")
        unknown = set(self.disciplines) - set(DISCIPLINES)
        if unknown or not self.disciplines:
            raise SynthConfigError(f"unknown disciplines: {sorted(unknown)}")

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in values.items():
            if key not in kinds:
                raise SynthConfigError(f"unknown synth option {key!r}")
            out[key] = _coerce(key, raw, kinds[key])
        if "seed" not in out:
            raise SynthConfigError("seed is mandatory")
        return cls(**out)


def _coerce(key, raw, kind):
    if not isinstance(raw, str):
        return tuple(raw) if key == "disciplines" else raw
    raw = raw.strip()
    if key == "disciplines":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if kind is str or kind == "str":
        return raw
    if raw.lower() in ("", "none"):
        return None
    if "int" in str(kind) and "float" not in str(kind):
        return int(raw)
    return float(raw)


def expected_cc(config: SynthConfig, split_prob: float | None = None, fresh_prob: float | None = None) -> float:
    """Exact E[cc_count] for traceable teams without confounding."""
    q = config.split_prob if split_prob is None else split_prob
    f = config.fresh_prob if fresh_prob is None else fresh_prob
    pmf = _team_size_pmf(config)
    total = 0.0
    for k, pk in enumerate(pmf):
        size = k + config.team_size_min
        s = np.arange(size + 1)
        ps = np.exp(special.gammaln(size + 1) - special.gammaln(s + 1) - special.gammaln(size - s + 1)) * f**s * (1 - f) ** (size - s)
        m = size - s
        cc = np.where(m >= 2, s + 1 + (m // 2 - 1) * q, size)
        total += pk * float((ps * cc).sum())
    return total


def _shock_split_prob(config: SynthConfig) -> float:
    target = expected_cc(config) + config.shock_cc_shift
    lo, hi = expected_cc(config, 0.0), expected_cc(config, 1.0)
    if not lo <= target <= hi:
        raise SynthConfigError(f"shock_cc_shift {config.shock_cc_shift} not reachable (E[cc] range {lo:.3f}-{hi:.3f})")
    return float(optimize.brentq(lambda x: expected_cc(config, x) - target, 0.0, 1.0, xtol=1e-12))


def split_prob_for_cc_mean(cc_mean: float, config: SynthConfig) -> float:
    """Split probability giving an expected component count of ``cc_mean``."""
    lo, hi = expected_cc(config, 0.0), expected_cc(config, 1.0)
    if not lo <= cc_mean <= hi:
        raise SynthConfigError(f"cc_mean {cc_mean} not reachable (range {lo:.3f}-{hi:.3f})")
    return float(optimize.brentq(lambda x: expected_cc(config, x) - cc_mean, 0.0, 1.0, xtol=1e-12))


# -- latent draw -------------------------------------------------------------


def _team_size_pmf(config: SynthConfig) -> np.ndarray:
    """P(team_size = team_size_min + k) up to team_size_max (truncated, renormalized)."""
    k = np.arange(config.team_size_max - config.team_size_min + 1)
    lam = config.team_size_lambda
    if lam <= 0:
        pmf = (k == 0).astype(float)
    elif config.team_size_law == "poisson":
        pmf = np.exp(k * math.log(lam) - lam - special.gammaln(k + 1))
    elif config.team_size_law == "geometric":
        p = 1.0 / (1.0 + lam)
        pmf = p * (1 - p) ** k
    else:
        raise SynthConfigError(f"unknown team_size_law {config.team_size_law!r}")
    return pmf / pmf.sum()


def _team_sizes(rng, n, config):
    """``team_size_min + K`` with ``K`` Poisson or geometric of mean ``team_size_lambda``, truncated."""
    pmf = _team_size_pmf(config)
    return config.team_size_min + rng.choice(len(pmf), size=n, p=pmf)


_WORDS = VOCAB + PROMO
_WORD_SYLLABLES = np.array([content.count_syllables(w) for w in _WORDS])


def _titles(rng, n: int, config) -> tuple[list[str], dict[str, np.ndarray]]:
    """Random titles plus their word count, Flesch score and promotional share.

    Titles have no sentence punctuation, so the scores follow from per-word
    syllable counts without re-tokenizing.
    """
    lengths = 4 + rng.poisson(5, size=n)
    total = int(lengths.sum())
    promo = rng.random(total) < config.promo_rate
    word = np.where(promo, len(VOCAB) + rng.integers(len(PROMO), size=total), rng.integers(len(VOCAB), size=total))
    starts = np.r_[0, np.cumsum(lengths)[:-1]].astype(int)
    titles = []
    for lo, k in zip(starts.tolist(), lengths.tolist()):
        words = [_WORDS[j] for j in word[lo : lo + k]]
        words[0] = words[0].capitalize()
        titles.append(" ".join(words))
    if n:
        syl = np.add.reduceat(_WORD_SYLLABLES[word], starts)
        n_promo = np.add.reduceat(promo.astype(int), starts)
    else:
        syl = n_promo = np.zeros(0)
    metrics = {
        "title_word_count": lengths,
        "flesch": 206.835 - 1.015 * lengths - 84.6 * (syl / lengths),
        "promo_pct": 100.0 * n_promo / lengths,
    }
    return titles, metrics


def _partition(members: list[int], k: int, keys, assign) -> list[list[int]]:
    """Random split of ``members`` into ``k`` blocks of at least two.

    Members ordered by ``keys`` seed the blocks pairwise; the rest join block
    ``floor(assign * k)``.  ``keys`` and ``assign`` are uniforms indexed by member.
    """
    perm = sorted(members, key=lambda m: keys[m])
    out = [perm[2 * j : 2 * j + 2] for j in range(k)]
    for m in perm[2 * k :]:
        out[min(int(assign[m] * k), k - 1)].append(m)
    return [sorted(b) for b in out]


def _latent(config: SynthConfig) -> dict:
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_papers
    w = config.window_years
    years = rng.integers(config.year_min, config.year_max + 1, size=n)
    disc_idx = rng.integers(len(config.disciplines), size=n)
    sizes = _team_sizes(rng, n, config)
    career = w + 1 + rng.poisson(config.career_lambda, size=n)
    u = (career - (w + 1 + config.career_lambda)) / math.sqrt(config.career_lambda) if config.career_lambda > 0 else np.zeros(n)

    n_research = n - int(round(config.review_fraction * n))
    research = np.zeros(n, dtype=bool)
    research[rng.permutation(n)[:n_research]] = True
    n_trace = int(round(config.traceable_fraction * n))
    traceable = np.zeros(n, dtype=bool)
    traceable[rng.permutation(n)[:n_trace]] = True
    nsf = rng.random(n) < config.nsf_fraction

    q = np.full(n, config.split_prob)
    f = np.full(n, config.fresh_prob)
    if config.shock_year is not None and config.shock_cc_shift:
        post = years >= config.shock_year
        q = np.where(post, _shock_split_prob(config), q)
    if config.confounder_strength:
        shift = config.confounder_strength * u
        q = special.expit(special.logit(np.clip(q, 1e-9, 1 - 1e-9)) + shift)
        f = special.expit(special.logit(np.clip(f, 1e-9, 1 - 1e-9)) + shift)

    # all randomness for the prior networks is drawn up front, per member
    # and per member pair, then consumed paper by paper
    starts = np.r_[0, np.cumsum(sizes)[:-1]].astype(int)
    total = int(sizes.sum())
    iso_all = rng.random(total) < np.repeat(f, sizes)
    iso_all[starts[~traceable]] = True  # member 0 gets no window papers
    rest = sizes - (np.add.reduceat(iso_all, starts) if n else np.zeros(0, dtype=int))
    rest = np.where(rest == 1, 0, rest)
    n_blocks = np.where(rest >= 2, 1 + rng.binomial(np.maximum(rest // 2 - 1, 0), q), 0)
    perm_keys = rng.random(total)
    assign = rng.random(total)
    pair_starts = np.r_[0, np.cumsum(sizes * (sizes - 1) // 2)[:-1]].astype(int)
    pair_u = rng.random(int((sizes * (sizes - 1) // 2).sum()))

    blocks, edges, extra_candidates, extra_edges = [], [], 0, 0
    for i in range(n):
        size = int(sizes[i])
        lo = int(starts[i])
        iso = iso_all[lo : lo + size]
        members = [] if rest[i] == 0 else [m for m in range(size) if not iso[m]]
        member_set = set(members)
        bl = [[m] for m in range(size) if m not in member_set]
        if members:
            bl += _partition(members, int(n_blocks[i]), perm_keys[lo : lo + size], assign[lo : lo + size])
            bl.sort(key=lambda x: x[0])
        e = []
        ptr = int(pair_starts[i])
        for block in bl:
            e += list(zip(block, block[1:]))
            for x in range(len(block)):
                for y in range(x + 2, len(block)):
                    extra_candidates += 1
                    if pair_u[ptr] < config.prior_density:
                        e.append((block[x], block[y]))
                        extra_edges += 1
                    ptr += 1
        blocks.append(bl)
        edges.append(e)

    cc = np.array([len(b) for b in blocks])
    sd = cc / sizes
    singles = np.array([sum(1 for m in b if len(m) == 1) for b in blocks])
    n_edges = np.array([len(e) for e in edges])
    freshness = singles / sizes
    with np.errstate(divide="ignore", invalid="ignore"):
        density = np.where(sizes > 1, n_edges / (sizes * (sizes - 1) / 2), np.nan)

    titles, title_metrics = _titles(rng, n, config)
    inst = rng.integers(config.n_institutions, size=n)
    h_table = {f"I{k:04d}": int(h) for k, h in enumerate(rng.poisson(40, size=config.n_institutions))}

    sample = research & traceable
    sd_std = np.full(n, np.nan)
    if sample.sum() >= 2 and sd[sample].std(ddof=1) > 0:
        sd_std[sample] = (sd[sample] - sd[sample].mean()) / sd[sample].std(ddof=1)
    elif sample.any():
        sd_std[sample] = 0.0

    top = np.zeros(n, dtype=bool)
    idx = np.flatnonzero(sample)
    if len(idx) >= 4:
        order = idx[np.lexsort((idx, sd[idx]))]
        top[order[len(order) * 3 // 4 :]] = True

    return {
        "rng": rng, "years": years, "disc_idx": disc_idx, "sizes": sizes, "career": career, "u": u,
        "research": research, "traceable": traceable, "nsf": nsf, "blocks": blocks, "edges": edges,
        "cc": cc, "sd": sd, "sd_std": sd_std, "freshness": freshness, "density": density,
        "titles": titles, "title_metrics": title_metrics, "inst": inst, "h_table": h_table, "sample": sample, "top": top,
        "extra_candidates": extra_candidates, "extra_edges": extra_edges,
    }


def _outcome(config: SynthConfig, lat: dict, di: np.ndarray) -> tuple[np.ndarray, float]:
    rng = lat["rng"]
    n = config.n_papers
    s = np.nan_to_num(lat["sd_std"])
    logn = np.log(lat["sizes"])
    signal = (
        config.beta_sd * s
        + config.beta_interaction * s * logn
        + config.beta_log_team_size * logn
        + config.b_path * np.nan_to_num(di)
        + config.confounder_effect * lat["u"]
        + config.att_step * lat["top"]
    )
    if config.shock_year is not None:
        signal = signal + config.shock_cd_shift * (lat["years"] >= config.shock_year)
    if config.noise_cd is None:
        smp = lat["sample"]
        var = float(signal[smp].var()) if smp.sum() > 1 else 0.0
        noise = math.sqrt(max(1.0 - var, 0.05))
    else:
        noise = config.noise_cd
    return signal + noise * rng.standard_normal(n), noise


def _quantize_cd(rng, z: np.ndarray, config: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Number of 'both' citers among ``n_citers`` and the resulting CD value."""
    m = config.n_citers
    target = np.clip(config.cd_scale * z, -1.0, 1.0)
    frac = m * (1.0 - target) / 2.0
    k = np.floor(frac).astype(int)
    k += rng.random(len(z)) < (frac - k)
    k = np.clip(k, 0, m)
    return k, (m - 2 * k) / m


def _career_years(rng, t, career, window, traceable, extra):
    first = t - career
    hi = t - 1 if traceable else t - window - 1
    ys = [first]
    if extra and hi >= first:
        ys += list(rng.integers(first, hi + 1, size=extra))
    return ys


# -- public API --------------------------------------------------------------


def generate_rows(config: SynthConfig) -> tuple[pd.DataFrame, dict]:
    """Metric rows for the analysed papers, drawn straight from the latent model."""
    lat = _latent(config)
    rng = lat["rng"]
    n = config.n_papers
    di = config.a_path * np.nan_to_num(lat["sd_std"]) + config.noise_di * rng.standard_normal(n)
    z, noise = _outcome(config, lat, di)
    _, cd_raw = _quantize_cd(rng, z, config)
    pubs = 1 + rng.poisson(3, size=n)
    clustering = []
    for i in range(n):
        size = int(lat["sizes"][i])
        if size < 2:
            clustering.append(np.nan)
            continue
        nodes = tuple(str(j) for j in range(size))
        pn = PriorNetwork(nodes, tuple((str(a), str(b)) for a, b in lat["edges"][i]), 0, config.window_years)
        clustering.append(clustering_coefficient(pn))
    disc = np.asarray(config.disciplines, dtype=object)[lat["disc_idx"]]
    df = pd.DataFrame(
        {
            "paper_id": [f"F{i:07d}" for i in range(n)],
            "year": lat["years"],
            "discipline": disc,
            "nsf_funded": lat["nsf"],
            "team_size": lat["sizes"],
            "log_team_size": np.log(lat["sizes"]),
            "cc_count": lat["cc"],
            "sd": lat["sd"],
            "sd_std": lat["sd_std"],
            "freshness": lat["freshness"],
            "edge_density": lat["density"],
            "clustering": np.array(clustering, dtype=float),
            "cd_raw": cd_raw,
            "cd_norm": z,
            "di": di,
            **lat["title_metrics"],
            "career_age": lat["career"],
            "career_age_sq": lat["career"] ** 2,
            "inst_h_index": [lat["h_table"][f"I{k:04d}"] for k in lat["inst"]],
            "pub_count": pubs,
            "log_pub_count": np.log1p(pubs),
            "confounder": lat["u"],
            "top_quartile": lat["top"],
        }
    )
    df = df[lat["sample"]].reset_index(drop=True)
    return df, _truth(config, lat, noise, tier="rows")


def _truth(config: SynthConfig, lat: dict, noise: float, tier: str, papers: dict | None = None) -> dict:
    total = config.beta_sd + config.a_path * config.b_path
    truth = {
        "tier": tier,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()},
        "planted": {
            "beta_sd": config.beta_sd,
            "beta_interaction": config.beta_interaction,
            "beta_log_team_size": config.beta_log_team_size,
            "a_path": config.a_path,
            "b_path": config.b_path,
            "direct": config.beta_sd,
            "total": total,
            "indirect": config.a_path * config.b_path,
            "proportion_mediated": (config.a_path * config.b_path / total) if total else None,
            "att_step": config.att_step,
            "confounder_effect": config.confounder_effect,
            "shock_year": config.shock_year,
            "shock_cc_shift": config.shock_cc_shift,
            "shock_cd_shift": config.shock_cd_shift,
            "outcome_noise_sd": noise,
        },
        "counts": {
            "n_focal": config.n_papers,
            "n_research_articles": int(lat["research"].sum()),
            "n_traceable": int(lat["traceable"].sum()),
            "n_analysis_sample": int(lat["sample"].sum()),
            "prior_extra_candidates": lat["extra_candidates"],
            "prior_extra_edges": lat["extra_edges"],
        },
    }
    if papers is not None:
        truth["papers"] = papers
    return truth


def generate_corpus(config: SynthConfig) -> tuple[list[PaperRecord], dict, dict[str, int]]:
    """Bibliographic realization: ``(records, ground truth, institution h-index table)``.

    Every focal team gets fresh author ids, so teams never share history.
    Supporting papers (prior collaborations, career papers, references) are
    typed ``other`` and citation hubs ``review``; only focal papers are
    research articles, unless ``review_fraction`` retypes some of them.
    """
    lat = _latent(config)
    rng = lat["rng"]
    n = config.n_papers
    w = config.window_years
    discs = config.disciplines
    if n and config.year_max + config.cd_window > 2025:
        raise SynthConfigError("year_max + cd_window must stay within 2025")

    # references: own discipline with prob 1 - pi, else a random other one
    s = np.nan_to_num(lat["sd_std"])
    pi = special.expit(special.logit(0.3) + config.a_path * s)
    ref_disc = np.where(
        rng.random((n, config.n_references)) < pi[:, None],
        rng.integers(len(discs), size=(n, config.n_references)),
        lat["disc_idx"][:, None],
    )
    counts = np.zeros((n, len(discs)))
    np.add.at(counts, (np.repeat(np.arange(n), config.n_references), ref_disc.ravel()), 1.0)
    p = counts / config.n_references
    di = 1.0 - (p * p).sum(axis=1)
    z, noise = _outcome(config, lat, di)
    k_both, cd_raw = _quantize_cd(rng, z, config)

    records: list[PaperRecord] = []
    pool = config.hubs_per_year * config.cd_window
    n_cit = config.n_citers
    hub_of, hub_year, cite_paper, both_hubs, both_year, both_ref = [], [], [], [], [], []
    pub_counts = np.zeros(n, dtype=int)
    for i in range(n):
        fid = f"F{i:07d}"
        t = int(lat["years"][i])
        size = int(lat["sizes"][i])
        authors = [f"A{i:07d}_{j}" for j in range(size)]
        last = size - 1
        trace = bool(lat["traceable"][i])
        last_pubs = 1
        for e, (a, b) in enumerate(lat["edges"][i]):
            y = int(t - 1 - rng.integers(w))
            records.append(PaperRecord(f"E{i:07d}_{e}", "", y, None, (AuthorRef(authors[a]), AuthorRef(authors[b])), (), "other"))
            last_pubs += last in (a, b)
        for members in lat["blocks"][i]:
            m = members[0]
            if len(members) == 1 and (trace or m != 0):
                y = int(t - 1 - rng.integers(w))
                records.append(PaperRecord(f"S{i:07d}_{m}", "", y, None, (AuthorRef(authors[m]),), (), "other"))
                last_pubs += m == last
        last_trace = trace or last != 0
        for c, y in enumerate(_career_years(rng, t, int(lat["career"][i]), w, last_trace, int(rng.poisson(2)))):
            records.append(PaperRecord(f"C{i:07d}_{c}", "", int(y), None, (AuthorRef(authors[last]),), (), "other"))
            last_pubs += 1
        pub_counts[i] = last_pubs

        refs = []
        for r in range(config.n_references):
            rid = f"R{i:07d}_{r}"
            d = int(ref_disc[i, r])
            records.append(PaperRecord(rid, "", int(t - 1 - rng.integers(5)), discs[d], (AuthorRef(f"RA{d:02d}"),), (), "other"))
            refs.append(rid)

        inst_id = f"I{int(lat['inst'][i]):04d}"
        team = tuple(AuthorRef(a, inst_id if j == last else None) for j, a in enumerate(authors))
        records.append(
            PaperRecord(
                fid, lat["titles"][i], t, discs[int(lat["disc_idx"][i])], team, tuple(refs),
                "research_article" if lat["research"][i] else "review", bool(lat["nsf"][i]),
            )
        )

        chosen = rng.choice(pool, size=n_cit, replace=False)
        both = rng.permutation(n_cit) < k_both[i]
        picks = rng.integers(len(refs), size=int(both.sum()))
        hub_of.append(chosen)
        hub_year.append(np.full(n_cit, t))
        cite_paper.append(np.full(n_cit, i))
        both_hubs.append(chosen[both])
        both_year.append(np.full(len(picks), t))
        both_ref.append(i * config.n_references + picks)

    # hub reference lists: every chosen hub cites the focal paper, the
    # 'both' hubs also cite one of its references
    if n:
        hpy = config.hubs_per_year
        h = np.concatenate(hub_of + both_hubs)
        y = np.concatenate(hub_year + both_year) + 1 + h // hpy
        gid = y * hpy + h % hpy
        target = np.concatenate(cite_paper + both_ref)
        is_ref = np.r_[np.zeros(n * n_cit, dtype=bool), np.ones(len(target) - n * n_cit, dtype=bool)]
        order = np.lexsort((target, is_ref, gid))
        gid, target, is_ref = gid[order], target[order], is_ref[order]
        cuts = np.flatnonzero(np.diff(gid)) + 1
        nr = config.n_references
        names = [f"R{x // nr:07d}_{x % nr}" if r else f"F{x:07d}" for x, r in zip(target.tolist(), is_ref.tolist())]
        starts = np.r_[0, cuts].tolist()
        ends = np.r_[cuts, len(gid)].tolist()
        for a, b in zip(starts, ends):
            g = int(gid[a])
            records.append(PaperRecord(f"H{g // hpy}_{g % hpy:03d}", "", g // hpy, None, (AuthorRef("HUB"),), tuple(names[a:b]), "review"))

    sample = lat["sample"]
    papers = {
        "paper_id": [f"F{i:07d}" for i in range(n)],
        "in_sample": sample.tolist(),
        "research_article": lat["research"].tolist(),
        "traceable": lat["traceable"].tolist(),
        "year": lat["years"].tolist(),
        "team_size": lat["sizes"].tolist(),
        "cc_count": lat["cc"].tolist(),
        "sd": lat["sd"].tolist(),
        "freshness": lat["freshness"].tolist(),
        "n_prior_edges": [len(e) for e in lat["edges"]],
        "di": di.tolist(),
        "cd_raw": cd_raw.tolist(),
        "latent_cd": z.tolist(),
        "career_age": lat["career"].tolist(),
        "pub_count": pub_counts.tolist(),
        "confounder": lat["u"].tolist(),
    }
    return records, _truth(config, lat, noise, tier="corpus", papers=papers), lat["h_table"]


def write_synthetic(config: SynthConfig, out_dir: str | Path) -> dict[str, Path]:
    """Write ``corpus.jsonl``, ``truth.json`` and ``h_index.tsv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, truth, h_table = generate_corpus(config)
    paths = {"corpus": out / "corpus.jsonl", "truth": out / "truth.json", "h_index": out / "h_index.tsv"}
    write_corpus(records, paths["corpus"])
    paths["truth"].write_text(json.dumps(truth, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")
    with open(paths["h_index"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("institution_id\th_index\n")
        for k in sorted(h_table):
            fh.write(f"{k}\t{h_table[k]}\n")
    return paths


def binned_signal(n: int, n_bins: int, target_r2: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``(x, y)`` whose equal-count binned means have roughly ``target_r2``.

    ``y = slope * x + e`` with ``slope`` solved from the binned signal to noise
    ratio; ``target_r2 = 0`` gives pure noise.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    order = np.sort(x)
    bins = np.array_split(order, n_bins)
    v = float(np.var([b.mean() for b in bins]))
    noise_var = n_bins / n
    slope = math.sqrt(target_r2 / (1 - target_r2) * noise_var / v) if target_r2 > 0 else 0.0
    return x, slope * x + rng.standard_normal(n)
