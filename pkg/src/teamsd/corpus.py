"""Bibliographic record parsing, filtering and author career profiles.

Input is JSON Lines, one paper per line.  The canonical record looks like::

    {"id": "W1", "title": "...", "year": 2001, "discipline": "Physics",
     "authors": [{"id": "A1", "institution": "I9"}], "references": ["W0"],
     "type": "research_article", "nsf_funded": false}

Exports whose field names differ (OpenAlex, AMiner dumps) are adapted with a
:class:`FieldMapping`, loaded from a ``key = value`` file.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)

ARTICLE_TYPES = ("research_article", "review", "editorial", "other")

TYPE_ALIASES = {
    "research_article": "research_article",
    "research-article": "research_article",
    "article": "research_article",
    "journal-article": "research_article",
    "review": "review",
    "editorial": "editorial",
    "other": "other",
}

DISCIPLINE_GROUPS = {
    "Biology": "NaturalSciences",
    "Chemistry": "NaturalSciences",
    "Environmental Science": "NaturalSciences",
    "Geology": "NaturalSciences",
    "Mathematics": "NaturalSciences",
    "Medicine": "NaturalSciences",
    "Physics": "NaturalSciences",
    "Computer Science": "AppliedSciences",
    "Engineering": "AppliedSciences",
    "Materials Science": "AppliedSciences",
    "Business": "SocialSciences",
    "Economics": "SocialSciences",
    "Geography": "SocialSciences",
    "Political Science": "SocialSciences",
    "Psychology": "SocialSciences",
    "Sociology": "SocialSciences",
    "Art": "Humanities",
    "History": "Humanities",
    "Philosophy": "Humanities",
}
DISCIPLINES = tuple(DISCIPLINE_GROUPS)

MIN_WINDOW, MAX_WINDOW = 2, 7


class ConfigError(ValueError):
    """Invalid configuration value or missing configured file."""


class RecordError(ValueError):
    """A single input record failed validation."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


def map_discipline_group(discipline: str) -> str:
    """Broad FORD category for one of the 19 top-level discipline labels."""
    try:
        return DISCIPLINE_GROUPS[discipline]
    except KeyError:
        raise ValueError(
            f"unknown discipline {discipline!r}; valid labels: {', '.join(DISCIPLINES)}"
        ) from None


@dataclass(frozen=True, slots=True)
class AuthorRef:
    author_id: str
    institution_id: str | None = None


@dataclass(frozen=True, slots=True)
class PaperRecord:
    paper_id: str
    title: str
    year: int
    discipline: str | None
    authors: tuple[AuthorRef, ...]
    references: tuple[str, ...] = ()
    article_type: str = "research_article"
    nsf_funded: bool = False

    @property
    def author_ids(self) -> tuple[str, ...]:
        return tuple(a.author_id for a in self.authors)

    @property
    def last_author(self) -> AuthorRef:
        return self.authors[-1]


@dataclass
class Corpus:
    records: list[PaperRecord] = field(default_factory=list)
    rejects: list[tuple[int, str]] = field(default_factory=list)
    warnings: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict[str, PaperRecord]:
        return {r.paper_id: r for r in self.records}

    def derive(self, records: list[PaperRecord]) -> "Corpus":
        return Corpus(records, list(self.rejects), dict(self.warnings))


@dataclass(frozen=True)
class FieldMapping:
    """Source field names for each canonical field.

    ``type_aliases`` maps raw article-type strings (lowercased) to one of
    :data:`ARTICLE_TYPES`.
    """

    id: str = "id"
    title: str = "title"
    year: str = "year"
    discipline: str = "discipline"
    authors: str = "authors"
    author_id: str = "id"
    author_institution: str = "institution"
    references: str = "references"
    type: str = "type"
    nsf_funded: str = "nsf_funded"
    type_aliases: Mapping[str, str] = field(default_factory=lambda: dict(TYPE_ALIASES))

    @classmethod
    def from_file(cls, path: str | Path) -> "FieldMapping":
        """Read ``canonical = source`` lines; ``type.<raw> = <canonical type>`` adds aliases."""
        values: dict[str, str] = {}
        aliases = dict(TYPE_ALIASES)
        known = {f for f in cls.__dataclass_fields__ if f != "type_aliases"}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("type."):
                if value not in ARTICLE_TYPES:
                    raise ConfigError(f"{path}:{lineno}: unknown article type {value!r}")
                aliases[key[5:].lower()] = value
            elif key in known:
                values[key] = value
            else:
                raise ConfigError(f"{path}:{lineno}: unknown field {key!r}")
        return cls(type_aliases=aliases, **values)


DEFAULT_MAPPING = FieldMapping()


def _parse_obj(obj: object, mapping: FieldMapping, year_range: tuple[int, int]) -> tuple[PaperRecord, list[str]]:
    if not isinstance(obj, dict):
        raise RecordError("line", "not a JSON object")
    notes: list[str] = []

    pid = obj.get(mapping.id)
    if pid is None or pid == "":
        raise RecordError("id", "missing")
    pid = str(pid)

    year = obj.get(mapping.year)
    if year is None or year == "":
        raise RecordError("year", "missing")
    try:
        year = int(year)
    except (TypeError, ValueError):
        raise RecordError("year", f"not an integer: {year!r}") from None
    if not year_range[0] <= year <= year_range[1]:
        raise RecordError("year", f"{year} outside {year_range[0]}-{year_range[1]}")

    raw_authors = obj.get(mapping.authors)
    if not raw_authors:
        raise RecordError("authors", "missing or empty")
    if not isinstance(raw_authors, list):
        raise RecordError("authors", "not a list")
    authors = []
    for a in raw_authors:
        if isinstance(a, dict):
            aid = a.get(mapping.author_id)
            inst = a.get(mapping.author_institution)
        else:
            aid, inst = a, None
        if aid is None or aid == "":
            raise RecordError("authors", "author without id")
        authors.append(AuthorRef(str(aid), None if inst in (None, "") else str(inst)))
    ids = [a.author_id for a in authors]
    if len(set(ids)) != len(ids):
        raise RecordError("authors", "duplicate author id")

    discipline = obj.get(mapping.discipline)
    if discipline in (None, ""):
        discipline = None
    elif discipline not in DISCIPLINE_GROUPS:
        raise RecordError("discipline", f"unknown label {discipline!r}")

    refs = obj.get(mapping.references) or []
    if not isinstance(refs, list):
        raise RecordError("references", "not a list")
    refs = [str(r) for r in refs]
    if pid in refs:
        refs = [r for r in refs if r != pid]
        notes.append("self_citation_removed")
    if len(set(refs)) != len(refs):
        refs = list(dict.fromkeys(refs))
        notes.append("duplicate_reference_removed")

    raw_type = obj.get(mapping.type)
    if raw_type in (None, ""):
        article_type = "research_article"
        notes.append("article_type_defaulted")
    else:
        article_type = mapping.type_aliases.get(str(raw_type).lower(), "other")

    title = obj.get(mapping.title) or ""
    record = PaperRecord(
        paper_id=pid,
        title=str(title),
        year=year,
        discipline=discipline,
        authors=tuple(authors),
        references=tuple(refs),
        article_type=article_type,
        nsf_funded=bool(obj.get(mapping.nsf_funded, False)),
    )
    return record, notes


def _parse_chunk(args):
    start, lines, mapping, year_range = args
    out = []
    for offset, line in enumerate(lines):
        lineno = start + offset
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec, notes = _parse_obj(obj, mapping, year_range)
        except json.JSONDecodeError as exc:
            out.append((lineno, None, f"malformed JSON: {exc.msg}"))
        except RecordError as exc:
            out.append((lineno, None, str(exc)))
        else:
            out.append((lineno, rec, notes))
    return out


def _chunks(lines: Iterable[str], size: int):
    it = iter(lines)
    start = 1
    while True:
        block = list(islice(it, size))
        if not block:
            return
        yield start, block
        start += len(block)


def parse_corpus(
    lines: Iterable[str],
    mapping: FieldMapping = DEFAULT_MAPPING,
    year_range: tuple[int, int] = (1900, 2025),
    workers: int = 1,
    chunk_size: int = 20000,
) -> Corpus:
    """Parse JSON Lines into a :class:`Corpus`.

    Bad lines are collected in ``Corpus.rejects`` as ``(line number, reason)``
    and never abort the stream.  With ``workers > 1`` chunks are parsed in
    separate processes and merged back in input order, so the result is the
    same as a single-process parse.
    """
    corpus = Corpus()
    jobs = ((start, block, mapping, year_range) for start, block in _chunks(lines, chunk_size))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_parse_chunk, jobs)
            _merge(corpus, results)
    else:
        _merge(corpus, map(_parse_chunk, jobs))
    for name, count in corpus.warnings.items():
        logger.warning("%d records: %s", count, name)
    return corpus


def _merge(corpus: Corpus, results) -> None:
    seen: set[str] = set()
    for chunk in results:
        for lineno, rec, extra in chunk:
            if rec is None:
                corpus.rejects.append((lineno, extra))
                continue
            if rec.paper_id in seen:
                corpus.rejects.append((lineno, f"id: duplicate {rec.paper_id!r}"))
                continue
            seen.add(rec.paper_id)
            corpus.records.append(rec)
            for note in extra:
                corpus.warnings[note] = corpus.warnings.get(note, 0) + 1


def read_corpus(path: str | Path, **kwargs) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh, **kwargs)


def record_to_dict(rec: PaperRecord) -> dict:
    """Canonical JSON object for a record (inverse of parsing with the default mapping)."""
    authors = []
    for a in rec.authors:
        d = {"id": a.author_id}
        if a.institution_id is not None:
            d["institution"] = a.institution_id
        authors.append(d)
    return {
        "id": rec.paper_id,
        "title": rec.title,
        "year": rec.year,
        "discipline": rec.discipline,
        "authors": authors,
        "references": list(rec.references),
        "type": rec.article_type,
        "nsf_funded": rec.nsf_funded,
    }


def dumps_record(rec: PaperRecord) -> str:
    return json.dumps(record_to_dict(rec), ensure_ascii=False, separators=(",", ":"))


def write_corpus(records: Iterable[PaperRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_record(rec))
            fh.write("\n")


def write_rejects(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["line", "reason"])
        w.writerows(corpus.rejects)


def filter_research_articles(corpus: Corpus) -> Corpus:
    return corpus.derive([r for r in corpus.records if r.article_type == "research_article"])


# -- author profiles ---------------------------------------------------------


@dataclass(frozen=True)
class AuthorProfile:
    """Publication history of one author.

    ``pub_years`` holds one entry per paper (sorted), so counts over any
    year interval are two bisections.
    """

    author_id: str
    pub_years: tuple[int, ...]
    institution_id: str | None = None
    institution_h_index: int = 0
    h_index_missing: bool = True

    @property
    def first_pub_year(self) -> int:
        return self.pub_years[0]

    @property
    def pub_count_by_year(self) -> dict[int, int]:
        """Cumulative publication count at each year the author published."""
        out = {}
        for i, y in enumerate(self.pub_years, 1):
            out[y] = i
        return out

    def count_through(self, year: int) -> int:
        return bisect.bisect_right(self.pub_years, year)

    def count_between(self, lo: int, hi: int) -> int:
        """Papers with ``lo <= year <= hi``."""
        if hi < lo:
            return 0
        return bisect.bisect_right(self.pub_years, hi) - bisect.bisect_left(self.pub_years, lo)

    def career_age(self, year: int) -> int:
        return year - self.first_pub_year


def read_h_index_table(path: str | Path) -> dict[str, int]:
    """Load an ``institution_id<TAB>h_index`` file.

    A header row is skipped if its second column is not an integer.  Repeated
    ids with the same value are tolerated; conflicting values raise.
    """
    table: dict[str, int] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"h-index table not found: {path}") from None
    for lineno, row in enumerate(csv.reader(io.StringIO(text), delimiter="\t"), 1):
        if not row or not row[0].strip():
            continue
        if len(row) < 2:
            raise ConfigError(f"{path}:{lineno}: expected two tab-separated columns")
        inst, raw = row[0].strip(), row[1].strip()
        try:
            h = int(raw)
        except ValueError:
            if lineno == 1:
                continue
            raise ConfigError(f"{path}:{lineno}: h-index {raw!r} is not an integer") from None
        if h < 0:
            raise ConfigError(f"{path}:{lineno}: negative h-index for {inst}")
        if inst in table and table[inst] != h:
            raise ConfigError(f"conflicting h-index rows for institution {inst!r}: {table[inst]} vs {h}")
        table[inst] = h
    return table


def build_author_profiles(
    corpus: Corpus | Iterable[PaperRecord], h_index_table: Mapping[str, int] | None = None
) -> dict[str, AuthorProfile]:
    """One profile per author over every record in ``corpus``.

    The profile institution is the one listed on the author's latest paper
    (later input position wins within a year).
    """
    h_index_table = h_index_table or {}
    years: dict[str, list[int]] = {}
    latest: dict[str, tuple[int, str | None]] = {}
    for rec in corpus:
        for a in rec.authors:
            years.setdefault(a.author_id, []).append(rec.year)
            prev = latest.get(a.author_id)
            if a.institution_id is not None and (prev is None or rec.year >= prev[0]):
                latest[a.author_id] = (rec.year, a.institution_id)
    profiles = {}
    for aid, ys in years.items():
        inst = latest.get(aid, (0, None))[1]
        h = h_index_table.get(inst) if inst is not None else None
        profiles[aid] = AuthorProfile(
            author_id=aid,
            pub_years=tuple(sorted(ys)),
            institution_id=inst,
            institution_h_index=h or 0,
            h_index_missing=h is None,
        )
    return profiles


def check_window(window_years: int) -> int:
    if not isinstance(window_years, int) or not MIN_WINDOW <= window_years <= MAX_WINDOW:
        raise ConfigError(f"window_years must be an integer in [{MIN_WINDOW}, {MAX_WINDOW}], got {window_years!r}")
    return window_years


def is_traceable(rec: PaperRecord, profiles: Mapping[str, AuthorProfile], window_years: int) -> bool:
    t = rec.year
    for aid in rec.author_ids:
        prof = profiles.get(aid)
        if prof is None or prof.count_between(t - window_years, t - 1) < 1:
            return False
    return True


def filter_traceable_history(
    corpus: Corpus, profiles: Mapping[str, AuthorProfile], window_years: int = 5
) -> Corpus:
    """Keep papers whose every author published at least once in ``[t - window, t - 1]``."""
    check_window(window_years)
    return corpus.derive([r for r in corpus.records if is_traceable(r, profiles, window_years)])
