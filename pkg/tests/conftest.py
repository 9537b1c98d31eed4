import json

import pytest

from teamsd.corpus import AuthorRef, PaperRecord


def rec(pid, year, authors, refs=(), kind="research_article", discipline="Physics", title="A title"):
    return PaperRecord(
        paper_id=pid,
        title=title,
        year=year,
        discipline=discipline,
        authors=tuple(AuthorRef(a) if isinstance(a, str) else a for a in authors),
        references=tuple(refs),
        article_type=kind,
    )


def jsonl(objs):
    return [json.dumps(o) for o in objs]


@pytest.fixture
def make_record():
    return rec


# -- acceptance summary -------------------------------------------------------

_CRITERIA: dict[int, dict] = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call" and not (call.when == "setup" and call.excinfo):
        return
    entry = _CRITERIA.setdefault(mark.args[0], {"ok": True, "notes": [], "ran": False})
    entry["ran"] = True
    if call.excinfo is not None:
        entry["ok"] = False
        entry["notes"].append(f"{item.name}: {call.excinfo.typename}")
    entry["notes"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {'; '.join(e['notes'])}")
