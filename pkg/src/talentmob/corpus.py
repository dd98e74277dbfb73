"""Publication records and per-author yearly panels.

Two line-delimited JSON input layouts are understood:

``openalex-works``
    OpenAlex work objects. Fields read: ``id``, ``publication_year``,
    ``authorships[].author.id``, ``authorships[].institutions[].{id,country_code}``,
    ``concepts[].{id,level}``, ``referenced_works`` and, as a citation
    fallback, ``counts_by_year[].{year,cited_by_count}``.

``flat``
    A minimal layout::

        {"id": "W1", "year": 2010,
         "authors": [{"id": "A1", "institutions": [{"id": "I1", "country": "US"}]}],
         "topics": [{"id": "T1", "level": 0}],
         "references": ["W0"]}
"""

from __future__ import annotations

import io
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

logger = logging.getLogger(__name__)

CORPUS_YEARS = (2000, 2021)
FORMATS = ("openalex-works", "flat")


@dataclass(frozen=True)
class Authorship:
    author_id: str
    institution_ids: tuple[str, ...] = ()


@dataclass
class PublicationRecord:
    paper_id: str
    year: int
    authorships: list[Authorship]
    institution_countries: dict[str, str | None] = field(default_factory=dict)
    topics: list[tuple[str, int]] = field(default_factory=list)
    references: list[str] = field(default_factory=list)
    cited_by_year: dict[int, int] = field(default_factory=dict)

    @property
    def author_ids(self) -> list[str]:
        return [a.author_id for a in self.authorships]


@dataclass
class CorpusStats:
    records_read: int = 0
    records_dropped: Counter = field(default_factory=Counter)
    unknown_country_institutions: int = 0
    authors_built: int = 0
    authors_eligible: int = 0
    citation_source: str = "references"

    def to_dict(self) -> dict:
        return {
            "records_read": self.records_read,
            "records_dropped": dict(sorted(self.records_dropped.items())),
            "unknown_country_institutions": self.unknown_country_institutions,
            "authors_built": self.authors_built,
            "authors_eligible": self.authors_eligible,
            "citation_source": self.citation_source,
        }


@dataclass
class AuthorYearPanel:
    author_id: str
    y0: int
    discipline: str | None
    pubs_by_year: dict[int, int]
    cites_by_year: dict[int, int]
    collaborators_by_year: dict[int, set[str]]
    institutions_by_year: dict[int, set[str]]
    collab_institutions_by_year: dict[int, set[str]]
    topics_by_year: dict[int, set[str]]
    teamsizes_by_year: dict[int, list[int]]
    country_by_year: dict[int, set[str]]

    @property
    def total_pubs(self) -> int:
        return sum(self.pubs_by_year.values())

    @property
    def total_cites(self) -> int:
        return sum(self.cites_by_year.values())

    @property
    def last_year(self) -> int:
        return max(self.pubs_by_year)

    def pubs(self, year: int) -> int:
        return self.pubs_by_year.get(year, 0)

    def cites(self, year: int) -> int:
        return self.cites_by_year.get(year, 0)

    def to_json(self) -> str:
        def years(d, conv):
            return {str(y): conv(d[y]) for y in sorted(d)}

        doc = {
            "author_id": self.author_id,
            "y0": self.y0,
            "discipline": self.discipline,
            "pubs_by_year": years(self.pubs_by_year, int),
            "cites_by_year": years(self.cites_by_year, int),
            "collaborators_by_year": years(self.collaborators_by_year, sorted),
            "institutions_by_year": years(self.institutions_by_year, sorted),
            "collab_institutions_by_year": years(self.collab_institutions_by_year, sorted),
            "topics_by_year": years(self.topics_by_year, sorted),
            "teamsizes_by_year": years(self.teamsizes_by_year, sorted),
            "country_by_year": years(self.country_by_year, sorted),
            "total_pubs": self.total_pubs,
            "total_cites": self.total_cites,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "AuthorYearPanel":
        doc = json.loads(line)

        def years(key, conv):
            return {int(y): conv(v) for y, v in doc[key].items()}

        return cls(
            author_id=doc["author_id"],
            y0=int(doc["y0"]),
            discipline=doc["discipline"],
            pubs_by_year=years("pubs_by_year", int),
            cites_by_year=years("cites_by_year", int),
            collaborators_by_year=years("collaborators_by_year", set),
            institutions_by_year=years("institutions_by_year", set),
            collab_institutions_by_year=years("collab_institutions_by_year", set),
            topics_by_year=years("topics_by_year", set),
            teamsizes_by_year=years("teamsizes_by_year", list),
            country_by_year=years("country_by_year", set),
        )


class _Drop(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _as_text_lines(stream) -> Iterator[str]:
    if isinstance(stream, (str, Path)):
        with open(stream, "rb") as fh:
            yield from _as_text_lines(fh)
        return
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8", errors="replace")
        yield raw


def _short_id(value) -> str:
    # OpenAlex ids arrive as URLs; keep the trailing key only
    s = str(value)
    return s.rsplit("/", 1)[-1] if s.startswith("http") else s


def _year(value) -> int:
    if value is None or value == "":
        raise _Drop("no_year")
    try:
        return int(value)
    except (TypeError, ValueError):
        raise _Drop("bad_year") from None


def _record_from_openalex(doc: dict) -> PublicationRecord:
    year = _year(doc.get("publication_year"))
    countries: dict[str, str | None] = {}
    authorships = []
    for a in doc.get("authorships") or []:
        author = (a or {}).get("author") or {}
        if not author.get("id"):
            continue
        insts = []
        for inst in a.get("institutions") or []:
            if not inst or not inst.get("id"):
                continue
            iid = _short_id(inst["id"])
            insts.append(iid)
            if countries.get(iid) is None:
                countries[iid] = inst.get("country_code") or None
        authorships.append((_short_id(author["id"]), insts))
    topics = [
        (_short_id(c["id"]), int(c.get("level", 0)))
        for c in doc.get("concepts") or []
        if c and c.get("id") is not None
    ]
    refs = [_short_id(r) for r in doc.get("referenced_works") or []]
    cited = {}
    for c in doc.get("counts_by_year") or []:
        if c and c.get("year") is not None:
            cited[int(c["year"])] = int(c.get("cited_by_count", 0))
    return _finish(_short_id(doc.get("id", "")), year, authorships, countries, topics, refs, cited)


def _record_from_flat(doc: dict) -> PublicationRecord:
    year = _year(doc.get("year"))
    countries: dict[str, str | None] = {}
    authorships = []
    for a in doc.get("authors") or []:
        if not a or not a.get("id"):
            continue
        insts = []
        for inst in a.get("institutions") or []:
            if isinstance(inst, str):
                inst = {"id": inst}
            iid = str(inst["id"])
            insts.append(iid)
            if countries.get(iid) is None:
                countries[iid] = inst.get("country") or None
        authorships.append((str(a["id"]), insts))
    topics = [(str(t["id"]), int(t.get("level", 0))) for t in doc.get("topics") or []]
    refs = [str(r) for r in doc.get("references") or []]
    cited = {int(y): int(n) for y, n in (doc.get("cited_by_year") or {}).items()}
    return _finish(str(doc.get("id", "")), year, authorships, countries, topics, refs, cited)


def _finish(paper_id, year, authorships, countries, topics, refs, cited) -> PublicationRecord:
    if not authorships:
        raise _Drop("no_authorships")
    if not paper_id:
        raise _Drop("no_id")
    if not CORPUS_YEARS[0] <= year <= CORPUS_YEARS[1]:
        raise _Drop("out_of_range")
    # collapse repeated author ids, keeping first-seen order and merging affiliations
    merged: dict[str, list[str]] = {}
    for aid, insts in authorships:
        bucket = merged.setdefault(aid, [])
        bucket.extend(i for i in insts if i not in bucket)
    return PublicationRecord(
        paper_id=paper_id,
        year=year,
        authorships=[Authorship(aid, tuple(insts)) for aid, insts in merged.items()],
        institution_countries=countries,
        topics=list(dict.fromkeys(topics)),
        references=list(dict.fromkeys(r for r in refs if r and r != paper_id)),
        cited_by_year=cited,
    )


def parse_works(
    stream: IO[bytes] | str | Path,
    format: str = "openalex-works",
    stats: CorpusStats | None = None,
) -> Iterator[PublicationRecord]:
    """Yield publication records from a JSONL stream, in input order.

    Bad lines are skipped and tallied in ``stats.records_dropped`` by reason
    (``malformed_json``, ``no_year``, ``no_authorships``, ``out_of_range``...).
    I/O errors on the stream itself propagate.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown works format {format!r}; expected one of {FORMATS}")
    stats = stats if stats is not None else CorpusStats()
    convert = _record_from_openalex if format == "openalex-works" else _record_from_flat
    for line in _as_text_lines(stream):
        if not line.strip():
            continue
        stats.records_read += 1
        try:
            doc = json.loads(line)
            if not isinstance(doc, dict):
                raise _Drop("malformed_json")
            record = convert(doc)
        except json.JSONDecodeError:
            stats.records_dropped["malformed_json"] += 1
            continue
        except _Drop as drop:
            stats.records_dropped[drop.reason] += 1
            continue
        stats.unknown_country_institutions += sum(
            1 for c in record.institution_countries.values() if c is None
        )
        yield record


def parse_works_text(text: str, format: str = "flat", stats: CorpusStats | None = None):
    """Convenience wrapper for in-memory JSONL text."""
    return parse_works(io.BytesIO(text.encode()), format=format, stats=stats)


def _modal(counter: Counter) -> str | None:
    if not counter:
        return None
    best = max(counter.values())
    return min(k for k, v in counter.items() if v == best)


def build_panels(
    records: Iterable[PublicationRecord],
    stats: CorpusStats | None = None,
    exclude_self_citations: bool = False,
) -> dict[str, AuthorYearPanel]:
    """Aggregate records into one yearly panel per author, keyed and sorted by author id.

    A citation in year t is a corpus paper published in t that lists one of
    the author's papers among its references; a citing paper referencing k of
    the author's papers contributes k. References to papers outside the
    corpus are ignored. When no record carries references but OpenAlex
    ``counts_by_year`` data is present, those counts are used instead.
    """
    stats = stats if stats is not None else CorpusStats()
    records = sorted(records, key=lambda r: r.paper_id)
    by_id = {r.paper_id: r for r in records}

    pubs: dict[str, Counter] = defaultdict(Counter)
    cites: dict[str, Counter] = defaultdict(Counter)
    collab: dict[str, dict] = defaultdict(lambda: defaultdict(set))
    insts: dict[str, dict] = defaultdict(lambda: defaultdict(set))
    cinsts: dict[str, dict] = defaultdict(lambda: defaultdict(set))
    topics: dict[str, dict] = defaultdict(lambda: defaultdict(set))
    teams: dict[str, dict] = defaultdict(lambda: defaultdict(list))
    countries: dict[str, dict] = defaultdict(lambda: defaultdict(set))
    disc: dict[str, Counter] = defaultdict(Counter)

    for r in records:
        authors = r.author_ids
        paper_insts = {i for a in r.authorships for i in a.institution_ids}
        level0 = {t for t, lvl in r.topics if lvl == 0}
        fine = {t for t, lvl in r.topics if lvl >= 2}
        for a in r.authorships:
            aid, y = a.author_id, r.year
            pubs[aid][y] += 1
            collab[aid][y].update(x for x in authors if x != aid)
            insts[aid][y].update(a.institution_ids)
            cinsts[aid][y].update(paper_insts)
            topics[aid][y].update(fine)
            teams[aid][y].append(len(authors))
            countries[aid][y].update(
                c for c in (r.institution_countries.get(i) for i in a.institution_ids) if c
            )
            disc[aid].update(level0)

    has_refs = any(r.references for r in records)
    if has_refs:
        for citing in records:
            citing_authors = set(citing.author_ids)
            for ref in citing.references:
                cited = by_id.get(ref)
                if cited is None:
                    continue
                for aid in cited.author_ids:
                    if exclude_self_citations and aid in citing_authors:
                        continue
                    cites[aid][citing.year] += 1
    elif any(r.cited_by_year for r in records):
        stats.citation_source = "counts_by_year"
        for r in records:
            for aid in r.author_ids:
                for y, n in r.cited_by_year.items():
                    cites[aid][y] += n

    panels = {}
    for aid in sorted(pubs):
        panels[aid] = AuthorYearPanel(
            author_id=aid,
            y0=min(pubs[aid]),
            discipline=_modal(disc[aid]),
            pubs_by_year=dict(sorted(pubs[aid].items())),
            cites_by_year={y: n for y, n in sorted(cites[aid].items()) if n},
            collaborators_by_year=dict(sorted(collab[aid].items())),
            institutions_by_year=dict(sorted(insts[aid].items())),
            collab_institutions_by_year=dict(sorted(cinsts[aid].items())),
            topics_by_year=dict(sorted(topics[aid].items())),
            teamsizes_by_year={y: sorted(v) for y, v in sorted(teams[aid].items())},
            country_by_year={y: s for y, s in sorted(countries[aid].items()) if s},
        )
    stats.authors_built = len(panels)
    return panels


def filter_eligible(
    panels: dict[str, AuthorYearPanel],
    min_pubs: int = 10,
    start_range: tuple[int, int | None] = (2000, None),
    roster: Iterable[str] = (),
    roster_start_range: tuple[int, int] = (2000, 2015),
    corpus_end: int = CORPUS_YEARS[1],
    stats: CorpusStats | None = None,
) -> dict[str, AuthorYearPanel]:
    """Keep authors with at least ``min_pubs`` papers and a career start in range.

    Roster members use ``roster_start_range``; everyone else uses
    ``start_range`` with an open upper end clipped to ``corpus_end``.
    """
    lo, hi = start_range
    hi = corpus_end if hi is None else min(hi, corpus_end)
    if lo > hi or roster_start_range[0] > roster_start_range[1]:
        raise ValueError("start-year bounds are not ordered")
    roster = set(roster)
    kept = {}
    for aid, p in panels.items():
        r_lo, r_hi = roster_start_range if aid in roster else (lo, hi)
        if p.total_pubs >= min_pubs and r_lo <= p.y0 <= r_hi:
            kept[aid] = p
    if stats is not None:
        stats.authors_eligible = len(kept)
    if not kept:
        logger.warning("no author passed the eligibility filter (min_pubs=%d)", min_pubs)
    return kept


def write_panels(panels: dict[str, AuthorYearPanel], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for aid in sorted(panels):
            fh.write(panels[aid].to_json() + "\n")


def read_panels(path: str | Path) -> dict[str, AuthorYearPanel]:
    panels = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                p = AuthorYearPanel.from_json(line)
                panels[p.author_id] = p
    return panels
