"""Bibliographic corpus ingestion, author histories, and dataset splits."""
from __future__ import annotations

import csv
import io
import xml.parsers.expat
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping

from .errors import RowError, SchemaError, UnknownEntityError, XmlParseError

RECORD_TAGS = frozenset({
    "article", "inproceedings", "proceedings", "incollection",
    "phdthesis", "mastersthesis", "book",
})

VENUE_TAGS = ("journal", "booktitle")

TABULAR_COLUMNS = ["author_id", "year", "venue_id", "pub_key"]

YEAR_MIN_DEFAULT = 1900
YEAR_MAX_DEFAULT = 2100


@dataclass(frozen=True, order=True)
class PublicationRecord:
    author_id: str
    year: int
    venue_id: str
    pub_key: str


@dataclass
class IngestStats:
    """Tallies of records skipped during parsing."""
    emitted: int = 0
    skipped_no_year: int = 0
    skipped_no_author: int = 0
    skipped_no_key: int = 0
    skipped_year_range: int = 0

    @property
    def skipped(self) -> int:
        return (self.skipped_no_year + self.skipped_no_author
                + self.skipped_no_key + self.skipped_year_range)


@dataclass(frozen=True)
class AuthorHistory:
    author_id: str
    counts_by_year: Mapping[int, int]

    def count_in(self, lo: int, hi: int) -> int:
        """Publications with year in [lo, hi]."""
        return sum(c for y, c in self.counts_by_year.items() if lo <= y <= hi)

    def total(self) -> int:
        return sum(self.counts_by_year.values())


@dataclass(frozen=True)
class DatasetSplit:
    history_window: tuple[int, int]    # [T0, T1], inclusive
    response_window: tuple[int, int]   # (start, end], annual intervals
    authors: frozenset
    role: str                          # "training" | "test"


class _DblpHandler:
    """Expat callbacks collecting authorship records from dblp-style XML."""

    def __init__(self, entities, year_min, year_max, stats, out):
        self.entities = entities or {}
        self.year_min = year_min
        self.year_max = year_max
        self.stats = stats
        self.out = out
        self.depth = 0
        self.in_record = False
        self.key = None
        self.authors: list[str] = []
        self.year_text: str | None = None
        self.venue: str | None = None
        self.text_target: str | None = None
        self.buf: list[str] = []

    def start(self, tag, attrs):
        self.depth += 1
        if self.depth == 2 and tag in RECORD_TAGS:
            self.in_record = True
            self.key = attrs.get("key")
            self.authors = []
            self.year_text = None
            self.venue = None
        elif (self.in_record and self.depth == 3
              and (tag == "author" or tag == "year" or tag in VENUE_TAGS)):
            self.text_target = tag
            self.buf = []

    def data(self, text):
        if self.text_target is not None:
            self.buf.append(text)

    def skipped_entity(self, name, is_parameter_entity):
        # Entities not declared in the document land here (UseForeignDTD).
        if is_parameter_entity:
            return
        if name in self.entities:
            self.data(self.entities[name])
        else:
            raise UnknownEntityError(name)

    def end(self, tag):
        if self.depth == 3 and self.text_target == tag:
            text = "".join(self.buf).strip()
            if tag == "author":
                if text:
                    self.authors.append(text)
            elif tag == "year":
                self.year_text = text
            else:
                self.venue = text
            self.text_target = None
        elif self.depth == 2 and tag in RECORD_TAGS and self.in_record:
            self._emit()
            self.in_record = False
        self.depth -= 1

    def _emit(self):
        if self.key is None:
            self.stats.skipped_no_key += 1
            return
        if not self.authors:
            self.stats.skipped_no_author += 1
            return
        try:
            year = int(self.year_text) if self.year_text else None
        except ValueError:
            year = None
        if year is None:
            self.stats.skipped_no_year += 1
            return
        if not (self.year_min <= year <= self.year_max):
            self.stats.skipped_year_range += 1
            return
        venue = self.venue or ""
        for author in self.authors:
            self.out.append(PublicationRecord(author, year, venue, self.key))
            self.stats.emitted += 1


def parse_dblp_xml(
    source: IO[bytes] | bytes,
    entities: Mapping[str, str] | None = None,
    year_min: int = YEAR_MIN_DEFAULT,
    year_max: int = YEAR_MAX_DEFAULT,
    stats: IngestStats | None = None,
    chunk_size: int = 1 << 16,
) -> Iterator[PublicationRecord]:
    """Stream authorship records from dblp-style XML, one per (author, pub).

    Memory stays bounded: the document is fed to expat in chunks and only
    the current record element is buffered. Records missing a year, author
    or key attribute are skipped and tallied in ``stats``.
    """
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(bytes(source))
    if stats is None:
        stats = IngestStats()
    out: list[PublicationRecord] = []
    handler = _DblpHandler(entities, year_min, year_max, stats, out)
    parser = xml.parsers.expat.ParserCreate()
    parser.buffer_text = True
    # Pretend an external DTD exists so undefined entity references reach
    # the skipped-entity handler instead of aborting the parse.
    parser.UseForeignDTD(True)
    parser.StartElementHandler = handler.start
    parser.EndElementHandler = handler.end
    parser.CharacterDataHandler = handler.data
    parser.SkippedEntityHandler = handler.skipped_entity
    while True:
        chunk = source.read(chunk_size)
        try:
            parser.Parse(chunk, not chunk)
        except xml.parsers.expat.ExpatError as exc:
            raise XmlParseError(
                f"malformed XML at byte {parser.ErrorByteIndex}: {exc}",
                byte_offset=parser.ErrorByteIndex,
            ) from exc
        yield from out
        out.clear()
        if not chunk:
            break


def load_entity_table(path) -> dict[str, str]:
    """Read an entity table file: one `name value` pair per line."""
    table = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            name, _, value = line.partition(" ")
            table[name] = value.strip()
    return table


def parse_tabular(
    source: IO[bytes] | IO[str] | bytes,
    delimiter: str = ",",
    year_min: int = YEAR_MIN_DEFAULT,
    year_max: int = YEAR_MAX_DEFAULT,
    stats: IngestStats | None = None,
) -> Iterator[PublicationRecord]:
    """Parse the tabular authorship format (header `author_id,year,venue_id,pub_key`)."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(bytes(source))
    if isinstance(source.read(0), bytes):
        source = io.TextIOWrapper(source, encoding="utf-8")
    if stats is None:
        stats = IngestStats()
    reader = csv.reader(source, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file: missing header row")
    if header != TABULAR_COLUMNS:
        raise SchemaError(
            f"expected columns {TABULAR_COLUMNS}, got {header}"
        )
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise RowError(f"expected 4 fields, got {len(row)}", lineno)
        author_id, year_text, venue_id, pub_key = row
        try:
            year = int(year_text)
        except ValueError:
            raise RowError(f"non-integer year {year_text!r}", lineno)
        if not (year_min <= year <= year_max):
            stats.skipped_year_range += 1
            continue
        stats.emitted += 1
        yield PublicationRecord(author_id, year, venue_id, pub_key)


def build_histories(records: Iterable[PublicationRecord]) -> dict[str, AuthorHistory]:
    """Aggregate records into per-author annual counts, deduplicating on
    (author_id, pub_key)."""
    seen: set[tuple[str, str]] = set()
    counts: dict[str, dict[int, int]] = {}
    for rec in records:
        pair = (rec.author_id, rec.pub_key)
        if pair in seen:
            continue
        seen.add(pair)
        by_year = counts.setdefault(rec.author_id, {})
        by_year[rec.year] = by_year.get(rec.year, 0) + 1
    return {
        aid: AuthorHistory(aid, dict(sorted(by_year.items())))
        for aid, by_year in counts.items()
    }


def make_split(
    histories: Mapping[str, AuthorHistory],
    role: str,
    history_window: tuple[int, int],
    response_window: tuple[int, int],
    membership_years: tuple[int, int] | None = None,
) -> DatasetSplit:
    """Select the authors belonging to a training or test dataset.

    Training membership: at least one publication in [T0, t_{L-1}].
    Test membership: at least one publication in the membership window
    (default: the single year t_X, i.e. the start of the response window).
    """
    from .errors import ConfigError

    t0, t1 = history_window
    r_start, r_end = response_window
    if role == "training":
        if not (t0 < t1 < r_end) or t1 != r_start:
            raise ConfigError(
                f"training windows out of order: [{t0},{t1}], ({r_start},{r_end}]"
            )
        member_lo, member_hi = membership_years or (t0, r_end - 1)
    elif role == "test":
        if not (t0 < r_start < r_end):
            raise ConfigError(
                f"test windows out of order: [{t0},{t1}], ({r_start},{r_end}]"
            )
        member_lo, member_hi = membership_years or (r_start, r_start)
    else:
        raise ConfigError(f"unknown split role {role!r}")
    authors = frozenset(
        aid for aid, h in histories.items()
        if h.count_in(member_lo, member_hi) >= 1
    )
    return DatasetSplit(
        history_window=(t0, t1),
        response_window=(r_start, r_end),
        authors=authors,
        role=role,
    )


def write_histories(histories: Mapping[str, AuthorHistory], path) -> None:
    """Canonical on-disk form: `author_id,year,count` sorted by (author_id, year)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("author_id,year,count\n")
        for aid in sorted(histories):
            for year, count in sorted(histories[aid].counts_by_year.items()):
                fh.write(f"{aid},{year},{count}\n")


def read_histories(path) -> dict[str, AuthorHistory]:
    counts: dict[str, dict[int, int]] = {}
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["author_id", "year", "count"]:
            raise SchemaError(f"bad history header {header}")
        for aid, year, count in reader:
            counts.setdefault(aid, {})[int(year)] = int(count)
    return {aid: AuthorHistory(aid, by) for aid, by in counts.items()}
