import io
import re
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pubforge import corpus
from pubforge.errors import (
    ConfigError,
    RowError,
    SchemaError,
    UnknownEntityError,
    XmlParseError,
)


def _xml(body: str) -> bytes:
    return f"<dblp>{body}</dblp>".encode()


class TestParseDblpXml:
    def test_two_articles_one_with_two_authors(self):
        doc = _xml(
            '<article key="k1"><author>A</author><author>B</author>'
            "<year>1999</year></article>"
            '<article key="k2"><author>C</author><year>2000</year></article>'
        )
        records = list(corpus.parse_dblp_xml(doc))
        assert len(records) == 3
        assert {r.author_id for r in records} == {"A", "B", "C"}

    def test_missing_year_is_skipped_and_tallied(self):
        doc = _xml('<article key="k1"><author>A</author></article>')
        stats = corpus.IngestStats()
        assert list(corpus.parse_dblp_xml(doc, stats=stats)) == []
        assert stats.skipped_no_year == 1
        assert stats.skipped == 1

    def test_empty_document(self):
        assert list(corpus.parse_dblp_xml(b"<dblp></dblp>")) == []

    def test_missing_author_tallied(self):
        doc = _xml('<article key="k1"><year>1999</year></article>')
        stats = corpus.IngestStats()
        assert list(corpus.parse_dblp_xml(doc, stats=stats)) == []
        assert stats.skipped_no_author == 1

    def test_year_out_of_bounds_tallied(self):
        doc = _xml('<article key="k1"><author>A</author><year>1899</year></article>')
        stats = corpus.IngestStats()
        assert list(corpus.parse_dblp_xml(doc, stats=stats)) == []
        assert stats.skipped_year_range == 1

    def test_malformed_xml_reports_byte_offset(self):
        with pytest.raises(XmlParseError) as err:
            list(corpus.parse_dblp_xml(b'<dblp><article key="k">'))
        assert err.value.byte_offset is not None

    def test_unknown_entity_named_in_error(self):
        doc = _xml('<article key="k"><author>H&auml;k</author><year>1999</year></article>')
        with pytest.raises(UnknownEntityError) as err:
            list(corpus.parse_dblp_xml(doc))
        assert err.value.entity == "auml"

    def test_entity_table_resolves(self):
        doc = _xml('<article key="k"><author>H&auml;k</author><year>1999</year></article>')
        records = list(corpus.parse_dblp_xml(doc, entities={"auml": "ä"}))
        assert records[0].author_id == "Häk"

    def test_standard_entities_always_resolve(self):
        doc = _xml('<article key="k"><author>A &amp; B</author><year>1999</year></article>')
        records = list(corpus.parse_dblp_xml(doc))
        assert records[0].author_id == "A & B"

    def test_non_record_elements_ignored(self):
        doc = _xml(
            '<www key="hp"><author>Ghost</author><year>1997</year></www>'
            '<article key="k"><author>A</author><year>1998</year></article>'
        )
        records = list(corpus.parse_dblp_xml(doc))
        assert [r.author_id for r in records] == ["A"]

    def test_fixture_file(self, fixtures_dir):
        stats = corpus.IngestStats()
        with open(fixtures_dir / "mini_dblp.xml", "rb") as fh:
            records = list(corpus.parse_dblp_xml(fh, stats=stats))
        assert len(records) == 8
        assert stats.skipped_no_year == 1


class TestParseTabular:
    def test_three_rows(self):
        data = (
            "author_id,year,venue_id,pub_key\n"
            "A,1999,V,k1\nB,1999,V,k1\nC,2000,W,k2\n"
        ).encode()
        assert len(list(corpus.parse_tabular(data))) == 3

    def test_non_integer_year_names_line(self):
        data = ("author_id,year,venue_id,pub_key\nA,199X,V,k1\n").encode()
        with pytest.raises(RowError) as err:
            list(corpus.parse_tabular(data))
        assert err.value.line == 2

    def test_header_only(self):
        data = b"author_id,year,venue_id,pub_key\n"
        assert list(corpus.parse_tabular(data)) == []

    def test_missing_column_schema_error(self):
        with pytest.raises(SchemaError):
            list(corpus.parse_tabular(b"author_id,year,venue_id\nA,1999,V\n"))

    def test_custom_delimiter(self):
        data = b"author_id\tyear\tvenue_id\tpub_key\nA\t1999\tV\tk1\n"
        # header with wrong delimiter fails the schema check
        with pytest.raises(SchemaError):
            list(corpus.parse_tabular(data))
        records = list(corpus.parse_tabular(data, delimiter="\t"))
        assert records[0].pub_key == "k1"

    def test_xml_and_tabular_fixture_agree(self, fixtures_dir):
        with open(fixtures_dir / "mini_dblp.xml", "rb") as fh:
            from_xml = Counter(corpus.parse_dblp_xml(fh))
        with open(fixtures_dir / "mini_corpus.csv", "rb") as fh:
            from_csv = Counter(corpus.parse_tabular(fh))
        assert from_xml == from_csv


class TestBuildHistories:
    def test_counts_by_year(self):
        records = [
            corpus.PublicationRecord("A", 1995, "V", "k1"),
            corpus.PublicationRecord("A", 1995, "V", "k2"),
            corpus.PublicationRecord("A", 1996, "V", "k3"),
        ]
        histories = corpus.build_histories(records)
        assert histories["A"].counts_by_year == {1995: 2, 1996: 1}

    def test_duplicate_author_key_counted_once(self):
        rec = corpus.PublicationRecord("A", 1995, "V", "k1")
        histories = corpus.build_histories([rec, rec])
        assert histories["A"].total() == 1

    def test_shared_publication_counts_for_each_author(self):
        records = [
            corpus.PublicationRecord("A", 1995, "V", "k1"),
            corpus.PublicationRecord("B", 1995, "V", "k1"),
        ]
        histories = corpus.build_histories(records)
        assert histories["A"].total() == 1
        assert histories["B"].total() == 1

    def test_empty_input(self):
        assert corpus.build_histories([]) == {}

    @given(st.lists(st.tuples(
        st.sampled_from(["A", "B", "C"]),
        st.integers(min_value=1990, max_value=2010),
        st.integers(min_value=0, max_value=30),
    ), max_size=40))
    def test_cumulative_matches_brute_force(self, raw):
        records = [
            corpus.PublicationRecord(a, y, "V", f"k{k}") for a, y, k in raw
        ]
        histories = corpus.build_histories(records)
        distinct: dict = {}
        for r in records:   # first occurrence wins, as in deduplication
            distinct.setdefault((r.author_id, r.pub_key), r.year)
        for aid, h in histories.items():
            for probe in range(1990, 2011):
                brute = sum(
                    1 for (a, _k), y in distinct.items()
                    if a == aid and y <= probe
                )
                got = sum(c for y, c in h.counts_by_year.items() if y <= probe)
                assert got == brute


class TestMakeSplit:
    def _histories(self, fixtures_dir):
        with open(fixtures_dir / "mini_corpus.csv", "rb") as fh:
            return corpus.build_histories(corpus.parse_tabular(fh))

    def test_author_before_t0_excluded(self, fixtures_dir):
        histories = self._histories(fixtures_dir)
        split = corpus.make_split(
            histories, "training",
            history_window=(1951, 1995), response_window=(1995, 2000),
        )
        assert "Dan" not in split.authors   # only pub is from 1950

    def test_membership_year_includes(self):
        histories = corpus.build_histories([
            corpus.PublicationRecord("A", 2000, "V", "k1"),
        ])
        split = corpus.make_split(
            histories, "test",
            history_window=(1951, 1995), response_window=(2000, 2005),
        )
        assert split.authors == {"A"}

    def test_golden_training_split(self, fixtures_dir):
        histories = self._histories(fixtures_dir)
        split = corpus.make_split(
            histories, "training",
            history_window=(1990, 1995), response_window=(1995, 2000),
        )
        # independent oracle: scan the raw fixture text for years in [1990, 1999]
        raw = (fixtures_dir / "mini_corpus.csv").read_text().splitlines()[1:]
        golden = set()
        for line in raw:
            author, year = line.split(",")[0], int(line.split(",")[1])
            if 1990 <= year <= 1999:
                golden.add(author)
        assert set(split.authors) == golden

    def test_windows_out_of_order(self):
        with pytest.raises(ConfigError):
            corpus.make_split(
                {}, "training",
                history_window=(1995, 1990), response_window=(1990, 2000),
            )

    @given(st.permutations(list(range(8))))
    @settings(max_examples=20)
    def test_order_independence(self, perm):
        base = [
            corpus.PublicationRecord(f"A{i % 3}", 1990 + i, "V", f"k{i}")
            for i in range(8)
        ]
        records = [base[i] for i in perm]
        histories = corpus.build_histories(records)
        split = corpus.make_split(
            histories, "training",
            history_window=(1985, 1993), response_window=(1993, 1998),
        )
        reference = corpus.make_split(
            corpus.build_histories(base), "training",
            history_window=(1985, 1993), response_window=(1993, 1998),
        )
        assert split == reference


class TestHistorySerialization:
    def test_round_trip_byte_stable(self, fixtures_dir, tmp_path):
        with open(fixtures_dir / "mini_corpus.csv", "rb") as fh:
            histories = corpus.build_histories(corpus.parse_tabular(fh))
        p1 = tmp_path / "h1.csv"
        p2 = tmp_path / "h2.csv"
        corpus.write_histories(histories, p1)
        corpus.write_histories(corpus.read_histories(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()
