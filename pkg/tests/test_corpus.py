import unicodedata

import pytest

from hybridsearch.corpus import (Grade, RelevanceLabel, build_training_pairs, load_corpus, load_corpus_with_stats,
                                 normalize_text)
from hybridsearch.errors import CorpusError


def write(path, rows):
    path.write_text("".join("\t".join(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def tiny(tmp_path):
    products = write(tmp_path / "p.tsv", [["product_name", "product_id", "product_description"],
                                          ["Oak  Chair", "1", "solid oak"],
                                          ["Red Sofa", "2", ""],
                                          ["Blue Lamp", "3", "Bright"]])
    queries = write(tmp_path / "q.tsv", [["query", "query_id"], ["oak chair", "7"]])
    labels = write(tmp_path / "l.tsv", [["id", "query_id", "product_id", "label"],
                                        ["0", "7", "1", "Exact"],
                                        ["1", "7", "2", "irrelevant"],
                                        ["2", "7", "99", "Partial"]])
    return products, queries, labels


@pytest.mark.parametrize("raw, expected", [
    ("New  Balance\tShoes ", "new balance shoes"),
    ("", ""),
    ("Café CHAIR", "café chair"),
])
def test_normalize_text(raw, expected):
    assert normalize_text(raw) == expected


def test_normalize_composes_decomposed_input():
    decomposed = "Café CHAIR"
    out = normalize_text(decomposed)
    assert out == "café chair"
    assert unicodedata.is_normalized("NFC", out)


def test_load_columns_by_header_name_and_drop_dangling(tiny, caplog):
    products, queries, labels, stats = load_corpus_with_stats(*tiny)
    assert [p.product_id for p in products] == [1, 2, 3]
    assert products[0].title == "oak chair"
    assert products[0].description == "solid oak"
    assert queries[0].query_id == 7
    assert len(labels) == 2
    assert stats.dropped_labels == 1
    assert "unknown id" in caplog.text
    assert {l.grade for l in labels} == {Grade.EXACT, Grade.IRRELEVANT}


def test_missing_column_names_it(tmp_path, tiny):
    bad = write(tmp_path / "bad.tsv", [["product_id", "name"], ["1", "x"]])
    with pytest.raises(CorpusError, match="product_name"):
        load_corpus(bad, tiny[1], tiny[2])


def test_malformed_row_reports_line_number(tmp_path, tiny):
    bad = write(tmp_path / "bad.tsv", [["product_id", "product_name"], ["1", "chair"], ["x", "sofa"]])
    _, _, _, stats = load_corpus_with_stats(bad, tiny[1], tiny[2])
    assert stats.rejected_rows and stats.rejected_rows[0][1] == 3
    with pytest.raises(CorpusError, match=":3:"):
        load_corpus(bad, tiny[1], tiny[2], strict=True)


def test_empty_label_file_warns(tmp_path, tiny, caplog):
    empty = tmp_path / "empty.tsv"
    empty.write_text("", encoding="utf-8")
    products, queries, labels = load_corpus(tiny[0], tiny[1], empty)
    assert labels == [] and len(products) == 3
    assert "empty label file" in caplog.text


def test_reload_is_deterministic(tiny):
    assert load_corpus(*tiny) == load_corpus(*tiny)


def test_synthetic_wands_loads(synthetic_corpus):
    assert len(synthetic_corpus.products) == 300
    assert len(synthetic_corpus.queries) == 30


def labels(n_exact, n_irrelevant, n_partial=0):
    out = [RelevanceLabel(1, i, Grade.EXACT) for i in range(n_exact)]
    out += [RelevanceLabel(2, 1000 + i, Grade.IRRELEVANT) for i in range(n_irrelevant)]
    out += [RelevanceLabel(3, 5000 + i, Grade.PARTIAL) for i in range(n_partial)]
    return out


def test_balancing_downsamples_majority():
    pairs = build_training_pairs(labels(100, 300, 17), seed=7)
    assert sum(p.target == 1 for p in pairs) == 100
    assert sum(p.target == -1 for p in pairs) == 100


def test_balanced_input_kept_whole():
    pairs = build_training_pairs(labels(5, 5), seed=0)
    assert len(pairs) == 10


def test_unbalanceable_is_fatal():
    with pytest.raises(CorpusError):
        build_training_pairs(labels(10, 0), seed=0)


def test_pairs_deterministic_and_traceable():
    src = labels(40, 90, 5)
    a = build_training_pairs(src, seed=11)
    assert a == build_training_pairs(src, seed=11)
    b = build_training_pairs(src, seed=12)
    assert sorted(p.target for p in a) == sorted(p.target for p in b)
    grade = {(l.query_id, l.product_id): l.grade for l in src}
    for p in a:
        assert p.target in (1, -1)
        assert grade[(p.query_id, p.product_id)] is (Grade.EXACT if p.target == 1 else Grade.IRRELEVANT)
