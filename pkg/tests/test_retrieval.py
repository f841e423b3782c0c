import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cika.retrieval import (Bm25Index, bm25_weight, CorpusDoc, CorpusError, Hit, extract_concepts, ingest, load_any, load_index,
                            query, save_index, tokenize)

import oracles

DOCS = [
    {"id": "d1", "text": "The quadratic formula solves quadratic equations.", "concept_tags": ["Quadratic Formula"]},
    {"id": "d2", "text": "Vieta's formulas relate roots of $x^2+bx+c$ to coefficients.",
     "concept_tags": ["Vieta's Formulas", "Polynomials"]},
    {"id": "d3", "text": "Modular arithmetic: compute 7 mod 3 for the roots.", "concept_tags": ["Modular Arithmetic"]},
]
# hand tokenization
TOKENS = {
    "d1": ["the", "quadratic", "formula", "solves", "quadratic", "equations"],
    "d2": ["$x^2+bx+c$", "vieta", "formulas", "relate", "roots", "of", "to", "coefficients"],
    "d3": ["modular", "arithmetic", "compute", "mod", "for", "the", "roots"],
}
AVGDL = (6 + 8 + 7) / 3


def write(path, docs):
    path.write_text("".join(json.dumps(d) + "\n" for d in docs))
    return path


@pytest.fixture
def index(tmp_path):
    return ingest(write(tmp_path / "corpus.jsonl", DOCS))


def test_tokenizer_matches_hand_tokens():
    for doc in DOCS:
        assert tokenize(doc["text"]) == TOKENS[doc["id"]]
    assert tokenize("Let $$\\sum a_i$$ and $X$") == ["$$\\sum a_i$$", "$X$", "let", "and"]


def test_document_frequencies(index):
    assert index.df("the") == 2 and index.df("roots") == 2 and index.df("quadratic") == 1
    assert index.df("$x^2+bx+c$") == 1 and index.df("missing") == 0
    assert index.lengths == [6, 8, 7] and index.avgdl == pytest.approx(AVGDL)


def test_hand_computed_scores(index):
    hits = query(index, "quadratic", 5)
    assert [h.doc_id for h in hits] == ["d1"]
    assert hits[0].score == pytest.approx(oracles.bm25_term(2, 1, 3, 6, AVGDL), abs=1e-9)
    hits = query(index, "roots", 5)
    assert [h.doc_id for h in hits] == ["d3", "d2"]  # shorter document wins
    assert hits[0].score == pytest.approx(oracles.bm25_term(1, 2, 3, 7, AVGDL), abs=1e-9)
    assert hits[1].score == pytest.approx(oracles.bm25_term(1, 2, 3, 8, AVGDL), abs=1e-9)


def test_multi_term_score_sums_and_ignores_repeats(index):
    hits = query(index, "roots of roots $x^2+bx+c$", 5)
    expected = (oracles.bm25_term(1, 2, 3, 8, AVGDL) + oracles.bm25_term(1, 1, 3, 8, AVGDL)
                + oracles.bm25_term(1, 1, 3, 8, AVGDL))
    assert hits[0].doc_id == "d2" and hits[0].score == pytest.approx(expected, abs=1e-9)


def test_k_larger_than_corpus_and_bad_k(index):
    assert {h.doc_id for h in query(index, "the roots quadratic", 50)} == {"d1", "d2", "d3"}
    with pytest.raises(ValueError):
        query(index, "roots", 0)


def test_self_retrieval(index):
    for doc in DOCS:
        assert query(index, doc["text"], 1)[0].doc_id == doc["id"]


def test_extract_concepts(index):
    assert extract_concepts([Hit("a", 2.0, ("a", "b")), Hit("b", 1.0, ("b", "c"))]) == ["a", "b", "c"]
    assert extract_concepts([Hit("a", 1.0, ())]) == []
    assert extract_concepts(query(index, "roots", 5)) == ["Modular Arithmetic", "Vieta's Formulas", "Polynomials"]


def test_empty_corpus(tmp_path):
    index = ingest(write(tmp_path / "empty.jsonl", []))
    assert len(index) == 0 and query(index, "anything", 3) == []


def test_duplicate_id_names_both_lines(tmp_path):
    path = write(tmp_path / "dup.jsonl", [DOCS[0], DOCS[1], DOCS[0]])
    with pytest.raises(CorpusError, match="lines 1 and 3"):
        ingest(path)


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(DOCS[0]) + "\n{not json\n")
    with pytest.raises(CorpusError, match=":2:"):
        ingest(path)
    path.write_text(json.dumps({"id": "x"}) + "\n")
    with pytest.raises(CorpusError, match=":1:"):
        ingest(path)


def test_index_roundtrip(index, tmp_path):
    path = tmp_path / "index.json"
    save_index(index, path)
    again = load_index(path)
    assert again.to_dict() == index.to_dict()
    assert query(again, "roots", 3) == query(index, "roots", 3)
    assert load_any(path).to_dict() == index.to_dict()
    doc = json.loads(path.read_text())
    assert doc["format"] == "cika-bm25-index" and doc["version"] == 1
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(CorpusError, match="version"):
        load_index(path)


def test_order_independent_ingest(tmp_path):
    shuffled = DOCS[:]
    random.Random(3).shuffle(shuffled)
    a = ingest(write(tmp_path / "a.jsonl", DOCS))
    b = ingest(write(tmp_path / "b.jsonl", shuffled))
    assert a.to_dict() == b.to_dict()


words = st.lists(st.sampled_from(["alpha", "beta", "gamma", "delta", "eps", "zeta"]), min_size=1, max_size=12)


@given(st.integers(0, 30), st.integers(0, 40), st.integers(1, 50), st.integers(1, 100), st.floats(1.0, 60.0))
def test_adding_occurrence_never_lowers_score(tf, extra, df, n_docs, avgdl):
    # one more occurrence also lengthens the document by one token
    dl = tf + extra
    df = min(df, n_docs)
    base = bm25_weight(tf, df, n_docs, dl, avgdl) if dl else 0.0
    assert bm25_weight(tf + 1, df, n_docs, dl + 1, avgdl) >= base
    assert bm25_weight(tf + 1, df, n_docs, dl + 1, avgdl) == pytest.approx(
        oracles.bm25_term(tf + 1, df, n_docs, dl + 1, avgdl), rel=1e-12)


@given(st.lists(words, min_size=2, max_size=5), st.sampled_from(["alpha", "beta", "gamma"]))
def test_bumped_document_scores_higher_in_index(texts, term):
    docs = [CorpusDoc(f"d{i}", " ".join(t)) for i, t in enumerate(texts)]
    bumped = [CorpusDoc("d0", docs[0].text + " " + term), *docs[1:]]
    after = Bm25Index(bumped).scores(term)[0]
    assert after > 0.0
    assert after >= Bm25Index(docs).scores(term).get(0, 0.0)
