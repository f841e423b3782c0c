"""BM25 retrieval over a concept-tagged problem corpus.

Corpus files are JSONL with one document per line::

    {"id": "omr-17", "text": "...", "concept_tags": ["Vieta's Formulas"], "meta": {...}}

Retrieved documents contribute their tags, in rank order, to the candidate
concept set.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

INDEX_FORMAT = "cika-bm25-index"
INDEX_VERSION = 1

_MATH = re.compile(r"\$\$(?:[^$]|\$(?!\$))+?\$\$|\$[^$]+?\$")
_WORD = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric runs of length >= 2, plus inline math verbatim.

    A ``$...$`` (or ``$$...$$``) segment becomes one token, delimiters
    included and case preserved, so ``$x^2$`` and ``$X^2$`` stay distinct.
    Math tokens come first, in order of appearance, then the words.
    """
    maths = [m.group(0) for m in _MATH.finditer(text)]
    rest = _MATH.sub(" ", text).lower()
    words = [w for w in _WORD.split(rest) if len(w) >= 2]
    return maths + words


@dataclass(frozen=True)
class CorpusDoc:
    id: str
    text: str
    concept_tags: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "CorpusDoc":
        if not isinstance(doc, dict):
            raise ValueError("document must be a JSON object")
        if not isinstance(doc.get("id"), str) or not doc["id"]:
            raise ValueError("document needs a non-empty string 'id'")
        if not isinstance(doc.get("text"), str):
            raise ValueError("document needs a string 'text'")
        tags = doc.get("concept_tags", [])
        if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
            raise ValueError("'concept_tags' must be a list of strings")
        meta = doc.get("meta", {})
        if not isinstance(meta, dict):
            raise ValueError("'meta' must be an object")
        return cls(doc["id"], doc["text"], tuple(tags), meta)

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "concept_tags": list(self.concept_tags), "meta": self.meta}


def bm25_weight(tf: int, df: int, n_docs: int, dl: int, avgdl: float, k1: float = 1.2, b: float = 0.75) -> float:
    """One query term's contribution to one document's score."""
    idf = math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)
    return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Hit:
    doc_id: str
    score: float
    concept_tags: tuple[str, ...]


class Bm25Index:
    """Immutable inverted index; safe to query from several threads."""

    def __init__(self, docs: Iterable[CorpusDoc], k1: float = 1.2, b: float = 0.75):
        if k1 < 0 or not 0.0 <= b <= 1.0:
            raise ValueError("need k1 >= 0 and 0 <= b <= 1")
        docs = list(docs)
        seen: dict[str, int] = {}
        for i, doc in enumerate(docs):
            if doc.id in seen:
                raise CorpusError(f"duplicate document id {doc.id!r} (entries {seen[doc.id] + 1} and {i + 1})")
            seen[doc.id] = i
        docs.sort(key=lambda d: d.id)
        self.k1 = k1
        self.b = b
        self.ids = [d.id for d in docs]
        self.tags = [tuple(d.concept_tags) for d in docs]
        self.meta = [d.meta for d in docs]
        self.lengths: list[int] = []
        self.postings: dict[str, list[tuple[int, int]]] = {}
        for idx, doc in enumerate(docs):
            counts = Counter(tokenize(doc.text))
            self.lengths.append(sum(counts.values()))
            for term in sorted(counts):
                self.postings.setdefault(term, []).append((idx, counts[term]))
        self.avgdl = sum(self.lengths) / len(docs) if docs else 0.0

    def __len__(self) -> int:
        return len(self.ids)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        n, df = len(self), self.df(term)
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    def scores(self, text: str) -> dict[int, float]:
        out: dict[int, float] = {}
        if not len(self) or self.avgdl == 0:
            return out
        for term in dict.fromkeys(tokenize(text)):
            posting = self.postings.get(term)
            if not posting:
                continue
            df, n = len(posting), len(self)
            for idx, tf in posting:
                weight = bm25_weight(tf, df, n, self.lengths[idx], self.avgdl, self.k1, self.b)
                out[idx] = out.get(idx, 0.0) + weight
        return out

    def query(self, text: str, k: int) -> list[Hit]:
        """Top-k documents sharing at least one term with ``text``.

        Ranked by score, ties by document id.  Documents with no term in
        common are never returned, so fewer than k hits is normal.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        ranked = sorted(self.scores(text).items(), key=lambda kv: (-kv[1], self.ids[kv[0]]))
        return [Hit(self.ids[i], s, self.tags[i]) for i, s in ranked[:k]]

    def to_dict(self) -> dict:
        return {
            "format": INDEX_FORMAT, "version": INDEX_VERSION, "k1": self.k1, "b": self.b,
            "docs": [{"id": i, "length": n, "concept_tags": list(t), "meta": m}
                     for i, n, t, m in zip(self.ids, self.lengths, self.tags, self.meta)],
            "postings": {term: [list(p) for p in posting] for term, posting in sorted(self.postings.items())},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Bm25Index":
        if doc.get("format") != INDEX_FORMAT:
            raise CorpusError("not a BM25 index file")
        if doc.get("version") != INDEX_VERSION:
            raise CorpusError(f"unsupported index version {doc.get('version')!r} (expected {INDEX_VERSION})")
        index = cls([], doc["k1"], doc["b"])
        index.ids = [d["id"] for d in doc["docs"]]
        index.tags = [tuple(d["concept_tags"]) for d in doc["docs"]]
        index.meta = [d.get("meta", {}) for d in doc["docs"]]
        index.lengths = [int(d["length"]) for d in doc["docs"]]
        index.postings = {t: [(int(i), int(f)) for i, f in p] for t, p in doc["postings"].items()}
        index.avgdl = sum(index.lengths) / len(index.ids) if index.ids else 0.0
        return index


def read_corpus(path: str | Path) -> list[CorpusDoc]:
    docs: list[CorpusDoc] = []
    lines: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = CorpusDoc.from_dict(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed corpus line: {exc}") from exc
            if doc.id in lines:
                raise CorpusError(f"{path}: duplicate document id {doc.id!r} on lines {lines[doc.id]} and {lineno}")
            lines[doc.id] = lineno
            docs.append(doc)
    return docs


def ingest(path: str | Path, k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    return Bm25Index(read_corpus(path), k1, b)


def query(index: Bm25Index, text: str, k: int) -> list[Hit]:
    return index.query(text, k)


def extract_concepts(results: Sequence[Hit]) -> list[str]:
    """Tags of the hits in rank order, first occurrence wins."""
    return list(dict.fromkeys(tag for hit in results for tag in hit.concept_tags))


def save_index(index: Bm25Index, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(index.to_dict(), fh, ensure_ascii=False, sort_keys=True)


def load_index(path: str | Path) -> Bm25Index:
    with open(path, encoding="utf-8") as fh:
        return Bm25Index.from_dict(json.load(fh))


def load_any(path: str | Path) -> Bm25Index:
    """An index file or a raw corpus JSONL, whichever ``path`` holds.

    Index files are a single JSON object line carrying the format header.
    """
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    try:
        head = json.loads(first)
    except json.JSONDecodeError:
        head = None
    if isinstance(head, dict) and head.get("format") == INDEX_FORMAT:
        return Bm25Index.from_dict(head)
    return ingest(path)


__all__ = [
    "Bm25Index", "CorpusDoc", "bm25_weight", "CorpusError", "Hit", "INDEX_FORMAT", "INDEX_VERSION", "extract_concepts", "ingest",
    "load_any", "load_index", "query", "read_corpus", "save_index", "tokenize",
]
