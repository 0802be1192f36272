"""Inverted index, BM25 and RM3 retrieval for the initial relevance run."""

from __future__ import annotations

import json
import logging
import math
import re
import struct
import zlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

from .porter import stem

log = logging.getLogger(__name__)

BM25_K1 = 0.9
BM25_B = 0.4
RM3_FB_TERMS = 10
RM3_FB_DOCS = 10
RM3_ORIGINAL_QUERY_WEIGHT = 0.5
DIRICHLET_MU = 1000.0
DEFAULT_DEPTH = 1000

INDEX_MAGIC = b"MRIDX"
INDEX_VERSION = 1
_HEADER = struct.Struct("<5sHQd")

_TOKEN_RE = re.compile(r"[^\W_]+")


class CorpusError(Exception):
    """Corpus contents violate an indexing precondition."""


def _load_stopwords() -> frozenset:
    text = resources.files("misinforank.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


STOPWORDS = _load_stopwords()


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop stopwords, Porter-stem."""
    return [stem(tok) for tok in _TOKEN_RE.findall(text.lower()) if tok not in STOPWORDS]


@dataclass
class QuerySpec:
    topic_id: int
    text: str
    model: str = "bm25"
    k_docs: int = DEFAULT_DEPTH

    def __post_init__(self):
        if self.k_docs < 1:
            raise ValueError("k_docs must be >= 1")
        if self.model not in ("bm25", "rm3"):
            raise ValueError(f"unknown retrieval model {self.model!r}")


@dataclass
class ScoredList:
    topic_id: int
    entries: list = field(default_factory=list)

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]


@dataclass
class IndexedCorpus:
    postings: dict  # term -> list[(ordinal, tf)], ordinals ascending
    doc_lengths: list
    doc_ids: list
    _forward: list | None = field(default=None, repr=False, compare=False)
    _cf: dict | None = field(default=None, repr=False, compare=False)

    @property
    def N(self) -> int:
        return len(self.doc_ids)

    @property
    def avgdl(self) -> float:
        return sum(self.doc_lengths) / self.N if self.N else 0.0

    @property
    def total_length(self) -> int:
        return sum(self.doc_lengths)

    def doc_terms(self, ordinal: int) -> dict:
        """Term frequencies of one document (forward index, built lazily)."""
        if self._forward is None:
            forward = [dict() for _ in range(self.N)]
            for term in sorted(self.postings):
                for ordinal_, tf in self.postings[term]:
                    forward[ordinal_][term] = tf
            self._forward = forward
        return self._forward[ordinal]

    def collection_freq(self, term: str) -> int:
        if self._cf is None:
            self._cf = {t: sum(tf for _, tf in plist) for t, plist in self.postings.items()}
        return self._cf.get(term, 0)

    def stats(self) -> dict:
        return {"N": self.N, "avgdl": self.avgdl, "vocabulary": len(self.postings)}

    def to_bytes(self) -> bytes:
        payload = {
            "doc_ids": self.doc_ids,
            "doc_lengths": self.doc_lengths,
            "postings": {t: [list(p) for p in self.postings[t]] for t in sorted(self.postings)},
        }
        body = zlib.compress(json.dumps(payload, separators=(",", ":")).encode("utf-8"), 6)
        return _HEADER.pack(INDEX_MAGIC, INDEX_VERSION, self.N, self.avgdl) + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "IndexedCorpus":
        magic, version, n, _avgdl = _HEADER.unpack_from(data)
        if magic != INDEX_MAGIC:
            raise ValueError("not a misinforank index file")
        if version != INDEX_VERSION:
            raise ValueError(f"unsupported index version {version}")
        payload = json.loads(zlib.decompress(data[_HEADER.size :]).decode("utf-8"))
        index = cls(
            postings={t: [tuple(p) for p in plist] for t, plist in payload["postings"].items()},
            doc_lengths=payload["doc_lengths"],
            doc_ids=payload["doc_ids"],
        )
        if index.N != n:
            raise ValueError("index header disagrees with payload")
        return index

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "IndexedCorpus":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def build_index(docs) -> IndexedCorpus:
    """Index an iterable of objects with ``doc_id`` and ``text`` attributes."""
    postings: dict = {}
    doc_lengths = []
    doc_ids = []
    seen = set()
    for ordinal, doc in enumerate(docs):
        if doc.doc_id in seen:
            raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        tokens = tokenize(doc.text)
        doc_ids.append(doc.doc_id)
        doc_lengths.append(len(tokens))
        for term, tf in sorted(Counter(tokens).items()):
            postings.setdefault(term, []).append((ordinal, tf))
    return IndexedCorpus(postings=postings, doc_lengths=doc_lengths, doc_ids=doc_ids)


def bm25_idf(N: int, df: int) -> float:
    return math.log(1.0 + (N - df + 0.5) / (df + 0.5))


def _top_k(index: IndexedCorpus, scores: dict, k: int) -> list:
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], index.doc_ids[kv[0]]))
    return [(index.doc_ids[o], s) for o, s in ranked[:k]]


def bm25_search(index: IndexedCorpus, q: QuerySpec, k1: float = BM25_K1, b: float = BM25_B) -> ScoredList:
    terms = tokenize(q.text)
    if not terms:
        log.warning("query for topic %s has no indexable terms", q.topic_id)
        return ScoredList(q.topic_id, [])
    avgdl = index.avgdl
    scores: dict = {}
    for term, qtf in Counter(terms).items():
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = bm25_idf(index.N, len(plist))
        for ordinal, tf in plist:
            norm = k1 * (1.0 - b + b * index.doc_lengths[ordinal] / avgdl)
            scores[ordinal] = scores.get(ordinal, 0.0) + qtf * idf * tf / (tf + norm)
    return ScoredList(q.topic_id, _top_k(index, scores, q.k_docs))


def query_model(text: str) -> dict:
    """Maximum-likelihood unigram model of a query."""
    terms = tokenize(text)
    counts = Counter(terms)
    return {t: c / len(terms) for t, c in counts.items()}


def relevance_model(index: IndexedCorpus, feedback: list, fb_terms: int = RM3_FB_TERMS) -> dict:
    """Relevance model from ``[(doc_id, first_pass_score), ...]``.

    Each feedback document contributes its maximum-likelihood term
    distribution weighted by its share of the total first-pass score. The
    result is truncated to the ``fb_terms`` heaviest terms and renormalised.
    """
    if not feedback:
        return {}
    ordinal_of = {d: i for i, d in enumerate(index.doc_ids)}
    total = sum(s for _, s in feedback)
    weights: dict = {}
    for doc_id, score in feedback:
        ordinal = ordinal_of[doc_id]
        dl = index.doc_lengths[ordinal]
        if dl == 0:
            continue
        doc_weight = score / total if total > 0 else 1.0 / len(feedback)
        for term, tf in index.doc_terms(ordinal).items():
            weights[term] = weights.get(term, 0.0) + tf / dl * doc_weight
    top = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))[:fb_terms]
    norm = sum(w for _, w in top)
    return {t: w / norm for t, w in top} if norm > 0 else {}


def interpolate(original: dict, feedback: dict, original_weight: float) -> dict:
    mixed = {}
    for term in sorted(set(original) | set(feedback)):
        w = original_weight * original.get(term, 0.0) + (1.0 - original_weight) * feedback.get(term, 0.0)
        if w > 0:
            mixed[term] = w
    return mixed


def expanded_query(
    index: IndexedCorpus,
    q: QuerySpec,
    fb_terms: int = RM3_FB_TERMS,
    fb_docs: int = RM3_FB_DOCS,
    original_query_weight: float = RM3_ORIGINAL_QUERY_WEIGHT,
) -> dict:
    """RM3 query model: interpolation of the query MLE and the relevance model."""
    first = bm25_search(index, q)
    if not first.entries:
        return {}
    rm = relevance_model(index, first.entries[:fb_docs], fb_terms)
    return interpolate(query_model(q.text), rm, original_query_weight)


def ql_search(index: IndexedCorpus, weights: dict, topic_id, k: int = DEFAULT_DEPTH, mu: float = DIRICHLET_MU) -> ScoredList:
    """Dirichlet-smoothed query likelihood with weighted query terms.

    Only documents containing at least one query term are scored.
    """
    total = index.total_length
    scores: dict = {}
    background = {}
    for term in weights:
        cf = index.collection_freq(term)
        if cf:
            background[term] = cf / total
    if not background:
        return ScoredList(topic_id, [])
    candidates = sorted({o for t in background for o, _ in index.postings[t]})
    for ordinal in candidates:
        tfs = index.doc_terms(ordinal)
        denom = index.doc_lengths[ordinal] + mu
        scores[ordinal] = sum(
            weights[t] * math.log((tfs.get(t, 0) + mu * p_c) / denom) for t, p_c in background.items()
        )
    return ScoredList(topic_id, _top_k(index, scores, k))


def rm3_search(
    index: IndexedCorpus,
    q: QuerySpec,
    fb_terms: int = RM3_FB_TERMS,
    fb_docs: int = RM3_FB_DOCS,
    original_query_weight: float = RM3_ORIGINAL_QUERY_WEIGHT,
    mu: float = DIRICHLET_MU,
) -> ScoredList:
    weights = expanded_query(index, q, fb_terms, fb_docs, original_query_weight)
    if not weights:
        return ScoredList(q.topic_id, [])
    return ql_search(index, weights, q.topic_id, q.k_docs, mu)


def search(index: IndexedCorpus, q: QuerySpec) -> ScoredList:
    return bm25_search(index, q) if q.model == "bm25" else rm3_search(index, q)


def search_all(index: IndexedCorpus, queries: list, threads: int = 1) -> list:
    """Run every query; results come back in query order regardless of threads."""
    if threads <= 1:
        return [search(index, q) for q in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda q: search(index, q), queries))
