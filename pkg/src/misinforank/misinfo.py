"""Stance-based misinformation scoring.

A document's misinformation score for a topic is the probability that it
takes the stance opposite to the topic's correct answer minus the
probability that it takes the correct one. Stance probabilities come from an
external model (JSONL interchange) or from a lexical cue-counting baseline.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .porter import stem
from .retrieval import STOPWORDS

log = logging.getLogger(__name__)

DISAGREE, AGREE, NEUTRAL = 0, 1, 2
NORMALIZATION_TOLERANCE = 1e-3
NEGATION_WINDOW = 3

_TOKEN = re.compile(r"[^\W_]+(?:'[^\W_]+)*")


class StanceError(ValueError):
    pass


@dataclass(frozen=True)
class StanceProbabilities:
    p_disagree: float
    p_agree: float
    p_neutral: float

    def __post_init__(self):
        vals = (self.p_disagree, self.p_agree, self.p_neutral)
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise StanceError(f"stance probability outside [0, 1]: {vals}")
        if abs(sum(vals) - 1.0) > 1e-6:
            raise StanceError(f"stance probabilities sum to {sum(vals)}")

    def __getitem__(self, label: int) -> float:
        return (self.p_disagree, self.p_agree, self.p_neutral)[label]

    @classmethod
    def normalized(cls, p_disagree, p_agree, p_neutral, tolerance=NORMALIZATION_TOLERANCE):
        """Build from a triple whose sum is within ``tolerance`` of 1."""
        total = p_disagree + p_agree + p_neutral
        if abs(total - 1.0) > tolerance:
            raise StanceError(f"stance probabilities sum to {total}")
        if abs(total - 1.0) > 1e-6:
            p_disagree, p_agree, p_neutral = p_disagree / total, p_agree / total, p_neutral / total
        return cls(p_disagree, p_agree, p_neutral)


@dataclass
class TrimmedDocument:
    doc_id: str
    topic_id: int
    sentences: list = field(default_factory=list)
    trigger: str = "none"

    @property
    def text(self) -> str:
        return " ".join(self.sentences)


@dataclass(frozen=True)
class MisinfoScore:
    topic_id: int
    doc_id: str
    s: float


def trim_to_claim(parsed, topic) -> TrimmedDocument:
    """Keep the sentences from the first one mentioning the topic title onward.

    Matching is a case-insensitive substring test. Without a match the whole
    document is kept and the trigger is "none".
    """
    keyword = topic.title.strip().lower()
    sentences = list(parsed.sentences)
    for i, sent in enumerate(sentences):
        if keyword and keyword in sent.lower():
            return TrimmedDocument(parsed.doc_id, topic.topic_id, sentences[i:], keyword)
    return TrimmedDocument(parsed.doc_id, topic.topic_id, sentences, "none")


def misinformation_score(p: StanceProbabilities, answer: int) -> float:
    """``P(1 - answer) - P(answer)``: positive when the document leans against
    the correct answer (label 0 = disagree, 1 = agree)."""
    if answer not in (0, 1):
        raise ValueError(f"answer must be 0 or 1, got {answer!r}")
    return p[1 - answer] - p[answer]


# --------------------------------------------------------------------------
# external stance interchange


def _parse_stance_line(line):
    obj = json.loads(line)
    key = (int(obj["topic_id"]), str(obj["doc_id"]))
    probs = StanceProbabilities.normalized(float(obj["p_disagree"]), float(obj["p_agree"]), float(obj["p_neutral"]))
    return key, probs


def iter_stance_file(path, stats: dict | None = None):
    """Yield ``((topic_id, doc_id), StanceProbabilities)`` for valid lines."""
    rejected = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield _parse_stance_line(line)
            except (ValueError, KeyError, TypeError) as exc:
                rejected += 1
                log.warning("rejecting stance line %d of %s: %s", lineno, path, exc)
    if stats is not None:
        stats["rejected"] = rejected


def load_external_stance(path, stats: dict | None = None) -> dict:
    """Map ``(topic_id, doc_id) -> StanceProbabilities``; later duplicates win."""
    table = {}
    duplicates = 0
    counts = {}
    for key, probs in iter_stance_file(path, counts):
        if key in table:
            duplicates += 1
            log.warning("duplicate stance record for topic %s doc %s; keeping the last", *key)
        table[key] = probs
    if stats is not None:
        stats.update(loaded=len(table), duplicates=duplicates, rejected=counts.get("rejected", 0))
    return table


# --------------------------------------------------------------------------
# lexical baseline


def _read_cues(name):
    text = resources.files("misinforank.data").joinpath(name).read_text("utf-8")
    return [l.strip().lower() for l in text.splitlines() if l.strip() and not l.startswith("#")]


def _words(text):
    return _TOKEN.findall(text.lower())


@dataclass
class CueLexicon:
    agree: list
    disagree: list
    negations: frozenset

    @classmethod
    def default(cls):
        return cls(_read_cues("agree_cues.txt"), _read_cues("disagree_cues.txt"), frozenset(_read_cues("negations.txt")))

    @classmethod
    def from_files(cls, agree_path, disagree_path, negations_path):
        read = lambda p: [l.strip().lower() for l in Path(p).read_text("utf-8").splitlines() if l.strip() and not l.startswith("#")]
        return cls(read(agree_path), read(disagree_path), frozenset(read(negations_path)))

    def phrases(self):
        out = [(tuple(_words(c)), AGREE) for c in self.agree] + [(tuple(_words(c)), DISAGREE) for c in self.disagree]
        return sorted((p for p in out if p[0]), key=lambda p: -len(p[0]))


_DEFAULT_LEXICON = None


def default_lexicon() -> CueLexicon:
    global _DEFAULT_LEXICON
    if _DEFAULT_LEXICON is None:
        _DEFAULT_LEXICON = CueLexicon.default()
    return _DEFAULT_LEXICON


def count_cues(text: str, claim: str, lexicon: CueLexicon | None = None) -> tuple[int, int]:
    """Return ``(n_agree, n_disagree)``.

    Cue phrases are matched greedily left to right, longest first, and each
    token is used by at most one phrase. A negation token not already used by
    a phrase counts as disagreement when a claim content word lies within
    three tokens of it.
    """
    lexicon = lexicon or default_lexicon()
    tokens = _words(text)
    phrases = lexicon.phrases()
    used = [False] * len(tokens)
    n_agree = n_disagree = 0
    i = 0
    while i < len(tokens):
        for phrase, label in phrases:
            if tuple(tokens[i : i + len(phrase)]) == phrase:
                if label == AGREE:
                    n_agree += 1
                else:
                    n_disagree += 1
                for j in range(i, i + len(phrase)):
                    used[j] = True
                i += len(phrase)
                break
        else:
            i += 1
    content = {stem(w) for w in _words(claim) if w not in STOPWORDS and w not in lexicon.negations}
    stems = [stem(t) for t in tokens]
    for i, tok in enumerate(tokens):
        if used[i] or tok not in lexicon.negations:
            continue
        lo, hi = max(0, i - NEGATION_WINDOW), min(len(tokens), i + NEGATION_WINDOW + 1)
        if any(stems[j] in content for j in range(lo, hi) if j != i):
            n_disagree += 1
    return n_agree, n_disagree


def stance_from_counts(n_agree: int, n_disagree: int) -> StanceProbabilities:
    """Add-one smoothing over (agree, disagree, neutral)."""
    denom = n_agree + n_disagree + 3
    p_agree = (n_agree + 1) / denom
    p_disagree = (n_disagree + 1) / denom
    return StanceProbabilities(p_disagree, p_agree, 1 / denom)


def lexical_stance(trimmed: TrimmedDocument, topic, lexicon: CueLexicon | None = None) -> StanceProbabilities:
    return stance_from_counts(*count_cues(trimmed.text, topic.claim, lexicon))


def score_documents(topic, parsed_docs, external: dict | None = None, lexicon=None) -> tuple[list, int]:
    """Misinformation scores for one topic's documents.

    Uses the external stance table when it has the pair, else the lexical
    baseline on the claim-trimmed text. Returns the scores and the number of
    lexical fallbacks.
    """
    external = external or {}
    scores, fallbacks = [], 0
    for parsed in parsed_docs:
        probs = external.get((topic.topic_id, parsed.doc_id))
        if probs is None:
            fallbacks += 1
            probs = lexical_stance(trim_to_claim(parsed, topic), topic, lexicon)
        scores.append(MisinfoScore(topic.topic_id, parsed.doc_id, misinformation_score(probs, topic.answer)))
    return scores, fallbacks
