"""Document and topic ingestion, text extraction and credibility features."""

from __future__ import annotations

import csv
import json
import logging
import re
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from html.parser import HTMLParser
from pathlib import Path
from urllib.parse import urlsplit

log = logging.getLogger(__name__)

UNKNOWN = "unknown"
TLD_CATEGORIES = ("gov", "edu", "org", "com", "net", "other")


class CorpusFormatError(Exception):
    """Too many malformed records in an input file."""


# --------------------------------------------------------------------------
# data types


@dataclass
class RawDocument:
    doc_id: str
    url: str
    html: str
    published_date: str | None = None

    @property
    def url_invalid(self) -> bool:
        return parse_host(self.url) is None


@dataclass
class ParsedDocument:
    doc_id: str
    url: str
    text: str
    sentences: list = field(default_factory=list)


@dataclass
class Topic:
    topic_id: int
    title: str
    description: str
    claim: str
    answer: int
    narrative: str = ""

    def __post_init__(self):
        if self.answer not in (0, 1):
            raise ValueError(f"topic {self.topic_id}: answer must be 0 or 1")
        if not self.claim:
            raise ValueError(f"topic {self.topic_id}: empty claim")

    def query_text(self, fields: str = "title+description") -> str:
        parts = {"title": self.title, "description": self.description, "claim": self.claim}
        return " ".join(parts[f] for f in fields.split("+"))


@dataclass
class ContentFeatures:
    css_definitions: int
    text_readability: float
    degenerate_text: bool = False


@dataclass
class SocialFeatures:
    pr_rank: object = UNKNOWN
    page_rank_integer: object = UNKNOWN
    page_rank_decimal: object = UNKNOWN
    toplevel_domain: str = "other"
    url_invalid: bool = False


@dataclass
class PageRankRecord:
    domain: str
    pr_rank: object
    page_rank_integer: object
    page_rank_decimal: object
    fetched_at: str


# --------------------------------------------------------------------------
# ingestion


class CorpusStream:
    """Iterates RawDocuments from a JSONL corpus in file order.

    Malformed lines are skipped and counted in ``skipped``. When iteration
    finishes with more than half the non-blank lines malformed, a
    CorpusFormatError is raised.
    """

    def __init__(self, path):
        self.path = Path(path)
        # fail fast on unreadable files
        with open(self.path, "rb"):
            pass
        self.skipped = 0
        self.read = 0

    def __iter__(self):
        self.skipped = self.read = 0
        with open(self.path, encoding="utf-8", errors="replace") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                doc = _parse_doc_line(line)
                if doc is None:
                    self.skipped += 1
                    log.warning("skipping malformed corpus line %d of %s", lineno, self.path)
                    continue
                self.read += 1
                yield doc
        total = self.read + self.skipped
        if total and self.skipped * 2 > total:
            raise CorpusFormatError(f"{self.path}: {self.skipped} of {total} lines malformed")


def _parse_doc_line(line: str) -> RawDocument | None:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    doc_id, url, html = obj.get("doc_id"), obj.get("url"), obj.get("html")
    if not isinstance(doc_id, str) or not doc_id or not isinstance(url, str) or not isinstance(html, str):
        return None
    return RawDocument(doc_id, url, html, obj.get("published_date"))


def ingest_corpus(path, format: str = "jsonl") -> CorpusStream:
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format {format!r}")
    return CorpusStream(path)


def load_topics(path) -> list[Topic]:
    topics = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            answer = obj["answer"]
            if isinstance(answer, str):
                answer = {"yes": 1, "no": 0}[answer.strip().lower()]
            topics.append(
                Topic(
                    topic_id=int(obj["topic_id"]),
                    title=obj["title"],
                    description=obj["description"],
                    claim=obj["claim"],
                    answer=int(answer),
                    narrative=obj.get("narrative", ""),
                )
            )
    return topics


# --------------------------------------------------------------------------
# HTML -> text

_SKIP_TAGS = {"script", "style", "noscript", "template"}
_BLOCK_TAGS = {
    "address", "article", "aside", "blockquote", "body", "br", "caption", "dd", "details",
    "div", "dl", "dt", "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2",
    "h3", "h4", "h5", "h6", "header", "hr", "html", "li", "main", "nav", "ol", "p", "pre",
    "section", "summary", "table", "td", "th", "title", "tr", "ul",
}
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+(?=[\"'(\[]?[A-Z])|(?<=[.!?][\"')\]])\s+(?=[\"'(\[]?[A-Z])")
_WS = re.compile(r"\s+")


class _HTMLScan(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.blocks = []
        self.style_texts = []
        self.inline_styles = 0
        self._buf = []
        self._skip = 0
        self._in_style = False

    def _flush(self):
        text = _WS.sub(" ", "".join(self._buf)).strip()
        if text:
            self.blocks.append(text)
        self._buf = []

    def handle_starttag(self, tag, attrs):
        if any(name == "style" for name, _ in attrs):
            self.inline_styles += 1
        if tag in _SKIP_TAGS:
            self._skip += 1
            self._in_style = tag == "style"
        elif tag in _BLOCK_TAGS:
            self._flush()

    def handle_startendtag(self, tag, attrs):
        if any(name == "style" for name, _ in attrs):
            self.inline_styles += 1
        if tag in _BLOCK_TAGS:
            self._flush()

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip = max(0, self._skip - 1)
            self._in_style = False
        elif tag in _BLOCK_TAGS:
            self._flush()

    def handle_data(self, data):
        if self._in_style:
            self.style_texts.append(data)
        elif not self._skip:
            self._buf.append(data)

    def close(self):
        super().close()
        self._flush()


def _scan(html) -> _HTMLScan:
    if isinstance(html, bytes):
        html = html.decode("utf-8", errors="replace")
    scan = _HTMLScan()
    scan.feed(html)
    scan.close()
    return scan


def split_sentences(block: str) -> list[str]:
    return [s for s in _SENTENCE_SPLIT.split(block) if s]


def extract_text(doc: RawDocument) -> ParsedDocument:
    sentences = []
    for block in _scan(doc.html).blocks:
        sentences.extend(split_sentences(block))
    return ParsedDocument(doc.doc_id, doc.url, " ".join(sentences), sentences)


# --------------------------------------------------------------------------
# content features

_CSS_COMMENT = re.compile(r"/\*.*?\*/", re.S)
_CSS_RULE = re.compile(r"([^{}]*)\{[^{}]*\}")
_WORD = re.compile(r"[^\W_]+(?:'[^\W_]+)*")
_VOWEL_GROUP = re.compile(r"[aeiouy]+")


def count_css_rules(css: str) -> int:
    """Innermost ``selector { ... }`` blocks; at-rule wrappers are not counted."""
    css = _CSS_COMMENT.sub("", css)
    return sum(1 for m in _CSS_RULE.finditer(css) if m.group(1).strip())


def count_css_definitions(html) -> int:
    scan = _scan(html)
    return sum(count_css_rules(t) for t in scan.style_texts) + scan.inline_styles


def count_syllables(word: str) -> int:
    """Vowel-group count, minus a silent final ``e`` (not ``-le``), at least 1."""
    w = "".join(ch for ch in word.lower() if ch.isalpha())
    n = len(_VOWEL_GROUP.findall(w))
    if n > 1 and w.endswith("e") and not w.endswith("le"):
        n -= 1
    return max(n, 1)


def flesch_kincaid_grade(n_words: int, n_sentences: int, n_syllables: int) -> float:
    return 0.39 * (n_words / n_sentences) + 11.8 * (n_syllables / n_words) - 15.59


def readability(parsed: ParsedDocument) -> tuple[float, bool]:
    """Flesch-Kincaid grade of the extracted text; ``(0.0, True)`` if degenerate."""
    words = _WORD.findall(parsed.text)
    if not words or not parsed.sentences:
        return 0.0, True
    syllables = sum(count_syllables(w) for w in words)
    return flesch_kincaid_grade(len(words), len(parsed.sentences), syllables), False


def extract_content_features(doc: RawDocument, parsed: ParsedDocument) -> ContentFeatures:
    grade, degenerate = readability(parsed)
    return ContentFeatures(count_css_definitions(doc.html), grade, degenerate)


# --------------------------------------------------------------------------
# URLs and social features

# second-level labels under which registrations happen one level deeper
_SECOND_LEVEL = {"ac", "co", "com", "edu", "gov", "net", "nhs", "org", "or", "ne", "go", "gob", "mil"}


def parse_host(url: str) -> str | None:
    try:
        parts = urlsplit(url.strip())
    except ValueError:
        return None
    if parts.scheme not in ("http", "https") or not parts.hostname:
        return None
    host = parts.hostname.lower().rstrip(".")
    if "." not in host:
        return None
    return host


def split_domain(host: str) -> tuple[str, tuple]:
    """Return ``(registrable_domain, public_suffix_labels)`` for a hostname.

    Heuristic: the public suffix is the last label, or the last two when the
    last is a two-letter country code preceded by a known second-level label
    (``co.uk``, ``gov.au``, ...).
    """
    labels = host.split(".")
    if all(l.isdigit() for l in labels):
        return host, ()
    n_suffix = 1
    if len(labels) >= 3 and len(labels[-1]) == 2 and labels[-2] in _SECOND_LEVEL:
        n_suffix = 2
    return ".".join(labels[-(n_suffix + 1) :]), tuple(labels[-n_suffix:])


def registrable_domain(url: str) -> str | None:
    host = parse_host(url)
    return None if host is None else split_domain(host)[0]


def toplevel_category(suffix_labels) -> str:
    for label in suffix_labels:
        if label in TLD_CATEGORIES[:-1]:
            return label
    return "other"


def round_half_up(x: float) -> int:
    return int(Decimal(repr(float(x))).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def extract_social_features(doc: RawDocument, cache: "PageRankCache") -> SocialFeatures:
    host = parse_host(doc.url)
    if host is None:
        return SocialFeatures(url_invalid=True)
    domain, suffix = split_domain(host)
    feats = SocialFeatures(toplevel_domain=toplevel_category(suffix))
    rec = cache.get(domain)
    if rec is not None:
        feats.pr_rank = rec.pr_rank
        feats.page_rank_integer = rec.page_rank_integer
        feats.page_rank_decimal = rec.page_rank_decimal
    return feats


def document_features(doc: RawDocument, cache: "PageRankCache", parsed: ParsedDocument | None = None) -> dict:
    """Flat feature record for one document, as stored in features JSONL."""
    parsed = parsed or extract_text(doc)
    row = {"doc_id": doc.doc_id, "url": doc.url}
    row.update(asdict(extract_content_features(doc, parsed)))
    row.update(asdict(extract_social_features(doc, cache)))
    return row


# --------------------------------------------------------------------------
# PageRank cache


def _maybe(value, cast):
    return UNKNOWN if value in (UNKNOWN, "", None) else cast(value)


class PageRankCache:
    """Domain -> PageRankRecord map backed by a TSV file.

    Columns: ``domain  pr_rank  integer  decimal  fetched_at``. The integer
    column is always the half-up rounding of the decimal column; mismatching
    rows are corrected on load.
    """

    def __init__(self, records=None):
        self.records = {}
        for rec in records or ():
            self.put(rec)

    def __len__(self):
        return len(self.records)

    def get(self, domain: str) -> PageRankRecord | None:
        return self.records.get(domain.lower())

    def put(self, rec: PageRankRecord) -> None:
        domain = rec.domain.strip().lower()
        if "/" in domain or ":" in domain or not domain:
            raise ValueError(f"bad cache domain {rec.domain!r}")
        rec.domain = domain
        if rec.page_rank_decimal != UNKNOWN:
            expected = round_half_up(rec.page_rank_decimal)
            if rec.page_rank_integer != expected:
                log.warning("pagerank integer for %s corrected to %d", domain, expected)
                rec.page_rank_integer = expected
        self.records[domain] = rec

    def merge(self, records) -> None:
        for rec in records:
            self.put(rec)

    @classmethod
    def load(cls, path) -> "PageRankCache":
        cache = cls()
        path = Path(path)
        if not path.exists():
            return cache
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh, delimiter="\t"):
                if not row or row[0].startswith("#"):
                    continue
                domain, rank, integer, decimal, fetched_at = row
                cache.put(
                    PageRankRecord(domain, _maybe(rank, int), _maybe(integer, int), _maybe(decimal, float), fetched_at)
                )
        return cache

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            for domain in sorted(self.records):
                r = self.records[domain]
                writer.writerow([domain, r.pr_rank, r.page_rank_integer, r.page_rank_decimal, r.fetched_at])


OPR_ENDPOINT = "https://openpagerank.com/api/v1.0/getPageRank"
OPR_BATCH = 100


class QuotaExceeded(Exception):
    pass


def _opr_request(client, batch, api_key, attempts, backoff, sleep):
    for attempt in range(attempts):
        try:
            resp = client.get(OPR_ENDPOINT, params=[("domains[]", d) for d in batch], headers={"API-OPR": api_key})
        except Exception as exc:  # transport-level failure
            log.warning("pagerank request failed: %s", exc)
        else:
            if resp.status_code == 429:
                raise QuotaExceeded(resp.text)
            if resp.status_code < 400:
                return resp.json()
            log.warning("pagerank request returned HTTP %d", resp.status_code)
        if attempt + 1 < attempts:
            sleep(backoff * 2**attempt)
    return None


def fetch_pagerank(
    domains,
    api_key: str,
    cache_path=None,
    client=None,
    attempts: int = 3,
    backoff: float = 1.0,
    sleep=time.sleep,
) -> list[PageRankRecord]:
    """Query OpenPageRank for ``domains`` in batches of 100.

    Resolved domains are merged into the cache at ``cache_path``. A batch
    that fails ``attempts`` times yields "unknown" records which are returned
    but not cached, so a later fetch retries them. On quota exhaustion the
    records gathered so far are returned.
    """
    domains = sorted({d.strip().lower() for d in domains if d.strip()})
    if not domains:
        return []
    import httpx

    own_client = client is None
    client = client or httpx.Client(timeout=30.0)
    now = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    fetched, out = [], []
    try:
        for start in range(0, len(domains), OPR_BATCH):
            batch = domains[start : start + OPR_BATCH]
            try:
                payload = _opr_request(client, batch, api_key, attempts, backoff, sleep)
            except QuotaExceeded:
                log.warning("pagerank quota exceeded after %d domains", start)
                break
            if payload is None:
                out.extend(PageRankRecord(d, UNKNOWN, UNKNOWN, UNKNOWN, now) for d in batch)
                continue
            for item in payload.get("response", []):
                if int(item.get("status_code", 0)) != 200:
                    continue
                decimal = float(item["page_rank_decimal"])
                rank = item.get("rank")
                rec = PageRankRecord(
                    item["domain"].lower(),
                    int(rank) if rank not in (None, "") else UNKNOWN,
                    round_half_up(decimal),
                    decimal,
                    now,
                )
                fetched.append(rec)
                out.append(rec)
    finally:
        if own_client:
            client.close()
    if cache_path is not None and fetched:
        cache = PageRankCache.load(cache_path)
        cache.merge(fetched)
        cache.save(cache_path)
    return out
