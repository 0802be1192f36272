import json
import re

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from misinforank.corpus import (
    UNKNOWN,
    CorpusFormatError,
    PageRankCache,
    PageRankRecord,
    RawDocument,
    Topic,
    count_css_definitions,
    count_syllables,
    document_features,
    extract_content_features,
    extract_social_features,
    extract_text,
    fetch_pagerank,
    flesch_kincaid_grade,
    ingest_corpus,
    load_topics,
    parse_host,
    readability,
    registrable_domain,
    round_half_up,
    split_domain,
)


def write_lines(path, lines):
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    return path


def doc_line(i):
    return json.dumps({"doc_id": f"d{i}", "url": f"https://e{i}.org/", "html": f"<p>Doc {i}.</p>"})


# --------------------------------------------------------------------------
# ingestion


def test_ingest_well_formed(tmp_path):
    stream = ingest_corpus(write_lines(tmp_path / "c.jsonl", [doc_line(i) for i in range(3)]))
    docs = list(stream)
    assert [d.doc_id for d in docs] == ["d0", "d1", "d2"]
    assert stream.skipped == 0


def test_ingest_skips_malformed(tmp_path):
    lines = [doc_line(0), "{not json", doc_line(1), doc_line(2)]
    stream = ingest_corpus(write_lines(tmp_path / "c.jsonl", lines))
    assert len(list(stream)) == 3
    assert stream.skipped == 1


def test_ingest_empty_file(tmp_path):
    stream = ingest_corpus(write_lines(tmp_path / "c.jsonl", []))
    assert list(stream) == [] and stream.skipped == 0


def test_ingest_mostly_malformed_is_fatal(tmp_path):
    lines = [doc_line(0), "x", "y", json.dumps({"doc_id": "", "url": "u", "html": ""})]
    with pytest.raises(CorpusFormatError):
        list(ingest_corpus(write_lines(tmp_path / "c.jsonl", lines)))


def test_ingest_missing_file(tmp_path):
    with pytest.raises(OSError):
        ingest_corpus(tmp_path / "absent.jsonl")


def test_load_topics(fixture_dir):
    topics = load_topics(fixture_dir / "topics.jsonl")
    assert len(topics) == 5
    assert {t.answer for t in topics} == {0, 1}
    assert topics[0].query_text() == f"{topics[0].title} {topics[0].description}"


def test_topic_validation():
    with pytest.raises(ValueError):
        Topic(1, "t", "d", "c", 2)
    with pytest.raises(ValueError):
        Topic(1, "t", "d", "", 1)


# --------------------------------------------------------------------------
# text extraction


def parse(html):
    return extract_text(RawDocument("d", "https://x.org/", html))


def test_extract_strips_scripts():
    p = parse("<p>Cats purr.</p><script>x()</script>")
    assert p.text == "Cats purr." and p.sentences == ["Cats purr."]


def test_extract_block_boundaries():
    assert parse("<div>A.</div><div>B.</div>").sentences == ["A.", "B."]


def test_extract_entities_and_comments():
    p = parse("<style>.a{x:1}</style><p>Salt &amp; pepper<!-- hidden --> here.</p>")
    assert p.text == "Salt & pepper here."


def test_extract_sentence_split():
    p = parse("<p>First one. Second one! Third? yes. \"Quoted.\" Next.</p>")
    assert p.sentences == ["First one.", "Second one!", "Third? yes.", '"Quoted."', "Next."]


def test_extract_deterministic_and_no_tags(fixture_dir):
    for doc in ingest_corpus(fixture_dir / "corpus.jsonl"):
        a, b = extract_text(doc), extract_text(doc)
        assert a == b
        assert "<" not in a.text and "tracking" not in a.text
        assert a.text == " ".join(a.sentences)


def test_extract_matches_reference_tool(fixture_dir):
    bs4 = pytest.importorskip("bs4")
    docs = list(ingest_corpus(fixture_dir / "corpus.jsonl"))[:10]
    for doc in docs:
        soup = bs4.BeautifulSoup(doc.html, "html.parser")
        for tag in soup(["script", "style", "noscript", "template"]):
            tag.decompose()
        ref = re.sub(r"\s+", " ", soup.get_text(" ")).strip()
        assert extract_text(doc).text.split() == ref.split()


# --------------------------------------------------------------------------
# content features


def test_css_definitions_example():
    html = "<style>.a{color:red} .b{margin:0}</style><p style='x'>hi</p>"
    assert count_css_definitions(html) == 3


def test_css_media_wrapper_not_counted():
    html = "<style>/* c{} */ @media print { .a{x:1} .b{y:2} } .c{z:3}</style>"
    assert count_css_definitions(html) == 3


@given(st.lists(st.sampled_from([" ", "\n", "\t", "  "]), min_size=1, max_size=5))
def test_css_invariant_to_outside_whitespace(ws):
    base = "<html><head><style>.a{x:1}.b{y:2}</style></head><body><p style='q'>t</p></body></html>"
    spaced = base.replace("<body>", "<body>" + "".join(ws)).replace("</p>", "</p>" + "".join(ws))
    assert count_css_definitions(spaced) == count_css_definitions(base) == 3


def test_syllables():
    assert [count_syllables(w) for w in ("the", "cat", "sat", "table", "make", "readability", "a")] == [1, 1, 1, 2, 1, 5, 1]


def test_readability_example():
    grade, degenerate = readability(parse("<p>The cat sat.</p>"))
    assert not degenerate
    assert grade == pytest.approx(0.39 * 3 + 11.8 * 1 - 15.59, abs=1e-9)
    assert grade == pytest.approx(-2.62, abs=1e-9)


def test_readability_degenerate():
    doc = RawDocument("d", "https://x.org", "")
    feats = extract_content_features(doc, extract_text(doc))
    assert feats.text_readability == 0 and feats.degenerate_text


@given(st.integers(1, 10_000), st.integers(1, 500), st.integers(1, 40_000))
def test_readability_closed_form(w, s, syl):
    assert flesch_kincaid_grade(w, s, syl) == pytest.approx(0.39 * w / s + 11.8 * syl / w - 15.59, abs=1e-9)


# --------------------------------------------------------------------------
# URLs and social features


def test_url_parsing():
    assert parse_host("https://www.CDC.gov/a") == "www.cdc.gov"
    assert parse_host("not a url") is None
    assert parse_host("ftp://x.org/") is None
    assert registrable_domain("https://news.bbc.co.uk/x") == "bbc.co.uk"
    assert split_domain("www.cdc.gov") == ("cdc.gov", ("gov",))
    assert split_domain("ox.ac.uk") == ("ox.ac.uk", ("ac", "uk"))


def test_social_features_cache_hit():
    cache = PageRankCache([PageRankRecord("cdc.gov", 312, 7, 7.49, "t")])
    f = extract_social_features(RawDocument("d", "https://www.cdc.gov/a", ""), cache)
    assert (f.toplevel_domain, f.pr_rank, f.page_rank_integer, f.page_rank_decimal) == ("gov", 312, 7, 7.49)


def test_social_features_miss_and_invalid():
    f = extract_social_features(RawDocument("d", "http://example.xyz/p", ""), PageRankCache())
    assert f.toplevel_domain == "other" and f.pr_rank == UNKNOWN and f.page_rank_decimal == UNKNOWN
    g = extract_social_features(RawDocument("d", "not a url", ""), PageRankCache())
    assert g.url_invalid and g.pr_rank == UNKNOWN and g.toplevel_domain == "other"


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 7.49, 7.5, 0.0)] == [1, 2, 3, 7, 8, 0]


def test_cache_integer_consistent(fixture_dir, tmp_path):
    cache = PageRankCache.load(fixture_dir / "pagerank.tsv")
    assert len(cache) > 0
    for rec in cache.records.values():
        assert rec.page_rank_integer == round_half_up(rec.page_rank_decimal)
    cache.put(PageRankRecord("Bad.ORG", 5, 9, 2.5, "t"))
    assert cache.get("bad.org").page_rank_integer == 3
    cache.save(tmp_path / "c.tsv")
    again = PageRankCache.load(tmp_path / "c.tsv")
    assert again.records.keys() == cache.records.keys()
    with pytest.raises(ValueError):
        cache.put(PageRankRecord("https://x.org/", 1, 1, 1.0, "t"))


def test_document_features_row(fixture_dir):
    cache = PageRankCache.load(fixture_dir / "pagerank.tsv")
    doc = next(iter(ingest_corpus(fixture_dir / "corpus.jsonl")))
    row = document_features(doc, cache)
    for key in ("doc_id", "css_definitions", "text_readability", "pr_rank", "page_rank_integer",
                "page_rank_decimal", "toplevel_domain", "url_invalid"):
        assert key in row


# --------------------------------------------------------------------------
# PageRank client


def opr_handler(calls, status=200, payload=None):
    def handler(request):
        calls.append(request)
        if status != 200:
            return httpx.Response(status, text="err")
        domains = request.url.params.get_list("domains[]")
        body = payload or {
            "status_code": 200,
            "response": [
                {"status_code": 200, "domain": d, "page_rank_decimal": 4.25, "rank": str(100 + i)}
                for i, d in enumerate(domains)
            ],
        }
        return httpx.Response(200, json=body)

    return handler


def test_fetch_empty_issues_no_request():
    calls = []
    client = httpx.Client(transport=httpx.MockTransport(opr_handler(calls)))
    assert fetch_pagerank([], "k", client=client) == []
    assert calls == []


def test_fetch_batches_and_caches(tmp_path):
    calls = []
    client = httpx.Client(transport=httpx.MockTransport(opr_handler(calls)))
    domains = [f"site{i}.org" for i in range(150)]
    recs = fetch_pagerank(domains, "secret", cache_path=tmp_path / "c.tsv", client=client)
    assert len(calls) == 2
    assert all(r.headers["API-OPR"] == "secret" for r in calls)
    assert len(calls[0].url.params.get_list("domains[]")) == 100
    assert len(recs) == 150 and recs[0].page_rank_integer == 4
    assert len(PageRankCache.load(tmp_path / "c.tsv")) == 150


def test_fetch_retries_then_unknown(tmp_path):
    calls, sleeps = [], []
    client = httpx.Client(transport=httpx.MockTransport(opr_handler(calls, status=500)))
    recs = fetch_pagerank(["cdc.gov"], "k", cache_path=tmp_path / "c.tsv", client=client, sleep=sleeps.append)
    assert len(calls) == 3 and sleeps == [1.0, 2.0]
    assert recs[0].pr_rank == UNKNOWN
    assert not (tmp_path / "c.tsv").exists()


def test_fetch_quota_partial():
    calls = []
    client = httpx.Client(transport=httpx.MockTransport(opr_handler(calls, status=429)))
    assert fetch_pagerank(["a.org"], "k", client=client, sleep=lambda s: None) == []
    assert len(calls) == 1
