"""Generate the bundled 50-document fixture under tests/fixtures/mini.

The output is committed; rerunning with the same seed rewrites identical files.

    python scripts/make_fixture.py [--out tests/fixtures/mini] [--seed 7]
"""

import argparse
import csv
import json
import random
from pathlib import Path

TOPICS = [
    # id, title, description, claim, answer
    (101, "vitamin C", "Can vitamin C cure the common cold?", "vitamin C cures the common cold", "no"),
    (102, "masks", "Do face masks reduce the spread of influenza?", "face masks reduce influenza spread", "yes"),
    (103, "garlic", "Does eating garlic prevent infection with the coronavirus?", "garlic prevents coronavirus infection", "no"),
    (104, "handwashing", "Does handwashing with soap protect against diarrhoea?", "handwashing with soap protects against diarrhoea", "yes"),
    (105, "zinc lozenges", "Do zinc lozenges shorten a cold?", "zinc lozenges shorten colds", "yes"),
]

DOMAINS = [
    ("cdc.gov", "gov", 7.9), ("nih.gov", "gov", 7.6), ("harvard.edu", "edu", 7.2), ("ox.ac.uk", "other", 6.8),
    ("who.int", "other", 7.7), ("mayoclinic.org", "org", 6.4), ("healthline.com", "com", 5.6),
    ("wellnessdaily.net", "net", 3.1), ("miraclecures.com", "com", 2.2), ("truthnews.info", "other", 1.4),
    ("herbalfacts.net", "net", 2.7), ("nhs.uk", "other", None), ("dailybuzz.co.uk", "other", 2.9),
]

AGREE = [
    "Studies show that {claim}.",
    "A recent trial confirmed that {claim}.",
    "Doctors recommend it because evidence suggests {claim}.",
    "The review found it effective: {claim}.",
]
DISAGREE = [
    "It is a myth that {claim}.",
    "There is no evidence that {claim}.",
    "Experts say the idea that {claim} is false and misleading.",
    "The rumor that {claim} has been debunked.",
]
NEUTRAL = [
    "Many people ask about this every winter.",
    "The question comes up often in online forums.",
    "Researchers continue to collect data on the subject.",
    "Local pharmacies report steady interest from customers.",
]
FILLER = [
    "Rest and fluids remain the usual advice for mild illness.",
    "Public health agencies publish updated guidance each season.",
    "Readers should consult a qualified professional before changing treatment.",
    "Access to primary care varies between regions and income groups.",
    "Seasonal patterns make infections more common in colder months.",
    "Clinical trials compare a treatment against placebo under controlled conditions.",
]


def make_html(rng, title, sentences, n_rules, n_inline):
    css = "\n".join(f".c{i} {{ color: #{rng.randrange(0x1000000):06x}; margin: {i}px; }}" for i in range(n_rules))
    paras = []
    for i, s in enumerate(sentences):
        attr = ' style="font-weight:bold"' if i < n_inline else ""
        paras.append(f"<p{attr}>{s}</p>")
    return (
        f"<html><head><title>{title}</title><style>{css}</style>"
        "<script>var tracking = 'ignored text';</script></head>"
        f"<body><h1>{title}</h1>{''.join(paras)}<footer>Copyright notice</footer></body></html>"
    )


def generate(out: Path, seed: int) -> None:
    rng = random.Random(seed)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "topics.jsonl", "w", encoding="utf-8") as fh:
        for tid, title, desc, claim, answer in TOPICS:
            fh.write(json.dumps({"topic_id": tid, "title": title, "description": desc, "claim": claim, "answer": answer}) + "\n")

    docs, truth = [], []
    for n in range(50):
        doc_id = f"doc{n:03d}"
        # 40 on-topic documents (8 per topic), 10 off-topic
        topic = TOPICS[n % 5] if n < 40 else None
        domain, tld, pr = DOMAINS[rng.randrange(len(DOMAINS))]
        credible_site = pr is not None and pr >= 5.0 or domain == "nhs.uk"
        if topic:
            tid, title, desc, claim, answer = topic
            stance = rng.choice(["agree", "disagree", "neutral"])
            pool = {"agree": AGREE, "disagree": DISAGREE, "neutral": NEUTRAL}[stance]
            body = [f"This page discusses {title}.", desc]
            body += [rng.choice(pool).format(claim=claim) for _ in range(rng.randint(1, 3))]
            body += rng.sample(FILLER, rng.randint(2, 4))
            correct = None if stance == "neutral" else int((stance == "agree") == (answer == "yes"))
            truth.append((tid, doc_id, stance, correct, credible_site))
            head = f"{title.title()} facts"
        else:
            body = rng.sample(FILLER, 4)
            head = "General health news"
        url = f"https://www.{domain}/articles/{doc_id}.html"
        if n == 49:
            url = "not a url"
        n_rules = rng.randint(0, 12) if credible_site else rng.randint(10, 40)
        docs.append({"doc_id": doc_id, "url": url, "html": make_html(rng, head, body, n_rules, rng.randint(0, 2))})

    with open(out / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d) + "\n")

    with open(out / "pagerank.tsv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        ranked = sorted((d for d in DOMAINS if d[2] is not None), key=lambda d: -d[2])
        for rank, (domain, _, pr) in enumerate(ranked, start=1):
            w.writerow([domain, rank * 1000, int(pr + 0.5), pr, "2020-09-01T00:00:00Z"])

    # credibility training data with feature columns
    with open(out / "cred_train.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["url", "rank", "label_raw", "css_definitions", "text_readability", "pr_rank",
                    "page_rank_integer", "page_rank_decimal", "toplevel_domain"])
        for i in range(80):
            credible = i % 2 == 0
            pr = round(rng.uniform(5.0, 8.5) if credible else rng.uniform(0.5, 4.5), 2)
            row = [
                f"https://site{i}.example/page",
                i + 1,
                rng.choice([4, 5]) if credible else rng.choice([1, 2, 3]),
                rng.randint(0, 15) if credible else rng.randint(12, 60),
                round(rng.uniform(8, 13) if credible else rng.uniform(4, 9), 3),
                rng.randint(100, 50000) if credible else rng.randint(100000, 900000),
                int(pr + 0.5),
                pr,
                rng.choice(["gov", "edu", "org"]) if credible else rng.choice(["com", "net", "other"]),
            ]
            if i % 17 == 5:
                row[5:8] = ["unknown"] * 3
            w.writerow(row)

    # partial external stance: every other judged pair, plus a duplicate and a bad line
    with open(out / "stance.jsonl", "w", encoding="utf-8") as fh:
        for k, (tid, doc_id, stance, _, _) in enumerate(truth):
            if k % 2:
                continue
            p = {"agree": (0.1, 0.8, 0.1), "disagree": (0.75, 0.15, 0.1), "neutral": (0.2, 0.2, 0.6)}[stance]
            fh.write(json.dumps({"topic_id": tid, "doc_id": doc_id, "p_disagree": p[0], "p_agree": p[1], "p_neutral": p[2]}) + "\n")
        fh.write(json.dumps({"topic_id": 101, "doc_id": "doc000", "p_disagree": 0.7, "p_agree": 0.2, "p_neutral": 0.1}) + "\n")
        fh.write('{"topic_id": 102, "doc_id": "doc001", "p_disagree": 0.9, "p_agree": 0.9, "p_neutral": 0.9}\n')

    with open(out / "qrels.combined", "w", encoding="utf-8") as fh:
        for tid, doc_id, stance, correct, credible in truth:
            useful = 0 if stance == "neutral" and rng.random() < 0.5 else 1
            cred = "-" if rng.random() < 0.1 else str(int(credible))
            corr = "-" if correct is None else str(correct)
            fh.write(f"{tid} {doc_id} {useful} {cred} {corr}\n")
        for n in range(40, 45):
            fh.write(f"{TOPICS[n % 5][0]} doc{n:03d} 0 - -\n")

    config = {
        "corpus": "corpus.jsonl",
        "topics": "topics.jsonl",
        "output_dir": "out",
        "recipes": ["../../../recipes/total_recall.json", "../../../recipes/adhoc.json"],
        "qrels": "qrels.combined",
        "stance": "stance.jsonl",
        "pagerank_cache": "pagerank.tsv",
        "cred_training": "cred_train.csv",
        "depth": 1000,
        "seed": 7,
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "mini"))
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    generate(Path(args.out), args.seed)
