"""TREC interchange formats: run files and qrels."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path


def format_score(score: float) -> str:
    # repr round-trips exactly; keeps files byte-stable
    return repr(float(score))


def write_run(path, rankings: dict, tag: str) -> None:
    """Write ``{topic_id: [(doc_id, score), ...]}`` as a TREC run file.

    Topics are written in ascending numeric order, documents in list order.
    """
    lines = []
    for topic_id in sorted(rankings, key=_topic_sort_key):
        for rank, (doc_id, score) in enumerate(rankings[topic_id], start=1):
            lines.append(f"{topic_id} Q0 {doc_id} {rank} {format_score(score)} {tag}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_run(path) -> tuple[dict, str | None]:
    """Read a TREC run file into ``{topic_id: [(doc_id, score), ...]}``.

    Entries are ordered by the rank column. Returns the rankings and the tag
    of the first line (None for an empty file).
    """
    per_topic = defaultdict(list)
    tag = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
            topic, _, doc_id, rank, score, run_tag = parts
            tag = tag or run_tag
            per_topic[_parse_topic(topic)].append((int(rank), doc_id, float(score)))
    rankings = {}
    for topic, rows in per_topic.items():
        rows.sort()
        rankings[topic] = [(doc_id, score) for _, doc_id, score in rows]
    return rankings, tag


def _parse_topic(token: str):
    try:
        return int(token)
    except ValueError:
        return token


def _topic_sort_key(topic):
    return (0, topic, "") if isinstance(topic, int) else (1, 0, str(topic))
