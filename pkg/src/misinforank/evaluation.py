"""Multi-aspect evaluation: label mappings, AP, Rprec, nDCG, CAM and compatibility."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .trec import _parse_topic, _topic_sort_key

NDCG_DEPTH = 1000
RBP_PERSISTENCE = 0.95
RBP_RESIDUAL = 1e-6


class EvaluationError(ValueError):
    pass


# --------------------------------------------------------------------------
# qrels


@dataclass(frozen=True)
class Judgment:
    useful: int
    credible: int | None = None  # None = unjudged
    correct: int | None = None


def _label(token: str):
    if token in ("-", "-1", "", "NA"):
        return None
    value = int(token)
    if value not in (0, 1):
        raise EvaluationError(f"aspect label must be 0/1 or unjudged, got {token!r}")
    return value


# binary gain predicates over a Judgment; unjudged counts as 0
def _useful(j):
    return j.useful == 1


def _credible(j):
    return j.credible == 1


def _correct(j):
    return j.correct == 1


def _incorrect(j):
    return j.correct == 0


BINARY_MAPPINGS = {
    "binary.useful": lambda j: _useful(j),
    "binary.useful-correct": lambda j: _useful(j) and _correct(j),
    "binary.useful-correct-credible": lambda j: _useful(j) and _correct(j) and _credible(j),
    "binary.useful-credible": lambda j: _useful(j) and _credible(j),
    "binary.harmful": lambda j: _useful(j) and _incorrect(j),
    "aspect.useful": _useful,
    "aspect.credible": _credible,
    "aspect.correct": _correct,
}

# graded: useful documents on the wrong (right) side of the answer, one extra
# grade when judged credible
GRADED_MAPPINGS = {
    "graded.harmful-only": lambda j: (1 + _credible(j)) if _useful(j) and _incorrect(j) else 0,
    "graded.helpful-only": lambda j: (1 + _credible(j)) if _useful(j) and _correct(j) else 0,
}

CAM_MAPPINGS = {
    "2aspects.correct-credible": ("aspect.correct", "aspect.credible"),
    "2aspects.useful-credible": ("aspect.useful", "aspect.credible"),
    "3aspects": ("aspect.useful", "aspect.correct", "aspect.credible"),
}

# (mapping id, qrels name, measure, higher is better)
MAPPING_TABLE = (
    (0, "2aspects.correct-credible", "cam_map", True),
    (1, "2aspects.useful-credible", "cam_map", True),
    (2, "3aspects", "cam_map_three", True),
    (3, "binary.useful", "ndcg", True),
    (4, "binary.useful-correct", "ndcg", True),
    (5, "binary.useful-correct-credible", "ndcg", True),
    (6, "binary.useful-credible", "ndcg", True),
    (7, "graded.harmful-only", "compatibility", False),
    (8, "graded.helpful-only", "compatibility", True),
)
RPREC_MAPPING = "binary.harmful"


def mapping_gain(name: str, j: Judgment) -> int:
    if name in BINARY_MAPPINGS:
        return int(BINARY_MAPPINGS[name](j))
    if name in GRADED_MAPPINGS:
        return int(GRADED_MAPPINGS[name](j))
    raise EvaluationError(f"unknown label mapping {name!r}")


@dataclass
class AspectQrels:
    """Three-aspect judgments plus optional per-mapping gain files.

    A per-mapping file, when loaded, takes precedence over gains derived from
    the three-aspect judgments for that mapping name.
    """

    judgments: dict = field(default_factory=dict)  # topic -> {doc: Judgment}
    mapped: dict = field(default_factory=dict)  # name -> topic -> {doc: gain or tuple}

    @property
    def topics(self) -> set:
        out = set(self.judgments)
        for per_topic in self.mapped.values():
            out |= set(per_topic)
        return out

    def add(self, topic, doc_id, judgment: Judgment) -> None:
        docs = self.judgments.setdefault(topic, {})
        if doc_id in docs:
            raise EvaluationError(f"duplicate judgment for topic {topic} doc {doc_id}")
        docs[doc_id] = judgment

    def gains(self, name: str) -> dict:
        """``topic -> {doc: gain}`` for a binary or graded mapping."""
        if name in self.mapped:
            return self.mapped[name]
        return {t: {d: mapping_gain(name, j) for d, j in docs.items()} for t, docs in self.judgments.items()}

    def cam_gains(self, name: str) -> list:
        """Per-aspect gain tables for a CAM mapping."""
        aspects = CAM_MAPPINGS[name]
        if name in self.mapped:
            table = self.mapped[name]
            return [{t: {d: g[i] for d, g in docs.items()} for t, docs in table.items()} for i in range(len(aspects))]
        return [self.gains(a) for a in aspects]

    @classmethod
    def from_combined(cls, path) -> "AspectQrels":
        """``topic docid useful credible correct``; ``-``/``-1`` mark unjudged."""
        qrels = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts or parts[0].startswith("#"):
                    continue
                if len(parts) != 5:
                    raise EvaluationError(f"{path}:{lineno}: expected 5 columns, got {len(parts)}")
                topic, doc_id, useful, credible, correct = parts
                u = _label(useful)
                qrels.add(_parse_topic(topic), doc_id, Judgment(u or 0, _label(credible), _label(correct)))
        return qrels

    def load_mapping(self, name: str, path) -> None:
        """Per-mapping file: ``topic 0 docid label [label ...]``."""
        width = len(CAM_MAPPINGS.get(name, (name,)))
        table = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 3 + width:
                    raise EvaluationError(f"{path}:{lineno}: expected {3 + width} columns")
                labels = tuple(max(0, int(x)) for x in parts[3:])
                docs = table.setdefault(_parse_topic(parts[0]), {})
                if parts[2] in docs:
                    raise EvaluationError(f"{path}:{lineno}: duplicate judgment for {parts[2]}")
                docs[parts[2]] = labels if name in CAM_MAPPINGS else labels[0]
        self.mapped[name] = table


def load_qrels(path) -> AspectQrels:
    """Combined three-aspect file, or a directory of per-mapping files named after the mapping."""
    path = Path(path)
    if path.is_dir():
        combined = path / "combined.qrels"
        qrels = AspectQrels.from_combined(combined) if combined.exists() else AspectQrels()
        known = set(BINARY_MAPPINGS) | set(GRADED_MAPPINGS) | set(CAM_MAPPINGS)
        for f in sorted(path.iterdir()):
            name = f.name.removesuffix(".qrels").removesuffix(".txt")
            if name in known:
                qrels.load_mapping(name, f)
        if not qrels.topics:
            raise EvaluationError(f"{path}: no qrels found")
        return qrels
    qrels = AspectQrels.from_combined(path)
    if not qrels.topics:
        raise EvaluationError(f"{path}: empty qrels")
    return qrels


# --------------------------------------------------------------------------
# measures. ``ranking`` is a list of doc ids, ``gains`` maps doc -> gain for
# one topic; documents absent from ``gains`` have gain 0.


def n_relevant(gains: dict) -> int:
    return sum(1 for g in gains.values() if g > 0)


def average_precision(ranking, gains: dict) -> float:
    R = n_relevant(gains)
    if R == 0:
        return 0.0
    hits, total = 0, 0.0
    for i, d in enumerate(ranking, start=1):
        if gains.get(d, 0) > 0:
            hits += 1
            total += hits / i
    return total / R


def rprec(ranking, gains: dict) -> float:
    """Precision at rank R; positions past the end of the run count as misses."""
    R = n_relevant(gains)
    if R == 0:
        return 0.0
    return sum(1 for d in ranking[:R] if gains.get(d, 0) > 0) / R


def dcg(gain_list) -> float:
    return sum(g / math.log2(i + 1) for i, g in enumerate(gain_list, start=1))


def ndcg(ranking, gains: dict, depth: int = NDCG_DEPTH) -> float:
    ideal = dcg(sorted((g for g in gains.values() if g > 0), reverse=True)[:depth])
    if ideal == 0:
        return 0.0
    return dcg([gains.get(d, 0) for d in ranking[:depth]]) / ideal


def cam(per_aspect) -> float:
    """Convex aggregation with uniform weights: the mean of per-aspect scores."""
    per_aspect = list(per_aspect)
    return sum(per_aspect) / len(per_aspect)


def rbp_depth(p: float, residual: float) -> int:
    """Smallest depth D with ``p**D < residual``."""
    return max(1, math.floor(math.log(residual) / math.log(p)) + 1)


def ideal_ranking(ranking, gains: dict) -> list:
    """Positive-gain documents by descending gain; within a grade, in run
    order, then unretrieved ones by doc id."""
    pos = {d: i for i, d in enumerate(ranking)}
    docs = [d for d, g in gains.items() if g > 0]
    return sorted(docs, key=lambda d: (-gains[d], pos.get(d, len(pos)), d))


def rbo(a, b, p: float, depth: int) -> float:
    """Truncated rank-biased overlap, ``(1-p) sum_d p^(d-1) |a[:d] & b[:d]| / d``."""
    seen_a, seen_b = set(), set()
    overlap, total, weight = 0, 0.0, 1.0
    for d in range(1, depth + 1):
        x = a[d - 1] if d <= len(a) else None
        y = b[d - 1] if d <= len(b) else None
        if x is not None:
            overlap += x == y or x in seen_b
            seen_a.add(x)
        if y is not None and y != x:
            overlap += y in seen_a
        if y is not None:
            seen_b.add(y)
        total += weight * overlap / d
        weight *= p
    return (1 - p) * total


def compatibility(ranking, gains: dict, p: float = RBP_PERSISTENCE, residual: float = RBP_RESIDUAL) -> float:
    """Rank-biased overlap with the ideal ranking, normalized by the ideal's self-overlap."""
    if not 0 < p < 1:
        raise EvaluationError(f"persistence must lie in (0, 1), got {p}")
    ideal = ideal_ranking(ranking, gains)
    if not ideal:
        return 0.0
    depth = rbp_depth(p, residual)
    return rbo(list(ranking), ideal, p, depth) / rbo(ideal, ideal, p, depth)


# --------------------------------------------------------------------------
# run evaluation


@dataclass
class MeasureResult:
    run_id: str
    mapping: str
    measure: str
    per_topic: dict
    mapping_id: int | None = None
    higher_is_better: bool = True

    @property
    def mean(self) -> float:
        vals = list(self.per_topic.values())
        return sum(vals) / len(vals) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "mapping_id": self.mapping_id,
            "mapping": self.mapping,
            "measure": self.measure,
            "higher_is_better": self.higher_is_better,
            "mean": self.mean,
            "per_topic": {str(t): v for t, v in sorted(self.per_topic.items(), key=lambda kv: _topic_sort_key(kv[0]))},
        }


def _doc_order(entries) -> list:
    return [e if isinstance(e, str) else e[0] for e in entries]


def _shared_topics(rankings: dict, qrels: AspectQrels) -> list:
    shared = sorted(set(rankings) & qrels.topics, key=_topic_sort_key)
    if not shared:
        raise EvaluationError("run and qrels share no topics")
    return shared


def evaluate_measure(run_id, rankings, qrels, mapping: str, measure: str, **kw) -> MeasureResult:
    """One mapping/measure pair over topics present in both run and qrels.

    Topics with no positive gain under the mapping are skipped.
    """
    per_topic = {}
    for topic in _shared_topics(rankings, qrels):
        ranking = _doc_order(rankings[topic])
        if measure in ("cam_map", "cam_map_three"):
            tables = [g.get(topic, {}) for g in qrels.cam_gains(mapping)]
            if not any(n_relevant(g) for g in tables):
                continue
            per_topic[topic] = cam(average_precision(ranking, g) for g in tables)
            continue
        gains = qrels.gains(mapping).get(topic, {})
        if not n_relevant(gains):
            continue
        if measure == "ndcg":
            per_topic[topic] = ndcg(ranking, gains, kw.get("depth", NDCG_DEPTH))
        elif measure == "compatibility":
            per_topic[topic] = compatibility(ranking, gains, kw.get("p", RBP_PERSISTENCE), kw.get("residual", RBP_RESIDUAL))
        elif measure == "rprec":
            per_topic[topic] = rprec(ranking, gains)
        elif measure == "map":
            per_topic[topic] = average_precision(ranking, gains)
        else:
            raise EvaluationError(f"unknown measure {measure!r}")
    return MeasureResult(run_id, mapping, measure, per_topic)


def evaluate_run(run_id, rankings: dict, qrels: AspectQrels, mapping_ids=None, **kw) -> list:
    """One MeasureResult per mapping id (all nine by default)."""
    wanted = set(range(len(MAPPING_TABLE))) if mapping_ids is None else set(mapping_ids)
    out = []
    for mid, name, measure, higher in MAPPING_TABLE:
        if mid not in wanted:
            continue
        res = evaluate_measure(run_id, rankings, qrels, name, measure, **kw)
        res.mapping_id, res.higher_is_better = mid, higher
        out.append(res)
    return out


def evaluate_rprec(run_id, rankings: dict, qrels: AspectQrels) -> MeasureResult:
    return evaluate_measure(run_id, rankings, qrels, RPREC_MAPPING, "rprec")


# --------------------------------------------------------------------------
# reports


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def mapping_table_tsv(results: dict) -> str:
    """``run_id`` rows, one column per mapping id; ``results`` maps run -> [MeasureResult]."""
    ids = [m[0] for m in MAPPING_TABLE]
    lines = ["run_id\t" + "\t".join(str(i) for i in ids)]
    for run_id in sorted(results):
        by_id = {r.mapping_id: r.mean for r in results[run_id]}
        lines.append(run_id + "\t" + "\t".join(_fmt(by_id[i]) if i in by_id else "-" for i in ids))
    return "\n".join(lines) + "\n"


def rprec_table_tsv(results: dict) -> str:
    """Runs in ascending Rprec order; ``results`` maps run -> MeasureResult."""
    lines = ["run_id\trprec"]
    for run_id, res in sorted(results.items(), key=lambda kv: (kv[1].mean, kv[0])):
        lines.append(f"{run_id}\t{_fmt(res.mean)}")
    return "\n".join(lines) + "\n"


def results_json(results: dict) -> str:
    payload = {run_id: [r.to_dict() for r in res] for run_id, res in sorted(results.items())}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def harm_help_csv(results: dict) -> str:
    """Per-run (harmful, helpful) compatibility pairs for plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run_id", "harmful", "helpful"])
    for run_id in sorted(results):
        by_id = {r.mapping_id: r.mean for r in results[run_id]}
        if 7 in by_id and 8 in by_id:
            w.writerow([run_id, repr(by_id[7]), repr(by_id[8])])
    return buf.getvalue()
