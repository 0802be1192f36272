"""Merging relevance, credibility and misinformation into a final ranking."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

ASPECTS = ("relevance", "credibility", "misinformation")
STRATEGIES = ("baseline", "weighted_average", "distance_best", "single_aspect", "rrf")
DISTANCES = ("euclidean", "chebyshev")
RRF_K = 60
TIE_TOLERANCE = 1e-9


class RecipeError(ValueError):
    pass


# --------------------------------------------------------------------------
# primitives


def zscore_normalize(x) -> np.ndarray:
    """Column-wise z-scores with the population standard deviation.

    A column whose deviation is zero (up to rounding relative to its largest
    magnitude) maps to 0.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    x = x.reshape(len(x), -1)
    # z is scale-free, so work on columns scaled to max |x| = 1; this keeps
    # the variance from under- or overflowing at extreme magnitudes
    scale = np.abs(x).max(axis=0) if len(x) else np.ones(x.shape[1])
    x = x / np.where(scale > 0, scale, 1.0)
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    # identical values can leave sigma at ~1e-17 after the mean rounds
    flat = sigma <= 1e-12
    z = np.where(flat, 0.0, (x - mu) / np.where(flat, 1.0, sigma))
    return z[:, 0] if squeeze else z


def reverse_aspect(z):
    return -z


def weighted_average(z, weights) -> np.ndarray:
    return np.asarray(z, dtype=float) @ np.asarray(weights, dtype=float)


def best_score_vector(z, orientation=("max", "max", "max")) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return np.array([z[:, a].max() if o == "max" else z[:, a].min() for a, o in enumerate(orientation)])


def distances(z, best, metric="euclidean") -> np.ndarray:
    diff = np.atleast_2d(np.asarray(z, dtype=float)) - best
    if metric == "euclidean":
        return np.sqrt(np.sum(diff * diff, axis=1))
    if metric == "chebyshev":
        return np.max(np.abs(diff), axis=1)
    raise RecipeError(f"unknown distance {metric!r}")


def order_by(doc_ids, scores, descending=True, tol: float = TIE_TOLERANCE) -> list:
    """Indices sorted by score (descending by default), ties by ascending doc_id.

    Scores within ``tol`` (relative, floor 1) of their neighbour count as
    tied, so rounding noise from summation order cannot flip a tie.
    """
    sign = -1.0 if descending else 1.0
    idx = sorted(range(len(doc_ids)), key=lambda i: (sign * scores[i], doc_ids[i]))
    out, group = [], []
    for i in idx:
        if group and abs(scores[i] - scores[group[-1]]) > tol * max(1.0, abs(scores[i])):
            out.extend(sorted(group, key=lambda j: doc_ids[j]))
            group = []
        group.append(i)
    out.extend(sorted(group, key=lambda j: doc_ids[j]))
    return out


def distance_rerank(doc_ids, z, best, metric="euclidean") -> list:
    """``[(doc_id, distance)]`` closest first."""
    d = distances(z, best, metric)
    return [(doc_ids[i], float(d[i])) for i in order_by(doc_ids, d, descending=False)]


def rrf_fuse(rankings, k: int = RRF_K) -> list:
    """Reciprocal rank fusion of doc-id lists.

    A document absent from a list takes rank ``len(list) + 1`` there.
    Returns ``[(doc_id, rrf_score)]`` best first, ties by doc_id.
    """
    if k <= 0:
        raise RecipeError(f"rrf k must be positive, got {k}")
    universe = sorted({d for r in rankings for d in r})
    scores = dict.fromkeys(universe, 0.0)
    for ranking in rankings:
        rank_of = {d: i for i, d in enumerate(ranking, start=1)}
        missing = len(ranking) + 1
        for d in universe:
            scores[d] += 1.0 / (k + rank_of.get(d, missing))
    docs = list(scores)
    values = [scores[d] for d in docs]
    return [(docs[i], values[i]) for i in order_by(docs, values)]


# --------------------------------------------------------------------------
# per-topic score matrix


@dataclass
class AspectScoreMatrix:
    """Raw and standardized aspect scores of one topic's initial run."""

    topic_id: object
    doc_ids: list
    raw: np.ndarray  # (n, 3) in ASPECTS order
    z: np.ndarray = field(init=False)

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=float).reshape(len(self.doc_ids), len(ASPECTS))
        self.z = zscore_normalize(self.raw) if len(self.doc_ids) else self.raw.copy()
        self._row = {d: i for i, d in enumerate(self.doc_ids)}

    def rows(self, doc_ids) -> np.ndarray:
        return self.z[[self._row[d] for d in doc_ids]]

    @classmethod
    def build(cls, topic_id, initial_entries, credibility: dict, misinformation: dict):
        """From ``[(doc_id, relevance_score)]`` and per-document aspect maps."""
        missing = [d for d, _ in initial_entries if d not in credibility or d not in misinformation]
        if missing:
            raise RecipeError(f"topic {topic_id}: no aspect scores for {len(missing)} documents, e.g. {missing[0]}")
        raw = [(s, credibility[d], misinformation[d]) for d, s in initial_entries]
        return cls(topic_id, [d for d, _ in initial_entries], np.array(raw, dtype=float).reshape(-1, 3))


# --------------------------------------------------------------------------
# recipes


@dataclass
class FusionRecipe:
    run_id: str
    strategy: str
    task: str = ""
    initial: str | None = None  # "bm25" | "rm3"
    query_fields: str = "title+description"
    cutoff: int | None = None
    weights: dict = field(default_factory=dict)
    orientation: dict = field(default_factory=dict)
    reverse: dict = field(default_factory=dict)
    aspect: str | None = None
    distance: str | None = None
    rrf_k: int = RRF_K
    fuse_runs: list = field(default_factory=list)
    rrf_aspects: list = field(default_factory=list)
    note: str = ""

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise RecipeError(f"{self.run_id}: unknown strategy {self.strategy!r}")
        for name in (*self.weights, *self.orientation, *self.reverse, *self.rrf_aspects):
            if name not in ASPECTS:
                raise RecipeError(f"{self.run_id}: unknown aspect {name!r}")
        if self.cutoff is not None and self.cutoff < 1:
            raise RecipeError(f"{self.run_id}: cutoff must be positive")
        if self.strategy == "rrf" and self.fuse_runs:
            return
        if self.initial not in ("bm25", "rm3"):
            raise RecipeError(f"{self.run_id}: initial run must be bm25 or rm3")
        if self.strategy == "weighted_average" and not self.weights:
            raise RecipeError(f"{self.run_id}: weighted_average needs weights")
        if self.strategy == "single_aspect" and self.aspect not in ASPECTS:
            raise RecipeError(f"{self.run_id}: single_aspect needs an aspect")
        if self.strategy == "distance_best" and self.distance not in DISTANCES:
            raise RecipeError(f"{self.run_id}: distance_best needs distance in {DISTANCES}")
        if self.strategy == "rrf" and self.rrf_k <= 0:
            raise RecipeError(f"{self.run_id}: rrf_k must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "FusionRecipe":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise RecipeError(f"{d.get('run_id')}: unknown recipe fields {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")).hexdigest()

    @property
    def initial_key(self) -> str | None:
        return None if self.initial is None else f"{self.initial}:{self.query_fields}"

    def weight_vector(self) -> np.ndarray:
        return np.array([float(self.weights.get(a, 0.0)) for a in ASPECTS])

    def orientation_tuple(self) -> tuple:
        return tuple(self.orientation.get(a, "max") for a in ASPECTS)

    def reversal_signs(self) -> np.ndarray:
        return np.array([-1.0 if self.reverse.get(a) else 1.0 for a in ASPECTS])

    def aspects_used(self) -> set:
        """Non-relevance aspects this recipe reads (relevance comes with the initial run)."""
        if self.strategy == "baseline" or self.fuse_runs:
            return set()
        if self.strategy == "weighted_average":
            used = {a for a, w in self.weights.items() if w}
        elif self.strategy == "single_aspect":
            used = {self.aspect}
        elif self.strategy == "rrf":
            used = set(self.rrf_aspects or ASPECTS)
        else:
            used = set(ASPECTS)
        return used - {"relevance"}


def load_recipes(path) -> list:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise RecipeError(f"{path}: expected a JSON array of recipes")
    recipes = [FusionRecipe.from_dict(d) for d in data]
    ids = [r.run_id for r in recipes]
    if len(set(ids)) != len(ids):
        raise RecipeError(f"{path}: duplicate run ids")
    return recipes


# --------------------------------------------------------------------------
# applying recipes


@dataclass
class FusedRun:
    run_id: str
    rankings: dict  # topic -> [(doc_id, score)]
    provenance: str
    head_scores: dict = field(default_factory=dict)  # topic -> {doc_id: strategy score}


def synthetic_scores(doc_ids) -> list:
    """Rank-consistent, strictly decreasing scores for a fused list."""
    n = len(doc_ids)
    return [(d, float(n - i)) for i, d in enumerate(doc_ids)]


def rerank_head(recipe: FusionRecipe, matrix: AspectScoreMatrix, head: list) -> list:
    """Order ``head`` doc ids by the recipe's strategy; returns ``[(doc_id, strategy_score)]``."""
    z_all = matrix.z * recipe.reversal_signs()
    z = z_all[[matrix._row[d] for d in head]]
    if recipe.strategy == "weighted_average":
        s = weighted_average(z, recipe.weight_vector())
        return [(head[i], float(s[i])) for i in order_by(head, s)]
    if recipe.strategy == "single_aspect":
        s = z[:, ASPECTS.index(recipe.aspect)]
        return [(head[i], float(s[i])) for i in order_by(head, s)]
    if recipe.strategy == "distance_best":
        # best vector over the whole initial run, as the standardisation is
        best = best_score_vector(z_all, recipe.orientation_tuple())
        return distance_rerank(head, z, best, recipe.distance)
    if recipe.strategy == "rrf":
        orient = recipe.orientation_tuple()
        lists = []
        for a in recipe.rrf_aspects or ASPECTS:
            col = ASPECTS.index(a)
            s = z[:, col] if orient[col] == "max" else -z[:, col]
            lists.append([head[i] for i in order_by(head, s)])
        return rrf_fuse(lists, recipe.rrf_k)
    raise RecipeError(f"{recipe.run_id}: strategy {recipe.strategy!r} does not re-rank a head")


def apply_recipe(recipe: FusionRecipe, initial: dict, matrices: dict) -> FusedRun:
    """Re-rank each topic's initial run.

    ``initial`` maps topic -> ``[(doc_id, score)]``; ``matrices`` maps topic ->
    AspectScoreMatrix. The top ``cutoff`` documents are re-ordered by the
    strategy and the remainder follows in initial order.
    """
    rankings, head_scores = {}, {}
    for topic, entries in initial.items():
        if recipe.strategy == "baseline":
            rankings[topic] = list(entries)
            continue
        doc_ids = [d for d, _ in entries]
        cut = len(doc_ids) if recipe.cutoff is None else min(recipe.cutoff, len(doc_ids))
        head, tail = doc_ids[:cut], doc_ids[cut:]
        if not head:
            rankings[topic] = []
            continue
        reranked = rerank_head(recipe, matrices[topic], head)
        head_scores[topic] = dict(reranked)
        rankings[topic] = synthetic_scores([d for d, _ in reranked] + tail)
    return FusedRun(recipe.run_id, rankings, recipe.digest(), head_scores)


def fuse_runs(recipe: FusionRecipe, runs: dict) -> FusedRun:
    """RRF over the full rankings of previously produced runs."""
    missing = [r for r in recipe.fuse_runs if r not in runs]
    if missing:
        raise RecipeError(f"{recipe.run_id}: fuses unknown runs {missing}")
    topics = sorted({t for r in recipe.fuse_runs for t in runs[r].rankings}, key=str)
    rankings, head_scores = {}, {}
    for topic in topics:
        lists = [[d for d, _ in runs[r].rankings.get(topic, [])] for r in recipe.fuse_runs]
        fused = rrf_fuse(lists, recipe.rrf_k)
        head_scores[topic] = dict(fused)
        rankings[topic] = synthetic_scores([d for d, _ in fused])
    return FusedRun(recipe.run_id, rankings, recipe.digest(), head_scores)


def execution_order(recipes: list) -> list:
    """Recipes ordered so that fused runs follow the runs they consume."""
    by_id = {r.run_id: r for r in recipes}
    done, order = set(), []

    def visit(r, stack=()):
        if r.run_id in done:
            return
        if r.run_id in stack:
            raise RecipeError(f"cyclic fuse_runs through {r.run_id}")
        for dep in r.fuse_runs:
            if dep not in by_id:
                raise RecipeError(f"{r.run_id}: fuses unknown run {dep}")
            visit(by_id[dep], stack + (r.run_id,))
        done.add(r.run_id)
        order.append(r)

    for r in recipes:
        visit(r)
    return order


def check_inputs(recipes: list, initial_runs: dict, aspect_scores: dict) -> None:
    """Raise RecipeError naming every run whose inputs are absent."""
    gaps = {}
    by_id = {r.run_id: r for r in recipes}

    def needs(r):
        if r.fuse_runs:
            out = set()
            for dep in r.fuse_runs:
                out |= needs(by_id[dep]) if dep in by_id else {f"run {dep}"}
            return out
        out = {f"{a} scores" for a in r.aspects_used() if a not in aspect_scores}
        if r.initial_key not in initial_runs:
            out.add(f"initial run {r.initial_key}")
        return out

    for r in recipes:
        missing = needs(r)
        if missing:
            gaps[r.run_id] = sorted(missing)
    if gaps:
        detail = "; ".join(f"{rid} needs {', '.join(m)}" for rid, m in gaps.items())
        raise RecipeError(f"missing inputs: {detail}")


def run_recipes(recipes: list, initial_runs: dict, aspect_scores: dict) -> dict:
    """Produce every recipe's run.

    ``initial_runs``: ``"bm25:title+description" -> {topic: [(doc, score)]}``.
    ``aspect_scores``: ``"credibility"`` and ``"misinformation"``, each
    ``{topic: {doc: x}}``.
    """
    check_inputs(recipes, initial_runs, aspect_scores)
    cred = aspect_scores.get("credibility", {})
    mis = aspect_scores.get("misinformation", {})
    matrix_cache = {}
    runs = {}
    for recipe in execution_order(recipes):
        if recipe.fuse_runs:
            runs[recipe.run_id] = fuse_runs(recipe, runs)
            continue
        initial = initial_runs[recipe.initial_key]
        if recipe.strategy == "baseline":
            runs[recipe.run_id] = apply_recipe(recipe, initial, {})
            continue
        key = recipe.initial_key
        if key not in matrix_cache:
            # aspects a recipe does not read are filled with zeros (constant -> z = 0)
            matrix_cache[key] = {
                t: AspectScoreMatrix.build(
                    t,
                    entries,
                    cred.get(t, {}) if cred else {d: 0.0 for d, _ in entries},
                    mis.get(t, {}) if mis else {d: 0.0 for d, _ in entries},
                )
                for t, entries in initial.items()
            }
        runs[recipe.run_id] = apply_recipe(recipe, initial, matrix_cache[key])
    return {r.run_id: runs[r.run_id] for r in recipes}
