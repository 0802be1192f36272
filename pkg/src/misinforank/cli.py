"""Command-line pipeline: index, features, credibility, scoring, fusion, evaluation."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .corpus import CorpusFormatError, PageRankCache, document_features, extract_text, ingest_corpus, load_topics, registrable_domain
from .credibility import EnsembleModel, FeatureError, LabelError, TrainingError, credibility_scores, load_training_csv, train_ensemble
from .evaluation import EvaluationError, evaluate_rprec, evaluate_run, harm_help_csv, load_qrels, mapping_table_tsv, results_json, rprec_table_tsv
from .fusion import RecipeError, load_recipes, run_recipes
from .misinfo import StanceError, load_external_stance, score_documents
from .retrieval import CorpusError, IndexedCorpus, QuerySpec, build_index, search_all
from .trec import read_run, write_run

log = logging.getLogger("misinforank")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
RUNTIME_ERRORS = (
    CorpusFormatError, CorpusError, FeatureError, LabelError, TrainingError, RecipeError,
    EvaluationError, StanceError, ValueError, KeyError, OSError,
)


class InputError(Exception):
    """Bad invocation or missing input; exits with status 2."""


# --------------------------------------------------------------------------
# logging


class JsonFormatter(logging.Formatter):
    def format(self, record):
        obj = {"level": record.levelname.lower(), "logger": record.name, "event": record.getMessage()}
        obj.update(getattr(record, "fields", {}))
        return json.dumps(obj, sort_keys=True, default=str)


def setup_logging(level="INFO", stream=None) -> None:
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(JsonFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)


def emit(event: str, level=logging.INFO, **fields) -> None:
    log.log(level, event, extra={"fields": fields})


# --------------------------------------------------------------------------
# files


def write_text(path, text: str) -> None:
    """Write via a temporary sibling so a failure never leaves a half file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_jsonl(path, rows) -> None:
    write_text(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def read_jsonl(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def require_files(**paths) -> None:
    missing = [f"{name}={p}" for name, p in paths.items() if p is None or not Path(p).is_file()]
    if missing:
        raise InputError(f"missing input files: {', '.join(missing)}")


def build_timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


# --------------------------------------------------------------------------
# config


@dataclass
class PipelineConfig:
    corpus: str
    topics: str
    output_dir: str
    recipes: list = field(default_factory=list)
    qrels: str | None = None
    stance: str | None = None
    pagerank_cache: str | None = None
    cred_training: str | None = None
    cred_model: str | None = None
    depth: int = 1000
    seed: int = 0
    threads: int = 1

    _PATHS = ("corpus", "topics", "output_dir", "qrels", "stance", "pagerank_cache", "cred_training", "cred_model")

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise InputError(f"config file not found: {path}")
        raw = json.loads(path.read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        base = path.parent
        resolve = lambda p: None if p is None else str((base / p).resolve())
        for key in cls._PATHS:
            if key in raw:
                raw[key] = resolve(raw[key])
        raw["recipes"] = [resolve(p) for p in raw.get("recipes", [])]
        try:
            return cls(**raw)
        except TypeError as exc:
            raise InputError(f"bad config: {exc}") from exc

    def validate(self) -> None:
        """Check every referenced input before any stage writes output."""
        require_files(corpus=self.corpus, topics=self.topics)
        for i, r in enumerate(self.recipes):
            require_files(**{f"recipes[{i}]": r})
        optional = {"qrels": self.qrels, "stance": self.stance, "pagerank_cache": self.pagerank_cache}
        missing = [f"{k}={v}" for k, v in optional.items() if v is not None and not Path(v).exists()]
        if missing:
            raise InputError(f"missing input files: {', '.join(missing)}")
        if self.depth < 1:
            raise InputError("depth must be >= 1")
        if self.cred_model and Path(self.cred_model).is_file():
            return
        if not self.cred_training or not Path(self.cred_training).is_file():
            raise InputError("need cred_model (existing) or cred_training")

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# stages


def stage_index(corpus_path) -> IndexedCorpus:
    stream = ingest_corpus(corpus_path)
    index = build_index(extract_text(doc) for doc in stream)
    emit("index_built", skipped=stream.skipped, **index.stats())
    return index


def relevance_key(model: str, fields: str) -> str:
    return f"{model}:{fields}"


def stage_relevance(index, topics, model: str, fields: str, depth: int, threads: int = 1) -> dict:
    queries = [QuerySpec(t.topic_id, t.query_text(fields), model, depth) for t in topics]
    results = search_all(index, queries, threads)
    emit("relevance_scored", model=model, fields=fields, topics=len(results))
    return {r.topic_id: list(r.entries) for r in results}


def relevance_rows(key: str, run: dict) -> list:
    return [
        {"run": key, "topic_id": t, "doc_id": d, "rank": i, "score": s}
        for t in sorted(run)
        for i, (d, s) in enumerate(run[t], start=1)
    ]


def runs_from_rows(rows) -> dict:
    """``{run_key: {topic: [(doc, score)]}}`` from relevance JSONL rows."""
    out = {}
    for r in sorted(rows, key=lambda r: (r["run"], r["topic_id"], r["rank"])):
        out.setdefault(r["run"], {}).setdefault(r["topic_id"], []).append((r["doc_id"], r["score"]))
    return out


def pairs_in_runs(runs: dict) -> dict:
    """``topic -> sorted doc ids`` over the union of initial runs."""
    pairs = {}
    for run in runs.values():
        for topic, entries in run.items():
            pairs.setdefault(topic, set()).update(d for d, _ in entries)
    return {t: sorted(ds) for t, ds in sorted(pairs.items())}


def stage_features(corpus_path, cache: PageRankCache, doc_ids=None) -> list:
    rows = []
    for doc in ingest_corpus(corpus_path):
        if doc_ids is None or doc.doc_id in doc_ids:
            rows.append(document_features(doc, cache))
    emit("features_extracted", documents=len(rows), pagerank_cache=len(cache))
    return rows


def stage_train(training_csv, corpus_path, cache, seed: int) -> EnsembleModel:
    pages = None
    if corpus_path is not None:
        pages = {doc.url: doc for doc in ingest_corpus(corpus_path)}
    data = load_training_csv(training_csv, pages, cache)
    model = train_ensemble(data, seed)
    emit("credibility_trained", examples=len(data.y), cv_accuracy=model.cv_accuracy, seed=seed)
    return model


def stage_credibility(model, feature_rows, pairs: dict) -> list:
    by_doc = {r["doc_id"]: r for r in feature_rows}
    missing = sorted({d for ds in pairs.values() for d in ds} - set(by_doc))
    if missing:
        raise FeatureError(f"no feature record for {len(missing)} documents, e.g. {missing[0]}")
    needed = sorted({d for ds in pairs.values() for d in ds})
    probs = credibility_scores(model, [by_doc[d] for d in needed])
    return [{"topic_id": t, "doc_id": d, "score": probs[d]} for t, ds in pairs.items() for d in ds]


def stage_misinfo(corpus_path, topics, pairs: dict, stance_path=None) -> list:
    external, stats = {}, {}
    if stance_path is not None:
        external = load_external_stance(stance_path, stats)
        emit("stance_loaded", **stats)
    needed = {d for ds in pairs.values() for d in ds}
    parsed = {doc.doc_id: extract_text(doc) for doc in ingest_corpus(corpus_path) if doc.doc_id in needed}
    rows = []
    for topic in topics:
        ds = pairs.get(topic.topic_id, [])
        scores, fallbacks = score_documents(topic, [parsed[d] for d in ds], external)
        if fallbacks:
            emit("lexical_fallback", logging.WARNING, topic_id=topic.topic_id, fallbacks=fallbacks, documents=len(ds))
        src = lambda d: "external" if (topic.topic_id, d) in external else "lexical"
        rows.extend({"topic_id": s.topic_id, "doc_id": s.doc_id, "score": s.s, "source": src(s.doc_id)} for s in scores)
    return rows


def aspect_map(rows) -> dict:
    out = {}
    for r in rows:
        out.setdefault(r["topic_id"], {})[r["doc_id"]] = r["score"]
    return out


def stage_fuse(recipe_path, initial_runs: dict, cred_rows, mis_rows, out_dir) -> list:
    """Run one recipe file; returns manifest entries. Writes nothing on error."""
    recipes = load_recipes(recipe_path)
    aspects = {}
    if cred_rows is not None:
        aspects["credibility"] = aspect_map(cred_rows)
    if mis_rows is not None:
        aspects["misinformation"] = aspect_map(mis_rows)
    fused = run_recipes(recipes, initial_runs, aspects)
    group = Path(recipe_path).stem
    entries = []
    for recipe in recipes:
        path = Path(out_dir) / group / f"{recipe.run_id}.run"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_run(path, fused[recipe.run_id].rankings, recipe.run_id)
        entries.append(
            {
                "run_id": recipe.run_id,
                "group": group,
                "task": recipe.task,
                "recipe_hash": recipe.digest(),
                "file": str(path.relative_to(out_dir)),
                "sha256": sha256_file(path),
            }
        )
    emit("recipes_applied", recipes=str(recipe_path), runs=len(entries))
    return entries


def stage_eval(run_files, qrels_path, out_dir, rprec_table: bool) -> dict:
    qrels = load_qrels(qrels_path)
    runs = {}
    for f in run_files:
        rankings, tag = read_run(f)
        runs[tag or Path(f).stem] = rankings
    results = {rid: evaluate_run(rid, r, qrels) for rid, r in runs.items()}
    outputs = {
        "measures.tsv": mapping_table_tsv(results),
        "measures.json": results_json(results),
        "harm_help.csv": harm_help_csv(results),
    }
    if rprec_table:
        outputs["rprec.tsv"] = rprec_table_tsv({rid: evaluate_rprec(rid, r, qrels) for rid, r in runs.items()})
    for name, text in outputs.items():
        write_text(Path(out_dir) / name, text)
    emit("evaluated", runs=len(runs), out=str(out_dir))
    return outputs


# --------------------------------------------------------------------------
# subcommands


def _load_cache(path) -> PageRankCache:
    return PageRankCache.load(path) if path else PageRankCache()


def _cfg(args, name):
    value = getattr(args, name, None)
    if value is None and args.config_obj is not None:
        value = getattr(args.config_obj, name, None)
    return value


def cmd_index(args) -> int:
    corpus, out = _cfg(args, "corpus"), args.out
    require_files(corpus=corpus)
    index = stage_index(corpus)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    index.save(out)
    print(json.dumps(index.stats(), sort_keys=True))
    return EXIT_OK


def cmd_fetch_pagerank(args) -> int:
    corpus, cache_path = _cfg(args, "corpus"), args.cache or _cfg(args, "pagerank_cache")
    require_files(corpus=corpus)
    key = args.api_key or os.environ.get("OPR_API_KEY")
    if not key:
        raise InputError("an OpenPageRank key is required (--api-key or OPR_API_KEY)")
    if not cache_path:
        raise InputError("--cache is required")
    from .corpus import fetch_pagerank

    cache = _load_cache(cache_path) if Path(cache_path).exists() else PageRankCache()
    domains = {registrable_domain(doc.url) for doc in ingest_corpus(corpus)} - {None}
    todo = sorted(d for d in domains if cache.get(d) is None)
    records = fetch_pagerank(todo, key, cache_path=cache_path)
    emit("pagerank_fetched", requested=len(todo), resolved=sum(r.pr_rank != "unknown" for r in records))
    return EXIT_OK


def cmd_features(args) -> int:
    corpus, cache = _cfg(args, "corpus"), args.cache or _cfg(args, "pagerank_cache")
    require_files(corpus=corpus)
    rows = stage_features(corpus, _load_cache(cache))
    write_jsonl(args.out, rows)
    return EXIT_OK


def cmd_train_cred(args) -> int:
    training = args.training or _cfg(args, "cred_training")
    require_files(training=training)
    cache = args.cache or _cfg(args, "pagerank_cache")
    model = stage_train(training, args.pages, _load_cache(cache), args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    model.save(args.out)
    print(json.dumps({"cv_accuracy": model.cv_accuracy}, sort_keys=True))
    return EXIT_OK


def cmd_score(args) -> int:
    if args.aspect == "relevance":
        require_files(index=args.index, topics=_cfg(args, "topics"))
        index = IndexedCorpus.load(args.index)
        topics = load_topics(_cfg(args, "topics"))
        run = stage_relevance(index, topics, args.model, args.fields, args.depth, args.threads)
        write_jsonl(args.out, relevance_rows(relevance_key(args.model, args.fields), run))
        return EXIT_OK
    if not args.runs:
        raise InputError("--runs (relevance score files) is required")
    require_files(**{f"runs[{i}]": p for i, p in enumerate(args.runs)})
    pairs = pairs_in_runs(runs_from_rows(row for p in args.runs for row in read_jsonl(p)))
    if args.aspect == "credibility":
        require_files(model=args.cred_model, features=args.features)
        rows = stage_credibility(EnsembleModel.load(args.cred_model), read_jsonl(args.features), pairs)
    else:
        corpus, topics_path, stance = _cfg(args, "corpus"), _cfg(args, "topics"), args.stance
        require_files(corpus=corpus, topics=topics_path)
        if stance is not None:
            require_files(stance=stance)
        rows = stage_misinfo(corpus, load_topics(topics_path), pairs, stance)
    write_jsonl(args.out, rows)
    return EXIT_OK


def cmd_fuse(args) -> int:
    require_files(recipes=args.recipes, **{f"relevance[{i}]": p for i, p in enumerate(args.relevance)})
    cred = read_jsonl(args.credibility) if args.credibility and Path(args.credibility).is_file() else None
    mis = read_jsonl(args.misinfo) if args.misinfo and Path(args.misinfo).is_file() else None
    initial = runs_from_rows(row for p in args.relevance for row in read_jsonl(p))
    stage_fuse(args.recipes, initial, cred, mis, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    qrels = args.qrels or _cfg(args, "qrels")
    if qrels is None or not Path(qrels).exists():
        raise InputError(f"qrels not found: {qrels}")
    require_files(**{f"runs[{i}]": p for i, p in enumerate(args.runs)})
    stage_eval(args.runs, qrels, args.out, args.rprec)
    return EXIT_OK


def run_pipeline(cfg: PipelineConfig) -> dict:
    cfg.validate()
    recipe_sets = {p: load_recipes(p) for p in cfg.recipes}
    keys = sorted({r.initial_key for rs in recipe_sets.values() for r in rs if r.initial_key})
    topics = load_topics(cfg.topics)
    cache = _load_cache(cfg.pagerank_cache)
    started = time.perf_counter()

    # compute everything in memory first; files are written only at the end
    index = stage_index(cfg.corpus)
    initial = {}
    for key in keys:
        model, fields_ = key.split(":", 1)
        initial[key] = stage_relevance(index, topics, model, fields_, cfg.depth, cfg.threads)
    pairs = pairs_in_runs(initial)
    feature_rows = stage_features(cfg.corpus, cache)
    if cfg.cred_model and Path(cfg.cred_model).is_file():
        model = EnsembleModel.load(cfg.cred_model)
    else:
        model = stage_train(cfg.cred_training, cfg.corpus, cache, cfg.seed)
    cred_rows = stage_credibility(model, feature_rows, pairs)
    mis_rows = stage_misinfo(cfg.corpus, topics, pairs, cfg.stance)
    for path, recipes in recipe_sets.items():
        run_recipes(recipes, initial, {"credibility": aspect_map(cred_rows), "misinformation": aspect_map(mis_rows)})

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    index.save(out / "index.bin")
    model.save(out / "credibility.model")
    write_jsonl(out / "features.jsonl", feature_rows)
    for key in keys:
        write_jsonl(out / "scores" / f"relevance.{key.replace(':', '.')}.jsonl", relevance_rows(key, initial[key]))
    write_jsonl(out / "scores" / "credibility.jsonl", cred_rows)
    write_jsonl(out / "scores" / "misinformation.jsonl", mis_rows)

    runs = []
    for path in cfg.recipes:
        runs.extend(stage_fuse(path, initial, cred_rows, mis_rows, out / "runs"))
    if cfg.qrels:
        for group in sorted({r["group"] for r in runs}):
            files = [out / "runs" / r["file"] for r in runs if r["group"] == group]
            total_recall = any(r["task"] == "total_recall" for r in runs if r["group"] == group)
            stage_eval(files, cfg.qrels, out / "eval" / group, rprec_table=total_recall)

    inputs = {k: sha256_file(v) for k, v in sorted(cfg.to_dict().items()) if isinstance(v, str) and Path(v).is_file()}
    inputs.update({f"recipes/{Path(p).name}": sha256_file(p) for p in cfg.recipes})
    manifest = {
        "tool_version": __version__,
        "timestamp": build_timestamp(),
        "seed": cfg.seed,
        "depth": cfg.depth,
        "inputs": inputs,
        "cv_accuracy": model.cv_accuracy,
        "runs": runs,
    }
    write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    emit("pipeline_done", runs=len(runs), seconds=round(time.perf_counter() - started, 3))
    return manifest


def cmd_pipeline(args) -> int:
    if args.config_obj is None:
        raise InputError("pipeline needs --config")
    cfg = args.config_obj
    if args.out:
        cfg.output_dir = str(Path(args.out).resolve())
    run_pipeline(cfg)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--log-level", default="INFO", type=str.upper, choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    p = _Parser(prog="misinforank", parents=[common], description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("index", help="build the inverted index")
    s.add_argument("--corpus")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("fetch-pagerank", help="fill the PageRank cache for corpus domains")
    s.add_argument("--corpus")
    s.add_argument("--cache")
    s.add_argument("--api-key")
    s.set_defaults(func=cmd_fetch_pagerank)

    s = sub.add_parser("features", help="credibility features per document")
    s.add_argument("--corpus")
    s.add_argument("--cache")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train-cred", help="train the credibility ensemble")
    s.add_argument("--training")
    s.add_argument("--pages", help="corpus JSONL used when the CSV lacks feature columns")
    s.add_argument("--cache")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_cred)

    s = sub.add_parser("score", help="per-aspect score files")
    s.add_argument("aspect", choices=("relevance", "credibility", "misinfo"))
    s.add_argument("--out", required=True)
    s.add_argument("--index")
    s.add_argument("--topics")
    s.add_argument("--corpus")
    s.add_argument("--model", default="bm25", choices=("bm25", "rm3"))
    s.add_argument("--fields", default="title+description")
    s.add_argument("--depth", type=int, default=1000)
    s.add_argument("--runs", nargs="*", default=[], help="relevance score files defining the documents to score")
    s.add_argument("--cred-model")
    s.add_argument("--features")
    s.add_argument("--stance")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("fuse", help="apply a recipe file")
    s.add_argument("--recipes", required=True)
    s.add_argument("--relevance", nargs="+", required=True)
    s.add_argument("--credibility")
    s.add_argument("--misinfo")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("eval", help="evaluate run files")
    s.add_argument("--runs", nargs="+", required=True)
    s.add_argument("--qrels")
    s.add_argument("--out", required=True)
    s.add_argument("--rprec", action="store_true", help="also write the Rprec table")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("pipeline", help="run every stage from a config")
    s.add_argument("--out", help="override output_dir")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except InputError as exc:
        print(f"misinforank: {exc}", file=sys.stderr)
        return EXIT_USAGE
    setup_logging(args.log_level.upper())
    try:
        args.config_obj = PipelineConfig.load(args.config) if args.config else None
        cfg = args.config_obj
        if args.seed is None:
            args.seed = cfg.seed if cfg else 0
        if args.threads is None:
            args.threads = cfg.threads if cfg else 1
        if cfg is not None:
            cfg.seed, cfg.threads = args.seed, args.threads
        return args.func(args)
    except InputError as exc:
        emit("usage_error", logging.ERROR, error=str(exc))
        return EXIT_USAGE
    except RUNTIME_ERRORS as exc:
        emit("runtime_error", logging.ERROR, error=str(exc), kind=type(exc).__name__)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
