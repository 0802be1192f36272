"""Topic-independent credibility scoring with a soft-voting ensemble."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .classifiers import MEMBER_TYPES, GaussianNB, LinearSVM, LogisticRegression, NotFittedError, RandomForest
from .corpus import TLD_CATEGORIES, UNKNOWN, PageRankCache, document_features

log = logging.getLogger(__name__)

RAW_FEATURES = ("css_definitions", "text_readability", "pr_rank", "page_rank_integer", "page_rank_decimal", "toplevel_domain")
FEATURE_NAMES = RAW_FEATURES[:-1] + tuple(f"tld_{c}" for c in TLD_CATEGORIES)
UNKNOWN_SENTINEL = -1.0
MODEL_MAGIC = b"MRCRED"
MODEL_VERSION = 1
N_FOLDS = 5


class LabelError(ValueError):
    pass


class FeatureError(ValueError):
    pass


class TrainingError(ValueError):
    pass


class UsageError(RuntimeError):
    pass


def map_labels(raw: int) -> int:
    """Collapse a 1-5 credibility grade to binary: 1-3 -> 0, 4-5 -> 1."""
    if isinstance(raw, bool) or int(raw) != raw or not 1 <= raw <= 5:
        raise LabelError(f"credibility label out of range: {raw!r}")
    return 0 if raw <= 3 else 1


def feature_vector(row: dict) -> np.ndarray:
    """Encode a feature record as the fixed 11-dimensional vector.

    Unknown PageRank values become -1; the top-level domain is one-hot.
    """
    missing = [k for k in RAW_FEATURES if k not in row]
    if missing:
        raise FeatureError(f"missing features: {', '.join(missing)}")
    x = []
    for name in RAW_FEATURES[:-1]:
        value = row[name]
        x.append(UNKNOWN_SENTINEL if value in (UNKNOWN, None, "") else float(value))
    tld = row["toplevel_domain"] if row["toplevel_domain"] in TLD_CATEGORIES else "other"
    x.extend(1.0 if tld == c else 0.0 for c in TLD_CATEGORIES)
    return np.array(x)


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


@dataclass
class TrainingSet:
    X: np.ndarray
    y: np.ndarray  # binary labels
    raw_labels: np.ndarray | None = None
    feature_names: tuple = FEATURE_NAMES
    standardizer: Standardizer | None = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise TrainingError("X must be 2-D with one row per label")
        if self.standardizer is None:
            self.standardizer = Standardizer.fit(self.X)

    @classmethod
    def from_raw(cls, X, raw_labels, feature_names=FEATURE_NAMES):
        raw = np.asarray(raw_labels, dtype=int)
        return cls(X, np.array([map_labels(int(r)) for r in raw]), raw, tuple(feature_names))


def default_members(seed: int) -> list:
    return [LogisticRegression(), RandomForest(seed=seed), LinearSVM(seed=seed), GaussianNB()]


@dataclass
class EnsembleModel:
    """Uniformly weighted soft vote over fitted members."""

    members: list = field(default_factory=list)
    standardizer: Standardizer | None = None
    feature_names: tuple = FEATURE_NAMES
    cv_accuracy: float | None = None
    seed: int = 0

    @property
    def dim(self) -> int:
        return len(self.feature_names)

    def _check(self, X):
        if not self.members:
            raise UsageError("credibility model is not trained")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise FeatureError(f"expected {self.dim} features, got {X.shape[1]}")
        return X if self.standardizer is None else self.standardizer.transform(X)

    def member_probas(self, X) -> np.ndarray:
        """(n_members, n, 2) array of member class distributions."""
        Z = self._check(X)
        try:
            return np.stack([m.predict_proba(Z) for m in self.members])
        except NotFittedError as exc:
            raise UsageError(f"member {exc} is not trained") from exc

    def predict_proba(self, X) -> np.ndarray:
        """Probability of class 1: the mean of the members' class-1 probabilities."""
        return self.member_probas(X)[:, :, 1].mean(axis=0)

    def predict(self, X) -> np.ndarray:
        # argmax of summed probabilities; an exact tie goes to class 0
        sums = self.member_probas(X).sum(axis=0)
        return (sums[:, 1] > sums[:, 0]).astype(int)

    def to_bytes(self) -> bytes:
        payload = {
            "feature_names": list(self.feature_names),
            "seed": self.seed,
            "cv_accuracy": self.cv_accuracy,
            "standardizer": None
            if self.standardizer is None
            else {"mean": self.standardizer.mean.tolist(), "scale": self.standardizer.scale.tolist()},
            "members": [{"type": m.name, "params": m.to_dict()} for m in self.members],
        }
        body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MODEL_MAGIC + bytes([MODEL_VERSION]) + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "EnsembleModel":
        if not data.startswith(MODEL_MAGIC):
            raise ValueError("not a misinforank credibility model")
        if data[len(MODEL_MAGIC)] != MODEL_VERSION:
            raise ValueError(f"unsupported model version {data[len(MODEL_MAGIC)]}")
        payload = json.loads(data[len(MODEL_MAGIC) + 1 :].decode("utf-8"))
        std = payload["standardizer"]
        return cls(
            members=[MEMBER_TYPES[m["type"]].from_dict(m["params"]) for m in payload["members"]],
            standardizer=None if std is None else Standardizer(np.array(std["mean"]), np.array(std["scale"])),
            feature_names=tuple(payload["feature_names"]),
            cv_accuracy=payload["cv_accuracy"],
            seed=payload["seed"],
        )

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "EnsembleModel":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _fit_members(X, y, seed):
    std = Standardizer.fit(X)
    Z = std.transform(X)
    return [m.fit(Z, y) for m in default_members(seed)], std


def stratified_folds(y, k, seed) -> list:
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    for c in np.unique(y):
        idx = rng.permutation(np.nonzero(y == c)[0])
        for i, j in enumerate(idx):
            folds[i % k].append(int(j))
    return [np.array(sorted(f), dtype=int) for f in folds]


def cross_val_accuracy(data: TrainingSet, seed: int = 0, k: int = N_FOLDS) -> float:
    correct = 0
    for test in stratified_folds(data.y, k, seed):
        train = np.setdiff1d(np.arange(len(data.y)), test)
        members, std = _fit_members(data.X[train], data.y[train], seed)
        model = EnsembleModel(members, std, data.feature_names)
        correct += int(np.sum(model.predict(data.X[test]) == data.y[test]))
    return correct / len(data.y)


def train_ensemble(data: TrainingSet, seed: int = 0) -> EnsembleModel:
    """Fit the four members on standardized features and record 5-fold CV accuracy."""
    counts = np.bincount(data.y, minlength=2)
    if counts.min() < 2:
        raise TrainingError(f"need at least 2 examples of each class, got {counts.tolist()}")
    cv = cross_val_accuracy(data, seed, k=min(N_FOLDS, int(counts.min())))
    std = data.standardizer
    Z = std.transform(data.X)
    members = [m.fit(Z, data.y) for m in default_members(seed)]
    log.info("credibility ensemble trained: n=%d cv_accuracy=%.4f", len(data.y), cv)
    return EnsembleModel(members, std, data.feature_names, cv, seed)


def credibility_score(model: EnsembleModel, features: dict) -> float:
    """P(credible) for one document's feature record."""
    return float(model.predict_proba(feature_vector(features))[0])


def credibility_scores(model: EnsembleModel, rows: list) -> dict:
    if not rows:
        return {}
    X = np.vstack([feature_vector(r) for r in rows])
    p = model.predict_proba(X)
    return {r["doc_id"]: float(v) for r, v in zip(rows, p)}


def load_training_csv(path, pages: dict | None = None, cache: PageRankCache | None = None) -> TrainingSet:
    """Read ``url,rank,label_raw[,feature columns]``.

    When the raw feature columns are present they are used directly;
    otherwise features are extracted from ``pages`` (url -> RawDocument).
    """
    rows, labels = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        has_features = all(name in (reader.fieldnames or ()) for name in RAW_FEATURES)
        for rec in reader:
            labels.append(int(rec["label_raw"]))
            if has_features:
                rows.append({k: rec[k] for k in RAW_FEATURES})
                continue
            if pages is None or rec["url"] not in pages:
                raise FeatureError(f"no feature columns and no page snapshot for {rec['url']}")
            rows.append(document_features(pages[rec["url"]], cache or PageRankCache()))
    if not rows:
        raise TrainingError(f"{path}: no training rows")
    X = np.vstack([feature_vector(r) for r in rows])
    return TrainingSet.from_raw(X, labels)
