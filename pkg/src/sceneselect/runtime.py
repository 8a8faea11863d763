"""Online inference over a trace: per-frame ranking, LFU model cache, metrics.

Every frame is ranked independently (scene changes are not announced). If the
top-ranked model is resident it serves the frame; otherwise the best-ranked
resident model serves this frame as a fallback and the missing top model is
loaded afterwards, evicting the least-frequently-used resident if the cache
is full. Use counts reset on load, so eviction is LFU over residency.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from . import learners
from .dataset import Dataset, part_indices
from .decision import DecisionModel, rank_models
from .errors import ConfigError
from .learners import TrainConfig, VectorClassifier
from .profiling import kmeans, macro_f1

log = logging.getLogger(__name__)


@dataclass
class CacheEntry:
    use_count: int
    load_order: int


class ModelCache:
    """Fixed number of model slots with LFU eviction (ties: oldest load first)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError("cache capacity must be >= 1")
        self.capacity = capacity
        self.loaded: dict = {}
        self._order = 0

    def _load(self, model_index: int) -> None:
        self.loaded[model_index] = CacheEntry(use_count=0, load_order=self._order)
        self._order += 1


def cache_request(cache: ModelCache, ranking) -> tuple:
    """Serve one frame given a ranking; returns (served_model_index, was_miss).

    Hit: the top-ranked model is resident and serves. Miss: the best-ranked
    resident serves this frame, then the LFU resident is evicted (if the
    cache is full) and the top model is loaded for subsequent frames. The
    eviction victim is picked by the use counts as they stood when the
    request arrived, so a resident can serve the frame and still be the one
    evicted. An empty cache loads and serves the top model immediately,
    counted as a miss.
    """
    top = int(ranking[0])
    if top in cache.loaded:
        cache.loaded[top].use_count += 1
        return top, False
    if not cache.loaded:
        cache._load(top)
        cache.loaded[top].use_count += 1
        return top, True
    position = {int(m): pos for pos, m in enumerate(ranking)}
    served = min(cache.loaded, key=lambda m: position[m])
    victim = None
    if len(cache.loaded) >= cache.capacity:
        victim = min(
            cache.loaded,
            key=lambda m: (cache.loaded[m].use_count, cache.loaded[m].load_order),
        )
    cache.loaded[served].use_count += 1
    if victim is not None:
        del cache.loaded[victim]
    cache._load(top)
    return served, True


@dataclass
class FrameRecord:
    frame: int
    window_id: int
    served_model: int
    top1_model: int
    miss: bool
    correct: bool


@dataclass
class TraceMetrics:
    frames: list  # FrameRecord per frame
    window_f1: list  # (window_id, macro F1) for non-empty windows
    cache_misses: int
    cache_accesses: int
    switch_frames: list
    scene_durations: list
    top1_counts: np.ndarray
    low_confidence_events: int
    window: int

    @property
    def miss_rate(self) -> float:
        return self.cache_misses / self.cache_accesses if self.cache_accesses else 0.0

    @property
    def mean_window_f1(self) -> float:
        return float(np.mean([f1 for _, f1 in self.window_f1]))


def run_trace(
    trace,
    decision,
    models,
    cache_capacity: int,
    window: int = 10,
    low_confidence: float = 0.2,
) -> TraceMetrics:
    """Drive a trace through ranking, cache, and inference.

    ``decision`` is either a DecisionModel or a callable sample -> (probs,
    ranking), which lets baselines and oracle rankers reuse the same loop.
    F1 is computed per ``window`` frames (macro over classes present; the
    last window may be short). A max suitability below ``low_confidence``
    is recorded as a no-suitable-model event; the frame is still served.
    """
    if len(trace) == 0:
        raise ConfigError("trace is empty")
    if hasattr(models, "models"):  # accept a ModelRepository directly
        models = models.models
    if isinstance(decision, DecisionModel):
        if decision.n != len(models):
            raise ConfigError("decision output width does not match the repository size")
        ranker = lambda s: rank_models(decision, s.features)
    else:
        ranker = decision

    num_classes = models[0].output_dim
    cache = ModelCache(cache_capacity)
    records = []
    top1_counts = np.zeros(len(models), dtype=int)
    misses = 0
    low_conf = 0
    prev_served = None
    switch_frames = []
    preds = []
    for frame, sample in enumerate(trace):
        probs, ranking = ranker(sample)
        top1 = int(ranking[0])
        top1_counts[top1] += 1
        if np.max(probs) < low_confidence:
            low_conf += 1
            log.debug("frame %d: no model above confidence %.2f", frame, low_confidence)
        served, miss = cache_request(cache, ranking)
        misses += int(miss)
        if prev_served is not None and served != prev_served:
            switch_frames.append(frame)
        prev_served = served
        pred = learners.predict(models[served], sample.features)
        preds.append(pred)
        records.append(
            FrameRecord(
                frame=frame,
                window_id=frame // window,
                served_model=served,
                top1_model=top1,
                miss=miss,
                correct=pred == sample.label,
            )
        )

    labels = [s.label for s in trace]
    window_f1 = []
    for w in range((len(trace) + window - 1) // window):
        lo, hi = w * window, min((w + 1) * window, len(trace))
        if hi <= lo:
            continue
        window_f1.append((w, macro_f1(preds[lo:hi], labels[lo:hi], num_classes)))

    durations = []
    last = 0
    for f in switch_frames:
        durations.append(f - last)
        last = f
    durations.append(len(trace) - last)

    return TraceMetrics(
        frames=records,
        window_f1=window_f1,
        cache_misses=misses,
        cache_accesses=len(trace),
        switch_frames=switch_frames,
        scene_durations=durations,
        top1_counts=top1_counts,
        low_confidence_events=low_conf,
        window=window,
    )


def summarize(metrics: TraceMetrics) -> dict:
    """Roll a trace run up into the quantities the comparisons are made on."""
    if not metrics.frames:
        raise ConfigError("metrics are empty")
    durations = np.array(metrics.scene_durations)
    quartiles = np.percentile(durations, [0, 25, 50, 75, 100])
    order = sorted(
        range(len(metrics.top1_counts)),
        key=lambda i: (-metrics.top1_counts[i], i),
    )
    histogram = [[int(i), int(metrics.top1_counts[i])] for i in order]
    total = int(metrics.top1_counts.sum())
    top5 = sum(count for _, count in histogram[:5])
    return {
        "frames": len(metrics.frames),
        "miss_rate": metrics.miss_rate,
        "mean_window_f1": metrics.mean_window_f1,
        "duration_quartiles": [float(q) for q in quartiles],
        "switches": len(metrics.switch_frames),
        "top1_histogram": histogram,
        "top5_coverage": top5 / total if total else 0.0,
        "low_confidence_events": metrics.low_confidence_events,
    }


def write_metrics_csv(metrics: TraceMetrics, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame", "window_id", "served_model", "top1_model", "miss", "correct"])
        for r in metrics.frames:
            writer.writerow(
                [r.frame, r.window_id, r.served_model, r.top1_model, int(r.miss), int(r.correct)]
            )


# ---------------------------------------------------------------------------
# Baselines: one deep model, one compressed model, feature-space clustering
# with nearest-centroid selection, and one model per generator cell family.


def constant_ranker(num_models: int = 1):
    probs = np.ones(num_models)
    ranking = np.arange(num_models)
    return lambda sample: (probs, ranking)


def train_global_model(ds: Dataset, hidden_dim: int, cfg: TrainConfig) -> VectorClassifier:
    """Single model over the whole training split (deep or compressed per hidden_dim)."""
    train = part_indices(ds, "train")
    model = learners.new_classifier(ds.schema.feature_dim, hidden_dim, ds.schema.num_classes, cfg.seed)
    learners.train(model, ds.features[train], ds.labels[train], cfg)
    return model


@dataclass
class CdgBaseline:
    """Clusters of raw training features; selection by nearest cluster mean."""

    models: list
    centroids: np.ndarray

    def ranker(self):
        def rank(sample):
            d = np.linalg.norm(self.centroids - sample.features, axis=1)
            ranking = np.argsort(d, kind="stable")  # equidistant -> lowest index
            return 1.0 / (1.0 + d), ranking

        return rank


def build_cdg(ds: Dataset, k: int, hidden_dim: int, cfg: TrainConfig, seed: int) -> CdgBaseline:
    train = part_indices(ds, "train")
    X = ds.features[train]
    result = kmeans(X, k, seed=seed)
    models = []
    for j in range(k):
        members = train[result.assignments == j]
        model = learners.new_classifier(
            ds.schema.feature_dim, hidden_dim, ds.schema.num_classes, seed=seed + j + 1
        )
        tc = dataclasses.replace(cfg, seed=seed + j + 1)
        learners.train(model, ds.features[members], ds.labels[members], tc)
        models.append(model)
    return CdgBaseline(models=models, centroids=result.centroids)


@dataclass
class DmmBaseline:
    """One model per value of attribute dimension 0 (the coarse source family)."""

    models: list
    families: list  # family value per model slot

    def ranker(self):
        index_of = {fam: i for i, fam in enumerate(self.families)}

        def rank(sample):
            own = index_of[sample.attrs[0]]
            rest = [i for i in range(len(self.models)) if i != own]
            ranking = np.array([own] + rest)
            probs = np.zeros(len(self.models))
            probs[own] = 1.0
            return probs, ranking

        return rank


def build_dmm(ds: Dataset, hidden_dim: int, cfg: TrainConfig, seed: int) -> DmmBaseline:
    train = part_indices(ds, "train")
    families = sorted({ds.samples[i].attrs[0] for i in train})
    models = []
    for j, fam in enumerate(families):
        members = np.array([i for i in train if ds.samples[i].attrs[0] == fam])
        model = learners.new_classifier(
            ds.schema.feature_dim, hidden_dim, ds.schema.num_classes, seed=seed + j
        )
        tc = dataclasses.replace(cfg, seed=seed + j)
        learners.train(model, ds.features[members], ds.labels[members], tc)
        models.append(model)
    return DmmBaseline(models=models, families=families)


def build_baseline(name: str, ds: Dataset, compressed_hidden: int, deep_hidden: int,
                   num_models: int, cfg: TrainConfig, seed: int):
    """(ranker, models) for one baseline: sdm, ssm, cdg, or dmm."""
    tc = dataclasses.replace(cfg, seed=seed)
    if name == "sdm":
        return constant_ranker(1), [train_global_model(ds, deep_hidden, tc)]
    if name == "ssm":
        return constant_ranker(1), [train_global_model(ds, compressed_hidden, tc)]
    if name == "cdg":
        base = build_cdg(ds, num_models, compressed_hidden, tc, seed)
        return base.ranker(), base.models
    if name == "dmm":
        base = build_dmm(ds, compressed_hidden, tc, seed)
        return base.ranker(), base.models
    raise ConfigError(f"unknown baseline {name!r}")


def run_baselines(trace, ds: Dataset, names, compressed_hidden: int, deep_hidden: int,
                  num_models: int, cfg: TrainConfig, seeds: dict,
                  cache_capacity: int, window: int = 10) -> dict:
    """Train and run the requested baselines over one trace (same metrics shape)."""
    out = {}
    for name in names:
        ranker, models = build_baseline(
            name, ds, compressed_hidden, deep_hidden, num_models, cfg, seeds[name]
        )
        capacity = min(cache_capacity, len(models))
        out[name] = run_trace(trace, ranker, models, capacity, window, low_confidence=0.0)
    return out
