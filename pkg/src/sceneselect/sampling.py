"""Adaptive collection of labeled suitability pools, one per repository model.

Which samples a compressed model actually handles well is implicit; the only
way to find out is to probe. Probing everything is wasteful and uniform
random probing mirrors the size bias of the dataset, so draws are steered by
a Thompson-sampled bandit over the models' training scenes: each round the
arm with the highest Beta-posterior draw supplies one fresh sample, the
sample is probed against every model, and arms whose training scene is
covered with high confidence are frozen out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import learners
from .artifacts import write_artifact
from .dataset import Dataset, part_indices
from .errors import ConfigError


def well_sampled_threshold(gamma_size: int, theta: float) -> float:
    """Coupon-collector draw count after which a set of ``gamma_size`` items
    is considered fully covered with confidence ``theta``:

        |S| > log(1 - theta**(1/g)) / log(1 - 1/g)

    A single-element set is covered by one draw, so the threshold is 0.
    """
    if not 0.0 < theta < 1.0:
        raise ConfigError("theta must lie strictly inside (0, 1)")
    if gamma_size < 1:
        raise ConfigError("gamma_size must be positive")
    if gamma_size == 1:
        return 0.0
    g = float(gamma_size)
    return math.log(1.0 - theta ** (1.0 / g)) / math.log(1.0 - 1.0 / g)


@dataclass
class ArmState:
    model_index: int
    alpha: float
    beta: float
    sampled: set
    gamma: np.ndarray  # candidate sample indices (the model's training scene)
    threshold: float
    exhausted: bool = False

    @property
    def gamma_size(self) -> int:
        return len(self.gamma)

    @property
    def well_sampled(self) -> bool:
        return len(self.sampled) > self.threshold

    @property
    def active(self) -> bool:
        return not self.well_sampled and not self.exhausted


@dataclass
class SamplingConfig:
    theta: float
    kappa: int
    seed: int
    tau_suit: float | None = None  # reserved for soft suitability rules; unused

    def validate(self) -> None:
        if not 0.0 < self.theta < 1.0:
            raise ConfigError("theta must lie strictly inside (0, 1)")
        if self.kappa < 0:
            raise ConfigError("kappa must be non-negative")


@dataclass
class SamplingState:
    arms: list
    pools: list  # per model: [(sample_index, suitable), ...] in draw order
    theta: float
    kappa: int
    seed: int
    probed: dict = field(default_factory=dict)  # sample_index -> [bool per model]

    @property
    def distinct_drawn(self) -> int:
        return len(self.probed)


def new_state(repo, theta: float, kappa: int, seed: int) -> SamplingState:
    arms = []
    for i, entry in enumerate(repo.entries):
        gamma = np.asarray(entry.scene.train_indices, dtype=int)
        arms.append(
            ArmState(
                model_index=i,
                alpha=1.0,
                beta=1.0,
                sampled=set(),
                gamma=gamma,
                threshold=well_sampled_threshold(len(gamma), theta),
            )
        )
    return SamplingState(
        arms=arms,
        pools=[[] for _ in repo.entries],
        theta=theta,
        kappa=kappa,
        seed=seed,
    )


def thompson_round(state: SamplingState, rng: np.random.Generator):
    """One bandit round: draw a Beta sample per active arm, pick the argmax.

    The chosen arm gains alpha+1 and every other active arm gains beta+1;
    frozen (well-sampled or exhausted) arms are left untouched. Returns the
    chosen model index, or None when no arm is active.
    """
    active = [arm for arm in state.arms if arm.active]
    if not active:
        return None
    draws = [rng.beta(arm.alpha, arm.beta) for arm in active]
    chosen = active[int(np.argmax(draws))]
    chosen.alpha += 1.0
    for arm in active:
        if arm is not chosen:
            arm.beta += 1.0
    return chosen.model_index


def probe_suitability(model, sample) -> bool:
    """A model suits a sample iff it predicts the sample's label exactly."""
    return learners.predict(model, sample.features) == sample.label


def _suitability_table(ds, models, indices):
    """Precomputed probe results for candidate indices; probe_suitability is
    pure, so batching it changes nothing but speed."""
    idx = np.asarray(sorted(int(i) for i in indices), dtype=int)
    X = ds.features[idx]
    y = ds.labels[idx]
    table = {}
    bits = np.stack([learners.predict_batch(m, X) == y for m in models], axis=1)
    for row, sample_index in enumerate(idx):
        table[int(sample_index)] = bits[row]
    return table


def _record_probe(state, table, sample_index):
    bits = table[sample_index]
    state.probed[sample_index] = [bool(b) for b in bits]
    for j, bit in enumerate(bits):
        state.pools[j].append((int(sample_index), bool(bit)))


def adaptive_sampling(ds: Dataset, repo, cfg: SamplingConfig) -> SamplingState:
    """Thompson-sampled pool collection under a budget of ``kappa`` distinct samples.

    On choosing arm i, one not-yet-sampled index is drawn uniformly from that
    model's training scene and probed against every repository model, so each
    probe fills one coordinate-complete row in all pools. An arm whose scene
    is fully drawn is marked exhausted; sampling stops when the budget is
    spent or no arm remains active. Already-probed indices drawn through an
    overlapping arm still count into that arm's sampled set but add no row.
    """
    cfg.validate()
    if len(repo.entries) == 0:
        raise ConfigError("repository is empty")
    state = new_state(repo, cfg.theta, cfg.kappa, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    union = set()
    for arm in state.arms:
        union.update(int(i) for i in arm.gamma)
    table = _suitability_table(ds, repo.models, union)
    remaining = [list(int(i) for i in arm.gamma) for arm in state.arms]
    while state.distinct_drawn < cfg.kappa:
        chosen = thompson_round(state, rng)
        if chosen is None:
            break
        arm = state.arms[chosen]
        rem = remaining[chosen]
        pos = int(rng.integers(len(rem)))
        pick = rem[pos]
        rem[pos] = rem[-1]
        rem.pop()
        arm.sampled.add(pick)
        if len(arm.sampled) == arm.gamma_size:
            arm.exhausted = True
        if pick not in state.probed:
            _record_probe(state, table, pick)
    return state


def random_sampling(ds: Dataset, repo, kappa: int, seed: int) -> SamplingState:
    """Uniform draws (without replacement) from the training split, same probing.

    Arm posteriors stay at their priors; each arm's sampled set records the
    draws that happened to land in its training scene, for balance reporting.
    """
    if kappa < 0:
        raise ConfigError("kappa must be non-negative")
    state = new_state(repo, theta=0.5, kappa=kappa, seed=seed)
    state.theta = float("nan")  # no stopping rule in the random baseline
    train = part_indices(ds, "train")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(train))
    take = len(train) if kappa >= len(train) else kappa
    picks = [int(train[pos]) for pos in order[:take]]
    table = _suitability_table(ds, repo.models, picks)
    gamma_sets = [set(int(i) for i in arm.gamma) for arm in state.arms]
    for idx in picks:
        _record_probe(state, table, idx)
        for arm, gset in zip(state.arms, gamma_sets):
            if idx in gset:
                arm.sampled.add(idx)
    return state


def positives_per_model(state: SamplingState) -> np.ndarray:
    """Count of suitable probes per model (the balance measure for pools)."""
    return np.array([sum(1 for _, bit in pool if bit) for pool in state.pools], dtype=int)


def pools_payload(state: SamplingState, dataset_hash: str, repository_hash: str) -> dict:
    rows = []
    if state.pools:
        for pos in range(len(state.pools[0])):
            idx = state.pools[0][pos][0]
            rows.append({"sample_index": idx, "bits": [int(state.pools[j][pos][1]) for j in range(len(state.pools))]})
    return {
        "kind": "pools",
        "dataset_hash": dataset_hash,
        "repository_hash": repository_hash,
        "theta": None if math.isnan(state.theta) else state.theta,
        "kappa": state.kappa,
        "seed": state.seed,
        "arms": [
            {"alpha": arm.alpha, "beta": arm.beta, "sampled": len(arm.sampled)}
            for arm in state.arms
        ],
        "rows": rows,
    }


def save_pools(path, state, dataset_hash, repository_hash) -> str:
    return write_artifact(path, pools_payload(state, dataset_hash, repository_hash))
