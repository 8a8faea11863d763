"""Command-line pipeline: generate -> profile -> sample -> train-decision -> simulate -> report.

All knobs live in an INI config (see configs/default.ini); flags override
file values. Every stage stamps its outputs with content hashes and refuses
inputs whose hashes do not chain back to the same upstream artifacts.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import decision as decision_mod
from . import profiling, runtime, sampling
from .artifacts import read_artifact, require_match, sha256_file, write_artifact
from .dataset import (
    DatasetSchema,
    GeneratorConfig,
    generate_dataset,
    load_dataset,
    save_dataset,
    synthesize_trace,
)
from .errors import ConfigError, Error
from .learners import TrainConfig

DEFAULTS = {
    "dataset": {
        "feature_dim": "12",
        "num_classes": "4",
        "attr_cardinalities": "3,2",
        "num_semantic_cells": "6",
        "clips_per_cell": "2",
        "frames_per_clip": "500",
        "cluster_spread": "0.2",
        "label_rule_noise": "0.02",
        "drift_strength": "0.15",
        "seed": "42",
    },
    "profiling": {
        "n": "8",
        "delta": "0.5",
        "k_start": "2",
        "k_max": "16",
        "encoder_hidden": "16",
        "compressed_hidden": "8",
        "encoder_lr": "0.2",
        "encoder_epochs": "30",
        "encoder_batch_size": "128",
        "encoder_l2": "0.0",
        "encoder_seed": "101",
        "model_lr": "0.2",
        "model_epochs": "140",
        "model_batch_size": "128",
        "model_l2": "0.0",
        "seed": "7",
    },
    "sampling": {
        "theta": "0.9",
        "kappa": "4000",
        "seed": "11",
    },
    "decision": {
        "head_hidden": "16",
        "lr": "0.3",
        "epochs": "150",
        "batch_size": "128",
        "l2": "0.0",
        "seed": "13",
        "low_confidence": "0.2",
    },
    "trace": {
        "num_source_clips": "5",
        "segment_len": "100",
        "num_segments": "5",
        "seed": "17",
    },
    "runtime": {
        "capacity": "5",
        "window": "10",
    },
    "baselines": {
        "deep_hidden": "96",
        "lr": "0.2",
        "epochs": "60",
        "batch_size": "128",
        "l2": "0.0",
        "sdm_seed": "19",
        "ssm_seed": "23",
        "cdg_seed": "29",
        "dmm_seed": "31",
    },
}

BASELINES = ("anole", "sdm", "ssm", "cdg", "dmm")


@dataclass
class TraceParams:
    num_source_clips: int
    segment_len: int
    num_segments: int
    seed: int


@dataclass
class RunConfig:
    generator: GeneratorConfig
    profiling: profiling.ProfilingConfig
    sampling: sampling.SamplingConfig
    head_hidden: int
    decision_train: TrainConfig
    low_confidence: float
    trace: TraceParams
    capacity: int
    window: int
    deep_hidden: int
    baseline_train: TrainConfig
    baseline_seeds: dict


def load_run_config(path=None) -> RunConfig:
    """Built-in defaults, optionally overlaid with an INI file."""
    parser = configparser.ConfigParser()
    parser.read_dict(DEFAULTS)
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")

    def sec(name):
        return parser[name]

    ds = sec("dataset")
    schema = DatasetSchema(
        feature_dim=ds.getint("feature_dim"),
        num_classes=ds.getint("num_classes"),
        attr_cardinalities=tuple(int(v) for v in ds.get("attr_cardinalities").split(",")),
    )
    generator = GeneratorConfig(
        schema=schema,
        num_semantic_cells=ds.getint("num_semantic_cells"),
        clips_per_cell=ds.getint("clips_per_cell"),
        frames_per_clip=ds.getint("frames_per_clip"),
        cluster_spread=ds.getfloat("cluster_spread"),
        label_rule_noise=ds.getfloat("label_rule_noise"),
        drift_strength=ds.getfloat("drift_strength"),
        seed=ds.getint("seed"),
    )
    pr = sec("profiling")
    prof = profiling.ProfilingConfig(
        n=pr.getint("n"),
        delta=pr.getfloat("delta"),
        k_start=pr.getint("k_start"),
        k_max=pr.getint("k_max"),
        encoder_hidden=pr.getint("encoder_hidden"),
        compressed_hidden=pr.getint("compressed_hidden"),
        encoder_train=TrainConfig(
            learning_rate=pr.getfloat("encoder_lr"),
            epochs=pr.getint("encoder_epochs"),
            batch_size=pr.getint("encoder_batch_size"),
            l2=pr.getfloat("encoder_l2"),
            seed=pr.getint("encoder_seed"),
        ),
        model_train=TrainConfig(
            learning_rate=pr.getfloat("model_lr"),
            epochs=pr.getint("model_epochs"),
            batch_size=pr.getint("model_batch_size"),
            l2=pr.getfloat("model_l2"),
            seed=0,  # replaced per model during repository construction
        ),
        seed=pr.getint("seed"),
    )
    sa = sec("sampling")
    samp = sampling.SamplingConfig(
        theta=sa.getfloat("theta"), kappa=sa.getint("kappa"), seed=sa.getint("seed")
    )
    de = sec("decision")
    tr = sec("trace")
    ru = sec("runtime")
    ba = sec("baselines")
    return RunConfig(
        generator=generator,
        profiling=prof,
        sampling=samp,
        head_hidden=de.getint("head_hidden"),
        decision_train=TrainConfig(
            learning_rate=de.getfloat("lr"),
            epochs=de.getint("epochs"),
            batch_size=de.getint("batch_size"),
            l2=de.getfloat("l2"),
            seed=de.getint("seed"),
        ),
        low_confidence=de.getfloat("low_confidence"),
        trace=TraceParams(
            num_source_clips=tr.getint("num_source_clips"),
            segment_len=tr.getint("segment_len"),
            num_segments=tr.getint("num_segments"),
            seed=tr.getint("seed"),
        ),
        capacity=ru.getint("capacity"),
        window=ru.getint("window"),
        deep_hidden=ba.getint("deep_hidden"),
        baseline_train=TrainConfig(
            learning_rate=ba.getfloat("lr"),
            epochs=ba.getint("epochs"),
            batch_size=ba.getint("batch_size"),
            l2=ba.getfloat("l2"),
            seed=0,
        ),
        baseline_seeds={
            "sdm": ba.getint("sdm_seed"),
            "ssm": ba.getint("ssm_seed"),
            "cdg": ba.getint("cdg_seed"),
            "dmm": ba.getint("dmm_seed"),
        },
    )


# ---------------------------------------------------------------------------
# Commands


def cmd_generate(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.generator.seed = args.seed
    ds = generate_dataset(cfg.generator)
    save_dataset(ds, args.out)
    print(
        f"wrote {args.out}: {len(ds.samples)} samples, "
        f"{len(ds.split.seen_clips)} seen clips, {len(ds.split.unseen_clips)} unseen clips"
    )
    return 0


def cmd_profile(args) -> int:
    cfg = load_run_config(args.config)
    ds = load_dataset(args.dataset)
    dataset_hash = sha256_file(args.dataset)
    scenes = profiling.segment_semantic_scenes(ds)
    encoder = profiling.train_scene_encoder(ds, scenes, cfg.profiling.encoder_hidden, cfg.profiling.encoder_train)
    repo = profiling.build_repository(ds, scenes, encoder, cfg.profiling)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    profiling.save_encoder(out / "encoder.json", encoder, len(scenes), dataset_hash)
    # cross-references always carry file-byte hashes of the upstream artifact
    enc_hash = sha256_file(out / "encoder.json")
    profiling.save_repository(out / "repository.json", repo, cfg.profiling, dataset_hash, enc_hash)
    for e in repo.entries:
        print(f"k={e.source[0]} cluster={e.source[1]} validation_f1={e.validation_f1:.4f}")
    print(f"repository size {len(repo)} written to {out}")
    return 0


def cmd_sample(args) -> int:
    cfg = load_run_config(args.config)
    if args.theta is not None:
        cfg.sampling.theta = args.theta
    if args.kappa is not None:
        cfg.sampling.kappa = args.kappa
    if args.seed is not None:
        cfg.sampling.seed = args.seed
    ds = load_dataset(args.dataset)
    dataset_hash = sha256_file(args.dataset)
    repo, _ = profiling.load_repository(args.repository, ds, dataset_hash)
    repo_hash = sha256_file(args.repository)
    state = sampling.adaptive_sampling(ds, repo, cfg.sampling)
    sampling.save_pools(args.out, state, dataset_hash, repo_hash)
    print(
        f"wrote {args.out}: {state.distinct_drawn} distinct samples probed, "
        f"positives per model {sampling.positives_per_model(state).tolist()}"
    )
    return 0


def cmd_train_decision(args) -> int:
    cfg = load_run_config(args.config)
    ds = load_dataset(args.dataset)
    dataset_hash = sha256_file(args.dataset)
    repo, repo_body = profiling.load_repository(args.repository, ds, dataset_hash)
    repo_hash = sha256_file(args.repository)
    encoder_hash = sha256_file(args.encoder)
    require_match("encoder", repo_body["encoder_hash"], encoder_hash)
    encoder, _ = profiling.load_encoder(args.encoder, dataset_hash)
    pools_body = _load_pools(args.pools, dataset_hash, repo_hash)
    indices = np.array([r["sample_index"] for r in pools_body["rows"]], dtype=int)
    labels = np.array([r["bits"] for r in pools_body["rows"]], dtype=float)
    model = decision_mod.train_decision(encoder, ds, indices, labels, cfg.head_hidden, cfg.decision_train)
    decision_mod.save_decision(args.out, model, encoder_hash, repo_hash)
    print(f"wrote {args.out}: decision head over {model.n} models")
    return 0


def _load_pools(path, dataset_hash, repo_hash):
    body = read_artifact(path, "pools")
    require_match("dataset", body["dataset_hash"], dataset_hash)
    require_match("repository", body["repository_hash"], repo_hash)
    return body


def _parse_sweep(text):
    try:
        lo, hi = text.split("..")
        lo, hi = int(lo), int(hi)
    except ValueError as exc:
        raise ConfigError(f"bad sweep {text!r}, expected lo..hi") from exc
    if lo < 1 or hi < lo:
        raise ConfigError(f"bad sweep bounds {text!r}")
    return list(range(lo, hi + 1))


def _anole_runner(args, cfg, ds, dataset_hash):
    repo, repo_body = profiling.load_repository(args.repository, ds, dataset_hash)
    repo_hash = sha256_file(args.repository)
    encoder_hash = sha256_file(args.encoder)
    require_match("encoder", repo_body["encoder_hash"], encoder_hash)
    encoder, _ = profiling.load_encoder(args.encoder, dataset_hash)
    model, _ = decision_mod.load_decision(args.decision, encoder, encoder_hash, repo_hash)
    return model, repo.models


def _baseline_runner(name, cfg, ds):
    return runtime.build_baseline(
        name,
        ds,
        cfg.profiling.compressed_hidden,
        cfg.deep_hidden,
        cfg.profiling.n,
        cfg.baseline_train,
        cfg.baseline_seeds[name],
    )


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    if args.trace_seed is not None:
        cfg.trace.seed = args.trace_seed
    ds = load_dataset(args.dataset)
    dataset_hash = sha256_file(args.dataset)
    trace = synthesize_trace(
        ds, cfg.trace.num_source_clips, cfg.trace.segment_len, cfg.trace.num_segments, cfg.trace.seed
    )
    if args.baseline == "anole":
        if not (args.repository and args.encoder and args.decision):
            raise ConfigError("--baseline anole needs --repository, --encoder and --decision")
        ranker, models = _anole_runner(args, cfg, ds, dataset_hash)
        low_conf = cfg.low_confidence
    else:
        ranker, models = _baseline_runner(args.baseline, cfg, ds)
        low_conf = 0.0

    if args.capacity_sweep:
        capacities = _parse_sweep(args.capacity_sweep)
    else:
        capacities = [args.capacity if args.capacity is not None else cfg.capacity]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for cap in capacities:
        effective = min(cap, len(models))
        metrics = runtime.run_trace(trace, ranker, models, effective, cfg.window, low_conf)
        summary = runtime.summarize(metrics)
        summary.update(
            {
                "kind": "summary",
                "method": args.baseline,
                "capacity": cap,
                "trace_seed": cfg.trace.seed,
                "dataset_hash": dataset_hash,
                "num_models": len(models),
            }
        )
        runtime.write_metrics_csv(metrics, out / f"frames_{args.baseline}_cap{cap}.csv")
        write_artifact(out / f"summary_{args.baseline}_cap{cap}.json", summary)
        print(
            f"{args.baseline} capacity={cap}: mean_window_f1={summary['mean_window_f1']:.4f} "
            f"miss_rate={summary['miss_rate']:.4f}"
        )
    return 0


def cmd_report(args) -> int:
    rows = [read_artifact(path, "summary") for path in args.inputs]
    by_method = {}
    for row in rows:
        by_method.setdefault(row["method"], []).append(row)
    report = {"kind": "report", "methods": {}, "sweeps": {}}
    for method in sorted(by_method):
        f1s = np.array([r["mean_window_f1"] for r in by_method[method]])
        report["methods"][method] = {
            "runs": len(f1s),
            "mean_window_f1_mean": float(f1s.mean()),
            "mean_window_f1_std": float(f1s.std()),
        }
        print(
            f"{method}: mean_window_f1 = {f1s.mean():.4f} +/- {f1s.std():.4f} over {len(f1s)} run(s)"
        )
        caps = sorted({r["capacity"] for r in by_method[method]})
        if len(caps) > 1:
            ordered = sorted(by_method[method], key=lambda r: r["capacity"])
            miss = [r["miss_rate"] for r in ordered]
            monotone = all(b <= a + 1e-12 for a, b in zip(miss, miss[1:]))
            report["sweeps"][method] = {
                "capacities": [r["capacity"] for r in ordered],
                "miss_rates": miss,
                "monotone_miss_rate": monotone,
            }
            print(f"{method}: sweep miss rates {['%.3f' % m for m in miss]} monotone={monotone}")
    if args.out:
        write_artifact(args.out, report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceneselect",
        description="Scene-adaptive compressed-model selection pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("profile", help="train scene encoder and model repository")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("sample", help="collect suitability pools by adaptive sampling")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--repository", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--theta", type=float)
    p.add_argument("--kappa", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train-decision", help="train the model-ranking head")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--repository", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--pools", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_decision)

    p = sub.add_parser("simulate", help="run a method over a synthesized trace")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--baseline", choices=BASELINES, default="anole")
    p.add_argument("--repository")
    p.add_argument("--encoder")
    p.add_argument("--decision")
    p.add_argument("--capacity", type=int)
    p.add_argument("--capacity-sweep", dest="capacity_sweep")
    p.add_argument("--trace-seed", dest="trace_seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="aggregate simulation summaries")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
