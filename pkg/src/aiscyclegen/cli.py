"""Command-line pipeline: make-toy, preprocess, train, tune, generate, evaluate, bench, ablate.

Every command writes ``config.resolved.ini`` (resolved configuration including
the seed) into its output directory.  Wall-clock timestamps go only to
``metadata.json`` so the remaining outputs are byte-identical across reruns.

Exit codes: 0 success, 1 configuration or data error, 2 usage error or
missing input file, 3 training diverged.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import load_config, model_configs, train_config
from .errors import AisCycleGenError, ConfigError, DataError, ImputationError, TrainingDivergedError

log = logging.getLogger("aiscyclegen")

STORE_FILE = "sequences.store"
SCALER_FILE = "scaler.json"
MODEL_FILE = "model.ckpt"


class MissingInput(Exception):
    def __init__(self, path):
        super().__init__(f"input file not found: {path}")
        self.path = path


def _need(path) -> str:
    if path is None or not os.path.isfile(path):
        raise MissingInput(path)
    return path


def _write_common(out: str, cfg, command: str, extra_meta: dict | None = None) -> None:
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.resolved.ini"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_ini())
    meta = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
    }
    meta.update(extra_meta or {})
    with open(os.path.join(out, "metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------- commands


def cmd_make_toy(args, cfg) -> dict:
    from .toy import write_toy_ais_csv

    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "toy_ais.csv")
    write_toy_ais_csv(path, n_vessels=args.vessels, points_per_vessel=args.points, seed=cfg.seed)
    toy_cfg = os.path.join(args.out, "toy.ini")
    with open(toy_cfg, "w", encoding="utf-8") as fh:
        fh.write(TOY_CONFIG)
    return {"csv": path, "config": toy_cfg}


TOY_CONFIG = """\
[ingest]
sequence_length = 32
stride = 16
features = lat, lon, sog, cog, heading

[training]
steps = 60
learning_rate = 1e-3
adam_beta1 = 0.5
adam_beta2 = 0.9

[tuning]
budget = 8
proxy_steps = 10

[bench]
regressor_epochs = 30
seeds = 0, 1
depths = 1, 3
ablation_steps = 10
"""


def _partition_rule(ing):
    from .ingest import attribute_rule, bbox_rule, meridian_rule

    if ing["partition"] == "meridian":
        return meridian_rule(ing["meridian_lon"], ing["west"])
    if ing["partition"] == "bbox":
        return bbox_rule(ing["source_box"], ing["target_box"])
    return attribute_rule(ing["attribute"], ing["threshold"], ing["below"])


def _assign_splits(n: int, fracs, rng) -> list[str]:
    perm = rng.permutation(n)
    n_train = int(round(fracs[0] * n))
    n_val = int(round(fracs[1] * n))
    labels = [""] * n
    for rank, i in enumerate(perm):
        labels[i] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return labels


def cmd_preprocess(args, cfg) -> dict:
    from .ingest import build_sequences, parse_ais_csv, partition_domains, write_rejection_log
    from .preprocess import impute_and_smooth, minmax_fit_transform, spearman_matrix, write_feature_report
    from .store import StoredSequences, write_store

    src = _need(args.input)
    ing, pre = cfg["ingest"], cfg["preprocess"]
    if pre["target"] not in ing["features"]:
        raise ConfigError(f"preprocess.target {pre['target']!r} is not in ingest.features {ing['features']}")
    parsed = parse_ais_csv(src, ing["column_map"] or None)
    os.makedirs(args.out, exist_ok=True)
    write_rejection_log(parsed.rejections, os.path.join(args.out, "rejections.log"))
    seqs = build_sequences(parsed.records, ing["sequence_length"], ing["stride"], ing["features"], ing["max_gap"])
    kept, dropped = [], 0
    for s in seqs:
        try:
            kept.append(impute_and_smooth(s, pre["window"], pre["smoothing"]))
        except ImputationError as exc:
            dropped += 1
            log.warning("dropping sequence: %s", exc)
    split = partition_domains(kept, _partition_rule(ing))
    rng = np.random.default_rng(cfg.seed)
    fracs = (pre["train_frac"], pre["val_frac"], pre["test_frac"])
    ordered = split.source + split.target
    domains = ["source"] * len(split.source) + ["target"] * len(split.target)
    splits = _assign_splits(len(split.source), fracs, rng) + _assign_splits(len(split.target), fracs, rng)
    train = [s.values for s, tag in zip(ordered, splits) if tag == "train"]
    if not train:
        raise DataError("no training sequences after preprocessing; check the input and ingest settings")
    _, scaler = minmax_fit_transform(np.stack(train), ing["features"], split="train")
    normalized = [s.with_values(scaler.transform(s.values), split=tag) for s, tag in zip(ordered, splits)]
    with open(os.path.join(args.out, SCALER_FILE), "w", encoding="utf-8") as fh:
        json.dump(scaler.to_dict(), fh, indent=2, sort_keys=True)
    store = StoredSequences.from_sequences(normalized, domains, splits, ing["features"],
                                           extra={"partition_rule": split.rule})
    write_store(os.path.join(args.out, STORE_FILE), store)
    flat = np.concatenate([s.values for s, tag in zip(normalized, splits) if tag == "train"])
    write_feature_report(spearman_matrix(flat, ing["features"]), pre["target"],
                         os.path.join(args.out, "feature_report.csv"))
    return {"records": len(parsed.records), "rejections": len(parsed.rejections), "sequences": len(seqs),
            "dropped_imputation": dropped, "domains": split.counts()}


def _load_store(args):
    from .store import read_store

    return read_store(_need(args.store))


def _domain_arrays(store, split: str | None) -> tuple[np.ndarray, np.ndarray]:
    s = store.values[store.select("source", split)].astype(np.float64)
    t = store.values[store.select("target", split)].astype(np.float64)
    return s, t


def cmd_train(args, cfg) -> dict:
    from .complexity import ComplexityRecord, append_complexity_row, count_parameters
    from .model import save_model
    from .training import fit, write_history_csv

    store = _load_store(args)
    source, target = _domain_arrays(store, "train")
    if len(source) == 0 or len(target) == 0:
        raise DataError(f"store has an empty training domain (source={len(source)}, target={len(target)})")
    d, L = len(store.feature_names), store.values.shape[1]
    gcfg, dcfg = model_configs(cfg, d, L)
    os.makedirs(args.out, exist_ok=True)
    ckpt_dir = os.path.join(args.out, "checkpoints") if cfg["training"]["checkpoint_interval"] else None
    if ckpt_dir:
        os.makedirs(ckpt_dir, exist_ok=True)
    tcfg = train_config(cfg, checkpoint_dir=ckpt_dir)
    start = time.perf_counter()
    state = fit((source, target), tcfg, gcfg, dcfg)
    seconds = time.perf_counter() - start
    save_model(os.path.join(args.out, MODEL_FILE), state.model,
               {"feature_names": list(store.feature_names), "seed": cfg.seed})
    write_history_csv(state.history, os.path.join(args.out, "history.csv"))
    record = ComplexityRecord(count_parameters(state.model), seconds, 0.0)
    append_complexity_row(record, os.path.join(args.out, "complexity.csv"))
    return {"steps": state.step, "parameters": record.parameters, "train_seconds": seconds}


def cmd_tune(args, cfg) -> dict:
    from .gwo import default_space, proxy_evaluation, tune_training, write_tune_report

    store = _load_store(args)
    train = _domain_arrays(store, "train")
    val = _domain_arrays(store, "val")
    if min(len(v) for v in val) < 2:
        val = train
        log.warning("validation split too small; tuning scores on the training split")
    d, L = len(store.feature_names), store.values.shape[1]
    gcfg, dcfg = model_configs(cfg, d, L)
    tu = cfg["tuning"]
    base = train_config(cfg, steps=tu["proxy_steps"])
    space = default_space(tu["grid_levels"])
    m = cfg["metrics"]

    def evaluate(tcfg):
        return proxy_evaluation(train, tcfg, val, gcfg, dcfg, m["extractor_seed"], m["extractor_k"])

    reports = []
    for method in tu["methods"]:
        rep = tune_training(train, space, tu["budget"], method, cfg.seed, base_config=base,
                            pack_size=tu["pack_size"], evaluate=evaluate)
        reports.append(rep)
    os.makedirs(args.out, exist_ok=True)
    write_tune_report(reports, os.path.join(args.out, "tuning_report.csv"))
    best = {r.technique: {"params": r.best_params, "evaluations": r.evaluations, "truncated": r.truncated}
            for r in reports}
    with open(os.path.join(args.out, "best_hyperparameters.json"), "w", encoding="utf-8") as fh:
        json.dump(best, fh, indent=2, sort_keys=True)
    return {"timings": {r.technique: r.seconds for r in reports}}


def _load_model(args):
    from .model import load_model

    return load_model(_need(args.model))


def cmd_generate(args, cfg) -> dict:
    from .ingest import AisSequence, export_geojson
    from .model import translate
    from .preprocess import MinMaxScaler

    store = _load_store(args)
    model = _load_model(args)
    with open(_need(args.scaler), encoding="utf-8") as fh:
        scaler = MinMaxScaler.from_dict(json.load(fh))
    idx = store.select("source")
    X = store.values[idx].transpose(0, 2, 1).astype(model.g_st.tensors["embed.W"].dtype)
    fake = translate(model.g_st, X).transpose(0, 2, 1) if len(idx) else np.zeros((0,) + store.values.shape[1:])
    real_scale = scaler.inverse_transform(fake.astype(np.float64), store.feature_names)
    os.makedirs(args.out, exist_ok=True)
    seqs = []
    with open(os.path.join(args.out, "generated.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence", "mmsi", "step", "time"] + list(store.feature_names))
        for k, i in enumerate(idx):
            for t in range(real_scale.shape[1]):
                w.writerow([k, store.mmsi[i], t, repr(float(store.times[i, t]))]
                           + [repr(float(v)) for v in real_scale[k, t]])
            seqs.append(AisSequence(int(store.mmsi[i]), float(store.start_time[i]), real_scale[k],
                                    store.feature_names, np.ones_like(real_scale[k], bool), store.times[i]))
    export_geojson(seqs, os.path.join(args.out, "generated.geojson"))
    return {"generated": len(idx)}


def cmd_evaluate(args, cfg) -> dict:
    from .metrics import MetricsReport, feature_embed, fid, mmd_rbf, psnr, random_projection, wasserstein1d
    from .model import translate

    store = _load_store(args)
    model = _load_model(args)
    source, target = _domain_arrays(store, args.split)
    if len(source) < 2 or len(target) < 2:
        raise DataError(f"split {args.split!r} needs at least 2 sequences per domain "
                        f"(source={len(source)}, target={len(target)})")
    dtype = model.g_st.tensors["embed.W"].dtype
    fake = translate(model.g_st, source.transpose(0, 2, 1).astype(dtype))
    rec = translate(model.g_ts, fake).transpose(0, 2, 1).astype(np.float64)
    fake = fake.transpose(0, 2, 1).astype(np.float64)
    m = cfg["metrics"]
    ext = random_projection(m["extractor_seed"], m["extractor_k"])
    emb_t, emb_f = feature_embed(target, ext), feature_embed(fake, ext)
    rep = MetricsReport(extractor=ext.describe(), n_real=len(target), n_gen=len(fake))
    rep.add("PSNR", psnr(source, rec))
    rep.add("FID", fid(emb_t, emb_f))
    rep.add("MMD", mmd_rbf(emb_t.matrix, emb_f.matrix))
    rep.add("W1", float(np.mean([wasserstein1d(target[..., j], fake[..., j]) for j in range(target.shape[2])])))
    os.makedirs(args.out, exist_ok=True)
    rep.to_csv(os.path.join(args.out, "metrics.csv"))
    return {"metrics": rep.values}


def cmd_bench(args, cfg) -> dict:
    from .bench import BenchProtocol, RegressorConfig, run_bench, write_bench_table

    store = _load_store(args)
    model = _load_model(args)
    b = cfg["bench"]
    protocol = BenchProtocol(b["target"], b["train_frac"], b["val_frac"], b["test_frac"], b["ratio"],
                             RegressorConfig(b["regressor_channels"], b["regressor_layers"], b["regressor_epochs"]),
                             tuple(b["seeds"]))
    idx = store.select("target")
    tags = [store.split[i] for i in idx]
    splits = {k: np.array([j for j, t in enumerate(tags) if t == k], dtype=np.int64) for k in ("train", "val", "test")}
    if any(len(v) == 0 for v in splits.values()):
        raise DataError(f"target domain needs train/val/test sequences; got { {k: len(v) for k, v in splits.items()} }")
    source_train = store.values[store.select("source", "train")].astype(np.float64)
    result = run_bench(store.values[idx].astype(np.float64), model, protocol, source_train,
                       store.feature_names, splits=splits)
    os.makedirs(args.out, exist_ok=True)
    write_bench_table(result, os.path.join(args.out, "bench_table.csv"))
    with open(os.path.join(args.out, "bench_deltas.json"), "w", encoding="utf-8") as fh:
        json.dump(result.deltas(), fh, indent=2, sort_keys=True)
    return {"deltas": result.deltas()}


def cmd_ablate(args, cfg) -> dict:
    from .bench import run_ablation, write_ablation_table
    from .metrics import random_projection

    store = _load_store(args)
    train = _domain_arrays(store, "train")
    val = _domain_arrays(store, "val")
    if min(len(v) for v in val) < 2:
        val = train
    d, L = len(store.feature_names), store.values.shape[1]
    gcfg, dcfg = model_configs(cfg, d, L)
    b, m = cfg["bench"], cfg["metrics"]
    rows = run_ablation(train, b["depths"], train_config(cfg, steps=b["ablation_steps"]), gcfg, dcfg, val,
                        random_projection(m["extractor_seed"], m["extractor_k"]))
    os.makedirs(args.out, exist_ok=True)
    write_ablation_table(rows, os.path.join(args.out, "ablation_table.csv"))
    return {"failed_depths": [r.cnn_layers for r in rows if r.failed]}


COMMANDS = {
    "make-toy": cmd_make_toy,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "tune": cmd_tune,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aiscyclegen", description="AIS CycleGAN augmentation pipeline")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--seed", type=int, help="override run.seed")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    sp = add("make-toy", "write a synthetic AIS CSV and a matching small config")
    sp.add_argument("--vessels", type=int, default=24)
    sp.add_argument("--points", type=int, default=160)
    add("preprocess", "parse, window, impute, smooth, normalize and store sequences").add_argument(
        "--input", required=True, help="AIS CSV file")
    for name, help_text in (("train", "train the CycleGAN"), ("tune", "compare hyperparameter searches"),
                            ("ablate", "generator depth ablation")):
        add(name, help_text).add_argument("--store", required=True)
    sp = add("generate", "translate source sequences and write CSV + GeoJSON")
    sp.add_argument("--store", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--scaler", required=True)
    sp = add("evaluate", "fidelity metrics of a trained model")
    sp.add_argument("--store", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp = add("bench", "downstream regression with and without augmentation")
    sp.add_argument("--store", required=True)
    sp.add_argument("--model", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is not None:
            _need(args.config)
        cfg = load_config(args.config).with_seed(args.seed)
        start = time.perf_counter()
        summary = COMMANDS[args.command](args, cfg)
        summary["wall_seconds"] = time.perf_counter() - start
        _write_common(args.out, cfg, args.command, summary)
    except MissingInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except (AisCycleGenError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
