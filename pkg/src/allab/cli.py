"""Command-line front end.

Subcommands:
  run           one strategy, CSV results + per-sample score log + manifest
  compare       several strategies under otherwise-identical configs
  sweep-budget  rerun at different per-cycle budgets, total budget fixed
  explain       per-sample scores and duplicate-group histogram for one cycle
  inspect       print checkpoint metadata

Configs are strict JSON: unknown keys are rejected by name so typos cannot
silently fall back to defaults.  Seed precedence: --seed flag, then the
ALLAB_SEED environment variable, then the config file.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__, loop
from ._kernels import backend_name
from .data import SplitSpec
from .errors import (AllabError, InvalidParameterError, MissingResultsError,
                     ParseError, ValidationError)
from .learner import LearnerConfig, load_checkpoint
from .loop import DatasetSpec, ExperimentConfig
from .ssl import SSLConfig

__all__ = ["parse_config", "load_config", "serialize_config", "config_hash",
           "main"]


# ---------------------------------------------------------------------------
# config parsing (strict keys, explicit errors)
# ---------------------------------------------------------------------------

def _require_mapping(obj, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ValidationError(f"{where} must be a JSON object, "
                              f"got {type(obj).__name__}")
    return obj


def _reject_unknown(d: dict, allowed, where: str):
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        prefix = f"{where}." if where else ""
        raise ValidationError(
            f"unknown config key {prefix}{unknown[0]!r} "
            f"(allowed: {', '.join(sorted(allowed))})")


def _get_int(d, key, where):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"{where}.{key} must be an integer, got {v!r}")
    return v


def _get_float(d, key, where):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{where}.{key} must be a number, got {v!r}")
    return float(v)


def _get_bool(d, key, where):
    v = d[key]
    if not isinstance(v, bool):
        raise ValidationError(f"{where}.{key} must be true or false, got {v!r}")
    return v


def _get_str(d, key, where):
    v = d[key]
    if not isinstance(v, str):
        raise ValidationError(f"{where}.{key} must be a string, got {v!r}")
    return v


def _pick(d, key, getter, where, default):
    return getter(d, key, where) if key in d else default


def _parse_dataset(obj) -> DatasetSpec:
    d = _require_mapping(obj, "dataset")
    _reject_unknown(d, DatasetSpec.__dataclass_fields__, "dataset")
    base = DatasetSpec()
    dup = None
    if d.get("duplicate_factor") is not None:
        dup = _get_int(d, "duplicate_factor", "dataset")
    return DatasetSpec(
        kind=_pick(d, "kind", _get_str, "dataset", base.kind),
        num_classes=_pick(d, "num_classes", _get_int, "dataset", base.num_classes),
        dim=_pick(d, "dim", _get_int, "dataset", base.dim),
        n_per_class=_pick(d, "n_per_class", _get_int, "dataset", base.n_per_class),
        class_sep=_pick(d, "class_sep", _get_float, "dataset", base.class_sep),
        seed=_pick(d, "seed", _get_int, "dataset", base.seed),
        path=_pick(d, "path", _get_str, "dataset", base.path),
        format=_pick(d, "format", _get_str, "dataset", base.format),
        duplicate_factor=dup)


def _parse_split(obj) -> SplitSpec:
    d = _require_mapping(obj, "split")
    _reject_unknown(d, SplitSpec.__dataclass_fields__, "split")
    base = SplitSpec()
    return SplitSpec(
        initial_labeled=_pick(d, "initial_labeled", _get_int, "split",
                              base.initial_labeled),
        seed=_pick(d, "seed", _get_int, "split", base.seed),
        stratified=_pick(d, "stratified", _get_bool, "split", base.stratified))


def _parse_learner(obj) -> LearnerConfig:
    d = _require_mapping(obj, "learner")
    _reject_unknown(d, LearnerConfig.__dataclass_fields__, "learner")
    base = LearnerConfig()
    hidden = base.hidden_sizes
    if "hidden_sizes" in d:
        raw = d["hidden_sizes"]
        if not isinstance(raw, list) or not all(
                isinstance(h, int) and not isinstance(h, bool) for h in raw):
            raise ValidationError(
                f"learner.hidden_sizes must be a list of integers, got {raw!r}")
        hidden = tuple(raw)
    detach = base.llal_detach_epoch
    if d.get("llal_detach_epoch") is not None:
        detach = _get_int(d, "llal_detach_epoch", "learner")
    return LearnerConfig(
        hidden_sizes=hidden,
        dropout_p=_pick(d, "dropout_p", _get_float, "learner", base.dropout_p),
        epochs=_pick(d, "epochs", _get_int, "learner", base.epochs),
        batch_size=_pick(d, "batch_size", _get_int, "learner", base.batch_size),
        lr=_pick(d, "lr", _get_float, "learner", base.lr),
        momentum=_pick(d, "momentum", _get_float, "learner", base.momentum),
        weight_decay=_pick(d, "weight_decay", _get_float, "learner",
                           base.weight_decay),
        lr_step_epoch=_pick(d, "lr_step_epoch", _get_int, "learner",
                            base.lr_step_epoch),
        lr_step_factor=_pick(d, "lr_step_factor", _get_float, "learner",
                             base.lr_step_factor),
        seed=_pick(d, "seed", _get_int, "learner", base.seed),
        loss_head=_pick(d, "loss_head", _get_bool, "learner", base.loss_head),
        llal_margin=_pick(d, "llal_margin", _get_float, "learner",
                          base.llal_margin),
        llal_weight=_pick(d, "llal_weight", _get_float, "learner",
                          base.llal_weight),
        llal_detach_epoch=detach,
        llal_interm=_pick(d, "llal_interm", _get_int, "learner",
                          base.llal_interm))


def _parse_ssl(obj) -> SSLConfig:
    d = _require_mapping(obj, "ssl")
    _reject_unknown(d, SSLConfig.__dataclass_fields__, "ssl")
    base = SSLConfig()
    return SSLConfig(
        consistency_weight=_pick(d, "consistency_weight", _get_float, "ssl",
                                 base.consistency_weight),
        perturbation=_pick(d, "perturbation", _get_str, "ssl",
                           base.perturbation),
        noise_scale=_pick(d, "noise_scale", _get_float, "ssl",
                          base.noise_scale),
        unlabeled_batch_size=_pick(d, "unlabeled_batch_size", _get_int, "ssl",
                                   base.unlabeled_batch_size),
        ramp_up_epochs=_pick(d, "ramp_up_epochs", _get_int, "ssl",
                             base.ramp_up_epochs))


def parse_config(obj) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed JSON object.

    Every key is optional (defaults apply) but unknown keys raise
    ValidationError naming the offending field.
    """
    d = _require_mapping(obj, "config")
    _reject_unknown(d, ExperimentConfig.__dataclass_fields__, "")
    base = ExperimentConfig()
    prefilter = None
    if d.get("prefilter_size") is not None:
        prefilter = _get_int(d, "prefilter_size", "config")
    ssl_cfg = None
    if d.get("ssl") is not None:
        ssl_cfg = _parse_ssl(d["ssl"])
    try:
        return ExperimentConfig(
            dataset=_parse_dataset(d.get("dataset", {})),
            split=_parse_split(d.get("split", {})),
            learner=_parse_learner(d.get("learner", {})),
            ssl=ssl_cfg,
            strategy=_pick(d, "strategy", _get_str, "config", base.strategy),
            num_cycles=_pick(d, "num_cycles", _get_int, "config",
                             base.num_cycles),
            budget_per_cycle=_pick(d, "budget_per_cycle", _get_int, "config",
                                   base.budget_per_cycle),
            retrain=_pick(d, "retrain", _get_str, "config", base.retrain),
            trials=_pick(d, "trials", _get_int, "config", base.trials),
            base_seed=_pick(d, "base_seed", _get_int, "config", base.base_seed),
            prefilter_size=prefilter,
            test_fraction=_pick(d, "test_fraction", _get_float, "config",
                                base.test_fraction),
            mc_passes=_pick(d, "mc_passes", _get_int, "config", base.mc_passes),
            var_ratio_mc=_pick(d, "var_ratio_mc", _get_bool, "config",
                               base.var_ratio_mc))
    except InvalidParameterError as exc:
        # parameter objects validate themselves; surface as a config error
        raise ValidationError(str(exc)) from exc


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from exc
    return parse_config(obj)


def serialize_config(cfg: ExperimentConfig) -> dict:
    """Plain-JSON dict such that parse_config(serialize_config(c)) == c."""
    d = dataclasses.asdict(cfg)
    d["learner"]["hidden_sizes"] = list(d["learner"]["hidden_sizes"])
    return d


def config_hash(cfg: ExperimentConfig) -> str:
    payload = json.dumps(serialize_config(cfg), sort_keys=True,
                         separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x))


def _write_results_csv(path, strategy, rows, trials):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["strategy", "cycle", "labeled", "mean_acc", "std_acc"]
        header += [f"trial_acc_{t}" for t in range(trials)]
        w.writerow(header)
        for r in rows:
            w.writerow([strategy, r["cycle"], r["labeled"],
                        _fmt(r["mean_acc"]), _fmt(r["std_acc"])]
                       + [_fmt(a) for a in r["trial_accs"]])


def _write_results_json(path, strategy, rows):
    payload = [{"strategy": strategy, "cycle": r["cycle"],
                "labeled": r["labeled"], "mean_acc": r["mean_acc"],
                "std_acc": r["std_acc"],
                "trial_accs": [None if math.isnan(a) else a
                               for a in r["trial_accs"]]}
               for r in rows]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _record_rows(records):
    return [{"cycle": r.cycle, "labeled": r.labeled_count,
             "mean_acc": r.mean_acc, "std_acc": r.std_acc,
             "trial_accs": list(r.trial_accs)} for r in records]


class _ScoreLog:
    """Streams one row per pool sample per cycle into scores.csv."""

    HEADER = ["trial", "cycle", "position", "dataset_index", "score",
              "selected"]

    def __init__(self, path):
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.HEADER)

    def on_cycle(self, out):
        chosen = np.isin(out.pool_positions, out.selected)
        for pos, (ds_idx, score, sel) in enumerate(
                zip(out.pool_positions, out.scores, chosen)):
            self._w.writerow([out.trial, out.cycle, pos, int(ds_idx),
                              format(float(score), ".12g"), int(sel)])

    def close(self):
        self._fh.close()


def _write_manifest(path, cfg, artifacts, result=None, partial=None,
                    interrupted=False):
    trials_status = {}
    timings = {}
    if result is not None:
        for t in range(cfg.trials):
            if t in result.outcomes:
                trials_status[str(t)] = "ok"
                timings[str(t)] = [round(o.seconds, 6)
                                   for o in result.outcomes[t]]
            else:
                trials_status[str(t)] = "failed: " + result.failures[t]
    elif partial is not None:
        for t in range(cfg.trials):
            done = len(partial.get(t, {}))
            if done == cfg.num_cycles:
                trials_status[str(t)] = "ok"
            elif done:
                trials_status[str(t)] = f"failed: interrupted after {done} cycles"
            else:
                trials_status[str(t)] = "failed: not started"
    manifest = {
        "tool": "allab",
        "version": __version__,
        "backend": backend_name(),
        "config": serialize_config(cfg),
        "config_sha256": config_hash(cfg),
        "interrupted": interrupted,
        "trials": trials_status,
        "cycle_seconds": timings,
        "artifacts": sorted(artifacts),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _prepare_out(out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, ".write_probe")
    with open(probe, "w", encoding="utf-8") as fh:
        fh.write("")
    os.remove(probe)


def cmd_run(cfg: ExperimentConfig, out_dir: str, jobs: int = 1,
            fmt: str = "csv", quiet: bool = False) -> int:
    _prepare_out(out_dir)
    scores_path = os.path.join(out_dir, "scores.csv")
    results_name = "results.csv" if fmt == "csv" else "results.json"
    results_path = os.path.join(out_dir, results_name)
    manifest_path = os.path.join(out_dir, "manifest.json")
    ckpt_paths = {t: os.path.join(out_dir, f"model_trial{t}.ckpt")
                  for t in range(cfg.trials)}
    log = _ScoreLog(scores_path)
    partial: dict[int, dict[int, float]] = {}

    def on_cycle(out):
        log.on_cycle(out)
        partial.setdefault(out.trial, {})[out.cycle] = out.accuracy
        if not quiet:
            print(f"trial {out.trial} cycle {out.cycle}: "
                  f"|L|={out.labeled_count} acc={out.accuracy:.4f} "
                  f"({out.seconds:.2f}s)")

    artifacts = [os.path.basename(scores_path), results_name, "manifest.json"]
    try:
        result = loop.run_experiment(cfg, on_cycle=on_cycle, jobs=jobs,
                                     checkpoint_paths=ckpt_paths)
    except KeyboardInterrupt:
        log.close()
        rows = _partial_rows(cfg, partial)
        if rows:
            if fmt == "csv":
                _write_results_csv(results_path, cfg.strategy, rows, cfg.trials)
            else:
                _write_results_json(results_path, cfg.strategy, rows)
        _write_manifest(manifest_path, cfg, artifacts, partial=partial,
                        interrupted=True)
        print("interrupted; partial results flushed", file=sys.stderr)
        return 3
    log.close()

    rows = _record_rows(result.records)
    if fmt == "csv":
        _write_results_csv(results_path, cfg.strategy, rows, cfg.trials)
    else:
        _write_results_json(results_path, cfg.strategy, rows)
    artifacts += [os.path.basename(p) for t, p in sorted(ckpt_paths.items())
                  if t in result.outcomes]
    _write_manifest(manifest_path, cfg, artifacts, result=result)
    for t, msg in sorted(result.failures.items()):
        print(f"WARNING: trial {t} failed and was excluded: {msg}",
              file=sys.stderr)
    if not quiet:
        final = result.records[-1]
        print(f"done: strategy={cfg.strategy} "
              f"final |L|={final.labeled_count} "
              f"mean_acc={final.mean_acc:.4f} (std {final.std_acc:.4f})")
        print(f"results in {out_dir}")
    return 0


def _partial_rows(cfg, partial):
    rows = []
    for cycle in range(cfg.num_cycles):
        accs = [partial[t][cycle] for t in sorted(partial)
                if cycle in partial[t]]
        if not accs:
            break
        per_trial = [partial.get(t, {}).get(cycle, float("nan"))
                     for t in range(cfg.trials)]
        std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        rows.append({"cycle": cycle,
                     "labeled": cfg.split.initial_labeled
                     + cycle * cfg.budget_per_cycle,
                     "mean_acc": float(np.mean(accs)), "std_acc": std,
                     "trial_accs": per_trial})
    return rows


def cmd_compare(configs, out_dir: str, jobs: int = 1, fmt: str = "csv",
                quiet: bool = False) -> int:
    _prepare_out(out_dir)
    comparison = loop.compare_strategies(configs, jobs=jobs)
    table_path = os.path.join(out_dir, "comparison.csv")
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "cycle", "labeled", "mean_acc", "std_acc",
                    "delta_vs_random_pp"])
        for row in comparison.rows:
            delta = row["delta_vs_random_pp"]
            w.writerow([row["strategy"], row["cycle"], row["labeled"],
                        _fmt(row["mean_acc"]), _fmt(row["std_acc"]),
                        "" if delta is None else _fmt(delta)])
    plot_path = os.path.join(out_dir, "plot_data.csv")
    with open(plot_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "cycle", "labeled", "trial", "acc"])
        for name, result in comparison.results.items():
            for trial in sorted(result.outcomes):
                for out in result.outcomes[trial]:
                    w.writerow([name, out.cycle, out.labeled_count, trial,
                                _fmt(out.accuracy)])
    _write_manifest(os.path.join(out_dir, "manifest.json"), configs[0],
                    ["comparison.csv", "plot_data.csv", "manifest.json"])
    if not quiet:
        print(f"{'strategy':<14} {'labeled':>8} {'mean_acc':>9} "
              f"{'std':>7} {'vs random':>10}")
        for row in comparison.rows:
            delta = row["delta_vs_random_pp"]
            delta_s = "" if delta is None else f"{delta:+.2f}pp"
            print(f"{row['strategy']:<14} {row['labeled']:>8} "
                  f"{row['mean_acc']:>9.4f} {row['std_acc']:>7.4f} "
                  f"{delta_s:>10}")
        print(f"results in {out_dir}")
    return 0


def cmd_sweep_budget(cfg: ExperimentConfig, budgets, out_dir: str,
                     jobs: int = 1, quiet: bool = False) -> int:
    _prepare_out(out_dir)
    results = loop.budget_schedule_sweep(cfg, budgets, jobs=jobs)
    path = os.path.join(out_dir, "sweep.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["budget_per_cycle", "num_cycles", "cycle", "labeled",
                    "mean_acc", "std_acc"])
        for b in sorted(results):
            result = results[b]
            for rec in result.records:
                w.writerow([b, result.config.num_cycles, rec.cycle,
                            rec.labeled_count, _fmt(rec.mean_acc),
                            _fmt(rec.std_acc)])
    _write_manifest(os.path.join(out_dir, "manifest.json"), cfg,
                    ["sweep.csv", "manifest.json"])
    if not quiet:
        for b in sorted(results):
            rec = results[b].records[-1]
            print(f"budget {b:>6}: {results[b].config.num_cycles} cycles, "
                  f"final mean_acc={rec.mean_acc:.4f}")
        print(f"results in {out_dir}")
    return 0


def cmd_explain(cfg: ExperimentConfig, out_dir: str, cycle: int,
                quiet: bool = False) -> int:
    """Post-hoc view of one cycle from a previous ``run`` in out_dir."""
    scores_path = os.path.join(out_dir, "scores.csv")
    if not os.path.exists(scores_path):
        raise MissingResultsError(
            f"no scores.csv under {out_dir}; run `allab run` there first")
    rows = []
    with open(scores_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _ScoreLog.HEADER:
            raise ParseError(f"{scores_path}: unexpected columns "
                             f"{reader.fieldnames}")
        for row in reader:
            if int(row["cycle"]) == cycle:
                rows.append(row)
    if not rows:
        raise MissingResultsError(
            f"scores.csv has no rows for cycle {cycle}")
    train_ds, _, _ = loop.prepare_data(cfg)
    group_of = train_ds.dup_group

    out_path = os.path.join(out_dir, f"explain_cycle{cycle}.csv")
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "position", "dataset_index", "dup_group",
                    "score", "selected"])
        for row in rows:
            idx = int(row["dataset_index"])
            w.writerow([row["trial"], row["position"], idx,
                        int(group_of[idx]), row["score"], row["selected"]])

    hist: dict[int, int] = {}
    n_selected = 0
    for row in rows:
        if row["selected"] == "1":
            n_selected += 1
            g = int(group_of[int(row["dataset_index"])])
            hist[g] = hist.get(g, 0) + 1
    hist_path = os.path.join(out_dir, f"dup_hist_cycle{cycle}.csv")
    with open(hist_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dup_group", "selected_count"])
        for g in sorted(hist):
            w.writerow([g, hist[g]])
    if not quiet:
        multi = sum(1 for v in hist.values() if v > 1)
        top = max(hist.values()) if hist else 0
        print(f"cycle {cycle}: {n_selected} selections across "
              f"{len(hist)} duplicate groups "
              f"({multi} groups picked more than once, max {top})")
        print(f"wrote {out_path} and {hist_path}")
    return 0


def cmd_inspect(paths, fmt: str = "csv") -> int:
    infos = []
    for path in paths:
        model = load_checkpoint(path)
        n_params = int(sum(a.size for a in model.parameter_arrays()))
        infos.append({
            "path": path,
            "dim": model.dim,
            "num_classes": model.num_classes,
            "hidden_sizes": list(model.hidden_sizes),
            "dropout_p": model.dropout_p,
            "loss_head": bool(model.has_loss_head),
            "epochs_trained": model.epochs_trained,
            "seed": model.seed,
            "n_parameters": n_params,
        })
    if fmt == "json":
        json.dump(infos, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        for info in infos:
            for k, v in info.items():
                print(f"{k}: {v}")
            print()
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _resolve_seed(args_seed):
    if args_seed is not None:
        return args_seed
    env = os.environ.get("ALLAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"ALLAB_SEED must be an integer, got {env!r}")
    return None


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    seed = _resolve_seed(args.seed)
    if seed is not None:
        cfg = dataclasses.replace(cfg, base_seed=seed)
    if getattr(args, "trials", None) is not None:
        if args.trials < 1:
            raise ValidationError("--trials must be >= 1")
        cfg = dataclasses.replace(cfg, trials=args.trials)
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="allab",
        description="Active-learning lab: strategy experiments on small "
                    "classification pools.")
    parser.add_argument("--version", action="version",
                        version=f"allab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, multi_config=False):
        if multi_config:
            p.add_argument("--config", action="append", required=True,
                           metavar="PATH", help="config JSON (repeatable)")
        else:
            p.add_argument("--config", required=True, metavar="PATH",
                           help="config JSON")
        p.add_argument("--out", required=True, metavar="DIR",
                       help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override base_seed (beats ALLAB_SEED and config)")
        p.add_argument("--trials", type=int, default=None,
                       help="override trial count")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes for trials")
        p.add_argument("--quiet", action="store_true")

    p_run = sub.add_parser("run", help="run one strategy")
    common(p_run)
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")

    p_cmp = sub.add_parser("compare", help="run several strategies")
    common(p_cmp, multi_config=True)
    p_cmp.add_argument("--format", choices=("csv", "json"), default="csv")

    p_swp = sub.add_parser("sweep-budget",
                           help="vary budget per cycle at fixed total")
    common(p_swp)
    p_swp.add_argument("--budgets", required=True,
                       help="comma-separated per-cycle budgets")

    p_exp = sub.add_parser("explain",
                           help="inspect one cycle of a previous run")
    common(p_exp)
    p_exp.add_argument("--cycle", type=int, required=True)

    p_ins = sub.add_parser("inspect", help="print checkpoint metadata")
    p_ins.add_argument("--checkpoint", action="append", required=True,
                       metavar="PATH", help="checkpoint file (repeatable)")
    p_ins.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _apply_overrides(load_config(args.config), args)
            return cmd_run(cfg, args.out, jobs=args.jobs, fmt=args.format,
                           quiet=args.quiet)
        if args.command == "compare":
            cfgs = [_apply_overrides(load_config(p), args)
                    for p in args.config]
            return cmd_compare(cfgs, args.out, jobs=args.jobs,
                               fmt=args.format, quiet=args.quiet)
        if args.command == "sweep-budget":
            cfg = _apply_overrides(load_config(args.config), args)
            try:
                budgets = [int(b) for b in args.budgets.split(",") if b.strip()]
            except ValueError:
                raise ValidationError(
                    f"--budgets must be comma-separated integers, "
                    f"got {args.budgets!r}")
            return cmd_sweep_budget(cfg, budgets, args.out, jobs=args.jobs,
                                    quiet=args.quiet)
        if args.command == "explain":
            cfg = _apply_overrides(load_config(args.config), args)
            return cmd_explain(cfg, args.out, args.cycle, quiet=args.quiet)
        if args.command == "inspect":
            return cmd_inspect(args.checkpoint, fmt=args.format)
        raise AssertionError(f"unhandled command {args.command}")
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvalidParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AllabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
