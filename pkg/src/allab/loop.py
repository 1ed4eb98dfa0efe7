"""The labeling loop: train, evaluate, score the pool, acquire, repeat.

Each cycle trains on the current labeled set (from scratch or continuing the
previous weights), records test accuracy, scores the unlabeled pool with the
configured strategy and moves the top ``budget_per_cycle`` samples into the
labeled set.  Seeds are derived per (trial, cycle) so results are exactly
reproducible and so strategies under the same base seed share identical
initial splits and cycle-0 models.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import acquisition, learner as learner_mod, ssl as ssl_mod
from .acquisition import (STRATEGIES, SelectionRequest, prefilter_candidates,
                          score_bald, score_entropy, score_llal, score_random,
                          score_var_ratio, select_coreset, select_top_k)
from .data import (Dataset, PoolPartition, SplitSpec, duplicate_dataset,
                   generate_gaussian_mixture, initial_split, load_dataset)
from .errors import (ConfigMismatchError, InfeasibleBudgetError,
                     InvalidParameterError, NonFiniteLossError,
                     PoolExhaustedError, ValidationError)
from .learner import LearnerConfig, LearnerModel, init_model
from .ssl import SSLConfig

__all__ = [
    "DatasetSpec", "ExperimentConfig", "CycleOutcome", "CycleRecord",
    "ExperimentResult", "ComparisonResult", "prepare_data", "run_cycle",
    "run_trial", "run_experiment", "compare_strategies",
    "budget_schedule_sweep", "derive_seed",
]

RETRAIN_MODES = ("scratch", "finetune")

# stream tags so the per-purpose generators never collide
_TEST_CARVE_TAG = 0x7E57
_DUP_TAG = 0xD0B
_SEL_TAG = 1
_MC_TAG = 2
_PERTURB_TAG = 3
_RANDOM_SCORE_TAG = 4


def derive_seed(*parts: int) -> int:
    """Deterministically mix integer parts into one 32-bit seed."""
    return int(np.random.SeedSequence(parts).generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class DatasetSpec:
    """Where training data comes from: a synthetic mixture or a file."""

    kind: str = "gaussian"
    num_classes: int = 4
    dim: int = 16
    n_per_class: int = 2500
    class_sep: float = 2.5
    seed: int = 0
    path: str = ""
    format: str = "csv"
    duplicate_factor: int | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "file"):
            raise ValidationError(f"dataset.kind must be gaussian or file, "
                                  f"got {self.kind!r}")
        if self.kind == "file":
            if not self.path:
                raise ValidationError("dataset.path is required for kind=file")
            if self.format not in ("csv", "idx"):
                raise ValidationError(
                    f"dataset.format must be csv or idx, got {self.format!r}")
        if self.duplicate_factor is not None and self.duplicate_factor < 2:
            raise ValidationError("dataset.duplicate_factor must be >= 2")

    def build(self) -> Dataset:
        if self.kind == "gaussian":
            return generate_gaussian_mixture(self.num_classes, self.dim,
                                             self.n_per_class, self.class_sep,
                                             self.seed)
        return load_dataset(self.path, self.format)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    split: SplitSpec = field(default_factory=SplitSpec)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    ssl: SSLConfig | None = None
    strategy: str = "random"
    num_cycles: int = 5
    budget_per_cycle: int = 250
    retrain: str = "scratch"
    trials: int = 1
    base_seed: int = 0
    prefilter_size: int | None = None
    test_fraction: float = 0.2
    mc_passes: int = 25
    var_ratio_mc: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(
                f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.retrain not in RETRAIN_MODES:
            raise ValidationError(
                f"retrain must be one of {RETRAIN_MODES}, got {self.retrain!r}")
        if self.num_cycles < 1:
            raise ValidationError("num_cycles must be >= 1")
        if self.budget_per_cycle < 1:
            raise ValidationError("budget_per_cycle must be >= 1")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValidationError("test_fraction must be in (0, 1)")
        if self.prefilter_size is not None \
                and self.prefilter_size < self.budget_per_cycle:
            raise ValidationError("prefilter_size must be >= budget_per_cycle")
        if self.strategy == "llal" and not self.learner.loss_head:
            raise ValidationError(
                "strategy llal needs learner.loss_head enabled")
        if self.strategy == "bald":
            if self.mc_passes < 2:
                raise ValidationError("strategy bald needs mc_passes >= 2")
            if self.learner.dropout_p <= 0:
                raise ValidationError("strategy bald needs learner.dropout_p > 0")
        if self.var_ratio_mc and self.learner.dropout_p <= 0:
            raise ValidationError("var_ratio_mc needs learner.dropout_p > 0")
        if self.mc_passes < 1:
            raise ValidationError("mc_passes must be >= 1")
        if self.strategy == "inconsistency" and self.ssl is None:
            raise ValidationError(
                "strategy inconsistency needs an ssl block (it reuses the "
                "perturbation settings)")

    @property
    def uses_ssl_training(self) -> bool:
        return self.ssl is not None and self.ssl.consistency_weight > 0


def prepare_data(cfg: ExperimentConfig):
    """Build the dataset, carve off a held-out test split, then apply any
    duplication to the training portion only.

    Returns (train dataset, test features, test labels).  The carve depends
    only on split.seed, so every trial and strategy sees the same test set.
    """
    base = cfg.dataset.build()
    n = base.n_samples
    n_test = int(round(cfg.test_fraction * n))
    n_test = min(max(n_test, 1), n - 1)
    rng = np.random.default_rng(
        np.random.SeedSequence((cfg.split.seed, _TEST_CARVE_TAG)))
    test_rows = np.sort(rng.choice(n, size=n_test, replace=False))
    train_rows = np.setdiff1d(np.arange(n, dtype=np.int64), test_rows)
    train = Dataset(base.features[train_rows], base.labels[train_rows],
                    base.num_classes, base.dup_group[train_rows],
                    f"{base.name}_tr")
    if cfg.dataset.duplicate_factor is not None:
        train = duplicate_dataset(train, cfg.dataset.duplicate_factor,
                                  derive_seed(cfg.split.seed, _DUP_TAG))
    test_x = np.ascontiguousarray(base.features[test_rows])
    test_y = base.labels[test_rows].copy()
    _check_feasible(cfg, train.n_samples)
    return train, test_x, test_y


def _check_feasible(cfg: ExperimentConfig, n_train: int):
    needed = cfg.split.initial_labeled + cfg.num_cycles * cfg.budget_per_cycle
    if needed > n_train:
        raise InfeasibleBudgetError(
            f"initial_labeled + num_cycles * budget_per_cycle = {needed} "
            f"exceeds the training pool of {n_train}")


@dataclass
class CycleOutcome:
    """Everything one trial produced in one cycle."""

    trial: int
    cycle: int
    labeled_count: int          # |L| the model was trained on
    accuracy: float
    pool_positions: np.ndarray  # dataset indices of U at selection time
    scores: np.ndarray          # score per pool position
    selected: np.ndarray        # dataset indices moved to L, best first
    seconds: float


@dataclass(frozen=True)
class CycleRecord:
    """Per-cycle accuracy aggregated over trials."""

    cycle: int
    labeled_count: int
    trial_accs: tuple
    mean_acc: float
    std_acc: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    outcomes: dict          # trial -> list[CycleOutcome] (successful trials)
    failures: dict          # trial -> error message

    @property
    def final_mean_acc(self) -> float:
        return self.records[-1].mean_acc


def _accuracy(model: LearnerModel, test_x, test_y) -> float:
    probs = learner_mod.predict_proba_features(model, test_x)
    return float(np.mean(probs.argmax(axis=1) == test_y))


def _score_pool(model, ds, partition, cfg, trial, cycle):
    """Score every unlabeled sample and pick budget_per_cycle of them.

    Returns (scores over pool positions, positions selected, best first).
    """
    pool = partition.unlabeled
    n = len(pool)
    sel_seed = derive_seed(cfg.base_seed, trial, cycle, _SEL_TAG)
    prefilter = cfg.prefilter_size
    if cfg.strategy == "coreset" and prefilter is None:
        # diversity selection over the full pool is quadratic; default to a
        # seeded candidate sample of 10x the budget
        prefilter = 10 * cfg.budget_per_cycle
    req = SelectionRequest(budget=cfg.budget_per_cycle,
                           prefilter_size=prefilter, seed=sel_seed)

    if cfg.strategy == "coreset":
        emb_l = learner_mod.embed(model, ds, partition.labeled)
        emb_u = learner_mod.embed(model, ds, pool)
        cand = prefilter_candidates(n, req)
        picks = select_coreset(emb_l, emb_u[cand], cfg.budget_per_cycle)
        positions = cand[picks]
        # exported score: pre-selection distance to the nearest labeled center
        scores = np.sqrt(acquisition._min_dist2_to_centers(emb_u, emb_l))
        return scores, positions

    if cfg.strategy == "random":
        scores = score_random(n, derive_seed(cfg.base_seed, trial, cycle,
                                             _RANDOM_SCORE_TAG))
    elif cfg.strategy == "entropy":
        scores = score_entropy(learner_mod.predict_proba(model, ds, pool))
    elif cfg.strategy == "var_ratio":
        if cfg.var_ratio_mc:
            mc = learner_mod.predict_proba_mc(
                model, ds, pool, cfg.mc_passes,
                derive_seed(cfg.base_seed, trial, cycle, _MC_TAG))
            scores = score_var_ratio(mc.mean(axis=0))
        else:
            scores = score_var_ratio(learner_mod.predict_proba(model, ds, pool))
    elif cfg.strategy == "bald":
        mc = learner_mod.predict_proba_mc(
            model, ds, pool, cfg.mc_passes,
            derive_seed(cfg.base_seed, trial, cycle, _MC_TAG))
        scores = score_bald(mc)
    elif cfg.strategy == "llal":
        scores = score_llal(learner_mod.predict_loss(model, ds, pool))
    elif cfg.strategy == "inconsistency":
        scores = ssl_mod.acquire_inconsistency(
            model, ds, pool, cfg.ssl,
            derive_seed(cfg.base_seed, trial, cycle, _PERTURB_TAG))
    else:  # pragma: no cover - guarded by config validation
        raise InvalidParameterError(f"unknown strategy {cfg.strategy!r}")
    return scores.scores, select_top_k(scores, req)


def run_cycle(model: LearnerModel | None, ds: Dataset,
              partition: PoolPartition, cfg: ExperimentConfig, test_x, test_y,
              trial: int, cycle: int):
    """One train / evaluate / select / move step.

    Mutates ``partition`` and returns (model, CycleOutcome).  ``model`` is
    replaced in scratch mode and between-cycle state in finetune mode.
    """
    if len(partition.unlabeled) < cfg.budget_per_cycle:
        raise PoolExhaustedError(
            f"cycle {cycle}: pool has {len(partition.unlabeled)} samples, "
            f"budget is {cfg.budget_per_cycle}")
    started = time.perf_counter()
    model_seed = derive_seed(cfg.learner.seed, cfg.base_seed, trial, cycle)
    if cfg.retrain == "scratch" or model is None:
        model = init_model(replace(cfg.learner, seed=model_seed),
                           ds.dim, ds.num_classes)
    if cfg.uses_ssl_training:
        ssl_mod.train_ssl(model, ds, partition, cfg.learner, cfg.ssl)
    else:
        learner_mod.train(model, ds, partition.labeled, cfg.learner)
    labeled_count = len(partition.labeled)
    acc = _accuracy(model, test_x, test_y)
    scores, positions = _score_pool(model, ds, partition, cfg, trial, cycle)
    pool_snapshot = partition.unlabeled.copy()
    selected = pool_snapshot[positions]
    partition.acquire(selected)
    outcome = CycleOutcome(trial=trial, cycle=cycle,
                           labeled_count=labeled_count, accuracy=acc,
                           pool_positions=pool_snapshot, scores=scores,
                           selected=selected,
                           seconds=time.perf_counter() - started)
    return model, outcome


def run_trial(cfg: ExperimentConfig, trial: int, data=None, on_cycle=None,
              checkpoint_path=None):
    """All cycles for one trial; returns the list of CycleOutcomes.

    With ``checkpoint_path`` set, the final model is saved there.
    """
    train_ds, test_x, test_y = data if data is not None else prepare_data(cfg)
    split = replace(cfg.split, seed=cfg.split.seed + trial)
    partition = initial_split(train_ds, split)
    model = None
    outcomes = []
    for cycle in range(cfg.num_cycles):
        model, outcome = run_cycle(model, train_ds, partition, cfg,
                                   test_x, test_y, trial, cycle)
        outcomes.append(outcome)
        if on_cycle is not None:
            on_cycle(outcome)
    if checkpoint_path is not None:
        learner_mod.save_checkpoint(model, checkpoint_path)
    return outcomes


def _trial_worker(args):
    cfg, trial, checkpoint_path = args
    try:
        return trial, run_trial(cfg, trial,
                                checkpoint_path=checkpoint_path), None
    except NonFiniteLossError as exc:
        return trial, None, str(exc)


def run_experiment(cfg: ExperimentConfig, on_cycle=None, jobs: int = 1,
                   checkpoint_paths=None) -> ExperimentResult:
    """Run all trials and aggregate per-cycle accuracy.

    A trial that diverges (non-finite loss) is dropped from the statistics
    and reported in ``failures``; anything else propagates.  With jobs > 1,
    trials run in separate processes; results are identical to a sequential
    run because every stream is derived from (trial, cycle) seeds.
    ``checkpoint_paths`` optionally maps trial -> file for the final model.
    """
    checkpoint_paths = checkpoint_paths or {}
    outcomes: dict[int, list] = {}
    failures: dict[int, str] = {}
    if jobs > 1 and cfg.trials > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            work = [(cfg, t, checkpoint_paths.get(t))
                    for t in range(cfg.trials)]
            for trial, result, err in pool.map(_trial_worker, work):
                if err is None:
                    outcomes[trial] = result
                else:
                    failures[trial] = err
        if on_cycle is not None:
            for trial in sorted(outcomes):
                for outcome in outcomes[trial]:
                    on_cycle(outcome)
    else:
        data = prepare_data(cfg)
        for trial in range(cfg.trials):
            try:
                outcomes[trial] = run_trial(
                    cfg, trial, data=data, on_cycle=on_cycle,
                    checkpoint_path=checkpoint_paths.get(trial))
            except NonFiniteLossError as exc:
                failures[trial] = str(exc)
    if not outcomes:
        raise NonFiniteLossError(
            "every trial diverged: " + "; ".join(
                f"trial {t}: {m}" for t, m in sorted(failures.items())))

    records = []
    initial = cfg.split.initial_labeled
    for cycle in range(cfg.num_cycles):
        expected = initial + cycle * cfg.budget_per_cycle
        accs = []
        per_trial = []
        for trial in range(cfg.trials):
            if trial in outcomes:
                out = outcomes[trial][cycle]
                if out.labeled_count != expected:
                    raise ValidationError(
                        f"bookkeeping drift at cycle {cycle}: "
                        f"|L| = {out.labeled_count}, expected {expected}")
                accs.append(out.accuracy)
                per_trial.append(out.accuracy)
            else:
                per_trial.append(float("nan"))
        mean = float(np.mean(accs))
        std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        records.append(CycleRecord(cycle=cycle, labeled_count=expected,
                                   trial_accs=tuple(per_trial),
                                   mean_acc=mean, std_acc=std))
    return ExperimentResult(config=cfg, records=records, outcomes=outcomes,
                            failures=failures)


@dataclass
class ComparisonResult:
    results: dict  # strategy -> ExperimentResult
    rows: list     # per (strategy, cycle) summary dicts


def _comparable_view(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d.pop("strategy")
    return d


def compare_strategies(configs, jobs: int = 1,
                       on_cycle=None) -> ComparisonResult:
    """Run several strategies under otherwise-identical configs.

    Everything except ``strategy`` must match, so all strategies share the
    same splits, the same test set and the same cycle-0 models.  Rows carry
    the accuracy delta against the random baseline (in percentage points)
    when a random config is part of the comparison.
    """
    configs = list(configs)
    if len(configs) < 2:
        raise InvalidParameterError("need at least two configs to compare")
    names = [c.strategy for c in configs]
    if len(set(names)) != len(names):
        raise ConfigMismatchError(f"duplicate strategies in comparison: {names}")
    ref = _comparable_view(configs[0])
    for c in configs[1:]:
        if _comparable_view(c) != ref:
            raise ConfigMismatchError(
                f"configs for {configs[0].strategy!r} and {c.strategy!r} "
                "differ in fields other than strategy")
    results = {c.strategy: run_experiment(c, jobs=jobs, on_cycle=on_cycle)
               for c in configs}
    baseline = results.get("random")
    rows = []
    for name in names:
        for rec in results[name].records:
            delta = None
            if baseline is not None:
                delta = (rec.mean_acc
                         - baseline.records[rec.cycle].mean_acc) * 100.0
            rows.append({"strategy": name, "cycle": rec.cycle,
                         "labeled": rec.labeled_count,
                         "mean_acc": rec.mean_acc, "std_acc": rec.std_acc,
                         "delta_vs_random_pp": delta})
    return ComparisonResult(results=results, rows=rows)


def budget_schedule_sweep(cfg: ExperimentConfig, budgets,
                          jobs: int = 1) -> dict:
    """Rerun the experiment at several per-cycle budgets, holding the total
    label budget fixed.  Each budget must divide the total."""
    budgets = [int(b) for b in budgets]
    if not budgets:
        raise InvalidParameterError("need at least one budget")
    total = cfg.num_cycles * cfg.budget_per_cycle
    results = {}
    for b in budgets:
        if b < 1 or total % b != 0:
            raise InfeasibleBudgetError(
                f"budget {b} does not divide the total label budget {total}")
        derived = replace(cfg, budget_per_cycle=b, num_cycles=total // b)
        results[b] = run_experiment(derived, jobs=jobs)
    return results
