"""Acceptance gate: numerical oracles, selection-quality bounds, statistical
direction checks and reproducibility guarantees.

Each test prints a single PASS/FAIL line (visible with ``pytest -s``) and
asserts the same condition, so the suite fails loudly when a guarantee
breaks.  Statistical checks run fixed seeds end to end; they are exact
reruns, not flaky samples.
"""

import dataclasses
import itertools
import json
import math
import time

import numpy as np
from mpmath import mp, mpf

import allab.cli as cli
import allab.loop as loop
from allab.acquisition import (
    AcquisitionScores,
    SelectionRequest,
    brute_force_kcenter,
    score_bald,
    score_entropy,
    score_inconsistency,
    score_var_ratio,
    select_coreset,
    select_top_k,
)
from allab.data import SplitSpec, initial_split
from allab.learner import (
    LearnerConfig,
    _batch_loss,
    _batch_loss_and_grads,
    init_model,
)
from allab.loop import DatasetSpec, ExperimentConfig, run_cycle, run_experiment
from allab.ssl import SSLConfig

mp.dps = 40
_FLOOR = mpf(1e-12)  # same clamp the float implementation applies


def _report(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. gradients against central finite differences
# ---------------------------------------------------------------------------

def test_gradients_match_finite_differences():
    started = time.perf_counter()
    rng = np.random.default_rng(20240817)
    # step balances truncation (h^2) against float cancellation (eps / h);
    # 1e-6 leaves ~1e-10 of noise on exactly-zero gradients, 1e-5 is safe
    h = 1e-5
    dim, classes = 3, 3
    max_err = 0.0
    cases = 0
    shapes = ((), (3,), (4, 3))
    for head, cons, hidden in itertools.cycle(
            itertools.product((False, True), (False, True), shapes)):
        if cases >= 52:
            break
        cases += 1
        dropout = 0.3 if (cases % 2 == 0 and hidden) else 0.0
        cfg = LearnerConfig(hidden_sizes=hidden, dropout_p=dropout,
                            batch_size=4, loss_head=head, llal_interm=2,
                            llal_weight=0.9, llal_margin=0.5,
                            seed=int(rng.integers(2 ** 31)))
        model = init_model(cfg, dim, classes)
        x = rng.standard_normal((4, dim))
        y = rng.integers(0, classes, 4)
        masks = None
        if dropout > 0:
            keep = 1.0 - dropout
            masks = [(rng.random((4, w)) < keep).astype(np.float64)
                     for w in hidden]
        views, cw = None, 0.0
        if cons:
            views = (rng.standard_normal((3, dim)),
                     rng.standard_normal((3, dim)))
            cw = 0.7

        _, grads = _batch_loss_and_grads(model, x, y, masks, cfg, False,
                                         views=views, cons_weight=cw)
        for p, g in zip(model.parameter_arrays(), grads.arrays()):
            fp, fg = p.ravel(), g.ravel()
            for i in range(fp.size):
                orig = fp[i]
                fp[i] = orig + h
                lp = _batch_loss(model, x, y, masks, cfg, False,
                                 views=views, cons_weight=cw)
                fp[i] = orig - h
                lm = _batch_loss(model, x, y, masks, cfg, False,
                                 views=views, cons_weight=cw)
                fp[i] = orig
                fd = (lp - lm) / (2.0 * h)
                err = abs(fg[i] - fd) / max(abs(fg[i]), abs(fd), 1e-6)
                max_err = max(max_err, err)
    elapsed = time.perf_counter() - started
    _report("gradients vs finite differences",
            cases >= 50 and max_err < 1e-4 and elapsed < 10.0,
            f"{cases} models, max rel err {max_err:.3g}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. scoring functions against high-precision reimplementation
# ---------------------------------------------------------------------------

def _mp_entropy(row):
    return -sum(mpf(float(p)) * mp.log(max(mpf(float(p)), _FLOOR))
                for p in row)


def _random_probs(rng, n, c):
    raw = rng.random((n, c)) ** 3
    raw[rng.random((n, c)) < 0.1] = 0.0
    raw[raw.sum(axis=1) == 0] = 1.0
    p = raw / raw.sum(axis=1, keepdims=True)
    p[0] = 0.0
    p[0, 0] = 1.0  # exact one-hot exercises the log clamp
    p[1] = 1.0 / c
    return p


def test_scores_match_high_precision_oracles():
    started = time.perf_counter()
    rng = np.random.default_rng(17)
    n, c, passes = 1000, 4, 4
    worst = 0.0

    probs = _random_probs(rng, n, c)
    ent = score_entropy(probs).scores
    vr = score_var_ratio(probs).scores
    for i in range(n):
        worst = max(worst, abs(mpf(float(ent[i])) - _mp_entropy(probs[i])))
        oracle_vr = 1 - max(mpf(float(p)) for p in probs[i])
        worst = max(worst, abs(mpf(float(vr[i])) - oracle_vr))

    mc = np.stack([_random_probs(rng, n, c) for _ in range(passes)])
    bald = score_bald(mc).scores
    for i in range(n):
        mean = [sum(mpf(float(mc[t, i, j])) for t in range(passes)) / passes
                for j in range(c)]
        h_mean = -sum(m * mp.log(max(m, _FLOOR)) for m in mean)
        h_pass = sum(_mp_entropy(mc[t, i]) for t in range(passes)) / passes
        oracle = max(h_mean - h_pass, mpf(0))
        worst = max(worst, abs(mpf(float(bald[i])) - oracle))

    pa, pb = _random_probs(rng, n, c), _random_probs(rng, n, c)
    sym = score_inconsistency(pa, pb).scores
    for i in range(n):
        oracle = sum(
            (mpf(float(pa[i, j])) - mpf(float(pb[i, j])))
            * (mp.log(max(mpf(float(pa[i, j])), _FLOOR))
               - mp.log(max(mpf(float(pb[i, j])), _FLOOR)))
            for j in range(c))
        oracle = max(oracle, mpf(0))
        worst = max(worst, abs(mpf(float(sym[i])) - oracle))

    ties_ok = True
    for _ in range(200):
        vec = np.round(rng.random(50), 1)  # heavy ties
        k = int(rng.integers(1, 51))
        got = select_top_k(AcquisitionScores(vec, "entropy"),
                           SelectionRequest(budget=k))
        want = sorted(range(50), key=lambda i: (-vec[i], i))[:k]
        ties_ok = ties_ok and np.array_equal(got, want)

    elapsed = time.perf_counter() - started
    _report("scores vs high-precision oracles and top-k vs sort oracle",
            float(worst) < 1e-10 and ties_ok and elapsed < 5.0,
            f"worst |diff| {float(worst):.3g}, 200 tie vectors, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 3. greedy coverage against the exhaustive optimum
# ---------------------------------------------------------------------------

def _radius_by_hand(points, centers):
    # independent of the library's distance code on purpose
    return max(min(math.dist(p, c) for c in centers) for p in points)


def test_greedy_kcenter_within_twice_optimal():
    started = time.perf_counter()
    rng = np.random.default_rng(23)
    optimal_hits = 0
    for _ in range(200):
        n = int(rng.integers(3, 13))
        pts = rng.uniform(-5.0, 5.0, size=(n, 2))
        n_init = int(rng.integers(0, 3))
        init = rng.uniform(-5.0, 5.0, size=(n_init, 2))
        k = int(rng.integers(1, min(3, n) + 1))
        greedy = select_coreset(init, pts, budget=k)
        centers = np.vstack([init, pts[greedy]]) if n_init else pts[greedy]
        g_rad = _radius_by_hand(pts, centers)
        _, opt_rad = brute_force_kcenter(pts, init, k)
        assert g_rad <= 2.0 * opt_rad + 1e-9, (g_rad, opt_rad)
        if g_rad <= opt_rad + 1e-9:
            optimal_hits += 1
            # when greedy is optimal its selection must attain the oracle
            # radius exactly (two independent distance computations agree)
            assert abs(g_rad - opt_rad) <= 1e-9
    elapsed = time.perf_counter() - started
    _report("greedy k-center within 2x exhaustive optimum",
            elapsed < 10.0,
            f"200 instances, greedy optimal on {optimal_hits}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 4. uncertainty selection beats the random baseline
# ---------------------------------------------------------------------------

def test_entropy_beats_random_direction():
    started = time.perf_counter()
    base = dict(
        dataset=DatasetSpec(num_classes=4, dim=16, n_per_class=2500,
                            class_sep=2.0, seed=7),
        split=SplitSpec(initial_labeled=500, seed=13),
        learner=LearnerConfig(hidden_sizes=(64,), dropout_p=0.2, epochs=100,
                              batch_size=64, lr=0.1, lr_step_epoch=80,
                              seed=11),
        num_cycles=8, budget_per_cycle=250, trials=5, base_seed=101)
    ent = run_experiment(ExperimentConfig(strategy="entropy", **base))
    rnd = run_experiment(ExperimentConfig(strategy="random", **base))
    gap_pp = (ent.final_mean_acc - rnd.final_mean_acc) * 100.0
    wins = sum(e > r for e, r in zip(ent.records[-1].trial_accs,
                                     rnd.records[-1].trial_accs))
    elapsed = time.perf_counter() - started
    _report("entropy beats random at the final cycle",
            gap_pp >= 1.0 and wins >= 4 and elapsed < 300.0,
            f"gap {gap_pp:+.2f}pp, paired wins {wins}/5, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 5. duplicated pool: prefilter restores the uncertainty advantage
# ---------------------------------------------------------------------------

def test_duplicated_pool_prefilter_recovers_entropy():
    started = time.perf_counter()
    base = dict(
        dataset=DatasetSpec(num_classes=4, dim=16, n_per_class=1000,
                            class_sep=2.0, seed=17, duplicate_factor=5),
        split=SplitSpec(initial_labeled=200, seed=19),
        learner=LearnerConfig(hidden_sizes=(64,), dropout_p=0.2, epochs=100,
                              batch_size=64, lr=0.1, lr_step_epoch=80,
                              seed=23),
        num_cycles=8, budget_per_cycle=100, trials=5, base_seed=211)
    nopre = run_experiment(ExperimentConfig(strategy="entropy", **base))
    pre = run_experiment(ExperimentConfig(strategy="entropy",
                                          prefilter_size=1000, **base))
    rnd = run_experiment(ExperimentConfig(strategy="random", **base))
    gap_pre = (pre.final_mean_acc - nopre.final_mean_acc) * 100.0
    gap_rnd = (pre.final_mean_acc - rnd.final_mean_acc) * 100.0
    elapsed = time.perf_counter() - started
    _report("prefilter rescues entropy on a x5 duplicated pool",
            nopre.final_mean_acc <= pre.final_mean_acc
            and pre.final_mean_acc >= rnd.final_mean_acc
            and elapsed < 600.0,
            f"prefilter vs none {gap_pre:+.2f}pp, "
            f"prefilter vs random {gap_rnd:+.2f}pp, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 6. retraining from scratch vs finetuning across cycles
# ---------------------------------------------------------------------------

def test_scratch_matches_or_beats_finetune_midrun():
    started = time.perf_counter()
    base = dict(
        dataset=DatasetSpec(num_classes=4, dim=16, n_per_class=1250,
                            class_sep=2.0, seed=29),
        split=SplitSpec(initial_labeled=100, seed=37),
        learner=LearnerConfig(hidden_sizes=(128,), dropout_p=0.0, epochs=150,
                              batch_size=64, lr=0.3, weight_decay=0.0,
                              lr_step_epoch=10 ** 6, seed=31),
        strategy="entropy", num_cycles=5, budget_per_cycle=100, trials=5,
        base_seed=307)
    scratch = run_experiment(ExperimentConfig(retrain="scratch", **base))
    fine = run_experiment(ExperimentConfig(retrain="finetune", **base))
    gaps = [(scratch.records[c].mean_acc - fine.records[c].mean_acc) * 100.0
            for c in (2, 3)]
    elapsed = time.perf_counter() - started
    _report("scratch >= finetune at cycles 2 and 3",
            all(g >= 0.0 for g in gaps),
            f"gaps {gaps[0]:+.2f}pp / {gaps[1]:+.2f}pp, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 7. consistency training helps at equal label count
# ---------------------------------------------------------------------------

def test_consistency_training_helps_at_equal_labels():
    started = time.perf_counter()
    base = dict(
        dataset=DatasetSpec(num_classes=4, dim=16, n_per_class=1000,
                            class_sep=2.0, seed=43),
        split=SplitSpec(initial_labeled=80, seed=47),
        learner=LearnerConfig(hidden_sizes=(64,), dropout_p=0.2, epochs=100,
                              batch_size=16, lr=0.1, lr_step_epoch=80,
                              seed=41),
        strategy="random", num_cycles=1, budget_per_cycle=50, trials=5,
        base_seed=401)
    ssl = run_experiment(ExperimentConfig(
        ssl=SSLConfig(consistency_weight=0.1, noise_scale=0.3,
                      ramp_up_epochs=50, unlabeled_batch_size=64), **base))
    plain = run_experiment(ExperimentConfig(**base))
    gap_pp = (ssl.records[0].mean_acc - plain.records[0].mean_acc) * 100.0
    wins = sum(s > p for s, p in zip(ssl.records[0].trial_accs,
                                     plain.records[0].trial_accs))
    elapsed = time.perf_counter() - started
    _report("consistency training beats supervised-only at 80 labels",
            ssl.records[0].mean_acc >= plain.records[0].mean_acc,
            f"gap {gap_pp:+.2f}pp, paired wins {wins}/5, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 8. reproducibility of the command line and of shared seeds
# ---------------------------------------------------------------------------

def test_reruns_byte_identical_and_cycle_zero_shared(tmp_path):
    started = time.perf_counter()
    cfg_obj = {
        "dataset": {"num_classes": 3, "dim": 4, "n_per_class": 40,
                    "class_sep": 2.5, "seed": 1},
        "split": {"initial_labeled": 15, "seed": 5},
        "learner": {"hidden_sizes": [6], "dropout_p": 0.2, "epochs": 3,
                    "batch_size": 16, "lr": 0.1, "seed": 3},
        "strategy": "entropy", "num_cycles": 2, "budget_per_cycle": 5,
        "trials": 2, "base_seed": 6}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg_obj))
    a, b = tmp_path / "a", tmp_path / "b"
    rc1 = cli.main(["run", "--config", str(cfg_path), "--out", str(a),
                    "--quiet"])
    rc2 = cli.main(["run", "--config", str(cfg_path), "--out", str(b),
                    "--quiet"])
    results_same = (a / "results.csv").read_bytes() == \
        (b / "results.csv").read_bytes()
    scores_same = (a / "scores.csv").read_bytes() == \
        (b / "scores.csv").read_bytes()

    base = dict(
        dataset=DatasetSpec(num_classes=3, dim=4, n_per_class=40,
                            class_sep=2.5, seed=1),
        split=SplitSpec(initial_labeled=15, seed=5),
        learner=LearnerConfig(hidden_sizes=(6,), dropout_p=0.2, epochs=3,
                              batch_size=16, lr=0.1, seed=3),
        num_cycles=2, budget_per_cycle=5, trials=2, base_seed=6)
    ent = run_experiment(ExperimentConfig(strategy="entropy", **base))
    rnd = run_experiment(ExperimentConfig(strategy="random", **base))
    shared = all(
        np.array_equal(ent.outcomes[t][0].pool_positions,
                       rnd.outcomes[t][0].pool_positions)
        for t in range(2))
    elapsed = time.perf_counter() - started
    _report("reruns byte-identical; strategies share the cycle-0 labeled set",
            rc1 == 0 and rc2 == 0 and results_same and scores_same and shared,
            f"results.csv and scores.csv byte-equal, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 9. partition bookkeeping after every cycle
# ---------------------------------------------------------------------------

def test_partition_invariants_every_cycle():
    started = time.perf_counter()
    cfg = ExperimentConfig(
        dataset=DatasetSpec(num_classes=4, dim=8, n_per_class=150,
                            class_sep=2.5, seed=3),
        split=SplitSpec(initial_labeled=40, seed=9),
        learner=LearnerConfig(hidden_sizes=(16,), dropout_p=0.2, epochs=5,
                              batch_size=32, lr=0.1, seed=5),
        strategy="entropy", num_cycles=5, budget_per_cycle=20, trials=1,
        base_seed=77)
    train_ds, test_x, test_y = loop.prepare_data(cfg)
    split = dataclasses.replace(cfg.split, seed=cfg.split.seed)
    partition = initial_split(train_ds, split)
    model, checked = None, 0
    for cycle in range(cfg.num_cycles):
        model, out = run_cycle(model, train_ds, partition, cfg,
                               test_x, test_y, 0, cycle)
        partition.check_invariants()  # raises if L/U stop partitioning rows
        expected = cfg.split.initial_labeled + cycle * cfg.budget_per_cycle
        assert out.labeled_count == expected
        assert len(partition.labeled) == expected + cfg.budget_per_cycle
        assert len(partition.labeled) + len(partition.unlabeled) == \
            train_ds.n_samples
        checked += 1
    elapsed = time.perf_counter() - started
    _report("labeled set grows by exactly the budget each cycle",
            checked == cfg.num_cycles,
            f"{checked} cycles verified, {elapsed:.1f}s")
