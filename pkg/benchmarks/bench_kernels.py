"""Timing comparison of the compiled kernel core against the numpy fallback.

Micro-benchmarks cover the hot kernels; the end-to-end row times a full
training call through each backend.  Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --size large
"""

import argparse
import time

import numpy as np

from allab import _kernels
from allab.data import generate_gaussian_mixture
from allab.learner import LearnerConfig, init_model, train

SIZES = {
    "small": {"n": 256, "d": 64, "h": 64, "c": 10, "train_n": 500,
              "epochs": 20},
    "large": {"n": 1024, "d": 256, "h": 256, "c": 10, "train_n": 2000,
              "epochs": 20},
}


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _micro_cases(dims):
    rng = np.random.default_rng(0)
    n, d, h, c = dims["n"], dims["d"], dims["h"], dims["c"]
    x = rng.standard_normal((n, d))
    w = rng.standard_normal((d, h))
    b = rng.standard_normal(h)
    z = rng.standard_normal((n, h))
    g = rng.standard_normal((n, h))
    logits = rng.standard_normal((n, c))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    labels = rng.integers(0, c, n)
    mask = (rng.random((n, h)) < 0.8).astype(np.float64)
    params = rng.standard_normal(d * h)
    grads = rng.standard_normal(d * h)
    vel = np.zeros(d * h)

    out_nh = np.empty((n, h))
    out_nc = np.empty((n, c))
    out_n = np.empty(n)

    def cases(K):
        return [
            ("gemm", lambda: K.gemm(x, w, out_nh)),
            ("gemm_t", lambda: K.gemm(z, w, np.empty((n, d)), False, True)),
            ("affine", lambda: K.affine(x, w, b, out_nh)),
            ("relu", lambda: K.relu(z, out_nh)),
            ("relu_bwd", lambda: K.relu_bwd(z, g, out_nh)),
            ("softmax", lambda: K.softmax(logits, out_nc)),
            ("ce", lambda: K.per_sample_ce(probs, labels, out_n)),
            ("ce_grad", lambda: K.ce_grad(probs, labels, 1.0 / n, out_nc)),
            ("dropout", lambda: K.dropout_apply(z, mask, 1.25, out_nh)),
            ("sgd", lambda: K.sgd_update(params, grads, vel, 0.1, 0.9, 5e-4)),
        ]

    return cases


def _train_once(dims, backend_name):
    _kernels.use(backend_name)
    try:
        ds = generate_gaussian_mixture(dims["c"], dims["d"],
                                       max(dims["train_n"] // dims["c"], 2),
                                       class_sep=2.0, seed=1)
        cfg = LearnerConfig(hidden_sizes=(dims["h"],), dropout_p=0.2,
                            epochs=dims["epochs"], batch_size=64, lr=0.1,
                            lr_step_epoch=10 ** 6, seed=2)
        model = init_model(cfg, ds.dim, ds.num_classes)
        t0 = time.perf_counter()
        train(model, ds, np.arange(ds.n_samples), cfg)
        return time.perf_counter() - t0
    finally:
        _kernels.use(None)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5,
                    help="best-of repeats per kernel (default 5)")
    ap.add_argument("--size", choices=sorted(SIZES), default="small")
    args = ap.parse_args()
    dims = SIZES[args.size]

    backends = ["python"]
    if _kernels.compiled_backend is not None:
        backends.append("compiled")
    else:
        print("compiled core not built; timing the numpy backend only\n")

    cases = _micro_cases(dims)
    print(f"size={args.size}  n={dims['n']} d={dims['d']} h={dims['h']} "
          f"c={dims['c']}  (best of {args.repeats})\n")
    header = f"{'kernel':<10}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    rows = {}
    for name in backends:
        K = _kernels.use(name)
        for label, fn in cases(K):
            fn()  # warm up
            rows.setdefault(label, {})[name] = _best_of(fn, args.repeats)
    _kernels.use(None)
    for label, times in rows.items():
        line = f"{label:<10}"
        for b in backends:
            line += f"{times[b] * 1e6:>10.1f}us"
        if len(backends) == 2:
            line += f"{times['python'] / times['compiled']:>9.2f}x"
        print(line)

    print(f"\nend-to-end training ({dims['train_n']} samples, "
          f"{dims['epochs']} epochs):")
    e2e = {b: _train_once(dims, b) for b in backends}
    for b in backends:
        print(f"  {b:<10} {e2e[b]:.3f}s")
    if len(backends) == 2:
        print(f"  speedup    {e2e['python'] / e2e['compiled']:.2f}x")


if __name__ == "__main__":
    main()
