#!/usr/bin/env python3
"""Compare the numba kernels against the pure-numpy fallback.

Runs each hot kernel on training-sized inputs under both paths and then
times a short end-to-end training run. The fallback is selected the same
way production code selects it (CALLKIT_NO_NUMBA=1), so this script spawns
a child process per path.

    python3 benchmarks/bench_kernels.py          # both paths
    python3 benchmarks/bench_kernels.py --inner numpy|numba
"""
import argparse
import json
import os
import subprocess
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))


def bench_inner(label: str) -> dict:
    import numpy as np

    from callkit import accel
    from callkit.kernels import causal_softmax_bwd, causal_softmax_fwd, masked_loss_grad, token_nll
    from callkit.masks import MethodSpec
    from callkit.train import TrainConfig, make_synthetic_fact_corpus, train

    assert (label == "numba") == accel.USE_NUMBA, "path selection failed"
    rng = np.random.default_rng(0)
    results = {"path": label}

    def timeit(fn, repeats=30):
        fn()  # warm-up (includes JIT compilation on the numba path)
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        return (time.perf_counter() - t0) / repeats * 1000.0

    n, v = 2048, 257
    logits = rng.normal(size=(n, v))
    targets = rng.integers(0, v - 1, size=n)
    call = rng.random(n) < 0.15
    ignore = np.zeros(n, dtype=bool)
    valid = np.ones(n, dtype=bool)
    results["masked_loss_grad_ms"] = timeit(
        lambda: masked_loss_grad(logits, targets, v - 1, call, ignore, valid))
    results["token_nll_ms"] = timeit(lambda: token_nll(logits, targets))

    scores = rng.normal(size=(16, 4, 128, 128)).astype(np.float32)
    att = causal_softmax_fwd(scores)
    datt = rng.normal(size=scores.shape).astype(np.float32)
    results["causal_softmax_bwd_ms"] = timeit(lambda: causal_softmax_bwd(att, datt), repeats=20)
    if label == "numba":
        # the forward softmax deliberately stays numpy: show why
        from callkit.kernels import _causal_softmax_fwd_numba, _causal_softmax_fwd_numpy

        results["softmax_fwd_numpy_ref_ms"] = timeit(lambda: _causal_softmax_fwd_numpy(scores), repeats=20)
        results["softmax_fwd_numba_ref_ms"] = timeit(lambda: _causal_softmax_fwd_numba(scores), repeats=20)

    corpus = make_synthetic_fact_corpus(seed=1, docs=60, doc_len=128, fact_rate=0.25,
                                        base_vocab=64)
    cfg = TrainConfig(batch_size=8, steps=20, warmup_steps=2, seed=0, context=128,
                      dim=64, n_layers=2, n_heads=4, method=MethodSpec("lacy"))
    train(corpus, cfg)  # warm-up
    t0 = time.perf_counter()
    train(corpus, cfg)
    results["train_20steps_s"] = time.perf_counter() - t0
    return results


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--inner", choices=["numpy", "numba"])
    args = parser.parse_args()
    if args.inner:
        print(json.dumps(bench_inner(args.inner)))
        return

    rows = []
    for label in ("numpy", "numba"):
        env = dict(os.environ)
        env["CALLKIT_NO_NUMBA"] = "1" if label == "numpy" else "0"
        out = subprocess.run(
            [sys.executable, __file__, "--inner", label],
            env=env, capture_output=True, text=True, check=True,
        )
        rows.append(json.loads(out.stdout.strip().splitlines()[-1]))

    keys = [k for k in rows[0] if k != "path"]
    width = max(len(k) for k in keys) + 2
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  speedup")
    for k in keys:
        a, b = rows[0][k], rows[1][k]
        print(f"{k:<{width}}  {a:>10.3f}  {b:>10.3f}  {a / b:>6.2f}x")
    fwd_np = rows[1].get("softmax_fwd_numpy_ref_ms")
    fwd_nb = rows[1].get("softmax_fwd_numba_ref_ms")
    if fwd_np is not None:
        print(f"\nsoftmax forward reference: numpy {fwd_np:.3f} ms vs numba {fwd_nb:.3f} ms "
              f"({fwd_np / fwd_nb:.2f}x) -- the dispatcher pins it to numpy")


if __name__ == "__main__":
    main()
