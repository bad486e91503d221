"""Latency comparison of the JIT and pure-numpy kernel backends.

Times each hot kernel on representative shapes, for every installed
backend, and prints one CSV table.  The dense rows also contrast the
fused mean+variance kernel against running the separate mean-only and
variance-only kernels, which is the main reason the fused form exists.

Usage:
    python benchmarks/compare_backends.py [--batch 32] [--repeats 50]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from pfp import backends


def median_time(fn, repeats: int, warmup: int = 3) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def build_cases(batch: int):
    rng = np.random.default_rng(0)
    n_in, n_out = 256, 256
    xm = rng.normal(size=(batch, n_in))
    xs = xm ** 2 + rng.uniform(0.1, 1.0, xm.shape)
    wm = rng.normal(size=(n_out, n_in))
    ws = wm ** 2 + rng.uniform(0.1, 1.0, wm.shape)
    bm, bv = rng.normal(size=n_out), rng.uniform(0, 1, n_out)

    cm = rng.normal(size=(batch, 8, 14, 14))
    cs = cm ** 2 + rng.uniform(0.1, 1.0, cm.shape)
    kw = rng.normal(size=(16, 8, 3, 3))
    ks = kw ** 2 + rng.uniform(0.1, 1.0, kw.shape)
    cbm, cbv = rng.normal(size=16), rng.uniform(0, 1, 16)

    am = rng.normal(size=(batch, 16, 12, 12))
    av = rng.uniform(0.01, 1.0, am.shape)

    def cases(k):
        return {
            "dense_joint": lambda: k.dense_joint(xm, xs, wm, ws, bm, bv),
            "dense_separate": lambda: (k.dense_mean(xm, wm, bm),
                                       k.dense_var(xm, xs, wm, ws, bv)),
            "conv2d_joint": lambda: k.conv2d_joint(cm, cs, kw, ks, cbm, cbv, 1),
            "relu_mm": lambda: k.relu_mm(am, av),
            "maxpool2_mm": lambda: k.maxpool2_mm(am, av),
        }

    return cases


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=50)
    args = ap.parse_args()

    cases = build_cases(args.batch)
    names = backends.available_backends()
    results: dict[str, dict[str, float]] = {}
    for name in names:
        kern = backends.get_backend(name)
        results[name] = {label: median_time(fn, args.repeats)
                         for label, fn in cases(kern).items()}

    print(f"kernel,batch,{','.join(n + '_ms' for n in names)},speedup")
    for label in results[names[0]]:
        cells = [f"{results[n][label] * 1e3:.4f}" for n in names]
        if len(names) == 2:
            speedup = results[names[1]][label] / results[names[0]][label]
            cells.append(f"{speedup:.2f}")
        else:
            cells.append("")
        print(f"{label},{args.batch}," + ",".join(cells))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
