"""Command-line front end.

Subcommands: ``infer`` (single-pass logit table), ``validate`` (single
pass vs sampling oracle deviation report), ``metrics`` (uncertainty and
calibration report, optional OOD split), ``bench`` (latency comparison)
and ``calibrate`` (variance rescaling).

Every command is a pure function of its files, flags and seed: repeated
runs produce byte-identical reports (bench timings excluded).  Exit codes:
0 success, 2 usage or format error, 3 validation-threshold failure.

The kernel backend is selected by the ``PFP_BACKEND`` environment
variable (numba by default, pure numpy fallback); ``--threads`` bounds
numba's worker pool without affecting any numeric result.
"""

from __future__ import annotations

import argparse
import sys
import time
from typing import Optional

import numpy as np

from . import backends
from .errors import PfpError
from .formats import load_model, load_tensor, save_model
from .layers import ModelGraph, apply_calibration
from .mc import mc_predict
from .metrics import McMode, PfpMode, evaluate
from .ops import forward

Z_BOUND_LINEAR = 4.0  # per-logit bound; moments are exact for linear chains
Z_BOUND_MATCHED = 5.0  # relaxed mean bound when moment matching is involved


def _add_common(p: argparse.ArgumentParser, *, needs_input: bool = True) -> None:
    p.add_argument("--model", required=True, help="model file (PFPM)")
    if needs_input:
        p.add_argument("--input", required=True, help="input tensor file (PFPT)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--calibration", type=float, default=None,
                   help="override: scale all weight variances by this factor")
    p.add_argument("--threads", type=int, default=None,
                   help="bound worker parallelism (numeric results unchanged)")
    p.add_argument("--out", default=None, help="also write the CSV report here")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pfp", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="single-pass logit means and variances")
    _add_common(p)

    p = sub.add_parser("validate", help="compare the single pass against the sampling oracle")
    _add_common(p)
    p.add_argument("--samples", type=int, default=1000,
                   help="oracle sample count (minimum 100)")

    p = sub.add_parser("metrics", help="uncertainty metric report over a labeled set")
    _add_common(p)
    p.add_argument("--labels", required=True, help="label tensor file (PFPT, integral)")
    p.add_argument("--mode", choices=("pfp", "mc"), default="pfp")
    p.add_argument("--logit-samples", type=int, default=100,
                   help="synthetic logit draws per item in pfp mode")
    p.add_argument("--samples", type=int, default=100,
                   help="forward passes in mc mode")
    p.add_argument("--ece-bins", type=int, default=10)
    p.add_argument("--ood", default=None, help="optional OOD input tensor file")
    p.add_argument("--ood-score", choices=("mi", "entropy"), default="mi")

    p = sub.add_parser("bench", help="latency of the single pass vs the oracle")
    _add_common(p)
    p.add_argument("--samples", type=int, default=30, help="oracle sample count")
    p.add_argument("--warmup", type=int, default=3, help="warm-up iterations (min 3)")
    p.add_argument("--iterations", type=int, default=30, help="timed iterations (min 30)")

    p = sub.add_parser("calibrate", help="write a variance-rescaled model")
    p.add_argument("--model", required=True)
    p.add_argument("--calibration", type=float, required=True)
    p.add_argument("--out", required=True)
    return ap


def _load_model(args) -> ModelGraph:
    model = load_model(args.model)
    if getattr(args, "calibration", None) is not None:
        model = apply_calibration(model, args.calibration)
    return model


def _load_labels(path, batch: int, classes: int) -> np.ndarray:
    t = load_tensor(path)
    if t.values.ndim != 1 or t.shape[0] != batch:
        raise PfpError(f"labels must be a rank-1 tensor of length {batch}")
    rounded = np.rint(t.values)
    if np.abs(t.values - rounded).max() > 1e-6:
        raise PfpError("labels must hold integral class indices")
    labels = rounded.astype(np.int64)
    if labels.min() < 0 or labels.max() >= classes:
        raise PfpError(f"label out of range [0, {classes})")
    return labels


def _emit(lines: list[str], out_path: Optional[str], csv_lines: Optional[list[str]] = None):
    for line in lines:
        print(line)
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(csv_lines if csv_lines is not None else lines) + "\n")


def cmd_infer(args) -> int:
    model = _load_model(args)
    x = load_tensor(args.input)
    dist = forward(model, x)
    head = ",".join(["item"]
                    + [f"mean_{c}" for c in range(dist.classes)]
                    + [f"var_{c}" for c in range(dist.classes)])
    lines = [head]
    for i in range(dist.batch):
        cells = [str(i)]
        cells += [repr(float(v)) for v in dist.logit_mean[i]]
        cells += [repr(float(v)) for v in dist.logit_var[i]]
        lines.append(",".join(cells))
    _emit(lines, args.out)
    return 0


def cmd_validate(args) -> int:
    if args.samples < 100:
        raise PfpError("validate needs --samples >= 100")
    model = _load_model(args)
    x = load_tensor(args.input)
    dist = forward(model, x)
    sample_set = mc_predict(model, x, args.samples, args.seed)
    logits = sample_set.logits
    n = args.samples
    mc_mean = logits.mean(axis=0)
    mc_var = logits.var(axis=0, ddof=1)
    centered = logits - mc_mean[None]
    m4 = (centered ** 4).mean(axis=0)

    se_mean = np.sqrt(mc_var / n)
    var_of_s2 = np.maximum(m4 - mc_var ** 2 * (n - 3) / (n - 1), 0.0) / n
    se_var = np.sqrt(var_of_s2)

    def z_of(diff: np.ndarray, se: np.ndarray) -> np.ndarray:
        z = np.zeros_like(diff)
        nz = se > 0.0
        z[nz] = diff[nz] / se[nz]
        z[(~nz) & (diff != 0.0)] = np.inf
        return z

    z_mean = z_of(dist.logit_mean - mc_mean, se_mean)
    z_var = z_of(dist.logit_var - mc_var, se_var)
    ratio = np.where(mc_var > 0.0, dist.logit_var / np.where(mc_var > 0.0, mc_var, 1.0),
                     np.where(dist.logit_var == 0.0, 1.0, np.inf))

    csv = ["item,class,pfp_mean,mc_mean,z_mean,pfp_var,mc_var,var_ratio,z_var"]
    for i in range(dist.batch):
        for c in range(dist.classes):
            csv.append(",".join([
                str(i), str(c),
                repr(float(dist.logit_mean[i, c])), repr(float(mc_mean[i, c])),
                repr(float(z_mean[i, c])),
                repr(float(dist.logit_var[i, c])), repr(float(mc_var[i, c])),
                repr(float(ratio[i, c])), repr(float(z_var[i, c])),
            ]))

    linear = model.is_linear_chain()
    max_z_mean = float(np.abs(z_mean).max())
    mean_z_mean = float(np.abs(z_mean).mean())
    max_z_var = float(np.abs(z_var).max())
    if linear:
        ok = max_z_mean <= Z_BOUND_LINEAR and max_z_var <= Z_BOUND_LINEAR
    else:
        # Moment matching is exact per element but downstream layers see a
        # re-Gaussianized input, so only the mean deviation is gated.
        ok = max_z_mean <= Z_BOUND_MATCHED
    summary = [
        f"n_samples={n}",
        f"linear_chain={str(linear).lower()}",
        f"max_abs_z_mean={max_z_mean!r}",
        f"mean_abs_z_mean={mean_z_mean!r}",
        f"max_abs_z_var={max_z_var!r}",
        f"z_bound_mean={(Z_BOUND_LINEAR if linear else Z_BOUND_MATCHED)!r}",
        f"z_bound_var={'%r' % Z_BOUND_LINEAR if linear else 'none'}",
        f"result={'pass' if ok else 'fail'}",
    ]
    _emit(csv + summary, args.out, csv_lines=csv)
    return 0 if ok else 3


def cmd_metrics(args) -> int:
    if args.ece_bins < 1:
        raise PfpError("--ece-bins must be >= 1")
    model = _load_model(args)
    x = load_tensor(args.input)
    labels = _load_labels(args.labels, x.shape[0], model.n_classes)
    ood = load_tensor(args.ood) if args.ood else None
    mode = (PfpMode(args.logit_samples) if args.mode == "pfp"
            else McMode(args.samples))
    report = evaluate(model, x, labels, mode, seed=args.seed, ood_inputs=ood,
                      ece_bins=args.ece_bins, ood_score=args.ood_score)
    _emit(report.kv_lines(), args.out, csv_lines=report.csv_lines())
    return 0


def _time_loop(fn, warmup: int, iterations: int) -> tuple[float, float]:
    for _ in range(warmup):
        fn()
    stamps = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        fn()
        stamps.append(time.perf_counter() - t0)
    arr = np.array(stamps)
    return float(np.median(arr)), float(arr.mean())


def cmd_bench(args) -> int:
    warmup = max(args.warmup, 3)
    iterations = max(args.iterations, 30)
    model = _load_model(args)
    x = load_tensor(args.input)
    med_pfp, mean_pfp = _time_loop(lambda: forward(model, x), warmup, iterations)
    med_mc, mean_mc = _time_loop(
        lambda: mc_predict(model, x, args.samples, args.seed), warmup, iterations)
    lines = [
        "config,batch,warmup,iterations,median_s,mean_s,speedup_vs_pfp",
        f"pfp,{x.shape[0]},{warmup},{iterations},{med_pfp:.6e},{mean_pfp:.6e},",
        f"mc@{args.samples},{x.shape[0]},{warmup},{iterations},"
        f"{med_mc:.6e},{mean_mc:.6e},{med_mc / med_pfp:.3f}",
    ]
    _emit(lines, args.out)
    return 0


def cmd_calibrate(args) -> int:
    if not args.calibration > 0:
        raise PfpError(f"calibration factor must be positive, got {args.calibration}")
    model = load_model(args.model)
    save_model(apply_calibration(model, args.calibration), args.out)
    print(f"wrote {args.out} (factor {args.calibration!r})")
    return 0


_COMMANDS = {
    "infer": cmd_infer,
    "validate": cmd_validate,
    "metrics": cmd_metrics,
    "bench": cmd_bench,
    "calibrate": cmd_calibrate,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if getattr(args, "threads", None) is not None:
            backends.set_threads(args.threads)
        return _COMMANDS[args.command](args)
    except (PfpError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
