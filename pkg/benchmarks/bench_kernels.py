"""Benchmark the compiled kernel backend against the numpy reference.

Times each hot kernel on training-shaped inputs (hidden widths and batch
sizes a desk-scale run actually uses) plus one end-to-end iteration-sized
composite, and prints a table of per-call times and speedups.

Usage:
    python benchmarks/bench_kernels.py [--repeats 200] [--batch 112]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from adaptmatch._kernels import compiled_available, get_backend

HIDDEN = 64
EMBED = 32
CLASSES = 10


def _inputs(rng: np.random.Generator, batch: int) -> dict:
    x = rng.normal(size=(batch, HIDDEN))
    w = rng.normal(size=(HIDDEN, EMBED))
    b = rng.normal(size=EMBED)
    dy = rng.normal(size=(batch, EMBED))
    logits = rng.normal(size=(batch, CLASSES)) * 3.0
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    labels = rng.integers(0, CLASSES, size=batch)
    weights = rng.uniform(0.0, 1.0, size=batch)
    emb = rng.normal(size=(batch, EMBED))
    return {
        "x": x, "w": w, "b": b, "dy": dy, "logits": logits,
        "probs": probs, "labels": labels, "weights": weights, "emb": emb,
        "pre": rng.normal(size=(batch, EMBED)),
        "tanh_y": np.tanh(rng.normal(size=(batch, EMBED))),
    }


def _cases(d: dict) -> list[tuple[str, tuple]]:
    return [
        ("affine", (d["x"], d["w"], d["b"])),
        ("affine_grads", (d["x"], d["w"], d["dy"])),
        ("leaky_relu", (d["pre"], 0.1)),
        ("leaky_relu_grad", (d["pre"], d["dy"], 0.1)),
        ("tanh_forward", (d["pre"],)),
        ("tanh_grad", (d["tanh_y"], d["dy"])),
        ("softmax", (d["logits"],)),
        ("row_max_argmax", (d["probs"],)),
        ("nll_rows", (d["probs"], d["labels"])),
        ("ce_softmax_grad", (d["probs"], d["labels"], d["weights"])),
        ("cosine_matrix", (d["emb"], d["emb"])),
    ]


def _time_call(fn, args, repeats: int) -> float:
    fn(*args)  # warm up (and populate any caches)
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--batch", type=int, default=112,
                        help="rows per kernel call (mu*B of a benchmark run)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    python = get_backend("python")
    if not compiled_available():
        print("compiled backend is not built; run pip install -e . first")
        return 1
    compiled = get_backend("compiled")

    rng = np.random.default_rng(args.seed)
    data = _inputs(rng, args.batch)

    header = f"{'kernel':<18}{'python (us)':>14}{'compiled (us)':>16}{'speedup':>10}"
    print(f"batch={args.batch} repeats={args.repeats}")
    print(header)
    print("-" * len(header))
    totals = [0.0, 0.0]
    for name, call_args in _cases(data):
        t_py = _time_call(getattr(python, name), call_args, args.repeats)
        t_cy = _time_call(getattr(compiled, name), call_args, args.repeats)
        totals[0] += t_py
        totals[1] += t_cy
        print(f"{name:<18}{t_py * 1e6:>14.2f}{t_cy * 1e6:>16.2f}{t_py / t_cy:>10.2f}x")
    print("-" * len(header))
    print(f"{'total':<18}{totals[0] * 1e6:>14.2f}{totals[1] * 1e6:>16.2f}"
          f"{totals[0] / totals[1]:>10.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
