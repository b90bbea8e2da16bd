"""Compare the compiled and pure-numpy backends on the hot kernels.

Run as `python -m deblursdi.benchmark`. Times each low-level operation on
a representative problem size, checks both backends agree to near machine
precision, and reports the speedup. A short end-to-end engine run is
included since pointwise kernel timings do not capture cache effects.
"""

import argparse
import sys
import time

import numpy as np

from . import backend
from .engine import SDIConfig, run
from .harness import benchmark_instance


def _max_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)))


def _time_call(fn, args, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        started = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - started)
    return best, out


def _axis_plan(n_in, n_out):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def _workloads(size, channels, rng):
    h = w = size
    cin = cout = channels
    x = rng.standard_normal((h, w, cin))
    wgt = rng.standard_normal((3, 3, cin, cout)) * 0.1
    bias = rng.standard_normal(cout) * 0.1
    dy = rng.standard_normal((h, w, cout))
    dy2 = rng.standard_normal(((h + 1) // 2, (w + 1) // 2, cout))
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    k = np.abs(rng.standard_normal((9, 9))) + 0.01
    k /= k.sum()
    xk = np.pad(rng.standard_normal((h, w, 1)), ((4, 4), (4, 4), (0, 0)))
    gk = rng.standard_normal((h, w, 1))
    up = rng.standard_normal((h // 2, w // 2, channels))
    dup = rng.standard_normal((h, w, channels))
    i0, i1, wi = _axis_plan(h // 2, h)
    j0, j1, wj = _axis_plan(w // 2, w)
    gvec = rng.standard_normal(h * w * cin)
    return [
        ("conv2d_forward", (xp, wgt, bias, 1, h, w)),
        ("conv2d_backward_dx", (dy, wgt, 1, h + 2, w + 2)),
        ("conv2d_backward_dw", (xp, dy2, 2, 3, 3)),
        ("psf_correlate", (xk, k)),
        ("psf_grad_kernel", (xk, gk)),
        ("bilinear_forward", (up, i0, i1, wi, j0, j1, wj)),
        ("bilinear_backward", (dup, i0, i1, wi, j0, j1, wj, h // 2, w // 2)),
        ("grads_finite", (gvec,)),
    ]


def _bench_adam(mod, n, repeats):
    # adam_update works in place, so every timed call gets fresh buffers.
    rng = np.random.default_rng(1)
    base = (
        rng.standard_normal(n),
        rng.standard_normal(n),
        np.abs(rng.standard_normal(n)),
        np.abs(rng.standard_normal(n)),
    )
    hyper = (1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8)
    p, g, m, v = (a.copy() for a in base)
    mod.adam_update(p, g, m, v, *hyper)  # warm-up
    best = float("inf")
    out = None
    for _ in range(repeats):
        p, g, m, v = (a.copy() for a in base)
        started = time.perf_counter()
        mod.adam_update(p, g, m, v, *hyper)
        best = min(best, time.perf_counter() - started)
        out = (p, m, v)
    return best, out


def bench_kernels(size, channels, repeats):
    rng = np.random.default_rng(0)
    loads = _workloads(size, channels, rng)
    names = [name for name, _ in loads] + ["adam_update"]
    results = {}
    for name in backend.available_backends():
        mod = backend._BACKENDS[name]
        times = {}
        outs = {}
        for op, args in loads:
            fn = getattr(mod, op)
            fn(*args)  # warm-up (triggers compilation on the compiled path)
            times[op], outs[op] = _time_call(fn, args, repeats)
        times["adam_update"], outs["adam_update"] = _bench_adam(
            mod, size * size * channels, repeats
        )
        results[name] = (times, outs)
    return names, results


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="python -m deblursdi.benchmark",
        description="Time the numba and numpy backends on the hot kernels.",
    )
    parser.add_argument("--size", type=int, default=128, help="square image side")
    parser.add_argument("--channels", type=int, default=32, help="feature channels")
    parser.add_argument("--repeats", type=int, default=5, help="timing repeats (best-of)")
    parser.add_argument(
        "--engine", action="store_true",
        help="also time a short end-to-end run per backend",
    )
    args = parser.parse_args(argv)

    names, results = bench_kernels(args.size, args.channels, args.repeats)
    backends = list(results)
    print(f"hot kernels at {args.size}x{args.size}, {args.channels} channels "
          f"(best of {args.repeats}):")
    header = f"{'operation':<20}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}{'max_diff':>12}"
    print(header)
    for op in names:
        row = f"{op:<20}"
        for b in backends:
            row += f"{results[b][0][op] * 1e3:>10.2f}ms"
        if len(backends) == 2:
            t0 = results[backends[0]][0][op]
            t1 = results[backends[1]][0][op]
            row += f"{t1 / t0:>10.2f}{_max_diff(results[backends[0]][1][op], results[backends[1]][1][op]):>12.2e}"
        print(row)

    if args.engine:
        inst = benchmark_instance()
        config = SDIConfig(kernel_size=11, T=2, S=10, base_channels=16)
        print("\nend-to-end (T=2, S=10, 64x64, base_channels=16):")
        prior = backend.get_backend()
        try:
            for b in backends:
                backend.set_backend(b)
                started = time.perf_counter()
                run(inst.observation, config)
                print(f"  {b:<8} {time.perf_counter() - started:>8.2f}s")
        finally:
            backend.set_backend(prior)
    return 0


if __name__ == "__main__":
    sys.exit(main())
