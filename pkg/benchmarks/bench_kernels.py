"""Time the numba and numpy paths of the two hot kernels.

    python benchmarks/bench_kernels.py [--repeat 3] [--epochs 100] [--workers 1]

Each kernel runs once untimed first so numba compilation is excluded.
Results of both backends are compared before timings are printed.
"""

import argparse
import time

import numpy as np

from carmine import _accel, kernels, som


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_som(args):
    rng = np.random.default_rng(0)
    data = rng.normal(size=(162, args.dim))
    grid = som.init_som(8, 8, args.dim, 42, data)
    sched = som.TrainingSchedule.default(8, 8, len(data), epochs=args.epochs)
    out = {}
    for backend in ("numpy", "numba"):
        def run():
            return som.train(grid, data, sched, workers=args.workers, backend=backend)

        out[backend] = run()
        out[backend + "_t"] = best_of(run, args.repeat)
    assert np.allclose(out["numpy"][0].codebooks, out["numba"][0].codebooks, rtol=1e-9, atol=1e-12)
    return out["numpy_t"], out["numba_t"]


def bench_support(args):
    rng = np.random.default_rng(1)
    n_items, n_tx = 80, args.transactions
    bits = rng.integers(0, 2**63, size=(n_items, (n_tx + 63) // 64), dtype=np.uint64)
    cands = np.sort(np.stack([rng.choice(n_items, 3, replace=False) for _ in range(args.candidates)]), axis=1)
    cands = cands.astype(np.int64)
    ref = kernels.count_support(bits, cands, backend="numpy")
    assert np.array_equal(ref, kernels.count_support(bits, cands, backend="numba"))
    t_np = best_of(lambda: kernels.count_support(bits, cands, backend="numpy"), args.repeat)
    t_nb = best_of(lambda: kernels.count_support(bits, cands, backend="numba"), args.repeat)
    return t_np, t_nb


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--dim", type=int, default=26)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--transactions", type=int, default=4096)
    ap.add_argument("--candidates", type=int, default=20000)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'kernel':<34}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    rows = [
        (f"som train 8x8, 162x{args.dim}, {args.epochs} ep", bench_som(args)),
        (f"support count {args.candidates} x 3-sets", bench_support(args)),
    ]
    for name, (t_np, t_nb) in rows:
        print(f"{name:<34}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
