"""Time the compiled kernels against the numpy fallback, plus one full demo step loop.

    python3 benchmarks/bench_kernels.py [--sizes 300,3000,30000] [--repeat 7]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cellspan import _pykernels

try:
    from cellspan import _ckernels
except ImportError:
    _ckernels = None


def _inputs(n, rng):
    h = rng.uniform(0.2, 5.0, n)
    C = rng.uniform(0.0, 5.0, n)
    y3 = rng.uniform(-3.0, 3.0, n)
    off = -rng.uniform(0.1, 1.0, n - 1)
    diag = 2.5 + rng.uniform(0.0, 1.0, n)
    return (h, C, y3), (np.r_[0.0, off], diag, np.r_[off, 0.0], rng.normal(size=n))


def _best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def kernel_table(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    for n in sizes:
        kin, tri = _inputs(n, rng)
        number = max(1, 200_000 // n)
        for kernel in ("kinetics", "tridiag_solve"):
            times = {}
            for name, mod in backends:
                if kernel == "kinetics":
                    fn = lambda m=mod: m.kinetics(*kin, 1.0, 1.0, 1e-3, True)  # noqa: E731
                else:
                    fn = lambda m=mod: m.tridiag_solve(*tri)  # noqa: E731
                times[name] = _best(fn, repeat, number)
            rows.append((kernel, n, times))
    return rows


def demo_wallclock(pure):
    env = dict(os.environ)
    if pure:
        env["CELLSPAN_PURE_PYTHON"] = "1"
    code = (
        "import time\n"
        "from cellspan.config import demo_config_path, parse_config\n"
        "from cellspan.parabolic import simulate\n"
        "cfg = parse_config(demo_config_path())\n"
        "t = time.perf_counter(); simulate(cfg); print(time.perf_counter() - t)\n"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="300,3000,30000")
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--no-demo", action="store_true", help="skip the end-to-end demo timing")
    args = ap.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]

    if _ckernels is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<14}{'n':>8}{'python [us]':>14}{'cython [us]':>14}{'speedup':>10}")
    for kernel, n, t in kernel_table(sizes, args.repeat):
        py = t["python"] * 1e6
        cy = t.get("cython")
        if cy is None:
            print(f"{kernel:<14}{n:>8}{py:>14.1f}{'-':>14}{'-':>10}")
        else:
            print(f"{kernel:<14}{n:>8}{py:>14.1f}{cy * 1e6:>14.1f}{t['python'] / cy:>9.1f}x")

    if not args.no_demo:
        py = demo_wallclock(pure=True)
        line = f"demo run (300 cells, 100 steps): python {py:.3f} s"
        if _ckernels is not None:
            cy = demo_wallclock(pure=False)
            line += f", cython {cy:.3f} s ({py / cy:.2f}x)"
        print(line)


if __name__ == "__main__":
    main()
