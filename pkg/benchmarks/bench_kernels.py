"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one line per kernel and size with the median time of each backend
and the speed ratio. Both backends are also checked for agreement.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from oais import _kernels_py as py

try:
    from oais import _kernels as cy
except ImportError:  # pragma: no cover
    cy = None


def _time(fn, args, repeat):
    fn(*args)
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def cases(rng):
    for n in (100, 10_000, 1_000_000):
        lw = rng.normal(size=n) * 3.0
        v = rng.normal(size=n)
        w = py.softmax(lw)
        yield "logsumexp", n, (lw,)
        yield "weight_lse", n, (lw,)
        yield "softmax", n, (lw,)
        yield "weighted_sum", n, (w, v)
    for b in (2, 64):
        g = 2001
        nodes = np.linspace(-20, 20, g)
        log_f = -0.5 * (nodes[None, :] - rng.normal(size=(b, 1))) ** 2
        log_h = np.log(np.full(g, nodes[1] - nodes[0]))
        yield "log_trapz_rows", b * g, (log_f, log_h)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled extension not built; only the numpy backend is available")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'size':>10}{'numpy [us]':>14}{'cython [us]':>14}{'speedup':>10}")
    for name, size, a in cases(rng):
        fp, fc = getattr(py, name), getattr(cy, name)
        np.testing.assert_allclose(np.asarray(fc(*a)), np.asarray(fp(*a)), rtol=1e-12, atol=1e-300)
        tp, tc = _time(fp, a, args.repeat), _time(fc, a, args.repeat)
        print(f"{name:<16}{size:>10}{tp * 1e6:>14.1f}{tc * 1e6:>14.1f}{tp / tc:>10.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
