"""Time the numba loops against their numpy twins, then a full solve under each backend.

    python benchmarks/bench_backends.py [--repeat 5] [--json results.json]

Kernel timings call both implementations in one process (numba compilation is
excluded by a warm-up call). The end-to-end solve runs in a subprocess per
backend because the choice is fixed at import time by NLKPP_DISABLE_NUMBA.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from nlkpp import _kernels


def _cases(rng):
    t = np.linspace(0, 60, 1200)
    om = np.array([1.0, np.sqrt(2.0)])
    arg = np.outer(t, om)
    return {
        "box_conv_1d  n=1537 m=1024": ("box_conv_1d", (rng.random((1, 1537)), rng.random(2049))),
        "box_conv_1d  n=201  m=200 x3": ("box_conv_1d", (rng.random((3, 201)), rng.random(401))),
        "box_conv_2d  64x64  m=12": ("box_conv_2d", (rng.random((1, 64, 64)), rng.random((25, 25)))),
        "circ_conv_1d n=256 x3": ("circ_conv_1d", (rng.random((3, 256)), rng.random(256))),
        "circ_conv_2d 48x48": ("circ_conv_2d", (rng.random((1, 48, 48)), rng.random((48, 48)))),
        "translation_sup 2000 taus": (
            "translation_sup",
            (np.cos(arg), np.sin(arg), rng.random((2, 16)), om, np.linspace(0, 200, 2000)),
        ),
    }


def bench_kernels(repeat: int) -> list[dict]:
    rng = np.random.default_rng(0)
    rows = []
    for label, (name, args) in _cases(rng).items():
        fast = getattr(_kernels, f"{name}_numba")
        slow = getattr(_kernels, f"{name}_numpy")
        fast(*args)  # compile
        err = float(np.max(np.abs(fast(*args) - slow(*args))))
        t_fast = min(timeit.repeat(lambda: fast(*args), number=1, repeat=repeat))
        t_slow = min(timeit.repeat(lambda: slow(*args), number=1, repeat=repeat))
        rows.append({"case": label, "numba_s": t_fast, "numpy_s": t_slow, "speedup": t_slow / t_fast, "max_diff": err})
    return rows


SOLVE = """
import time
from nlkpp.scenario import load_scenario
from nlkpp.evolution import solve
from nlkpp._backend import backend_name
s = load_scenario("{name}")
m, u0 = s.model(), s.initial_field()
solve(m, u0, 0.0, 0.1, save=False)
t = time.perf_counter()
u = solve(m, u0, 0.0, {t1}, save=False).final
print(backend_name(), time.perf_counter() - t, float(u.sum()))
"""


def bench_solve(name: str, t1: float) -> list[dict]:
    rows = []
    for flag in ("0", "1"):
        env = dict(os.environ, NLKPP_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", SOLVE.format(name=name, t1=t1)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        rows.append({"scenario": name, "backend": out[0], "seconds": float(out[1]), "checksum": float(out[2])})
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", metavar="PATH")
    args = ap.parse_args(argv)

    kern = bench_kernels(args.repeat)
    print(f"{'kernel':32s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for r in kern:
        print(f"{r['case']:32s} {1e3 * r['numba_s']:11.3f} {1e3 * r['numpy_s']:11.3f} {r['speedup']:8.1f} {r['max_diff']:10.1e}")

    solves = bench_solve("nested_domain", 5.0) + bench_solve("indicator_mass", 2.0)
    print()
    print(f"{'solve':18s} {'backend':8s} {'seconds':>8s} {'checksum':>22s}")
    for r in solves:
        print(f"{r['scenario']:18s} {r['backend']:8s} {r['seconds']:8.3f} {r['checksum']:22.15g}")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"kernels": kern, "solves": solves}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
