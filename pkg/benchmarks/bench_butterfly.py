"""Benchmark of the two stage-kernel backends (numba vs pure numpy).

The backend is chosen at import time from the AIQT_NUMBA environment
variable, so each backend is timed in its own subprocess.  Reported
numbers are the best of ``repeats`` timed passes of a batched forward +
inverse over a (batch, 2**n) array, after a warm-up pass that also
absorbs JIT compilation.

Run:  python3 benchmarks/bench_butterfly.py [--batch 256] [--repeats 5]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
import numpy as np
from aiqt.butterfly import active_backend, deep_forward, deep_inverse
from aiqt.model import deep_init

batch, repeats, sizes = json.loads(sys.argv[1])
rng = np.random.default_rng(0)
rows = []
for n in sizes:
    model = deep_init(n, 1, seed=0)
    x = rng.standard_normal((batch, 1 << n)) + 1j * rng.standard_normal((batch, 1 << n))
    deep_inverse(deep_forward(x, model), model)  # warm-up / JIT
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        deep_inverse(deep_forward(x, model), model)
        best = min(best, time.perf_counter() - t0)
    rows.append({"n": n, "seconds": best})
print(json.dumps({"backend": active_backend(), "rows": rows}))
"""


def run_backend(flag: str, batch: int, repeats: int, sizes: list[int]) -> dict:
    env = dict(os.environ, AIQT_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", _WORKER, json.dumps([batch, repeats, sizes])],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--sizes", default="6,8,10,12")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    results = {}
    for flag, label in (("1", "numba"), ("0", "numpy")):
        r = run_backend(flag, args.batch, args.repeats, sizes)
        if r["backend"] != label:
            print(f"note: requested {label}, got {r['backend']} "
                  "(numba unavailable?)", file=sys.stderr)
        results[label] = {row["n"]: row["seconds"] for row in r["rows"]}

    print(f"forward+inverse, batch={args.batch}, best of {args.repeats}")
    print(f"{'n':>4} {'N':>6} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    for n in sizes:
        t_np = results["numpy"][n] * 1e3
        t_nb = results["numba"][n] * 1e3
        print(f"{n:>4} {1 << n:>6} {t_np:>12.3f} {t_nb:>12.3f} {t_np / t_nb:>8.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
