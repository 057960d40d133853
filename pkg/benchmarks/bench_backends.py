"""Wall-clock comparison of the numba kernels against the numpy fallback.

Each backend runs in its own interpreter because ``CGVF_DISABLE_NUMBA`` is read
at import time.  Compilation is excluded by a short warm-up run.

    python benchmarks/bench_backends.py --repeat 3
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

CASES = {
    # name: (preset, simulated seconds)
    "sim1_scaled": ("sim1_scaled", 5.0),
    "sim4": ("sim4", 1.0),
    "exp1": ("exp1", 10.0),
}

WORKER = """
import json, sys, time
from cgvf import backend_name
from cgvf.presets import preset_data
from cgvf.scenario import build
from cgvf.sim import integrate

preset, duration, repeat = sys.argv[1], float(sys.argv[2]), int(sys.argv[3])
data = preset_data(preset)
data["run"]["duration_s"] = 0.01
integrate(build(data))
data["run"]["duration_s"] = duration
data["run"]["decimate"] = 10**9
times = []
for _ in range(repeat):
    sc = build(data)
    t0 = time.perf_counter()
    res = integrate(sc)
    times.append(time.perf_counter() - t0)
json.dump({"backend": backend_name(), "engine": res.engine, "best": min(times), "steps": round(duration / sc.step)}, sys.stdout)
"""


def run_case(preset: str, duration: float, repeat: int, disable: bool) -> dict:
    env = dict(os.environ)
    env.pop("CGVF_DISABLE_NUMBA", None)
    if disable:
        env["CGVF_DISABLE_NUMBA"] = "1"
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, preset, str(duration), str(repeat)],
        capture_output=True,
        text=True,
        env=env,
        check=True,
    )
    return json.loads(proc.stdout)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3, help="timed runs per case; the best is reported")
    parser.add_argument("--cases", nargs="*", default=list(CASES), choices=list(CASES))
    args = parser.parse_args(argv)
    print(f"{'case':<12} {'engine':<8} {'steps':>7} {'numba s':>9} {'numpy s':>9} {'speedup':>8}")
    for name in args.cases:
        preset, duration = CASES[name]
        fast = run_case(preset, duration, args.repeat, disable=False)
        slow = run_case(preset, duration, args.repeat, disable=True)
        print(
            f"{name:<12} {fast['engine']:<8} {fast['steps']:>7} {fast['best']:>9.3f} {slow['best']:>9.3f} "
            f"{slow['best'] / fast['best']:>7.1f}x"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
