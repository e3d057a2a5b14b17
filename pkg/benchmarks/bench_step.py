"""Time the physics step on the compiled and interpreted kernel backends.

Runs the same scripted contact-heavy workload (pusher circling through the
block) on whichever backend loads in this process, then re-executes itself
with TWINSIM_FORCE_PYTHON=1 to time the other one. Usage:

    python3 benchmarks/bench_step.py [--frames N]
"""

import argparse
import json
import math
import os
import subprocess
import sys
import time


def run_workload(frames):
    from twinsim.physics import backend_name, build_scene, set_joint_target, step

    w = build_scene()
    # warm up allocations and code paths outside the timed region
    for _ in range(10):
        w = step(w)
    t0 = time.perf_counter()
    for t in range(frames):
        a = 2.0 * math.pi * t / 600.0
        w = set_joint_target(w, [0.12 * math.cos(a) - 0.05, 0.12 * math.sin(a) - 0.05])
        w = step(w)
    elapsed = time.perf_counter() - t0
    assert w.is_finite()
    return {
        "backend": backend_name(),
        "frames": frames,
        "seconds": elapsed,
        "us_per_step": elapsed / frames * 1e6,
        "steps_per_second": frames / elapsed,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=1200,
                    help="frames to time per backend (default 1200 = 20s sim time)")
    ap.add_argument("--json", action="store_true", help="emit one JSON object")
    args = ap.parse_args()

    mine = run_workload(args.frames)
    if os.environ.get("_BENCH_CHILD"):
        print(json.dumps(mine))
        return

    env = dict(os.environ, TWINSIM_FORCE_PYTHON="1", _BENCH_CHILD="1")
    # the interpreted run is ~100x slower; scale it down and report per-step cost
    child_frames = max(30, args.frames // 20)
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--frames", str(child_frames)],
        env=env, capture_output=True, text=True, check=True,
    )
    other = json.loads(out.stdout.strip().splitlines()[-1])

    results = [mine, other]
    if args.json:
        print(json.dumps({"results": results,
                          "speedup": other["us_per_step"] / mine["us_per_step"]}))
        return
    for r in results:
        print(f"{r['backend']:>12}: {r['us_per_step']:9.1f} us/step "
              f"({r['steps_per_second']:,.0f} steps/s over {r['frames']} frames)")
    print(f"{'speedup':>12}: {other['us_per_step'] / mine['us_per_step']:.1f}x")


if __name__ == "__main__":
    main()
