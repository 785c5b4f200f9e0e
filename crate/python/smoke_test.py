#!/usr/bin/env python3
"""Smoke test for the compasskit_py extension module.

Builds the cdylib if needed, imports it, and drives a miniature pipeline on
the bundled three-rung scenario: search -> plan -> simulate, plus the scalar
helpers. Run from the repository root:

    python3 python/smoke_test.py
"""

import json
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
SCENARIO = REPO / "crates" / "compasskit" / "scenarios" / "paper_table1.scenario"


def build_module() -> Path:
    lib = REPO / "target" / "release" / "libcompasskit_py.so"
    if not lib.exists():
        print("building compasskit-py (release)...")
        subprocess.run(
            ["cargo", "build", "-p", "compasskit-py", "--release"],
            cwd=REPO,
            check=True,
        )
    staging = Path(tempfile.mkdtemp(prefix="compasskit_py_"))
    shutil.copy2(lib, staging / "compasskit_py.so")
    return staging


def approx(a: float, b: float, tol: float = 1e-9) -> bool:
    return abs(a - b) <= tol


def main() -> int:
    sys.path.insert(0, str(build_module()))
    import compasskit_py as ck

    checks = 0

    def ok(cond: bool, what: str) -> None:
        nonlocal checks
        if not cond:
            print(f"FAIL: {what}")
            sys.exit(1)
        checks += 1
        print(f"  ok: {what}")

    # scalar helpers against known values
    lo, hi = ck.wilson_interval(18, 20, 1.96)
    ok(approx(lo, 0.6989617935882066, 1e-12), f"wilson lower bound {lo:.6f}")
    ok(approx(hi, 0.9721341060158468, 1e-12), f"wilson upper bound {hi:.6f}")
    ok(ck.upscale_threshold(1000.0, 200.0, 120.0) == 6, "upscale threshold 6")
    ok(ck.upscale_threshold(1000.0, 700.0, 500.0) == 0, "upscale threshold 0")
    ok(ck.downscale_threshold(550.0, 50.0, 300.0) == 1, "downscale threshold 1")
    p_seed = ck.seeding_probability(0.02, 100)
    ok(approx(p_seed, 1.0 - 0.98**100, 1e-12), f"seeding probability {p_seed:.4f}")
    pk = ck.pollaczek_khinchine_wait(1.5, 0.2, 0.04)
    ok(approx(pk, 0.06 / 1.4, 1e-12), f"P-K wait {pk * 1000:.1f} ms")

    # pipeline on the bundled three-rung scenario
    sc = ck.Scenario(str(SCENARIO))
    ok(sc.cardinality() == 3, f"{sc!r}")

    feasible = json.loads(sc.search(0.6, seed=45))
    ok(len(feasible["entries"]) == 3, "all three rungs are feasible at tau 0.6")

    again = sc.search(0.6, seed=45)
    ok(again == sc.search(0.6, seed=45), "search is deterministic")

    policy_json = sc.plan(0.6, 1000.0, seed=45)
    policy = json.loads(policy_json)
    ladder = [e["upscale_threshold"] for e in policy["entries"]]
    ok(ladder == [6, 1, 0], f"upscale ladder {ladder}")
    ok(ladder == sorted(ladder, reverse=True), "ladder strictly decreasing")

    front = json.loads(sc.front(0.6, seed=45))
    means = [e["mean_ms"] for e in front["entries"]]
    ok(means == sorted(means), f"front ordered by mean latency {means}")

    # static accurate rung under a spike collapses; elastico holds up
    static_metrics = json.loads(
        sc.simulate(policy_json, "spike", seed=1, base_qps=2.0, static_entry=2)
    )
    elastico_metrics = json.loads(sc.simulate(policy_json, "spike", seed=1, base_qps=2.0))
    ok(
        elastico_metrics["slo_compliance"] > static_metrics["slo_compliance"] + 0.3,
        f"elastico compliance {elastico_metrics['slo_compliance']:.3f} vs "
        f"static-accurate {static_metrics['slo_compliance']:.3f}",
    )
    ok(elastico_metrics["switches_up"] >= 1, "spike forces at least one upscale")
    ok(
        static_metrics["requests"] == elastico_metrics["requests"],
        "both strategies served every arrival",
    )

    # bad inputs surface as exceptions
    try:
        ck.wilson_interval(5, 0, 1.96)
        print("FAIL: zero-trial interval did not raise")
        return 1
    except Exception:
        checks += 1
        print("  ok: zero-trial wilson interval raises")

    try:
        sc.plan(0.6, 50.0, seed=45)  # SLO below every rung's tail
        print("FAIL: infeasible SLO did not raise")
        return 1
    except ValueError:
        checks += 1
        print("  ok: infeasible SLO raises ValueError")

    print(f"smoke test passed ({checks} checks)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
