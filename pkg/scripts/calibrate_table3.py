"""Sweep fault/noise rates for the table3_like scenario.

Finds configs where, over 200 matched-seed trials per mode, success rates
order Full > w/o Internal > w/o External > w/o Both with adjacent gaps of at
least 5 percentage points and Full lands in [0.6, 0.8]. Robustness is checked
across several base seeds; the committed config should pass all of them with
margin to spare.

Usage: python3 scripts/calibrate_table3.py [--trials 200] [--fine]
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from corobot.engine import Scenario
from corobot.harness import ALL_MODES, run_experiment
from corobot.reasoner import FaultConfig
from corobot.scene import NoiseModel, load_workcell

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SCRIPT = (
    "Move it a little to the left",
    "Now a little to the right",
    "Again a little to the left",
    "A little to the left again",
    "Back a little to the right",
    "done",
)


def build_scenario(p_out: float, p_wrong: float, p_exec: float, p_freeze: float) -> Scenario:
    return Scenario(
        name="table3_like",
        workcell=load_workcell(CONFIGS / "workcell_default.json"),
        task_kind="fixation",
        script=SCRIPT,
        frame_id="beam_x",
        spacing_m=0.05,
        count_per_side=3,
        faults=FaultConfig(p_out_of_set=p_out, p_wrong_direction=p_wrong, p_exec_fail=p_exec),
        noise=NoiseModel(p_freeze=p_freeze),
    )


def evaluate(scenario: Scenario, trials: int, base_seed: int) -> dict[str, float]:
    report = run_experiment([scenario], ALL_MODES, trials=trials, base_seed=base_seed)
    return {mode.value: report.success_rate(mode) for mode in ALL_MODES}


def passes(rates: dict[str, float], gap: float = 0.05) -> bool:
    order = [rates["full"], rates["no-internal"], rates["no-external"], rates["none"]]
    gaps_ok = all(a - b >= gap for a, b in zip(order, order[1:]))
    return gaps_ok and 0.6 <= rates["full"] <= 0.8


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--fine", action="store_true", help="narrow grid around the coarse winner")
    args = ap.parse_args()

    if args.fine:
        grid = itertools.product([0.04, 0.05, 0.06], [0.2, 0.25, 0.3], [0.25, 0.3, 0.35], [0.05, 0.1, 0.15])
    else:
        grid = itertools.product([0.05], [0.2, 0.25, 0.3], [0.25, 0.3, 0.35], [0.1])

    seeds = (0, 1, 2)
    winners = []
    for p_out, p_wrong, p_exec, p_freeze in grid:
        scenario = build_scenario(p_out, p_wrong, p_exec, p_freeze)
        t0 = time.perf_counter()
        per_seed = [evaluate(scenario, args.trials, s) for s in seeds]
        dt = time.perf_counter() - t0
        ok = all(passes(r) for r in per_seed)
        # margin: worst adjacent gap and distance from the Full window edges
        worst_gap = min(
            min(r[a] - r[b] for a, b in (("full", "no-internal"), ("no-internal", "no-external"), ("no-external", "none")))
            for r in per_seed
        )
        full_margin = min(min(r["full"] - 0.6, 0.8 - r["full"]) for r in per_seed)
        tag = "PASS" if ok else "    "
        rates0 = per_seed[0]
        print(
            f"{tag} out={p_out:.2f} wrong={p_wrong:.2f} exec={p_exec:.2f} freeze={p_freeze:.2f} | "
            f"full={rates0['full']:.3f} noint={rates0['no-internal']:.3f} "
            f"noext={rates0['no-external']:.3f} none={rates0['none']:.3f} | "
            f"worst_gap={worst_gap:+.3f} full_margin={full_margin:+.3f} ({dt:.1f}s per {len(seeds)}x{args.trials * 4})"
        )
        if ok:
            winners.append(((worst_gap, full_margin), (p_out, p_wrong, p_exec, p_freeze), per_seed))

    if not winners:
        print("no config passed; widen the grid")
        return 1

    winners.sort(key=lambda w: min(w[0]), reverse=True)
    (wg, fm), best, per_seed = winners[0]
    print(f"\nbest: out={best[0]} wrong={best[1]} exec={best[2]} freeze={best[3]} "
          f"(worst_gap={wg:.3f}, full_margin={fm:.3f})")
    for s, r in zip(seeds, per_seed):
        print(f"  seed {s}: " + " ".join(f"{k}={v:.3f}" for k, v in r.items()))
    doc = {
        "name": "table3_like",
        "workcell": "workcell_default.json",
        "task_kind": "fixation",
        "frame_id": "beam_x",
        "arm": "left",
        "targets": {"spacing_m": 0.05, "count_per_side": 3},
        "script": list(SCRIPT),
        "faults": {"p_out_of_set": best[0], "p_wrong_direction": best[1], "p_exec_fail": best[2]},
        "noise": {"p_freeze": best[3]},
    }
    print("\nscenario document:\n" + json.dumps(doc, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
