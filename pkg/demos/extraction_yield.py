"""Compare dataset yield with and without the success-only filter.

    python3 demos/extraction_yield.py

The delta world fails overall: two of its four subgoals are proved before a
third fails and the last is cancelled. Keeping only verified runs throws
those subgoal proofs away; mining every trajectory keeps them.
"""

from formsynth import scenarios
from formsynth.extraction import DATASETS, extract_all, success_only
from formsynth.pipeline import run_problem


def yields(trajectories):
    totals = dict.fromkeys(DATASETS, 0)
    for t in trajectories:
        for name, samples in extract_all(t).items():
            totals[name] += len(samples)
    return totals


def main() -> None:
    world = scenarios.everything()
    workflow = world.workflow()
    runs = [run_problem(workflow, p) for p in world.problems]
    every, verified_only = yields(runs), yields(success_only(runs))
    print(f"{'dataset':12s} {'all runs':>9s} {'verified only':>14s}")
    for name in DATASETS:
        print(f"{name:12s} {every[name]:9d} {verified_only[name]:14d}")


if __name__ == "__main__":
    main()
