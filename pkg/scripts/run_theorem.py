"""Exact-iterate round counts on a configurable problem shape.

Builds a realizable regression instance with a planted residual rank, runs
the closed-form iterate at each slice width, and compares the observed
convergence round against ceil(residual_rank / width). A noisy variant
checks that off-range noise moves the plateau to the irreducible error
without disturbing the solution.
"""

import argparse
import sys

from rosa.experiments import run_theorem_suite


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=40)
    parser.add_argument("--inputs", type=int, default=16)
    parser.add_argument("--outputs", type=int, default=8)
    parser.add_argument("--residual-rank", type=int, default=6)
    parser.add_argument("--ranks", type=int, nargs="+", default=[1, 2, 3, 6])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    report = run_theorem_suite(n=args.samples, d=args.inputs, p=args.outputs,
                               residual_rank=args.residual_rank,
                               ranks=tuple(args.ranks), seed=args.seed)
    print(f"{'width':>5} {'predicted':>9} {'observed':>8}  ok")
    for case in report["cases"]:
        ok = (case["converged_at_t"] and case["strict_before_t"]
              and case["bound_attained"])
        print(f"{case['rank']:>5} {case['t_predicted']:>9} "
              f"{case['observed_step']:>8}  {'yes' if ok else 'NO'}")
    noisy = report["noisy_case"]
    verdict = "holds" if noisy["plateau_ok"] else "FAILS"
    print(f"off-range noise: plateau at the irreducible error {verdict} "
          f"({noisy['irreducible_error']:.3e})")
    return 0 if report["all_ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
