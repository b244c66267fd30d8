"""Suite driver: `graphmend-harness run CORPUS --report out.json`."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .runner import run_suite


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="graphmend-harness")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run every corpus case and write a summary")
    p_run.add_argument("corpus", help="directory of <case>/{original.py,manifest.json}")
    p_run.add_argument("--report", default="harness_summary.json")
    p_run.add_argument("--workdir", default=None)
    args = parser.parse_args(argv if argv is not None else sys.argv[1:])

    summary = run_suite(
        Path(args.corpus),
        Path(args.report),
        Path(args.workdir) if args.workdir else None,
    )
    for case in summary["cases"]:
        state = "PASS" if case["pass"] else "FAIL"
        print(
            f"{case['name']}: breaks {case['breaks_before']} -> {case['breaks_after']} "
            f"(predicted {case['predicted_residual']}) "
            f"rel_diff {case['max_rel_diff']:.2e} {state}"
        )
    print(
        f"{summary['passed']}/{summary['passed'] + summary['failed']} cases pass; "
        f"{summary['fully_clean']} clean, {summary['partial']} partial, "
        f"{summary['unchanged']} unchanged"
    )
    return 0 if summary["failed"] == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
