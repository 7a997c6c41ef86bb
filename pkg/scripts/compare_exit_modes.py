#!/usr/bin/env python3
"""Sweep the four exit modes over the built-in scenarios and tabulate.

Runs baseline (none) first, then pairs every other mode against it for
progress-degradation, printing one markdown row per mode:

    python3 scripts/compare_exit_modes.py --backend http://localhost:8000/v1 \
        --model mistral-small-24b --k 3 --max-steps 30
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from earlyexit import (  # noqa: E402
    BUILTIN_SCENARIOS,
    ControllerConfig,
    SuiteConfig,
    run_suite,
)

MODES = ("none", "intrinsic", "extrinsic", "hybrid")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--backend", required=True, help="HTTP base URL")
    parser.add_argument("--model", required=True)
    parser.add_argument("--k", type=int, default=3)
    parser.add_argument("--variant", default="strict",
                        choices=["strict", "modest"])
    parser.add_argument("--max-steps", type=int, default=40)
    parser.add_argument("--parallelism", type=int, default=4)
    parser.add_argument("--out", default="runs/mode-sweep")
    args = parser.parse_args()

    reports = {}
    for mode in MODES:
        config = SuiteConfig(
            scenarios=BUILTIN_SCENARIOS,
            backend={
                "kind": "http", "base_url": args.backend, "model": args.model,
            },
            controller=ControllerConfig(
                mode=mode,
                k=args.k,
                intrinsic_variant=args.variant,
                extrinsic_variant=args.variant,
            ),
            max_steps=args.max_steps,
            parallelism=args.parallelism,
            output_dir=args.out,
            run_label=mode,
            ref_dir="" if mode == "none" else str(Path(args.out) / "none"),
        )
        print(f"running {mode} ...", file=sys.stderr)
        reports[mode] = run_suite(config)

    print(f"\nmodel: {args.model}  k: {args.k}  budget: {args.max_steps}\n")
    print("| mode | SR | PR | RS | PD | steps | tokens |")
    print("|------|---:|---:|---:|---:|------:|-------:|")
    for mode, report in reports.items():
        pd = f"{report.mean_pd:.3f}" if report.mean_pd is not None else "-"
        print(
            f"| {mode} | {report.sr:.1f} | {report.mean_pr:.3f} "
            f"| {report.mean_rs:.2f} | {pd} | {report.mean_steps:.1f} "
            f"| {report.mean_tokens:.0f} |"
        )
    print(f"\nper-run artifacts under {args.out}/<mode>/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
