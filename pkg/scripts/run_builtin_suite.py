#!/usr/bin/env python3
"""Run the built-in scenario suite once and print the report.

Point it at any OpenAI-compatible endpoint:

    python3 scripts/run_builtin_suite.py --backend http://localhost:8000/v1 \
        --model llama-3.1-8b-instruct --exit-mode extrinsic --k 3

or replay recorded completions from a scripts JSON file:

    python3 scripts/run_builtin_suite.py --backend scripted:demo_scripts.json
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from earlyexit import (  # noqa: E402
    BUILTIN_SCENARIOS,
    ControllerConfig,
    SuiteConfig,
    run_suite,
)


def backend_doc(value: str) -> dict:
    if value.startswith("scripted:"):
        path = value[len("scripted:"):]
        scripts = json.loads(Path(path).read_text(encoding="utf-8"))
        return {"kind": "scripted", "scripts": scripts}
    return {"kind": "http", "base_url": value}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--backend", required=True,
                        help="HTTP base URL or scripted:<scripts.json>")
    parser.add_argument("--model", default="scripted")
    parser.add_argument("--exit-mode", default="none",
                        choices=["none", "intrinsic", "extrinsic", "hybrid"])
    parser.add_argument("--k", type=int, default=1)
    parser.add_argument("--variant", default="strict",
                        choices=["strict", "modest"],
                        help="tone for both prompt variants")
    parser.add_argument("--max-steps", type=int, default=40)
    parser.add_argument("--parallelism", type=int, default=4)
    parser.add_argument("--out", default="runs")
    parser.add_argument("--label", default=None)
    parser.add_argument("--ref", default="",
                        help="reference run directory for PD pairing")
    args = parser.parse_args()

    doc = backend_doc(args.backend)
    doc["model"] = args.model
    label = args.label or f"builtin-{args.exit_mode}"
    config = SuiteConfig(
        scenarios=BUILTIN_SCENARIOS,
        backend=doc,
        controller=ControllerConfig(
            mode=args.exit_mode,
            k=args.k,
            intrinsic_variant=args.variant,
            extrinsic_variant=args.variant,
        ),
        max_steps=args.max_steps,
        parallelism=args.parallelism,
        output_dir=args.out,
        run_label=label,
        ref_dir=args.ref,
    )

    report = run_suite(config)
    pd = f"{report.mean_pd:.3f}" if report.mean_pd is not None else "n/a"
    print(f"label            {label}")
    print(f"environments     {len(report.results)}")
    print(f"SR               {report.sr:.1f}")
    print(f"PR               {report.mean_pr:.3f}")
    print(f"RS               {report.mean_rs:.2f}")
    print(f"PD               {pd}")
    print(f"mean steps       {report.mean_steps:.1f}")
    print(f"mean tokens      {report.mean_tokens:.0f}")
    print(f"outputs          {Path(args.out) / label}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
