#!/usr/bin/env python3
"""Directional sanity check against a live endpoint.

Replicates the built-in scenarios to 20+ environments, runs them once
without any exit mechanism and once with extrinsic verification, and
checks that verification strictly lowers the mean step count. Prints
PASS/FAIL and exits nonzero on FAIL.

    EARLYEXIT_API_KEY=... python3 scripts/live_directional_check.py \
        --backend https://api.example.com/v1 --model gpt-4o-mini
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from earlyexit import (  # noqa: E402
    BUILTIN_SCENARIOS,
    ControllerConfig,
    EpisodeSpec,
    HttpBackend,
    ScenarioEnv,
    SuiteConfig,
    TaskSpec,
    builtin_scenario,
    exit_instruction_for,
    run_suite,
)


def episode_specs(count: int, backend, controller) -> list:
    exit_instruction = exit_instruction_for(controller)
    specs = []
    for i in range(count):
        name = BUILTIN_SCENARIOS[i % len(BUILTIN_SCENARIOS)]
        scenario = builtin_scenario(name)
        env_id = f"{name}-{i:02d}"
        specs.append(
            EpisodeSpec(
                env_id=env_id,
                make_env=lambda s=scenario: ScenarioEnv(s),
                backends=lambda role: backend,
                task=TaskSpec(
                    env_id=env_id,
                    instruction=scenario.instruction,
                    goal=scenario.goal,
                    example=scenario.example,
                    subgoal_count=scenario.subgoal_count,
                    exit_instruction=exit_instruction,
                ),
            )
        )
    return specs


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--backend", required=True, help="HTTP base URL")
    parser.add_argument("--model", required=True)
    parser.add_argument("--environments", type=int, default=20)
    parser.add_argument("--k", type=int, default=3)
    parser.add_argument("--max-steps", type=int, default=12)
    parser.add_argument("--parallelism", type=int, default=4)
    parser.add_argument("--out", default="runs/directional")
    args = parser.parse_args()

    if args.environments < 20:
        parser.error("need at least 20 environments for a stable direction")

    backend = HttpBackend(args.backend)

    def run(label, mode):
        controller = ControllerConfig(mode=mode, k=args.k)
        config = SuiteConfig(
            backend={
                "kind": "http", "base_url": args.backend, "model": args.model,
            },
            controller=controller,
            max_steps=args.max_steps,
            parallelism=args.parallelism,
            output_dir=args.out,
            run_label=label,
        )
        specs = episode_specs(args.environments, backend, controller)
        print(f"running {label} ({args.environments} environments)...",
              file=sys.stderr)
        return run_suite(config, specs)

    baseline = run("baseline", "none")
    extrinsic = run("extrinsic", "extrinsic")

    print(f"baseline  mean steps {baseline.mean_steps:.2f}  "
          f"SR {baseline.sr:.1f}")
    print(f"extrinsic mean steps {extrinsic.mean_steps:.2f}  "
          f"SR {extrinsic.sr:.1f}")
    if extrinsic.mean_steps < baseline.mean_steps:
        print("PASS: verification lowered the mean step count")
        return 0
    print("FAIL: verification did not lower the mean step count")
    return 1


if __name__ == "__main__":
    sys.exit(main())
