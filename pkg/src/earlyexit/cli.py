"""Command-line entry point.

Five commands: run a suite, regenerate reports from stored trajectories,
compare an exit run against a reference run, replay one trajectory as a
transcript, and validate a config without side effects.

Settings layer as flags > environment variables > config file > defaults.
The config file is JSON with the same schema `run` writes to
`config.snapshot`, so a snapshot can be fed straight back in.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .controllers import ControllerConfigError, recommended_config
from .envs import EnvError, ScenarioError, load_scenario
from .metrics import (
    MetricsError,
    aggregate,
    env_result,
    pair_results,
    write_env_csv,
    write_paired_csv,
    write_summary_md,
)
from .orchestrator import (
    SuiteConfig,
    SuiteError,
    episodes_from_config,
    run_suite,
)
from .trajectory import (
    EARLY_EXIT_CAUSES,
    TrajectoryError,
    read_trajectories,
)

BACKEND_ENV = "EARLYEXIT_BACKEND"
MODEL_ENV = "EARLYEXIT_MODEL"

_SCRIPTED_PREFIX = "scripted:"


class CliError(Exception):
    def __init__(self, message: str, status: int = 2):
        super().__init__(message)
        self.status = status


def _fail(message: str, status: int = 2) -> CliError:
    return CliError(message, status)


def _backend_doc(value: str) -> dict:
    """Parse a --backend value: an HTTP base URL or scripted:<scripts.json>."""
    if value.startswith(_SCRIPTED_PREFIX):
        path = value[len(_SCRIPTED_PREFIX):]
        try:
            with open(path, "r", encoding="utf-8") as fh:
                scripts = json.load(fh)
        except FileNotFoundError:
            raise _fail(f"script file not found: {path}")
        except json.JSONDecodeError as exc:
            raise _fail(f"bad script file {path}: {exc}")
        if not isinstance(scripts, dict):
            raise _fail(f"script file {path} must hold an object of env scripts")
        return {"kind": "scripted", "scripts": scripts}
    return {"kind": "http", "base_url": value}


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise _fail(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise _fail(f"bad config file {path}: {exc}")
    if not isinstance(doc, dict):
        raise _fail(f"config file {path} must hold a JSON object")
    return doc


def _resolve_run_config(args: argparse.Namespace) -> SuiteConfig:
    doc = SuiteConfig().to_dict()
    if args.config:
        file_doc = _load_config_file(args.config)
        doc.update(file_doc)

    backend_doc = dict(doc.get("backend", {}))
    env_backend = os.environ.get(BACKEND_ENV)
    if env_backend:
        backend_doc.update(_backend_doc(env_backend))
    env_model = os.environ.get(MODEL_ENV)
    if env_model:
        backend_doc["model"] = env_model
    if args.backend:
        backend_doc.update(_backend_doc(args.backend))
    if args.model:
        backend_doc["model"] = args.model
    doc["backend"] = backend_doc

    controller_doc = dict(doc.get("controller", {}))
    if args.preset:
        preset = recommended_config(args.preset)
        if preset is None:
            raise _fail(f"no recommended preset matches model {args.preset!r}")
        controller_doc.update(
            mode=preset.mode,
            intrinsic_variant=preset.intrinsic_variant,
            extrinsic_variant=preset.extrinsic_variant,
        )
    if args.exit_mode:
        controller_doc["mode"] = args.exit_mode
    if args.k is not None:
        controller_doc["k"] = args.k
    if args.variant_intrinsic:
        controller_doc["intrinsic_variant"] = args.variant_intrinsic
    if args.variant_extrinsic:
        controller_doc["extrinsic_variant"] = args.variant_extrinsic
    doc["controller"] = controller_doc

    if args.scenario:
        doc["scenarios"] = list(args.scenario)
    if args.flow:
        doc["flow"] = args.flow
    if args.max_steps is not None:
        doc["max_steps"] = args.max_steps
    if args.parallelism is not None:
        doc["parallelism"] = args.parallelism
    if args.out:
        doc["output_dir"] = args.out
    if args.label:
        doc["run_label"] = args.label
    if args.ref:
        doc["ref_dir"] = args.ref
    if args.weak_model:
        doc["weak_model"] = args.weak_model
    if args.strong_model:
        doc["strong_model"] = args.strong_model

    try:
        return SuiteConfig.from_dict(doc)
    except (SuiteError, ControllerConfigError, TypeError) as exc:
        raise _fail(f"invalid config: {exc}")


def cmd_run(args: argparse.Namespace) -> int:
    config = _resolve_run_config(args)
    report = run_suite(config)
    outdir = Path(config.output_dir) / config.run_label
    pd_text = f"{report.mean_pd:.3f}" if report.mean_pd is not None else "n/a"
    print(
        f"{len(report.results)} environments | SR {report.sr:.1f} | "
        f"PR {report.mean_pr:.3f} | RS {report.mean_rs:.2f} | PD {pd_text} | "
        f"steps {report.mean_steps:.1f}"
    )
    print(f"outputs in {outdir}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    doc = _load_config_file(args.config)
    try:
        config = SuiteConfig.from_dict(doc)
        for name in config.scenarios:
            if name not in _builtin_names():
                load_scenario(name)
        episodes = episodes_from_config(config)
    except (SuiteError, ScenarioError, ControllerConfigError, TypeError) as exc:
        raise _fail(f"invalid config: {exc}")
    print(f"ok: {len(episodes)} environments, flow={config.flow}")
    return 0


def _builtin_names() -> tuple[str, ...]:
    from .envs import BUILTIN_SCENARIOS

    return BUILTIN_SCENARIOS


def _results_from_dir(run_dir: str):
    path = Path(run_dir) / "trajectories.jsonl"
    if not path.exists():
        raise _fail(f"no trajectories found under {run_dir}")
    return [env_result(t) for t in read_trajectories(path)]


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    results = _results_from_dir(args.run_dir)
    paired, unpaired = [], []
    if args.ref:
        paired, unpaired = pair_results(_results_from_dir(args.ref), results)
        write_paired_csv(run_dir / "paired.csv", paired)
    report = aggregate(results, paired, unpaired)
    write_env_csv(run_dir / "report.csv", results)
    write_summary_md(run_dir / "summary.md", report, label=run_dir.name)
    print(f"report rewritten under {run_dir}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    ref_results = _results_from_dir(args.ref_dir)
    exit_results = _results_from_dir(args.exit_dir)
    paired, unpaired = pair_results(ref_results, exit_results)
    if not paired:
        raise _fail("no overlapping env_ids between the two runs")
    write_paired_csv(Path(args.exit_dir) / "paired.csv", paired)

    ref_report = aggregate(ref_results)
    exit_report = aggregate(exit_results, paired, unpaired)
    mean_pd = exit_report.mean_pd or 0.0
    print(f"paired environments: {len(paired)} (unpaired: {len(unpaired)})")
    print("| dSR | dPR | dRS | PD | dSteps |")
    print("|----:|----:|----:|---:|-------:|")
    print(
        "| {dsr:+.1f} | {dpr:+.3f} | {drs:+.2f} | {pd:.3f} | {dsteps:+.1f} |".format(
            dsr=exit_report.sr - ref_report.sr,
            dpr=exit_report.mean_pr - ref_report.mean_pr,
            drs=exit_report.mean_rs - ref_report.mean_rs,
            pd=mean_pd,
            dsteps=exit_report.mean_steps - ref_report.mean_steps,
        )
    )
    print(f"paired.csv written under {args.exit_dir}")
    return 0


def _render_flags(flags, previous) -> str:
    cells = []
    for k, (now, before) in enumerate(zip(flags, previous), start=1):
        if now and not before:
            cells.append(f"+g{k}")
        elif now:
            cells.append(f"g{k}")
        else:
            cells.append("--")
    return " ".join(cells)


def cmd_replay(args: argparse.Namespace) -> int:
    trajectories = read_trajectories(args.trajectories)
    by_id = {t.task.env_id: t for t in trajectories}
    trajectory = by_id.get(args.env_id)
    if trajectory is None:
        available = ", ".join(sorted(by_id)) or "none"
        raise _fail(f"env_id {args.env_id!r} not found; available: {available}")

    cause = trajectory.exit_cause.value if trajectory.exit_cause else "unset"
    marker = " (early exit)" if trajectory.exit_cause in EARLY_EXIT_CAUSES else ""
    print(f"# {args.env_id} | exit_cause: {cause}{marker}")
    previous = (False,) * trajectory.task.subgoal_count
    for step in trajectory.steps:
        kind = "env" if step.was_env_step else "aux"
        phase = f" {step.phase}" if step.phase else ""
        print(f"\nstep {step.index} [{kind}{phase}]")
        if step.thought:
            print(f"  Thought: {step.thought}")
        print(f"  Action: {step.action}")
        if step.observation:
            print(f"  Observation: {step.observation}")
        if step.was_env_step:
            print(f"  subgoals: {_render_flags(step.subgoal_flags, previous)}")
            previous = tuple(
                a or b for a, b in zip(step.subgoal_flags, previous)
            )
        if step.success:
            print("  SUCCESS")
    print(f"\nexit_cause: {cause}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earlyexit",
        description="Run and evaluate early-exit agent episodes in text environments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an evaluation suite")
    run_p.add_argument("--config", help="JSON config file (snapshot-compatible)")
    run_p.add_argument(
        "--scenario",
        action="append",
        help="builtin scenario name or scenario file; repeatable",
    )
    run_p.add_argument(
        "--exit-mode",
        choices=["none", "intrinsic", "extrinsic", "hybrid"],
        help="early-exit strategy",
    )
    run_p.add_argument("--k", type=int, help="verification period (steps)")
    run_p.add_argument("--max-steps", type=int, help="env step budget (default 40)")
    run_p.add_argument(
        "--flow",
        choices=["plain", "handoff", "reflexion"],
        help="episode flow (default plain)",
    )
    run_p.add_argument(
        "--backend",
        help=f"HTTP base URL or {_SCRIPTED_PREFIX}<scripts.json>",
    )
    run_p.add_argument("--model", help="model name sent to the backend")
    run_p.add_argument("--weak-model", help="handoff: model for the weak phase")
    run_p.add_argument("--strong-model", help="handoff: model for the strong phase")
    run_p.add_argument(
        "--variant-intrinsic", choices=["strict", "modest"], help="exit prompt tone"
    )
    run_p.add_argument(
        "--variant-extrinsic", choices=["strict", "modest"], help="verifier prompt tone"
    )
    run_p.add_argument("--parallelism", type=int, help="concurrent episodes")
    run_p.add_argument("--out", help="output directory root")
    run_p.add_argument("--label", help="run label (output subdirectory)")
    run_p.add_argument("--ref", help="reference run directory for PD pairing")
    run_p.add_argument(
        "--preset",
        help="model name matched against the recommended strategy table",
    )
    run_p.set_defaults(func=cmd_run)

    report_p = sub.add_parser("report", help="recompute reports from a run directory")
    report_p.add_argument("run_dir")
    report_p.add_argument("--ref", help="reference run directory for PD pairing")
    report_p.set_defaults(func=cmd_report)

    compare_p = sub.add_parser(
        "compare", help="pair an exit run against a reference run"
    )
    compare_p.add_argument("ref_dir")
    compare_p.add_argument("exit_dir")
    compare_p.set_defaults(func=cmd_compare)

    replay_p = sub.add_parser("replay", help="print one trajectory as a transcript")
    replay_p.add_argument("trajectories", help="path to trajectories.jsonl")
    replay_p.add_argument("env_id")
    replay_p.set_defaults(func=cmd_replay)

    validate_p = sub.add_parser("validate", help="check a config without running")
    validate_p.add_argument("config")
    validate_p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {_one_line(str(exc))}", file=sys.stderr)
        return exc.status
    except (
        SuiteError,
        ScenarioError,
        EnvError,
        ControllerConfigError,
        TrajectoryError,
        MetricsError,
    ) as exc:
        print(f"error: {type(exc).__name__}: {_one_line(str(exc))}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: OSError: {_one_line(str(exc))}", file=sys.stderr)
        return 1


def _one_line(text: str) -> str:
    return " ".join(text.split())


if __name__ == "__main__":
    sys.exit(main())
