"""Evaluation metrics over finished trajectories.

Four numbers summarize a run: success rate, progress rate (best prefix
fraction of satisfied subgoals), redundant steps (steps past the last new
subgoal in failed runs), and progress degradation (per-environment progress
lost relative to a no-exit reference run). Exits are additionally classified
as perfect / too early / too late / mixed.

Everything here is a pure function of trajectories; aggregation is an
order-preserving fold so parallel suites reduce to identical reports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .trajectory import (
    EARLY_EXIT_CAUSES,
    ExitCause,
    Trajectory,
    n_subgoal,
    n_total,
)

EXIT_CLASSES = ("perfect", "too_early", "too_late", "mixed", "not_exited")


class MetricsError(Exception):
    """Invalid metric input (empty result set, mismatched pairing, ...)."""


@dataclass(frozen=True)
class EnvResult:
    """Metric kernel outputs for one environment's trajectory."""

    env_id: str
    success: bool
    progress_rate: float
    n_total: int
    n_subgoal: int
    redundant_steps: int
    tokens_policy: int
    tokens_verifier: int
    exit_cause: str
    tokens_estimated: bool = False

    @property
    def tokens_total(self) -> int:
        return self.tokens_policy + self.tokens_verifier

    @property
    def exited_early(self) -> bool:
        return self.exit_cause in (c.value for c in EARLY_EXIT_CAUSES)


@dataclass(frozen=True)
class PairedResult:
    """One environment's exit run matched against its no-exit reference."""

    env_id: str
    pr_ref: float
    pr_exit: float
    pd: float
    scenario: str

    def __post_init__(self) -> None:
        if not (0.0 <= self.pd <= self.pr_ref + 1e-12):
            raise MetricsError(f"pd {self.pd} outside [0, pr_ref={self.pr_ref}]")


@dataclass(frozen=True)
class RunReport:
    results: tuple[EnvResult, ...]
    paired: tuple[PairedResult, ...]
    # env_ids present on only one side of the pairing, never silently dropped
    unpaired: tuple[str, ...]
    sr: float
    mean_pr: float
    mean_rs: float
    # mean RS over failed envs only; None when every env succeeded
    failure_rs: float | None
    mean_pd: float | None
    mean_steps: float
    mean_tokens: float
    mean_verifier_tokens: float
    histogram: Mapping[str, int]
    tokens_estimated: bool


def progress_rate(traj: Trajectory) -> float:
    """Best prefix fraction of satisfied subgoals, in [0, 1].

    The union of satisfied subgoals only grows, so the max over prefixes is
    the final union's size over K. A successful trajectory always counts as
    full progress. Empty trajectories score 0.
    """
    if traj.succeeded:
        return 1.0
    satisfied: set[int] = set()
    for step in traj.env_steps():
        satisfied.update(k for k, flag in enumerate(step.subgoal_flags) if flag)
    return len(satisfied) / traj.task.subgoal_count


def redundant_steps(traj: Trajectory) -> int:
    """Env steps spent after the last new subgoal, for failed runs.

    Success means no step was redundant; a run that never satisfied any
    subgoal wasted every step it took.
    """
    if traj.succeeded:
        return 0
    total = n_total(traj)
    last_progress = n_subgoal(traj)
    if last_progress == 0:
        return total
    return total - last_progress


def env_result(traj: Trajectory) -> EnvResult:
    if not traj.terminated:
        raise MetricsError(f"trajectory {traj.task.env_id!r} is not terminated")
    return EnvResult(
        env_id=traj.task.env_id,
        success=traj.succeeded,
        progress_rate=progress_rate(traj),
        n_total=n_total(traj),
        n_subgoal=n_subgoal(traj),
        redundant_steps=redundant_steps(traj),
        tokens_policy=traj.policy_tokens,
        tokens_verifier=traj.verifier_tokens,
        exit_cause=traj.exit_cause.value,
        tokens_estimated=any(s.usage_estimated for s in traj.steps),
    )


def progress_degradation(ref: EnvResult, exit_run: EnvResult) -> float:
    """Progress lost by exiting early on one environment, clamped at 0."""
    if ref.env_id != exit_run.env_id:
        raise MetricsError(
            f"pairing mismatch: ref={ref.env_id!r} exit={exit_run.env_id!r}"
        )
    return max(ref.progress_rate - exit_run.progress_rate, 0.0)


def classify_exit(
    rs: int,
    pd: float,
    exited: bool = True,
    tau_rs: int = 0,
    tau_pd: float = 0.0,
) -> str:
    """Label one early exit by its redundancy/degradation profile.

    With the default zero thresholds, any nonzero RS and PD together read
    as mixed; loosening tau_rs or tau_pd tolerates small values of one
    metric so the other dominates the label.
    """
    if not exited:
        return "not_exited"
    rs_high = rs > tau_rs
    pd_high = pd > tau_pd
    if not rs_high and not pd_high:
        return "perfect"
    if pd_high and not rs_high:
        return "too_early"
    if rs_high and not pd_high:
        return "too_late"
    return "mixed"


def pair_results(
    ref_results: Sequence[EnvResult],
    exit_results: Sequence[EnvResult],
    tau_rs: int = 0,
    tau_pd: float = 0.0,
) -> tuple[list[PairedResult], list[str]]:
    """Match exit runs to reference runs by env_id.

    Returns the pairs in exit-run order plus the sorted env_ids present on
    only one side; those are excluded from PD rather than silently biasing
    it.
    """
    by_id = {r.env_id: r for r in ref_results}
    paired: list[PairedResult] = []
    for exit_run in exit_results:
        ref = by_id.get(exit_run.env_id)
        if ref is None:
            continue
        pd = progress_degradation(ref, exit_run)
        paired.append(
            PairedResult(
                env_id=exit_run.env_id,
                pr_ref=ref.progress_rate,
                pr_exit=exit_run.progress_rate,
                pd=pd,
                scenario=classify_exit(
                    exit_run.redundant_steps,
                    pd,
                    exited=exit_run.exited_early,
                    tau_rs=tau_rs,
                    tau_pd=tau_pd,
                ),
            )
        )
    ref_ids = set(by_id)
    exit_ids = {r.env_id for r in exit_results}
    unpaired = sorted(ref_ids ^ exit_ids)
    return paired, unpaired


def aggregate(
    results: Sequence[EnvResult],
    pairings: Sequence[PairedResult] = (),
    unpaired: Sequence[str] = (),
) -> RunReport:
    """Fold per-env results (and optional PD pairings) into one report."""
    if not results:
        raise MetricsError("cannot aggregate an empty result set")
    count = len(results)
    pd_by_env = {p.env_id: p for p in pairings}

    histogram = {label: 0 for label in EXIT_CLASSES}
    for result in results:
        if not result.exited_early:
            histogram["not_exited"] += 1
        elif result.env_id in pd_by_env:
            histogram[pd_by_env[result.env_id].scenario] += 1
        # exited but unpaired: no PD available, left out of the histogram

    failures = [r for r in results if not r.success]
    return RunReport(
        results=tuple(results),
        paired=tuple(pairings),
        unpaired=tuple(unpaired),
        sr=100.0 * sum(r.success for r in results) / count,
        mean_pr=sum(r.progress_rate for r in results) / count,
        mean_rs=sum(r.redundant_steps for r in results) / count,
        failure_rs=(
            sum(r.redundant_steps for r in failures) / len(failures)
            if failures
            else None
        ),
        mean_pd=(
            sum(p.pd for p in pairings) / len(pairings) if pairings else None
        ),
        mean_steps=sum(r.n_total for r in results) / count,
        mean_tokens=sum(r.tokens_total for r in results) / count,
        mean_verifier_tokens=sum(r.tokens_verifier for r in results) / count,
        histogram=histogram,
        tokens_estimated=any(r.tokens_estimated for r in results),
    )


def report_from_trajectories(
    trajectories: Iterable[Trajectory],
    references: Iterable[Trajectory] | None = None,
) -> RunReport:
    results = [env_result(t) for t in trajectories]
    if references is None:
        return aggregate(results)
    ref_results = [env_result(t) for t in references]
    paired, unpaired = pair_results(ref_results, results)
    return aggregate(results, paired, unpaired)


# --- Report emission --------------------------------------------------------


def _fmt(value: float) -> str:
    return format(value, ".6g")


def write_env_csv(path, results: Sequence[EnvResult]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["env_id", "success", "pr", "n_total", "n_subgoal", "rs", "tokens"]
        )
        for r in results:
            writer.writerow(
                [
                    r.env_id,
                    str(r.success).lower(),
                    _fmt(r.progress_rate),
                    r.n_total,
                    r.n_subgoal,
                    r.redundant_steps,
                    r.tokens_total,
                ]
            )


def write_paired_csv(path, paired: Sequence[PairedResult]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["env_id", "pr_ref", "pr_exit", "pd", "scenario"])
        for p in paired:
            writer.writerow(
                [p.env_id, _fmt(p.pr_ref), _fmt(p.pr_exit), _fmt(p.pd), p.scenario]
            )


def write_summary_md(path, report: RunReport, label: str = "run") -> None:
    pd_cell = _fmt(report.mean_pd) if report.mean_pd is not None else "n/a"
    lines = [
        f"# Summary: {label}",
        "",
        f"Environments: {len(report.results)}",
        "",
        "| SR | PR | RS | PD | Steps | Tokens |",
        "|---:|---:|---:|---:|------:|-------:|",
        "| {sr} | {pr} | {rs} | {pd} | {steps} | {tokens} |".format(
            sr=_fmt(report.sr),
            pr=_fmt(report.mean_pr),
            rs=_fmt(report.mean_rs),
            pd=pd_cell,
            steps=_fmt(report.mean_steps),
            tokens=_fmt(report.mean_tokens),
        ),
        "",
        f"Mean verifier tokens: {_fmt(report.mean_verifier_tokens)}",
    ]
    if report.failure_rs is not None:
        lines.append(f"Mean RS over failed runs only: {_fmt(report.failure_rs)}")
    if report.tokens_estimated:
        lines.append(
            "Token totals include estimated counts (no usage reported by the backend)."
        )
    lines.extend(["", "## Exit classification", ""])
    for exit_class in EXIT_CLASSES:
        lines.append(f"- {exit_class}: {report.histogram.get(exit_class, 0)}")
    if report.unpaired:
        lines.extend(
            [
                "",
                "## Unpaired environments (excluded from PD)",
                "",
            ]
        )
        for env_id in report.unpaired:
            lines.append(f"- {env_id}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
