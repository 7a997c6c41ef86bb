import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earlyexit.metrics import (
    EXIT_CLASSES,
    EnvResult,
    MetricsError,
    PairedResult,
    aggregate,
    classify_exit,
    env_result,
    pair_results,
    progress_degradation,
    progress_rate,
    redundant_steps,
    write_env_csv,
    write_paired_csv,
    write_summary_md,
)
from earlyexit.trajectory import (
    ExitCause,
    Step,
    TaskSpec,
    Trajectory,
)

import oracle


def build(flag_rows, success=False, k=None, cause=None) -> Trajectory:
    """Trajectory from explicit env-step flag rows."""
    k = k if k is not None else (len(flag_rows[0]) if flag_rows else 1)
    task = TaskSpec(env_id="m", instruction="", goal="", example="", subgoal_count=k)
    traj = Trajectory(task=task, max_steps=max(len(flag_rows), 1))
    for i, row in enumerate(flag_rows, start=1):
        traj = traj.append(
            Step(index=i, thought="", action="a", observation="o",
                 subgoal_flags=tuple(row),
                 success=success and i == len(flag_rows),
                 prompt_tokens=3, completion_tokens=1)
        )
    if cause is None:
        cause = ExitCause.ENV_SUCCESS if success else ExitCause.BUDGET_EXHAUSTED
    return traj.finish(cause)


def result(env_id="e", success=False, pr=0.0, n_tot=0, n_sub=0, rs=0,
           cause="budget_exhausted", **kw) -> EnvResult:
    return EnvResult(
        env_id=env_id, success=success, progress_rate=pr, n_total=n_tot,
        n_subgoal=n_sub, redundant_steps=rs, tokens_policy=kw.get("tokens_policy", 0),
        tokens_verifier=kw.get("tokens_verifier", 0), exit_cause=cause,
        tokens_estimated=kw.get("tokens_estimated", False),
    )


class TestProgressRate:
    def test_empty_trajectory_scores_zero(self):
        traj = Trajectory(
            task=TaskSpec(env_id="e", instruction="", goal="", example="",
                          subgoal_count=4),
            max_steps=5,
        ).finish(ExitCause.ENV_ERROR)
        assert progress_rate(traj) == 0.0

    def test_success_scores_one_regardless_of_flags(self):
        traj = build([(False, False), (False, False)], success=True)
        assert progress_rate(traj) == 1.0

    def test_partial_union(self):
        traj = build([(True, False, False, False), (True, True, False, False)])
        assert progress_rate(traj) == 0.5

    def test_flicker_does_not_lower_score(self):
        traj = build([(True, False), (False, False)])
        assert progress_rate(traj) == 0.5


class TestRedundantSteps:
    def test_success_is_never_redundant(self):
        traj = build([(False, False)] * 4, success=True)
        assert redundant_steps(traj) == 0

    def test_no_progress_wastes_everything(self):
        traj = build([(False, False)] * 6)
        assert redundant_steps(traj) == 6

    def test_counts_steps_after_last_gain(self):
        rows = [(True, False)] + [(True, False)] * 4  # gain at step 1 of 5
        assert redundant_steps(build(rows)) == 4

    def test_late_gain_means_few_redundant(self):
        rows = [(False, False)] * 4 + [(True, False)]
        assert redundant_steps(build(rows)) == 0


class TestProgressDegradation:
    def test_quarter_loss(self):
        ref = result(env_id="x", pr=1.0)
        exit_run = result(env_id="x", pr=0.75)
        assert progress_degradation(ref, exit_run) == 0.25

    def test_clamped_at_zero_when_exit_beats_ref(self):
        ref = result(env_id="x", pr=0.5)
        exit_run = result(env_id="x", pr=0.9)
        assert progress_degradation(ref, exit_run) == 0.0

    def test_env_mismatch_rejected(self):
        with pytest.raises(MetricsError, match="mismatch"):
            progress_degradation(result(env_id="a"), result(env_id="b"))


class TestClassifyExit:
    @pytest.mark.parametrize("rs,pd,expected", [
        (0, 0.0, "perfect"),
        (0, 0.3, "too_early"),
        (2, 0.0, "too_late"),
        (2, 0.305, "mixed"),
    ])
    def test_default_thresholds(self, rs, pd, expected):
        assert classify_exit(rs, pd) == expected

    def test_not_exited_dominates(self):
        assert classify_exit(5, 0.9, exited=False) == "not_exited"

    def test_rs_tolerance_shifts_label(self):
        # rs=2 within tolerance: degradation alone drives the label
        assert classify_exit(2, 0.305, tau_rs=2) == "too_early"

    def test_pd_tolerance_shifts_label(self):
        assert classify_exit(3, 0.1, tau_pd=0.2) == "too_late"
        assert classify_exit(0, 0.1, tau_pd=0.2) == "perfect"


class TestEnvResult:
    def test_requires_terminated_trajectory(self):
        traj = Trajectory(
            task=TaskSpec(env_id="e", instruction="", goal="", example="",
                          subgoal_count=1),
            max_steps=5,
        )
        with pytest.raises(MetricsError, match="not terminated"):
            env_result(traj)

    def test_field_extraction(self):
        traj = build([(True, False), (True, False), (True, False)])
        r = env_result(traj)
        assert r.env_id == "m"
        assert not r.success
        assert r.progress_rate == 0.5
        assert r.n_total == 3
        assert r.n_subgoal == 1
        assert r.redundant_steps == 2
        assert r.tokens_policy == 12
        assert r.exit_cause == "budget_exhausted"

    def test_exited_early_property(self):
        assert result(cause="intrinsic_exit").exited_early
        assert result(cause="extrinsic_exit").exited_early
        assert not result(cause="budget_exhausted").exited_early
        assert not result(cause="env_success").exited_early
        assert not result(cause="backend_error").exited_early


class TestPairedResult:
    def test_pd_must_fit_reference(self):
        with pytest.raises(MetricsError):
            PairedResult(env_id="x", pr_ref=0.5, pr_exit=0.0, pd=0.7,
                         scenario="mixed")
        with pytest.raises(MetricsError):
            PairedResult(env_id="x", pr_ref=0.5, pr_exit=0.0, pd=-0.1,
                         scenario="mixed")


class TestPairResults:
    def test_pairs_follow_exit_order_and_report_leftovers(self):
        ref = [result(env_id=e, pr=1.0) for e in ("a", "b", "c")]
        exits = [result(env_id=e, pr=0.5, cause="extrinsic_exit")
                 for e in ("c", "b", "d")]
        paired, unpaired = pair_results(ref, exits)
        assert [p.env_id for p in paired] == ["c", "b"]
        assert unpaired == ["a", "d"]
        assert all(p.pd == 0.5 for p in paired)

    def test_disjoint_sets_pair_nothing(self):
        paired, unpaired = pair_results(
            [result(env_id="a")], [result(env_id="b")]
        )
        assert paired == []
        assert unpaired == ["a", "b"]

    def test_scenario_labels_use_thresholds(self):
        ref = [result(env_id="x", pr=1.0)]
        exits = [result(env_id="x", pr=0.695, rs=2, cause="extrinsic_exit")]
        strict, _ = pair_results(ref, exits)
        relaxed, _ = pair_results(ref, exits, tau_rs=2)
        assert strict[0].scenario == "mixed"
        assert relaxed[0].scenario == "too_early"


class TestAggregate:
    def test_empty_rejected(self):
        with pytest.raises(MetricsError):
            aggregate([])

    def test_means_and_rates(self):
        rows = [
            result(env_id="a", success=True, pr=1.0, n_tot=4,
                   cause="env_success", tokens_policy=100),
            result(env_id="b", pr=0.5, n_tot=10, rs=5, tokens_policy=200,
                   tokens_verifier=40),
        ]
        report = aggregate(rows)
        assert report.sr == 50.0
        assert report.mean_pr == 0.75
        assert report.mean_rs == 2.5
        assert report.failure_rs == 5.0
        assert report.mean_steps == 7.0
        assert report.mean_tokens == 170.0
        assert report.mean_verifier_tokens == 20.0
        assert report.mean_pd is None

    def test_failure_rs_none_when_all_succeed(self):
        rows = [result(env_id="a", success=True, cause="env_success")]
        assert aggregate(rows).failure_rs is None

    def test_histogram_counts(self):
        rows = [
            result(env_id="a", cause="env_success", success=True),
            result(env_id="b", cause="extrinsic_exit", rs=0),
            result(env_id="c", cause="intrinsic_exit", rs=3),
        ]
        paired = [
            PairedResult(env_id="b", pr_ref=1.0, pr_exit=1.0, pd=0.0,
                         scenario="perfect"),
        ]
        # c exited early but has no pairing: skipped from the histogram
        report = aggregate(rows, paired)
        assert report.histogram == {
            "perfect": 1, "too_early": 0, "too_late": 0, "mixed": 0,
            "not_exited": 1,
        }

    def test_tokens_estimated_is_any(self):
        rows = [result(env_id="a"), result(env_id="b", tokens_estimated=True)]
        assert aggregate(rows).tokens_estimated


class TestReportFiles:
    def make_report(self):
        rows = [
            result(env_id="a", success=True, pr=1.0, n_tot=3,
                   cause="env_success", tokens_policy=60),
            result(env_id="b", pr=0.25, n_tot=8, n_sub=2, rs=6,
                   tokens_policy=90, tokens_verifier=10,
                   cause="extrinsic_exit"),
        ]
        paired = [PairedResult(env_id="b", pr_ref=0.75, pr_exit=0.25, pd=0.5,
                               scenario="mixed")]
        return rows, aggregate(rows, paired)

    def test_env_csv_columns(self, tmp_path):
        rows, _ = self.make_report()
        path = tmp_path / "report.csv"
        write_env_csv(path, rows)
        lines = path.read_text().splitlines()
        assert lines[0] == "env_id,success,pr,n_total,n_subgoal,rs,tokens"
        assert lines[1] == "a,true,1,3,0,0,60"
        assert lines[2] == "b,false,0.25,8,2,6,100"

    def test_paired_csv_columns(self, tmp_path):
        _, report = self.make_report()
        path = tmp_path / "paired.csv"
        write_paired_csv(path, report.paired)
        lines = path.read_text().splitlines()
        assert lines[0] == "env_id,pr_ref,pr_exit,pd,scenario"
        assert lines[1] == "b,0.75,0.25,0.5,mixed"

    def test_summary_contents(self, tmp_path):
        _, report = self.make_report()
        path = tmp_path / "summary.md"
        write_summary_md(path, report, label="demo")
        text = path.read_text()
        assert "# Summary: demo" in text
        assert "| SR | PR | RS | PD | Steps | Tokens |" in text
        assert "| 50 | 0.625 | 3 | 0.5 | 5.5 | 80 |" in text
        assert "- mixed: 1" in text
        assert "- not_exited: 1" in text


# --- property tests ----------------------------------------------------------


flag_rows = st.lists(
    st.lists(st.booleans(), min_size=1, max_size=8),
    min_size=1,
    max_size=40,
).filter(lambda rows: len({len(r) for r in rows}) == 1)


@given(rows=flag_rows, success=st.booleans())
@settings(max_examples=200, deadline=None)
def test_pr_bounds_and_success_rule(rows, success):
    traj = build(rows, success=success)
    pr = progress_rate(traj)
    assert 0.0 <= pr <= 1.0
    if success:
        assert pr == 1.0


@given(rows=flag_rows)
@settings(max_examples=200, deadline=None)
def test_rs_identities(rows):
    traj = build(rows)
    rs = redundant_steps(traj)
    r = env_result(traj)
    assert 0 <= rs <= r.n_total
    if r.progress_rate == 0.0:
        assert rs == r.n_total
    if r.n_subgoal > 0:
        assert rs == r.n_total - r.n_subgoal


@given(rows=flag_rows, extra=st.lists(st.booleans(), min_size=1, max_size=8))
@settings(max_examples=200, deadline=None)
def test_pr_monotone_under_extension(rows, extra):
    if len(extra) != len(rows[0]):
        extra = (extra * 8)[: len(rows[0])]
    shorter = build(rows)
    longer = build(rows + [tuple(extra)])
    assert progress_rate(longer) >= progress_rate(shorter)


@given(ref=st.floats(0, 1), exit_pr=st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_pd_bounds(ref, exit_pr):
    a = result(env_id="x", pr=ref)
    b = result(env_id="x", pr=exit_pr)
    pd = progress_degradation(a, b)
    assert 0.0 <= pd <= ref or pd == 0.0


@given(
    rs=st.integers(0, 40),
    pd=st.floats(0, 1),
    exited=st.booleans(),
    tau_rs=st.integers(0, 5),
    tau_pd=st.floats(0, 0.5),
)
@settings(max_examples=300, deadline=None)
def test_classify_is_total_and_consistent(rs, pd, exited, tau_rs, tau_pd):
    label = classify_exit(rs, pd, exited=exited, tau_rs=tau_rs, tau_pd=tau_pd)
    assert label in EXIT_CLASSES
    assert (label == "not_exited") == (not exited)
    assert label == oracle.oracle_classify(rs, pd, exited, tau_rs, tau_pd)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_metrics_match_oracle_on_random_trajectories(seed):
    rng = random.Random(seed)
    traj = oracle.synthetic_trajectory(rng, "prop")
    r = env_result(traj)
    assert r.progress_rate == oracle.oracle_progress_rate(traj)
    assert r.redundant_steps == oracle.oracle_redundant_steps(traj)
    assert r.n_total == oracle.oracle_n_total(traj)
    assert r.n_subgoal == oracle.oracle_n_subgoal(traj)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_pairing_partitions_env_ids(seed):
    rng = random.Random(seed)
    ids = [f"e{i}" for i in range(rng.randint(1, 12))]
    ref_ids = [i for i in ids if rng.random() < 0.7]
    exit_ids = [i for i in ids if rng.random() < 0.7]
    ref = [result(env_id=i, pr=1.0) for i in ref_ids]
    exits = [result(env_id=i, pr=0.5, cause="extrinsic_exit") for i in exit_ids]
    paired, unpaired = pair_results(ref, exits)
    assert {p.env_id for p in paired} == set(ref_ids) & set(exit_ids)
    assert set(unpaired) == set(ref_ids) ^ set(exit_ids)
    assert unpaired == sorted(unpaired)
