mod common;

use common::*;
use stepwise_core::actor::{FaultSite, ScriptedPolicy};
use stepwise_core::distill::*;
use stepwise_core::rollout::{run_suite, run_tasks, RunMode, TrajectoryRecord};
use stepwise_core::synth::write_suite;
use stepwise_core::{parse_action, Action};

fn records(policy: ScriptedPolicy, mode: RunMode, tasks: &[stepwise_core::Task], max_revisions: usize) -> Vec<TrajectoryRecord> {
    let mut cfg = config(mode, policy);
    cfg.max_revisions = max_revisions;
    run_tasks(tasks, &cfg, &backends(&cfg))
}

#[test]
fn sample_counts_follow_step_counts() {
    let one = suite(1, 1, 10, 10);
    let recs = records(ScriptedPolicy::Oracle, RunMode::TeacherForced, &one, 3);
    let kept = filter_successful(&recs).unwrap();
    assert_eq!(emit_sft_samples(&kept[0], false).unwrap().len(), 10);

    let five = suite(2, 5, 10, 10);
    let recs = records(ScriptedPolicy::Oracle, RunMode::TeacherForced, &five, 3);
    let total: usize = filter_successful(&recs)
        .unwrap()
        .iter()
        .map(|r| emit_sft_samples(r, false).unwrap().len())
        .sum();
    assert_eq!(total, 50);
}

#[test]
fn only_teacher_forced_input_is_accepted() {
    let tasks = suite(3, 2, 8, 8);
    for mode in [RunMode::FreeRunning, RunMode::ZeroShotBaseline] {
        let recs = records(ScriptedPolicy::Oracle, mode, &tasks, 3);
        assert!(matches!(filter_successful(&recs), Err(DistillError::WrongMode { .. })));
    }
}

#[test]
fn filter_keeps_corrected_and_drops_uncorrected() {
    let tasks = suite(4, 12, 8, 12);
    let noisy = records(ScriptedPolicy::Noisy { flip: 0.3 }, RunMode::TeacherForced, &tasks, 3);
    let kept = filter_successful(&noisy).unwrap();
    assert_eq!(filter_successful(&kept).unwrap(), kept, "filtering is idempotent");
    for r in &noisy {
        let all_accepted = r.steps.iter().all(|s| s.accepted.is_some());
        assert_eq!(kept.iter().any(|k| k.task_id == r.task_id), all_accepted && r.verified);
    }
    let revised = kept
        .iter()
        .flat_map(|r| emit_sft_samples(r, false).unwrap())
        .filter(|s| s.metadata.revisions_used > 0)
        .count();
    assert!(revised > 0, "corrected steps are exported and flagged");

    let faulty = FaultSite {
        task: tasks[0].id.clone(),
        step: 3,
    };
    let recs = records(ScriptedPolicy::Faults { at: [faulty].into() }, RunMode::TeacherForced, &tasks[..2], 0);
    let kept = filter_successful(&recs).unwrap();
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].task_id, tasks[1].id);
}

#[test]
fn feedback_is_positive_and_targets_reparse() {
    let tasks = suite(5, 4, 8, 12);
    let recs = records(ScriptedPolicy::Noisy { flip: 0.2 }, RunMode::TeacherForced, &tasks, 3);
    let samples: Vec<_> = filter_successful(&recs)
        .unwrap()
        .iter()
        .flat_map(|r| emit_sft_samples(r, false).unwrap())
        .collect();
    assert!(!samples.is_empty());
    for s in &samples {
        assert!(s.metadata.feedback > 0.0);
        assert_eq!(s.metadata.feedback_is_sentinel, s.metadata.step == 1);
        let task = tasks.iter().find(|t| t.id == s.metadata.task_id).unwrap();
        assert_eq!(parse_action(&s.target).unwrap(), task.steps[s.metadata.step - 1].label);
    }

    let text = dataset_jsonl(&samples).unwrap();
    let mut reversed = samples.clone();
    reversed.reverse();
    assert_eq!(dataset_jsonl(&reversed).unwrap(), text, "output order does not depend on input order");
    assert_eq!(text.lines().count(), samples.len());
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["images", "metadata", "prompt", "target"]);
        parse_action(v["target"].as_str().unwrap()).unwrap();
    }
    assert!(matches!(dataset_jsonl(&[]), Err(DistillError::Empty)));
}

#[test]
fn structured_targets_parse_as_actor_output() {
    let tasks = suite(6, 1, 8, 8);
    let recs = records(ScriptedPolicy::Oracle, RunMode::TeacherForced, &tasks, 3);
    let samples = emit_sft_samples(&recs[0], true).unwrap();
    for s in &samples {
        let (out, _) = stepwise_core::actor::parse_actor_output(&s.target, s.metadata.step).unwrap();
        assert_eq!(out.action, tasks[0].steps[s.metadata.step - 1].label);
    }
}

#[test]
fn tampered_snapshots_are_detected() {
    let tasks = suite(7, 1, 8, 8);
    let mut recs = records(ScriptedPolicy::Oracle, RunMode::TeacherForced, &tasks, 3);
    recs[0].steps[4].ltm_before.add_pitfall("edited after the fact");
    assert!(matches!(
        emit_sft_samples(&recs[0], false),
        Err(DistillError::SnapshotGap { step: 5, .. })
    ));
    recs[0].steps.truncate(5);
    assert!(matches!(emit_sft_samples(&recs[0], false), Err(DistillError::SnapshotGap { .. })));
}

#[test]
fn sample_prompts_hold_nothing_from_later_steps() {
    let mut task = suite(8, 1, 12, 12).remove(0);
    let total = task.len();
    for (i, step) in task.steps.iter_mut().enumerate().take(total - 1) {
        step.label = Action::click(format!("ZQXL{}QXZ", i + 1));
        step.raw_label = step.label.render();
    }
    let recs = records(ScriptedPolicy::Oracle, RunMode::TeacherForced, &[task], 3);
    for s in emit_sft_samples(&recs[0], false).unwrap() {
        for k in s.metadata.step..total {
            assert!(!s.prompt.contains(&format!("ZQXL{k}QXZ")));
        }
    }
}

#[test]
fn export_from_a_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let suite_dir = dir.path().join("suite");
    write_suite(&suite(9, 3, 8, 9), &suite_dir).unwrap();
    let cfg = config(RunMode::TeacherForced, ScriptedPolicy::Oracle);
    let run = dir.path().join("run");
    run_suite(&suite_dir, &cfg, &backends(&cfg), &run).unwrap();
    let card = export_run(&run, &dir.path().join("a"), false).unwrap();
    assert_eq!(card.records_kept, 3);
    export_run(&run, &dir.path().join("b"), false).unwrap();
    let read = |d: &str| std::fs::read(dir.path().join(d).join(DATASET_FILE)).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_eq!(String::from_utf8(read("a")).unwrap().lines().count(), card.samples);

    let first = std::fs::read_dir(run.join("records")).unwrap().next().unwrap().unwrap().path();
    std::fs::remove_file(first).unwrap();
    assert!(matches!(
        export_run(&run, &dir.path().join("c"), false),
        Err(DistillError::MissingRecords(ids)) if ids.len() == 1
    ));
}
