use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use stepwise_core::actor::{parse_actor_output, ScriptedPolicy};
use stepwise_core::evaluation::{compute_report, TaskOutcome};
use stepwise_core::rollout::run_tasks;
use stepwise_core::synth::{generate_synthetic_suite, SynthConfig};
use stepwise_core::{parse_action, run_task, Backends, MatchMode, RunConfig, RunMode};

fn parsing(c: &mut Criterion) {
    c.bench_function("parse_action", |b| {
        b.iter(|| parse_action(black_box(r#"TEXT(target="Patient ID", text="MRN-20231, \"urgent\"")"#)))
    });
    let reply = r#"Here you go:
```json
[{"Step 1": {
  "grounding": {"key_ui_elements": ["Save", "Cancel"], "current_state": "dialog open"},
  "memory": {"short_term": {"last_action": "NONE", "last_observation": "NONE", "lesson_learned": "NONE", "feedback": null}},
  "reasoning": {"overall_progress": "start", "next_step_reason": "save", "tool_calls": []},
  "predicted_next_action": {"tool_call": "CLICK", "target": "Save"}
}}]
```"#;
    c.bench_function("parse_actor_output_fenced", |b| b.iter(|| parse_actor_output(black_box(reply), 1)));
}

fn metrics(c: &mut Criterion) {
    let outcomes: Vec<TaskOutcome> = (0..2000)
        .map(|i| TaskOutcome {
            task_id: format!("t{i:05}"),
            category: ["Weasis", "Orthanc", "OpenEMR"][i % 3].to_string(),
            steps: (0..8 + i % 17).map(|k| (i * 31 + k * 7) % 11 != 0).collect(),
        })
        .collect();
    c.bench_function("compute_report_2000_tasks", |b| b.iter(|| compute_report(black_box(&outcomes), MatchMode::CanonicalFull, "")));
}

fn rollout(c: &mut Criterion) {
    let tasks = generate_synthetic_suite(&SynthConfig::new(1, 16, 12, 20)).unwrap();
    let mut group = c.benchmark_group("rollout");
    for (name, policy) in [("oracle", ScriptedPolicy::Oracle), ("noisy", ScriptedPolicy::Noisy { flip: 0.3 })] {
        let cfg = RunConfig::scripted(RunMode::TeacherForced, policy);
        let backends = Backends::from_config(&cfg).unwrap();
        group.bench_function(format!("run_task_{name}"), |b| b.iter(|| run_task(black_box(&tasks[0]), &cfg, &backends)));
    }
    let mut cfg = RunConfig::scripted(RunMode::TeacherForced, ScriptedPolicy::Oracle);
    cfg.workers = 4;
    let backends = Backends::from_config(&cfg).unwrap();
    group.sample_size(10);
    group.bench_function("run_tasks_16x4", |b| {
        b.iter_batched(|| tasks.clone(), |t| run_tasks(&t, &cfg, &backends), BatchSize::LargeInput)
    });
    group.finish();
}

criterion_group!(benches, parsing, metrics, rollout);
criterion_main!(benches);
