//! Every task definition shipped under `tasks/` must load, validate, render,
//! and support the default pipeline knobs.

mod common;

use common::task_path;
use pgra::encoder::EncoderConfig;
use pgra::prompts::{build_prefix, render_query_prompt, TaskSpec};
use pgra::reader::fit_prototypes;

const SHIPPED: &[&str] = &["sst2", "sst5", "cola", "trec", "cr", "mr", "mpqa", "subj"];

#[test]
fn shipped_tasks_load_and_validate() {
    for name in SHIPPED {
        let task = TaskSpec::from_file(&task_path(name)).unwrap();
        assert_eq!(&task.name, name);
        assert!(task.labels.len() >= 2, "{name}");
        assert!(
            task.exemplar_pool.len() >= 8,
            "{name}: pool must support the default shot count"
        );
        for label in &task.labels {
            assert!(
                task.exemplar_pool.iter().any(|e| &e.label == label),
                "{name}: label {label:?} has no exemplar"
            );
        }
    }
}

#[test]
fn shipped_tasks_render_default_prefixes() {
    for name in SHIPPED {
        let task = TaskSpec::from_file(&task_path(name)).unwrap();
        let prefix = build_prefix(&task, 8, 0, false).unwrap();
        assert_eq!(prefix.m, 8);
        assert_eq!(
            prefix.text.matches(&task.answer_cue).count(),
            8,
            "{name}: one cue per exemplar block"
        );
        assert!(prefix.text.ends_with("\n\n"), "{name}");
        let prompt = render_query_prompt(&task, "a placeholder input").unwrap();
        assert!(
            prompt.ends_with(&format!("{} ", task.answer_cue)),
            "{name}: query prompt must end at the cue"
        );
    }
}

#[test]
fn shipped_tasks_fit_prototypes() {
    let encoder = EncoderConfig::reference(1024);
    for name in SHIPPED {
        let task = TaskSpec::from_file(&task_path(name)).unwrap();
        let classifier = fit_prototypes(&task, &encoder).unwrap();
        assert_eq!(classifier.labels().len(), task.labels.len(), "{name}");
    }
}
