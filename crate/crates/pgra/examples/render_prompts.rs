//! Few-shot prefix construction from a shipped task definition.
//!
//! Run: `cargo run -p pgra --example render_prompts`

use std::path::Path;

use pgra::prompts::{build_prefix, render_query_prompt, sample_exemplars, TaskSpec};

fn main() -> pgra::Result<()> {
    let task_file = Path::new(env!("CARGO_MANIFEST_DIR")).join("tasks/sst2.json");
    let task = TaskSpec::from_file(&task_file)?;
    println!(
        "task {:?}: {} labels, {} pool exemplars",
        task.name,
        task.labels.len(),
        task.exemplar_pool.len()
    );

    // the same (m, seed) always samples the same exemplars
    let exemplars = sample_exemplars(&task, 2, 7, false)?;
    for e in &exemplars {
        println!("sampled pool[{}] ({}): {:?}", e.pool_index, e.label, e.text);
    }

    let prefix = build_prefix(&task, 2, 7, false)?;
    println!("--- prefix ({} shots, seed {}) ---", prefix.m, prefix.seed);
    print!("{}", prefix.text);

    let query_prompt = render_query_prompt(&task, "a film of quiet, cumulative power .")?;
    println!("--- query prompt ---");
    println!("{query_prompt}<EOF>");

    // balanced sampling draws the same number per label, interleaved
    let balanced = sample_exemplars(&task, 4, 7, true)?;
    let labels: Vec<&str> = balanced.iter().map(|e| e.label.as_str()).collect();
    println!("balanced draw labels: {labels:?}");
    Ok(())
}
