//! Synthetic task generation and the line-delimited task file format.
//!
//! Task files are JSON Lines: one object per line with fields `id`,
//! `prompt`, `options`, `correct_label`, `distractor_label`. Synthetic
//! generation is deterministic in `(count, seed)`.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::IndexedRandom;

use super::ExperimentError;
use crate::protocol::Task;
use crate::seed::rng_from;
use crate::stats::Label;

/// Deterministic synthetic multiple-choice tasks with four options, a
/// designated correct label and a designated distractor.
pub fn generate_tasks(count: usize, seed: u64) -> Result<Vec<Task>, ExperimentError> {
    if count == 0 {
        return Err(ExperimentError::Config("task count must be >= 1".into()));
    }
    let labels = ["A", "B", "C", "D"];
    let mut rng = rng_from(seed);
    let tasks = (0..count)
        .map(|i| {
            let correct = *labels.choose(&mut rng).expect("non-empty");
            let distractor = loop {
                let d = *labels.choose(&mut rng).expect("non-empty");
                if d != correct {
                    break d;
                }
            };
            Task {
                id: format!("synth-{i:04}"),
                prompt: format!(
                    "Synthetic verification task {i}. Exactly one option is designated \
                     correct; work through the checks step by step. \
                     Options: (A), (B), (C), (D)."
                ),
                options: labels.iter().map(|l| Label::from(*l)).collect(),
                correct_label: Label::from(correct),
                distractor_label: Label::from(distractor),
            }
        })
        .collect();
    Ok(tasks)
}

pub fn read_task_file(path: &Path) -> Result<Vec<Task>, ExperimentError> {
    let file = std::fs::File::open(path)?;
    read_tasks(std::io::BufReader::new(file))
}

pub fn read_tasks<R: BufRead>(reader: R) -> Result<Vec<Task>, ExperimentError> {
    let mut tasks = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        tasks.push(serde_json::from_str::<Task>(&line)?);
    }
    Ok(tasks)
}

pub fn write_tasks<W: Write>(w: &mut W, tasks: &[Task]) -> Result<(), ExperimentError> {
    for task in tasks {
        serde_json::to_writer(&mut *w, task)?;
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_tasks(10, 7).unwrap();
        let b = generate_tasks(10, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_tasks(10, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn every_task_is_valid_with_distinct_labels() {
        for task in generate_tasks(128, 42).unwrap() {
            task.validate().unwrap();
            assert_ne!(task.correct_label, task.distractor_label);
        }
    }

    #[test]
    fn sample_size_matches_request() {
        assert_eq!(generate_tasks(128, 0).unwrap().len(), 128);
        assert!(generate_tasks(0, 0).is_err());
    }

    #[test]
    fn task_file_round_trips() {
        let tasks = generate_tasks(5, 1).unwrap();
        let mut buf = Vec::new();
        write_tasks(&mut buf, &tasks).unwrap();
        let back = read_tasks(buf.as_slice()).unwrap();
        assert_eq!(tasks, back);
    }

    #[test]
    fn blank_lines_and_comments_are_skipped() {
        let src = "\n# comment\n{\"id\":\"x\",\"prompt\":\"p\",\"options\":[\"A\",\"B\"],\"correct_label\":\"A\",\"distractor_label\":\"B\"}\n";
        let tasks = read_tasks(src.as_bytes()).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].id, "x");
    }
}
