//! Offline analyses over emitted artifacts: the final-speaker Fisher table
//! from a trajectory dump, and the asymmetric yield from a report CSV.

use std::collections::BTreeMap;
use std::io::BufRead;

use super::dump::DumpRecord;
use super::{ExperimentError, SpeakerSplit};
use crate::protocol::{extract_answer, Role, Task};
use crate::stats::{asymmetric_yield, fisher_exact_2x2};

/// Reassembles dump records into per-(task, shot) trajectories and splits
/// accuracy by the final speaker's role.
pub fn speaker_split_from_dump(
    records: &[DumpRecord],
    tasks: &[Task],
) -> Result<SpeakerSplit, ExperimentError> {
    let by_id: BTreeMap<&str, &Task> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut grouped: BTreeMap<(String, usize), Vec<&DumpRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry((r.task_id.clone(), r.shot)).or_default().push(r);
    }

    let mut split = SpeakerSplit {
        clean_correct: 0,
        clean_total: 0,
        corrupt_correct: 0,
        corrupt_total: 0,
        p_value: None,
    };
    for ((task_id, _shot), mut chunks) in grouped {
        let task = by_id.get(task_id.as_str()).ok_or_else(|| {
            ExperimentError::Config(format!("dump references unknown task `{task_id}`"))
        })?;
        chunks.sort_by_key(|r| r.turn);
        let transcript = chunks.iter().map(|r| r.text.as_str()).collect::<Vec<_>>().join(" ");
        let Some(answer) = extract_answer(&transcript, task) else {
            continue; // unresolved trajectories carry no attribution signal
        };
        let role = chunks.last().expect("grouped entries are non-empty").role;
        let correct = answer == task.correct_label;
        match role {
            Role::Honest => {
                split.clean_total += 1;
                split.clean_correct += usize::from(correct);
            }
            Role::Corrupt => {
                split.corrupt_total += 1;
                split.corrupt_correct += usize::from(correct);
            }
        }
    }
    split.p_value = fisher_exact_2x2(
        split.clean_correct as u64,
        (split.clean_total - split.clean_correct) as u64,
        split.corrupt_correct as u64,
        (split.corrupt_total - split.corrupt_correct) as u64,
    )
    .ok();
    Ok(split)
}

/// Reads the RRMaj-vs-MAJ gaps out of a report CSV (as written by
/// [`super::report::render_csv`]) and computes `(tax, gain)`.
pub fn yield_from_report_csv<R: BufRead>(reader: R) -> Result<(f64, f64), ExperimentError> {
    let mut deltas: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut header: Option<Vec<String>> = None;
    for line in reader.lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match &header {
            None => header = Some(fields.iter().map(|s| s.to_string()).collect()),
            Some(cols) => {
                let get = |name: &str| -> Option<&str> {
                    cols.iter().position(|c| c == name).and_then(|i| fields.get(i).copied())
                };
                let (Some(c), Some(t), Some(delta)) = (get("c"), get("t"), get("delta_pct"))
                else {
                    return Err(ExperimentError::Config(
                        "report csv missing c/t/delta_pct columns".into(),
                    ));
                };
                if delta.is_empty() {
                    continue;
                }
                let c: usize = c.parse().map_err(|_| {
                    ExperimentError::Config(format!("bad c value `{c}` in report csv"))
                })?;
                let t: usize = t.parse().map_err(|_| {
                    ExperimentError::Config(format!("bad t value `{t}` in report csv"))
                })?;
                let delta: f64 = delta.parse().map_err(|_| {
                    ExperimentError::Config(format!("bad delta `{delta}` in report csv"))
                })?;
                deltas.insert((c, t), delta);
            }
        }
    }
    Ok(asymmetric_yield(&deltas)?)
}

/// Renders a speaker split as a small CSV table.
pub fn speaker_split_csv(split: &SpeakerSplit) -> String {
    let mut out = String::from(
        "group,correct,total,accuracy_pct\n",
    );
    let pct = |c: usize, n: usize| {
        if n == 0 {
            String::new()
        } else {
            format!("{:.4}", c as f64 / n as f64 * 100.0)
        }
    };
    out.push_str(&format!(
        "clean_last,{},{},{}\n",
        split.clean_correct,
        split.clean_total,
        pct(split.clean_correct, split.clean_total)
    ));
    out.push_str(&format!(
        "corrupt_last,{},{},{}\n",
        split.corrupt_correct,
        split.corrupt_total,
        pct(split.corrupt_correct, split.corrupt_total)
    ));
    out.push_str(&format!(
        "p_value,,,{}\n",
        split.p_value.map(|p| format!("{p:.6}")).unwrap_or_default()
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::dump;

    fn record(task: &str, shot: usize, turn: usize, role: Role, text: &str) -> DumpRecord {
        DumpRecord {
            task_id: task.into(),
            shot,
            turn,
            slot: turn % 5,
            role,
            text: text.into(),
            v_after: None,
        }
    }

    fn tasks() -> Vec<Task> {
        crate::experiment::generate_tasks(3, 9).unwrap()
    }

    #[test]
    fn split_attributes_by_last_chunk() {
        let tasks = tasks();
        let correct0 = tasks[0].correct_label.clone();
        let records = vec![
            record(&tasks[0].id, 0, 0, Role::Corrupt, "..."),
            record(
                &tasks[0].id,
                0,
                1,
                Role::Honest,
                &format!("FINAL ANSWER: ({correct0})"),
            ),
            record(
                &tasks[1].id,
                0,
                0,
                Role::Corrupt,
                &format!("FINAL ANSWER: ({})", tasks[1].distractor_label),
            ),
            // unresolved trajectory: ignored
            record(&tasks[2].id, 0, 0, Role::Honest, "never finished"),
        ];
        let split = speaker_split_from_dump(&records, &tasks).unwrap();
        assert_eq!(split.clean_total, 1);
        assert_eq!(split.clean_correct, 1);
        assert_eq!(split.corrupt_total, 1);
        assert_eq!(split.corrupt_correct, 0);
        let csv = speaker_split_csv(&split);
        assert!(csv.contains("clean_last,1,1,100.0000"));
    }

    #[test]
    fn split_round_trips_through_dump_text() {
        let tasks = tasks();
        let records = vec![
            record(&tasks[0].id, 0, 0, Role::Honest, "."),
            record(
                &tasks[0].id,
                0,
                1,
                Role::Corrupt,
                &format!("FINAL ANSWER: ({})", tasks[0].correct_label),
            ),
        ];
        let mut text = String::new();
        for r in &records {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t-\n",
                r.task_id, r.shot, r.turn, r.slot, r.role, r.text
            ));
        }
        let parsed = dump::parse(text.as_bytes()).unwrap();
        let split = speaker_split_from_dump(&parsed, &tasks).unwrap();
        assert_eq!(split.corrupt_total, 1);
        assert_eq!(split.corrupt_correct, 1);
    }

    #[test]
    fn yield_reads_back_from_csv() {
        let csv = "\
# comment
config,c,t,rho,method,accuracy_pct,correct,wrong,unresolved_tasks,unresolved_answers,failed_tasks,denominator,delta_pct
1c4t,1,4,0.2,MAJ,100,10,0,0,0,0,10,
1c4t,1,4,0.2,RRMaj,100,10,0,0,0,0,10,0.6
2c3t,2,3,0.4,RRMaj,96,9,1,0,0,0,10,-3.7
3c2t,3,2,0.6,RRMaj,70,7,3,0,0,0,10,69.9
4c1t,4,1,0.8,RRMaj,30,3,7,0,0,0,10,28.3
";
        let (tax, gain) = yield_from_report_csv(csv.as_bytes()).unwrap();
        assert!((tax - (-1.55)).abs() < 1e-9);
        assert!((gain - 49.1).abs() < 1e-9);
    }
}
