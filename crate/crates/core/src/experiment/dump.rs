//! Trajectory dump format: one chunk per line,
//! `task_id  shot  turn  slot  role  tokens  v_after` (tab-separated).
//!
//! Tokens are space-joined in the sixth column; `v_after` is `-` for chunks
//! without a potential. The format is the exchange surface between the
//! runner and the offline analyses.

use std::io::BufRead;

use crate::protocol::{Role, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRecord {
    pub task_id: String,
    pub shot: usize,
    pub turn: usize,
    pub slot: usize,
    pub role: Role,
    pub text: String,
    pub v_after: Option<f64>,
}

/// Appends every chunk of a trajectory to the dump buffer.
pub fn append_trajectory(buf: &mut String, shot: usize, trajectory: &Trajectory) {
    for chunk in &trajectory.chunks {
        let v = match chunk.v_after() {
            Some(v) => v.to_string(),
            None => "-".to_owned(),
        };
        buf.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            trajectory.task_id,
            shot,
            chunk.turn_index,
            chunk.agent_slot,
            chunk.agent_role,
            chunk.text(),
            v
        ));
    }
}

pub fn render(items: &[(usize, &Trajectory)]) -> String {
    let mut buf = String::new();
    for (shot, trajectory) in items {
        append_trajectory(&mut buf, *shot, trajectory);
    }
    buf
}

/// Parses a dump back into records; lines are expected in emit order.
pub fn parse<R: BufRead>(reader: R) -> Result<Vec<DumpRecord>, String> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", idx + 1))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(format!("line {}: expected 7 fields, got {}", idx + 1, fields.len()));
        }
        let parse_usize =
            |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("line {}: bad {what}", idx + 1));
        records.push(DumpRecord {
            task_id: fields[0].to_owned(),
            shot: parse_usize(fields[1], "shot")?,
            turn: parse_usize(fields[2], "turn")?,
            slot: parse_usize(fields[3], "slot")?,
            role: fields[4].parse().map_err(|e: String| format!("line {}: {e}", idx + 1))?,
            text: fields[5].to_owned(),
            v_after: match fields[6] {
                "-" => None,
                s => Some(s.parse::<f64>().map_err(|_| format!("line {}: bad v_after", idx + 1))?),
            },
        });
    }
    Ok(records)
}
