//! Replay pools: pre-recorded chunks and answers, used to re-run analyses
//! on captured generations without touching a backend.
//!
//! Two tab-separated line formats share one file:
//!
//! * full chunk records — `task_id  shot  slot  turn  role  chunk_text  answer_label`
//!   (`answer_label` is `-` when the chunk carries none);
//! * answers-only records — `task_id  shot  agent_slot  answer_label`,
//!   enough for vote-scaling studies.
//!
//! Lookups are exact; a missing record is an error, never a fabricated
//! chunk.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::protocol::Role;
use crate::stats::Label;

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A chunk as recorded in a pool file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkRecord {
    pub task_id: String,
    pub shot: usize,
    pub slot: usize,
    pub turn: usize,
    pub role: Role,
    pub text: String,
    pub answer: Option<Label>,
}

/// An answers-only record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerRecord {
    pub task_id: String,
    pub shot: usize,
    pub slot: usize,
    pub answer: Label,
}

#[derive(Debug, Default)]
pub struct ReplayPool {
    chunks: HashMap<(String, usize, usize), ChunkRecord>,
    answers: HashMap<(String, usize, usize), Label>,
}

impl ReplayPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_chunk(&mut self, record: ChunkRecord) {
        self.chunks
            .insert((record.task_id.clone(), record.shot, record.turn), record);
    }

    pub fn insert_answer(&mut self, record: AnswerRecord) {
        self.answers
            .insert((record.task_id.clone(), record.shot, record.slot), record.answer);
    }

    pub fn chunk_for(&self, task_id: &str, shot: usize, turn: usize) -> Option<&ChunkRecord> {
        self.chunks.get(&(task_id.to_owned(), shot, turn))
    }

    pub fn answer_for(&self, task_id: &str, shot: usize, slot: usize) -> Option<&Label> {
        self.answers.get(&(task_id.to_owned(), shot, slot))
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn answer_count(&self) -> usize {
        self.answers.len()
    }

    /// Parses a pool from tab-separated lines; blank lines and `#` comments
    /// are skipped, record shape is detected per line by column count.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, ReplayError> {
        let mut pool = Self::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim_end();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let fields: Vec<&str> = trimmed.split('\t').collect();
            let parse_usize = |s: &str, what: &str| {
                s.parse::<usize>().map_err(|_| ReplayError::Parse {
                    line: lineno,
                    reason: format!("bad {what}: `{s}`"),
                })
            };
            match fields.len() {
                7 => {
                    let role: Role = fields[4].parse().map_err(|e| ReplayError::Parse {
                        line: lineno,
                        reason: e,
                    })?;
                    let answer = match fields[6] {
                        "-" => None,
                        s => Some(Label::new(s)),
                    };
                    pool.insert_chunk(ChunkRecord {
                        task_id: fields[0].to_owned(),
                        shot: parse_usize(fields[1], "shot")?,
                        slot: parse_usize(fields[2], "slot")?,
                        turn: parse_usize(fields[3], "turn")?,
                        role,
                        text: fields[5].to_owned(),
                        answer,
                    });
                }
                4 => {
                    pool.insert_answer(AnswerRecord {
                        task_id: fields[0].to_owned(),
                        shot: parse_usize(fields[1], "shot")?,
                        slot: parse_usize(fields[2], "agent_slot")?,
                        answer: Label::new(fields[3]),
                    });
                }
                n => {
                    return Err(ReplayError::Parse {
                        line: lineno,
                        reason: format!("expected 7 or 4 tab-separated fields, got {n}"),
                    });
                }
            }
        }
        Ok(pool)
    }
}

/// Writes one full chunk record. Tabs and newlines inside the text are
/// flattened to spaces so the line stays parseable.
pub fn write_chunk_record<W: Write>(w: &mut W, r: &ChunkRecord) -> std::io::Result<()> {
    let text: String = r
        .text
        .chars()
        .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
        .collect();
    writeln!(
        w,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
        r.task_id,
        r.shot,
        r.slot,
        r.turn,
        r.role,
        text,
        r.answer.as_ref().map_or("-", |l| l.as_str())
    )
}

/// Writes one answers-only record.
pub fn write_answer_record<W: Write>(w: &mut W, r: &AnswerRecord) -> std::io::Result<()> {
    writeln!(w, "{}\t{}\t{}\t{}", r.task_id, r.shot, r.slot, r.answer)
}
