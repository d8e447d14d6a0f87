//! Report emission: the markdown grid table and the per-(config, method)
//! CSV, both stamped with seed, config hash and build id.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ExperimentError, ExperimentReport, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    MarkdownTable,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::MarkdownTable),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

/// Writes the report in the requested formats; returns the created paths.
pub fn emit_report(
    report: &ExperimentReport,
    formats: &[ReportFormat],
    dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for format in formats {
        let (name, body) = match format {
            ReportFormat::MarkdownTable => ("report.md", render_markdown(report)),
            ReportFormat::Csv => ("report.csv", render_csv(report)),
        };
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    for (row, dump) in &report.dumps {
        let path = dir.join(format!("trajectories_{row}.tsv"));
        std::fs::write(&path, dump)?;
        written.push(path);
    }
    Ok(written)
}

fn fmt_pct(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.1}"),
        None => "n/a".to_owned(),
    }
}

pub fn render_markdown(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", report.name);
    let _ = writeln!(out);
    let _ = writeln!(out, "- agent kind: `{}`", report.agent_kind);
    let _ = writeln!(out, "- tasks: {}", report.task_count);
    let _ = writeln!(out, "- tie policy: `{:?}`", report.tie_policy);
    let _ = writeln!(out, "- root seed: `{}`", report.root_seed);
    let _ = writeln!(out, "- config hash: `{}`", report.config_hash);
    let _ = writeln!(out, "- build: `{}`", report.build_id);
    let _ = writeln!(out);

    // Paper-style summary row: Ceiling | per-config MAJ/RRMaj/delta | Floor.
    let has_both = report.methods.contains(&Method::Maj) && report.methods.contains(&Method::RrMaj);
    let ceiling = report.rows.iter().find(|r| r.c == 0);
    let floor = report.rows.iter().find(|r| r.t == 0);
    let middle: Vec<_> = report.rows.iter().filter(|r| r.c != 0 && r.t != 0).collect();
    if has_both {
        let mut header = String::from("| Ceiling");
        let mut divider = String::from("|---");
        let mut values = String::from("|");
        if let Some(row) = ceiling {
            // Uniform rows have no intra-ensemble divergence; both methods
            // coincide for deterministic agents. The first method's number
            // stands for the row.
            let first = report.methods[0];
            let _ = write!(values, " {}", fmt_pct(row.stats[&first].accuracy_pct()));
        } else {
            values.push_str(" n/a");
        }
        for row in &middle {
            let _ = write!(header, " | {} MAJ | {} RRMaj | {} Δ", row.config_name(), row.config_name(), row.config_name());
            divider.push_str("|---|---|---");
            let _ = write!(
                values,
                " | {} | {} | {}",
                fmt_pct(row.stats.get(&Method::Maj).and_then(|s| s.accuracy_pct())),
                fmt_pct(row.stats.get(&Method::RrMaj).and_then(|s| s.accuracy_pct())),
                fmt_pct(row.delta_pct),
            );
        }
        header.push_str(" | Floor |");
        divider.push_str("|---|");
        match floor {
            Some(row) => {
                let first = report.methods[0];
                let _ = write!(values, " | {} |", fmt_pct(row.stats[&first].accuracy_pct()));
            }
            None => values.push_str(" | n/a |"),
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{divider}");
        let _ = writeln!(out, "{values}");
        let _ = writeln!(out);
    }

    // Full per-row detail, unresolved counts always included.
    let _ = writeln!(
        out,
        "| config | rho | method | accuracy % | correct | wrong | unresolved tasks | unresolved answers | failed | denominator |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|---|");
    for row in &report.rows {
        for (method, stats) in &row.stats {
            let _ = writeln!(
                out,
                "| {} | {:.2} | {} | {} | {} | {} | {} | {} | {} | {} |",
                row.config_name(),
                row.rho,
                method,
                fmt_pct(stats.accuracy_pct()),
                stats.correct,
                stats.wrong,
                stats.unresolved_tasks,
                stats.unresolved_answers,
                stats.failed_tasks,
                stats.denominator(),
            );
        }
    }
    let _ = writeln!(out);

    if let Some((tax, gain)) = report.asymmetric_yield {
        let _ = writeln!(out, "## Asymmetric yield");
        let _ = writeln!(out);
        let _ = writeln!(out, "- robustness tax (mean Δ, rho ≤ 0.4): {tax:+.2}");
        let _ = writeln!(out, "- rescue gain (mean Δ, rho ≥ 0.6): {gain:+.2}");
        let _ = writeln!(out);
    }

    let splits: Vec<_> = report
        .rows
        .iter()
        .filter_map(|r| r.speaker_split.as_ref().map(|s| (r.config_name(), s)))
        .collect();
    if !splits.is_empty() {
        let _ = writeln!(out, "## Final-speaker split");
        let _ = writeln!(out);
        let _ = writeln!(out, "| config | clean-last | corrupt-last | p (two-tailed) |");
        let _ = writeln!(out, "|---|---|---|---|");
        for (name, s) in splits {
            let _ = writeln!(
                out,
                "| {} | {}/{} | {}/{} | {} |",
                name,
                s.clean_correct,
                s.clean_total,
                s.corrupt_correct,
                s.corrupt_total,
                s.p_value.map_or("n/a".to_owned(), |p| format!("{p:.4}")),
            );
        }
        let _ = writeln!(out);
    }

    let failures: Vec<_> = report.rows.iter().flat_map(|r| r.failures.iter()).collect();
    if !failures.is_empty() {
        let _ = writeln!(out, "## Failures");
        let _ = writeln!(out);
        for f in failures {
            let _ = writeln!(out, "- {f}");
        }
        let _ = writeln!(out);
    }

    if !report.notes.is_empty() {
        let _ = writeln!(out, "## Notes");
        let _ = writeln!(out);
        for n in &report.notes {
            let _ = writeln!(out, "- {n}");
        }
    }
    out
}

pub fn render_csv(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# name={}", report.name);
    let _ = writeln!(out, "# agent_kind={}", report.agent_kind);
    let _ = writeln!(out, "# root_seed={}", report.root_seed);
    let _ = writeln!(out, "# config_hash={}", report.config_hash);
    let _ = writeln!(out, "# build={}", report.build_id);
    let _ = writeln!(
        out,
        "config,c,t,rho,method,accuracy_pct,correct,wrong,unresolved_tasks,unresolved_answers,failed_tasks,denominator,delta_pct"
    );
    for row in &report.rows {
        for (method, stats) in &row.stats {
            let delta = match method {
                Method::RrMaj => row.delta_pct.map(|d| format!("{d:.4}")).unwrap_or_default(),
                _ => String::new(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{:.4},{},{},{},{},{},{},{},{},{}",
                row.config_name(),
                row.c,
                row.t,
                row.rho,
                method,
                stats.accuracy_pct().map(|a| format!("{a:.4}")).unwrap_or_default(),
                stats.correct,
                stats.wrong,
                stats.unresolved_tasks,
                stats.unresolved_answers,
                stats.failed_tasks,
                stats.denominator(),
                delta,
            );
        }
    }
    out
}
