//! Report emission: per-attempt CSV, per-cell summary CSV, and a markdown
//! table with one stat column group per head x target-kind combination,
//! plus the head-vs-head paired t-tests.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::matrix::{AttemptRecord, Head};
use crate::harness::stats::{compute_stats, paired_ttest, CellStats, PairedTTest};
use crate::lots::FailureReason;
use crate::openmax::Label;
use crate::targets::TargetKind;

pub const ATTEMPTS_CSV: &str = "attempts.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const REPORT_MD: &str = "report.md";

const ATTEMPT_HEADER: &str =
    "probe,head,target_kind,target_class,success,steps_used,achieved,certainty,pass,failure_reason,png";

/// Failure tallies for one cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FailureCounts {
    pub step_limit: usize,
    pub gradient_stall: usize,
}

/// Stats for one (probe, head, target-kind) cell.
#[derive(Debug, Clone)]
pub struct CellReport {
    pub probe: String,
    pub head: Head,
    pub kind: TargetKind,
    pub stats: Option<CellStats>,
    pub failures: FailureCounts,
}

/// Comparison of PASS values between the two heads for one target kind,
/// paired by (probe, target class).
#[derive(Debug, Clone, Copy)]
pub struct HeadComparison {
    pub kind: TargetKind,
    pub pairs: usize,
    pub test: PairedTTest,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub cells: Vec<CellReport>,
    pub cav_comparison: Option<HeadComparison>,
    pub mav_comparison: Option<HeadComparison>,
}

impl ExperimentReport {
    pub fn cell(&self, probe: &str, head: Head, kind: TargetKind) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.probe == probe && c.head == head && c.kind == kind)
            .and_then(|c| c.stats.as_ref())
    }

    /// Pooled success rate over every attempt in a (head, kind) column.
    pub fn pooled_success_pct(&self, head: Head, kind: TargetKind) -> Option<f64> {
        let mut attempts = 0usize;
        let mut successes = 0usize;
        for cell in &self.cells {
            if cell.head == head && cell.kind == kind {
                if let Some(s) = cell.stats {
                    attempts += s.attempts;
                    successes += s.successes;
                }
            }
        }
        (attempts > 0).then(|| 100.0 * successes as f64 / attempts as f64)
    }
}

/// Builds the per-cell stats and head comparisons from attempt rows.
pub fn summarize(attempts: &[AttemptRecord]) -> Result<ExperimentReport> {
    let mut probes: Vec<String> = attempts.iter().map(|a| a.probe.clone()).collect();
    probes.sort();
    probes.dedup();

    let mut cells = Vec::new();
    for probe in &probes {
        for head in [Head::Softmax, Head::Openmax] {
            for kind in [TargetKind::Cav, TargetKind::Mav] {
                let mut rows = Vec::new();
                let mut failures = FailureCounts::default();
                for a in attempts
                    .iter()
                    .filter(|a| a.probe == *probe && a.head == head && a.kind == kind)
                {
                    rows.push((a.success, a.pass));
                    match a.failure {
                        Some(FailureReason::StepLimit) => failures.step_limit += 1,
                        Some(FailureReason::GradientStall) => failures.gradient_stall += 1,
                        None => {}
                    }
                }
                cells.push(CellReport {
                    probe: probe.clone(),
                    head,
                    kind,
                    stats: compute_stats(&rows),
                    failures,
                });
            }
        }
    }

    let comparison = |kind: TargetKind| -> Result<Option<HeadComparison>> {
        let mut softmax = Vec::new();
        let mut openmax = Vec::new();
        for a in attempts.iter().filter(|a| a.kind == kind && a.head == Head::Softmax) {
            let partner = attempts.iter().find(|b| {
                b.kind == kind
                    && b.head == Head::Openmax
                    && b.probe == a.probe
                    && b.target_class == a.target_class
            });
            if let Some(b) = partner {
                softmax.push(a.pass);
                openmax.push(b.pass);
            }
        }
        if softmax.len() < 2 {
            return Ok(None);
        }
        Ok(Some(HeadComparison {
            kind,
            pairs: softmax.len(),
            test: paired_ttest(&softmax, &openmax)?,
        }))
    };

    Ok(ExperimentReport {
        cells,
        cav_comparison: comparison(TargetKind::Cav)?,
        mav_comparison: comparison(TargetKind::Mav)?,
    })
}

pub fn write_attempts_csv(attempts: &[AttemptRecord], path: &Path) -> Result<()> {
    let mut out = String::from(ATTEMPT_HEADER);
    out.push('\n');
    for a in attempts {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            a.probe,
            a.head.as_str(),
            a.kind.as_str(),
            a.target_class,
            a.success,
            a.steps_used,
            a.achieved,
            a.certainty,
            a.pass,
            a.failure.map(|f| f.as_str()).unwrap_or(""),
            a.png
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_attempts_csv(path: &Path) -> Result<Vec<AttemptRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != ATTEMPT_HEADER {
        return Err(Error::Dataset(format!("unexpected attempts header {header:?}")));
    }
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(Error::Dataset(format!("bad attempts row {line:?}")));
        }
        let bad = |what: &str| Error::Dataset(format!("bad {what} in row {line:?}"));
        out.push(AttemptRecord {
            probe: f[0].to_string(),
            head: f[1].parse()?,
            kind: match f[2] {
                "cav" => TargetKind::Cav,
                "mav" => TargetKind::Mav,
                _ => return Err(bad("target_kind")),
            },
            target_class: f[3].parse().map_err(|_| bad("target_class"))?,
            success: f[4].parse().map_err(|_| bad("success"))?,
            steps_used: f[5].parse().map_err(|_| bad("steps_used"))?,
            achieved: if f[6] == "unknown" {
                Label::Unknown
            } else {
                Label::Known(f[6].parse().map_err(|_| bad("achieved"))?)
            },
            certainty: f[7].parse().map_err(|_| bad("certainty"))?,
            pass: f[8].parse().map_err(|_| bad("pass"))?,
            failure: match f[9] {
                "" => None,
                "step_limit" => Some(FailureReason::StepLimit),
                "gradient_stall" => Some(FailureReason::GradientStall),
                _ => return Err(bad("failure_reason")),
            },
            png: f[10].to_string(),
        });
    }
    Ok(out)
}

fn write_summary_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut out = String::from(
        "probe,head,target_kind,attempts,successes,success_rate_pct,pass_mean,pass_std,\
         step_limit_failures,gradient_stall_failures\n",
    );
    for cell in &report.cells {
        if let Some(s) = cell.stats {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                cell.probe,
                cell.head.as_str(),
                cell.kind.as_str(),
                s.attempts,
                s.successes,
                s.success_rate_pct,
                s.pass_mean,
                s.pass_std,
                cell.failures.step_limit,
                cell.failures.gradient_stall
            )
            .expect("string write");
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_markdown(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut probes: Vec<&str> = report.cells.iter().map(|c| c.probe.as_str()).collect();
    probes.dedup();

    let mut out = String::from("# Attack matrix\n\n");
    out.push_str("PASS mean +- std and success rate per probe, head and target kind.\n\n");
    out.push_str(
        "| probe | softmax / CAV | softmax / MAV | openmax / CAV | openmax / MAV |\n",
    );
    out.push_str("|---|---|---|---|---|\n");
    for probe in &probes {
        write!(out, "| {probe} |").expect("string write");
        for head in [Head::Softmax, Head::Openmax] {
            for kind in [TargetKind::Cav, TargetKind::Mav] {
                match report.cell(probe, head, kind) {
                    Some(s) => write!(
                        out,
                        " {:.3} +- {:.3} ({:.1}%) |",
                        s.pass_mean, s.pass_std, s.success_rate_pct
                    )
                    .expect("string write"),
                    None => out.push_str(" - |"),
                }
            }
        }
        out.push('\n');
    }
    out.push_str("\n## Softmax vs. openmax, paired by (probe, target class)\n\n");
    for cmp in [&report.cav_comparison, &report.mav_comparison].into_iter().flatten() {
        let note = if cmp.test.degenerate { " (degenerate: all differences zero)" } else { "" };
        writeln!(
            out,
            "- {} targets: t = {:.6}, p = {:.6e}, {} pairs{}",
            cmp.kind.as_str().to_uppercase(),
            cmp.test.t,
            cmp.test.p,
            cmp.pairs,
            note
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes the summary CSV and markdown table (the per-attempt CSV is written
/// by the matrix runner or carried over unchanged).
pub fn emit_report(report: &ExperimentReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_summary_csv(report, &out_dir.join(SUMMARY_CSV))?;
    write_markdown(report, &out_dir.join(REPORT_MD))?;
    Ok(())
}
