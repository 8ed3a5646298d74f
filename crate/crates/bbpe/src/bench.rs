//! Compression measurement over file manifests.
//!
//! Every file is encoded under one or more vocabularies; the report carries
//! per-file bytes/token plus per-group and overall means. Group means are
//! the unweighted arithmetic mean of per-file ratios (mean over files, not
//! total-bytes over total-tokens); both conventions matter, so the row data
//! needed to recompute either is always present.

use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::encode;
use crate::corpus::{Label, ManifestEntry};
use crate::error::{BbpeError, Result};
use crate::vocab::Vocabulary;

/// Token count and ratio for one file under one member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberResult {
    pub tokens: u64,
    pub bytes_per_token: f64,
}

/// One benchmarked file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRow {
    pub path: String,
    pub platform: String,
    pub format: String,
    pub label: String,
    /// Display group in the reporting convention: benign rows group by
    /// platform, malicious rows as `Malware (<platform> <format>)`.
    pub group: String,
    pub bytes: u64,
    /// One slot per member, in report member order; `None` when the file
    /// failed to read.
    pub per_member: Vec<Option<MemberResult>>,
    pub error: Option<String>,
}

/// Mean ratios for one group (or the overall row).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub n: usize,
    /// Mean bytes/token per member, report member order.
    pub mean_bytes_per_token: Vec<f64>,
    /// Bytes covered by a `window_tokens`-token context at each mean ratio.
    pub window_bytes: Vec<f64>,
}

/// Full compression report over a manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionReport {
    /// Member labels, ascending vocabulary size (e.g. `"4096"`).
    pub member_labels: Vec<String>,
    pub window_tokens: u64,
    pub rows: Vec<FileRow>,
    pub groups: Vec<GroupStats>,
    pub overall: GroupStats,
    /// Files that could not be read (also flagged on their rows).
    pub errors: usize,
}

fn display_group(entry: &ManifestEntry) -> String {
    let platform = entry.platform.to_string();
    match entry.label {
        Label::Malicious => {
            let format = entry.file_format.to_string().replace('_', " ");
            format!("Malware ({platform} {format})")
        }
        _ => {
            let mut chars = platform.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
                None => platform,
            }
        }
    }
}

/// Encodes every manifest file under every member and aggregates.
///
/// Files encode in parallel; rows are sorted by path so the report is
/// byte-identical across runs. Unreadable files become error rows and are
/// excluded from the means.
pub fn bench_files(
    entries: &[ManifestEntry],
    members: &[&Vocabulary],
    window_tokens: u64,
) -> Result<CompressionReport> {
    if members.is_empty() {
        return Err(BbpeError::Usage(
            "bench needs at least one vocabulary".to_string(),
        ));
    }
    let member_labels: Vec<String> = members
        .iter()
        .map(|m| m.total_size().to_string())
        .collect();

    let mut rows: Vec<FileRow> = entries
        .par_iter()
        .map(|entry| {
            let base = FileRow {
                path: entry.path.display().to_string(),
                platform: entry.platform.to_string(),
                format: entry.file_format.to_string(),
                label: entry.label.to_string(),
                group: display_group(entry),
                bytes: 0,
                per_member: vec![None; members.len()],
                error: None,
            };
            let data = match fs::read(&entry.path) {
                Ok(data) if data.is_empty() => {
                    return FileRow {
                        error: Some("file is empty".to_string()),
                        ..base
                    }
                }
                Err(e) => {
                    return FileRow {
                        error: Some(e.to_string()),
                        ..base
                    }
                }
                Ok(data) => data,
            };
            let per_member = members
                .iter()
                .map(|member| {
                    let encoded = encode(&data, member);
                    Some(MemberResult {
                        tokens: encoded.ids.len() as u64,
                        bytes_per_token: data.len() as f64 / encoded.ids.len() as f64,
                    })
                })
                .collect();
            FileRow {
                bytes: data.len() as u64,
                per_member,
                ..base
            }
        })
        .collect();
    rows.sort_by(|a, b| a.path.cmp(&b.path));

    let mut group_names: Vec<String> = rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.group.clone())
        .collect();
    group_names.sort();
    group_names.dedup();

    let stats_for = |name: Option<&str>| -> GroupStats {
        let selected: Vec<&FileRow> = rows
            .iter()
            .filter(|r| r.error.is_none() && name.map_or(true, |g| r.group == g))
            .collect();
        let n = selected.len();
        let mean_bytes_per_token: Vec<f64> = (0..members.len())
            .map(|m| {
                if n == 0 {
                    return 0.0;
                }
                selected
                    .iter()
                    .map(|r| r.per_member[m].expect("no error").bytes_per_token)
                    .sum::<f64>()
                    / n as f64
            })
            .collect();
        let window_bytes = mean_bytes_per_token
            .iter()
            .map(|bpt| bpt * window_tokens as f64)
            .collect();
        GroupStats {
            group: name.unwrap_or("Overall").to_string(),
            n,
            mean_bytes_per_token,
            window_bytes,
        }
    };

    let groups: Vec<GroupStats> = group_names.iter().map(|g| stats_for(Some(g))).collect();
    let overall = stats_for(None);
    let errors = rows.iter().filter(|r| r.error.is_some()).count();

    Ok(CompressionReport {
        member_labels,
        window_tokens,
        rows,
        groups,
        overall,
        errors,
    })
}

impl CompressionReport {
    /// Aligned text table: one group row per line, one column per member,
    /// then the overall row.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<28} {:>4}", "group", "n"));
        for label in &self.member_labels {
            out.push_str(&format!(" {label:>10}"));
        }
        out.push('\n');
        for stats in self.groups.iter().chain([&self.overall]) {
            out.push_str(&format!("{:<28} {:>4}", stats.group, stats.n));
            for mean in &stats.mean_bytes_per_token {
                out.push_str(&format!(" {mean:>10.3}"));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "window: {} tokens cover ",
            self.window_tokens
        ));
        let windows: Vec<String> = self
            .overall
            .window_bytes
            .iter()
            .zip(&self.member_labels)
            .map(|(bytes, label)| format!("{:.0} KB @{label}", bytes / 1024.0))
            .collect();
        out.push_str(&windows.join(", "));
        out.push('\n');
        if self.errors > 0 {
            out.push_str(&format!("errors: {} file(s) skipped\n", self.errors));
        }
        out
    }

    /// Delimiter-separated per-file rows for external plotting.
    pub fn render_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("path,group,platform,format,label,bytes");
        for label in &self.member_labels {
            out.push_str(&format!(",tokens_{label},bytes_per_token_{label}"));
        }
        out.push_str(",error\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                row.path, row.group, row.platform, row.format, row.label, row.bytes
            ));
            for result in &row.per_member {
                match result {
                    Some(r) => out.push_str(&format!(",{},{:.6}", r.tokens, r.bytes_per_token)),
                    None => out.push_str(",,"),
                }
            }
            out.push_str(&format!(
                ",{}\n",
                row.error.as_deref().unwrap_or_default()
            ));
        }
        out
    }
}

/// Head-to-head outcome for one file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileWinner {
    pub path: String,
    /// Member label of the winner, or `"tie"`.
    pub winner: String,
}

/// Comparison between two named members of one report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberComparison {
    pub member_a: String,
    pub member_b: String,
    pub a_wins: usize,
    pub b_wins: usize,
    pub ties: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Relative change in mean bytes/token going from a to b.
    pub relative_improvement: f64,
    pub per_file: Vec<FileWinner>,
}

impl MemberComparison {
    pub fn render_text(&self) -> String {
        format!(
            "{} vs {}: {} wins / {} wins / {} ties; mean {:.3} -> {:.3} ({:+.1}%)\n",
            self.member_a,
            self.member_b,
            self.a_wins,
            self.b_wins,
            self.ties,
            self.mean_a,
            self.mean_b,
            100.0 * self.relative_improvement
        )
    }
}

/// Compares two members of a report by per-file token counts.
pub fn compare_members(
    report: &CompressionReport,
    member_a: &str,
    member_b: &str,
) -> Result<MemberComparison> {
    if report.member_labels.len() < 2 {
        return Err(BbpeError::Usage(
            "comparison needs a report with at least two members".to_string(),
        ));
    }
    let index_of = |label: &str| -> Result<usize> {
        report
            .member_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| {
                BbpeError::Usage(format!(
                    "member {label:?} not in report (has: {})",
                    report.member_labels.join(", ")
                ))
            })
    };
    let a = index_of(member_a)?;
    let b = index_of(member_b)?;

    let mut a_wins = 0usize;
    let mut b_wins = 0usize;
    let mut ties = 0usize;
    let mut per_file = Vec::new();
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    let mut n = 0usize;
    for row in &report.rows {
        let (Some(ra), Some(rb)) = (row.per_member[a], row.per_member[b]) else {
            continue;
        };
        n += 1;
        sum_a += ra.bytes_per_token;
        sum_b += rb.bytes_per_token;
        let winner = match ra.tokens.cmp(&rb.tokens) {
            std::cmp::Ordering::Greater => {
                b_wins += 1;
                member_b.to_string()
            }
            std::cmp::Ordering::Less => {
                a_wins += 1;
                member_a.to_string()
            }
            std::cmp::Ordering::Equal => {
                ties += 1;
                "tie".to_string()
            }
        };
        per_file.push(FileWinner {
            path: row.path.clone(),
            winner,
        });
    }
    if n == 0 {
        return Err(BbpeError::Usage(
            "comparison needs at least one successfully benchmarked file".to_string(),
        ));
    }
    let mean_a = sum_a / n as f64;
    let mean_b = sum_b / n as f64;
    Ok(MemberComparison {
        member_a: member_a.to_string(),
        member_b: member_b.to_string(),
        a_wins,
        b_wins,
        ties,
        mean_a,
        mean_b,
        relative_improvement: (mean_b - mean_a) / mean_a,
        per_file,
    })
}
