//! Report rendering: heatmap-annotated source listings (HTML and ANSI)
//! and campaign coverage tables.
//!
//! Attention weights are discretized into five equal-width bins over
//! [0, 1]; failing-side weights render in reds, passing-side weights in
//! blues. Rendered reports are presentation only and carry a digest of
//! the localization JSON they were generated from.

use crate::explainer::{LocalizationResult, Scenario};
use crate::frontend::{print_expr_annotated, Design, Statement, StatementId};
use crate::mutator::{Mutation, MutationKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ReportError {
    #[error("heatmap references statement {0} not present in the design")]
    DanglingStatement(StatementId),
    #[error("no campaign records")]
    NoRecords,
}

pub const BIN_COUNT: usize = 5;

/// Bin index in 0..5 for a weight in [0, 1].
pub fn weight_bin(w: f64) -> usize {
    ((w * BIN_COUNT as f64) as usize).min(BIN_COUNT - 1)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn statement_of(design: &Design, id: StatementId) -> Result<&Statement, ReportError> {
    design.statement(id).ok_or(ReportError::DanglingStatement(id))
}

fn annotate_statement(
    stmt: &Statement,
    weights: &[f64],
    mut span: impl FnMut(usize, &str) -> String,
) -> String {
    let assign = match stmt.kind {
        crate::frontend::AssignKind::Blocking => "=",
        crate::frontend::AssignKind::Nonblocking => "<=",
    };
    let rhs = print_expr_annotated(&stmt.rhs, &mut |idx, name| {
        let bin = weights.get(idx).copied().map(weight_bin).unwrap_or(0);
        span(bin, name)
    });
    format!("{} {assign} {rhs};", stmt.lhs)
}

/// Standalone HTML report: full source listing plus one block per heatmap
/// entry with red-annotated failing weights, blue-annotated passing
/// weights when available, and the suspiciousness score.
pub fn render_html(
    result: &LocalizationResult,
    design: &Design,
    source: &str,
    json_digest: &str,
) -> Result<String, ReportError> {
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\"/>\n");
    let _ = writeln!(out, "<title>localization report: {}</title>", esc(&result.target));
    out.push_str("<style>\n");
    let reds = ["#fff5f0", "#fcbba1", "#fb6a4a", "#de2d26", "#a50f15"];
    let blues = ["#f7fbff", "#c6dbef", "#6baed6", "#3182bd", "#08519c"];
    for (i, color) in reds.iter().enumerate() {
        let fg = if i >= 3 { "#ffffff" } else { "#000000" };
        let _ = writeln!(out, ".r{i} {{ background: {color}; color: {fg}; }}");
    }
    for (i, color) in blues.iter().enumerate() {
        let fg = if i >= 3 { "#ffffff" } else { "#000000" };
        let _ = writeln!(out, ".b{i} {{ background: {color}; color: {fg}; }}");
    }
    out.push_str("body { font-family: monospace; } .score { font-weight: bold; }\n</style>\n</head>\n<body>\n");
    let _ = writeln!(
        out,
        "<h1>Suspicious statements for <code>{}</code></h1>",
        esc(&result.target)
    );
    let _ = writeln!(
        out,
        "<p>threshold {:.2}, {} runs x {} cycles, seed {}</p>",
        result.threshold, result.runs, result.cycles, result.seed
    );

    if result.heatmap.entries.is_empty() {
        let _ = writeln!(
            out,
            "<p>no suspicious statements above threshold {:.2}</p>",
            result.threshold
        );
    } else {
        out.push_str("<ol>\n");
        for entry in &result.heatmap.entries {
            let stmt = statement_of(design, entry.statement)?;
            let failing = annotate_statement(stmt, &entry.f_weights, |bin, name| {
                format!("<span class=\"r{bin}\">{}</span>", esc(name))
            });
            let _ = write!(
                out,
                "<li><div>line {}: <span class=\"score\">score {:.3}</span> ({})</div>\
                 <div>failing: <code>{failing}</code></div>",
                entry.statement.line,
                entry.score,
                scenario_text(entry.scenario),
            );
            if let Some(c_weights) = &entry.c_weights {
                let passing = annotate_statement(stmt, c_weights, |bin, name| {
                    format!("<span class=\"b{bin}\">{}</span>", esc(name))
                });
                let _ = write!(out, "<div>passing: <code>{passing}</code></div>");
            }
            out.push_str("</li>\n");
        }
        out.push_str("</ol>\n");
    }

    out.push_str("<h2>Source</h2>\n<pre>\n");
    for (i, line) in source.lines().enumerate() {
        let marker = if result
            .heatmap
            .entries
            .iter()
            .any(|e| e.statement.line as usize == i + 1)
        {
            "&gt;"
        } else {
            " "
        };
        let _ = writeln!(out, "{marker} {:>3}  {}", i + 1, esc(line));
    }
    out.push_str("</pre>\n");
    let _ = writeln!(out, "<p class=\"meta\">generated-from sha256:{json_digest}</p>");
    out.push_str("</body>\n</html>\n");
    Ok(out)
}

fn scenario_text(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::FailingOnly => "executed only in failing traces",
        Scenario::Both => "attention differs between failing and passing traces",
    }
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Terminal rendering with 256-color backgrounds, same bins as HTML.
pub fn render_ansi(result: &LocalizationResult, design: &Design) -> Result<String, ReportError> {
    const RED_BINS: [u8; 5] = [224, 217, 210, 203, 196];
    const BLUE_BINS: [u8; 5] = [153, 117, 75, 69, 27];
    let paint = |bins: [u8; 5]| {
        move |bin: usize, name: &str| format!("\x1b[48;5;{}m{name}\x1b[0m", bins[bin])
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "suspicious statements for `{}` (threshold {:.2}, {} runs x {} cycles)",
        result.target, result.threshold, result.runs, result.cycles
    );
    if result.heatmap.entries.is_empty() {
        let _ = writeln!(out, "no suspicious statements above threshold {:.2}", result.threshold);
        return Ok(out);
    }
    for (rank, entry) in result.heatmap.entries.iter().enumerate() {
        let stmt = statement_of(design, entry.statement)?;
        let failing = annotate_statement(stmt, &entry.f_weights, paint(RED_BINS));
        let _ = writeln!(
            out,
            "{:>2}. line {:<4} score {:.3}  F: {failing}",
            rank + 1,
            entry.statement.line,
            entry.score
        );
        if let Some(c_weights) = &entry.c_weights {
            let passing = annotate_statement(stmt, c_weights, paint(BLUE_BINS));
            let _ = writeln!(out, "                 C: {passing}", );
        }
    }
    Ok(out)
}

/// One campaign entry: a mutation, its observability, and where the
/// mutated statement ranked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub mutant: String,
    pub design: String,
    pub target: String,
    pub mutation: Mutation,
    pub observable: bool,
    pub localized: bool,
    pub rank: Option<usize>,
    pub heatmap_size: usize,
}

impl CampaignRecord {
    pub fn validate(&self) -> bool {
        !self.localized || self.observable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub design: String,
    pub target: String,
    /// Injected counts by kind: negation, substitution, misuse.
    pub injected: [usize; 3],
    pub total: usize,
    pub observable: usize,
    pub localized: usize,
    /// localized / observable; None when nothing was observable.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub groups: Vec<CoverageRow>,
    pub overall: CoverageRow,
}

fn kind_slot(kind: MutationKind) -> usize {
    match kind {
        MutationKind::Negation => 0,
        MutationKind::OperationSubstitution => 1,
        MutationKind::VariableMisuse => 2,
    }
}

/// Per-(design, target) counts plus an overall row; coverage is the
/// localized share of observable bugs.
pub fn compute_coverage(records: &[CampaignRecord]) -> Result<CoverageReport, ReportError> {
    if records.is_empty() {
        return Err(ReportError::NoRecords);
    }
    let mut groups: BTreeMap<(String, String), CoverageRow> = BTreeMap::new();
    for record in records {
        debug_assert!(record.validate(), "localized implies observable");
        let row = groups
            .entry((record.design.clone(), record.target.clone()))
            .or_insert_with(|| CoverageRow {
                design: record.design.clone(),
                target: record.target.clone(),
                injected: [0; 3],
                total: 0,
                observable: 0,
                localized: 0,
                coverage: None,
            });
        row.injected[kind_slot(record.mutation.kind)] += 1;
        row.total += 1;
        row.observable += record.observable as usize;
        row.localized += record.localized as usize;
    }
    let mut overall = CoverageRow {
        design: "overall".into(),
        target: "-".into(),
        injected: [0; 3],
        total: 0,
        observable: 0,
        localized: 0,
        coverage: None,
    };
    let mut rows: Vec<CoverageRow> = groups.into_values().collect();
    for row in &mut rows {
        for k in 0..3 {
            overall.injected[k] += row.injected[k];
        }
        overall.total += row.total;
        overall.observable += row.observable;
        overall.localized += row.localized;
        row.coverage =
            (row.observable > 0).then(|| row.localized as f64 / row.observable as f64);
    }
    overall.coverage =
        (overall.observable > 0).then(|| overall.localized as f64 / overall.observable as f64);
    Ok(CoverageReport { groups: rows, overall })
}

pub fn render_coverage_text(report: &CoverageReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:<10} {:>8} {:>12} {:>8} {:>7} {:>10} {:>9}  {}",
        "design", "target", "negation", "substitution", "misuse", "total", "observable", "localized", "top-1"
    );
    let fmt_row = |row: &CoverageRow| -> String {
        let coverage = match row.coverage {
            Some(c) => format!("{:.1}% ({}/{})", c * 100.0, row.localized, row.observable),
            None => "n/a".to_string(),
        };
        format!(
            "{:<16} {:<10} {:>8} {:>12} {:>8} {:>7} {:>10} {:>9}  {}",
            row.design,
            row.target,
            row.injected[0],
            row.injected[1],
            row.injected[2],
            row.total,
            row.observable,
            row.localized,
            coverage
        )
    };
    for row in &report.groups {
        let _ = writeln!(out, "{}", fmt_row(row));
    }
    let _ = writeln!(out, "{}", fmt_row(&report.overall));
    out
}
