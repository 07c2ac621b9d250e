//! Per-run metric reports and the strategy-by-campaign text tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{KldDirection, MeanStd, ProbabilityMapping};
use crate::assembler::SkippedTransition;
use crate::director::Strategy;

/// A metric value, or the reason it was not computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum MetricOutcome<T> {
    Ok { value: T },
    Skipped { reason: String },
}

impl<T> MetricOutcome<T> {
    pub fn skipped(reason: impl Into<String>) -> Self {
        MetricOutcome::Skipped { reason: reason.into() }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            MetricOutcome::Ok { value } => Some(value),
            MetricOutcome::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalWindow {
    pub offset_s: f64,
    pub length_s: f64,
    /// True when the track was shorter than the requested crop and was used whole.
    pub full_track_fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub kld_direction: KldDirection,
    pub probability_mapping: ProbabilityMapping,
    pub std_normalization: String,
    pub fad_segment_s: f64,
    pub kld_segment_s: f64,
    pub transition_half_window_s: f64,
    pub eval_window_minutes: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub campaign: String,
    pub strategy: Strategy,
    pub generated_track: String,
    pub eval_window: EvalWindow,
    pub settings: ReportSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fad_source_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kld_source_tag: Option<String>,
    pub fad: MetricOutcome<f64>,
    /// FAD of the campaign's original music against the same corpus.
    pub human_fad: MetricOutcome<f64>,
    pub story_alignment: MetricOutcome<MeanStd>,
    pub transition_smoothness: MetricOutcome<MeanStd>,
    #[serde(default)]
    pub skipped_transitions: Vec<SkippedTransition>,
}

const MISSING: &str = "-";

struct Table {
    title: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn render(&self, out: &mut String) {
        let cols = self.header.len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| {
                std::iter::once(&self.header[c])
                    .chain(self.rows.iter().map(|r| &r[c]))
                    .map(|s| s.chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| -> String {
            cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| {
                    let pad = w - cell.chars().count();
                    if i == 0 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1));
        let _ = writeln!(out, "{}", self.title);
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(out, "{}", line(&self.header));
        let _ = writeln!(out, "{rule}");
        for r in &self.rows {
            let _ = writeln!(out, "{}", line(r));
        }
        let _ = writeln!(out, "{rule}");
    }
}

fn campaigns(reports: &[MetricReport]) -> Vec<&str> {
    let mut seen: Vec<&str> = Vec::new();
    for r in reports {
        if !seen.contains(&r.campaign.as_str()) {
            seen.push(&r.campaign);
        }
    }
    seen
}

/// Last report for each (campaign, strategy) wins.
fn find<'a>(reports: &'a [MetricReport], campaign: &str, strategy: Strategy) -> Option<&'a MetricReport> {
    reports.iter().rev().find(|r| r.campaign == campaign && r.strategy == strategy)
}

fn strategy_header(extra: Option<&str>) -> Vec<String> {
    std::iter::once("TRPG")
        .chain(Strategy::ALL.iter().map(|s| s.short_label()))
        .chain(extra)
        .map(String::from)
        .collect()
}

/// Renders the three comparison tables: FAD (with the human column), mean
/// story-alignment KLD and mean transition KLD. Strategies are columns,
/// campaigns are rows, cells carry two decimals.
pub fn render_tables(reports: &[MetricReport]) -> String {
    let names = campaigns(reports);
    let scalar = |v: Option<&f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| MISSING.into());
    let pair = |v: Option<&MeanStd>| v.map(MeanStd::cell).unwrap_or_else(|| MISSING.into());

    let fad = Table {
        title: "FAD score (lower is better)",
        header: strategy_header(Some("Human")),
        rows: names
            .iter()
            .map(|c| {
                let mut row = vec![c.to_string()];
                row.extend(Strategy::ALL.iter().map(|&s| scalar(find(reports, c, s).and_then(|r| r.fad.value()))));
                let human = reports.iter().rev().filter(|r| r.campaign == *c).find_map(|r| r.human_fad.value());
                row.push(scalar(human));
                row
            })
            .collect(),
    };
    let per_strategy = |title, pick: fn(&MetricReport) -> Option<&MeanStd>| Table {
        title,
        header: strategy_header(None),
        rows: names
            .iter()
            .map(|c| {
                std::iter::once(c.to_string())
                    .chain(Strategy::ALL.iter().map(|&s| pair(find(reports, c, s).and_then(pick))))
                    .collect()
            })
            .collect(),
    };
    let alignment = per_strategy("Mean KL-divergence, story alignment (lower is better)", |r| {
        r.story_alignment.value()
    });
    let transitions = per_strategy("Mean transition KL-divergence (lower is better)", |r| {
        r.transition_smoothness.value()
    });

    let mut out = String::new();
    fad.render(&mut out);
    out.push('\n');
    alignment.render(&mut out);
    out.push('\n');
    transitions.render(&mut out);
    out
}

/// Tables plus the reasons for any skipped metric.
pub fn render_report(report: &MetricReport) -> String {
    let mut out = render_tables(std::slice::from_ref(report));
    let notes: Vec<(&str, &str)> = [
        ("FAD", &report.fad as &dyn SkipReason),
        ("Human FAD", &report.human_fad),
        ("Story alignment KLD", &report.story_alignment),
        ("Transition KLD", &report.transition_smoothness),
    ]
    .into_iter()
    .filter_map(|(name, m)| m.skip_reason().map(|r| (name, r)))
    .collect();
    if !notes.is_empty() || !report.skipped_transitions.is_empty() || report.eval_window.note.is_some() {
        out.push_str("\nNotes\n");
    }
    for (name, reason) in notes {
        let _ = writeln!(out, "  {name}: skipped: {reason}");
    }
    for s in &report.skipped_transitions {
        let _ = writeln!(out, "  transition at {:.3} s skipped: {}", s.t, s.reason);
    }
    if let Some(note) = &report.eval_window.note {
        let _ = writeln!(out, "  evaluation window: {note}");
    }
    out
}

trait SkipReason {
    fn skip_reason(&self) -> Option<&str>;
}

impl<T> SkipReason for MetricOutcome<T> {
    fn skip_reason(&self) -> Option<&str> {
        match self {
            MetricOutcome::Skipped { reason } => Some(reason),
            MetricOutcome::Ok { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(campaign: &str, strategy: Strategy, fad: f64, kld: (f64, f64), tr: (f64, f64)) -> MetricReport {
        MetricReport {
            campaign: campaign.into(),
            strategy,
            generated_track: "x.wav".into(),
            eval_window: EvalWindow { offset_s: 0.0, length_s: 1800.0, full_track_fallback: false, note: None },
            settings: ReportSettings {
                kld_direction: KldDirection::ReferenceFirst,
                probability_mapping: ProbabilityMapping::Softmax,
                std_normalization: "population".into(),
                fad_segment_s: 30.0,
                kld_segment_s: 10.0,
                transition_half_window_s: 10.0,
                eval_window_minutes: 30.0,
                seed: 0,
            },
            fad_source_tag: None,
            kld_source_tag: None,
            fad: MetricOutcome::Ok { value: fad },
            human_fad: MetricOutcome::skipped("no reference campaign audio"),
            story_alignment: MetricOutcome::Ok { value: MeanStd { mean: kld.0, std: kld.1, n: 10 } },
            transition_smoothness: MetricOutcome::Ok { value: MeanStd { mean: tr.0, std: tr.1, n: 3 } },
            skipped_transitions: vec![],
        }
    }

    #[test]
    fn table_cells_and_columns() {
        let mut e = report("COTW", Strategy::Emotion, 5.99, (3.34, 1.89), (1.33, 1.19));
        e.human_fad = MetricOutcome::Ok { value: 3.0 };
        let reports = vec![e, report("COTW", Strategy::DescriptionContinuation, 5.82, (4.23, 2.51), (2.19, 1.93))];
        let text = render_tables(&reports);
        let fad_header = text.lines().nth(2).unwrap();
        let cols: Vec<&str> = fad_header.split_whitespace().collect();
        assert_eq!(cols, ["TRPG", "B", "E", "D", "DC", "Human"]);
        let fad_row: Vec<&str> = text.lines().nth(4).unwrap().split_whitespace().collect();
        assert_eq!(fad_row, ["COTW", "-", "5.99", "-", "5.82", "3.00"]);
        assert!(text.contains("3.34±1.89"));
        assert!(text.contains("1.33±1.19"));
        assert!(text.contains("4.23±2.51"));
    }

    #[test]
    fn skipped_metrics_are_noted_not_zeroed() {
        let mut r = report("OSNI", Strategy::Baseline, 0.0, (1.0, 0.5), (0.2, 0.1));
        r.fad = MetricOutcome::skipped("no reference corpus");
        let text = render_report(&r);
        assert!(text.contains("FAD: skipped: no reference corpus"));
        let fad_row: Vec<&str> = text.lines().nth(4).unwrap().split_whitespace().collect();
        assert_eq!(fad_row[1], "-");
    }

    #[test]
    fn outcome_json_shape() {
        let ok: MetricOutcome<f64> = MetricOutcome::Ok { value: 1.5 };
        assert_eq!(serde_json::to_string(&ok).unwrap(), r#"{"status":"ok","value":1.5}"#);
        let skip: MetricOutcome<f64> = MetricOutcome::skipped("no reference corpus");
        assert_eq!(
            serde_json::to_string(&skip).unwrap(),
            r#"{"status":"skipped","reason":"no reference corpus"}"#
        );
    }
}
