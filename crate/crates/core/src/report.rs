//! Group comparison report over exported ratings and participant profiles.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{ProfileRow, RatingRow};
use crate::nudge::NudgeKind;
use crate::stats::ols::{ols_fit, Column, Formula, Frame, RegressionFit, Term};
use crate::stats::{
    cohens_d, cronbach_alpha, item_total_correlations, mann_whitney_u, stars, EffectSize, ItemTotal, MwuResult,
};
use crate::survey::{apply_median_splits, CohortMedians, Group, Ideology, ParticipantProfile, SplitLabel};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no ratings to report on")]
    Empty,
    #[error(transparent)]
    Score(#[from] crate::survey::ScoreError),
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellComparison {
    pub kind: NudgeKind,
    pub label: &'static str,
    pub control: Option<GroupSummary>,
    pub treatment: Option<GroupSummary>,
    /// Treatment (first sample) against control.
    pub mwu: Option<MwuResult>,
    /// Signed treatment minus control.
    pub effect: Option<EffectSize>,
    pub stars: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReliabilitySummary {
    pub n: usize,
    pub alpha: f64,
    pub item_total: Vec<ItemTotal>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSummary {
    pub median: Option<f64>,
    pub high: usize,
    pub low: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub n_ratings: usize,
    pub n_participants: usize,
    pub cells: Vec<CellComparison>,
    pub reliability: Option<ReliabilitySummary>,
    pub cynicism: SplitSummary,
    pub skepticism: SplitSummary,
    pub ideology: BTreeMap<String, usize>,
    pub regression: Option<RegressionFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression_error: Option<String>,
}

fn summarize(xs: &[f64]) -> Option<GroupSummary> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (n > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt());
    Some(GroupSummary { n, mean, sd })
}

/// Base model: z-scored credibility on nudge kind, group, their
/// interaction and interest.
pub fn base_model_formula() -> Formula {
    Formula::new(
        "z_score",
        vec![
            Term::factor("kind", "Reliable"),
            Term::factor("group", "Control"),
            Term::interaction(vec![Term::factor("kind", "Reliable"), Term::factor("group", "Control")]),
            Term::numeric("interest"),
        ],
    )
}

/// Frame with `z_score`, `raw_score`, `interest`, `kind`, `group` and
/// `participant` columns.
pub fn ratings_frame(rows: &[RatingRow]) -> Frame {
    Frame::new()
        .with("z_score", Column::Numeric(rows.iter().map(|r| r.z_score).collect()))
        .with("raw_score", Column::Numeric(rows.iter().map(|r| r.raw_score).collect()))
        .with("interest", Column::Numeric(rows.iter().map(|r| f64::from(r.interest)).collect()))
        .with(
            "kind",
            Column::Factor(rows.iter().map(|r| r.nudge_kind.as_str().to_string()).collect()),
        )
        .with("group", Column::Factor(rows.iter().map(|r| r.group.to_string()).collect()))
        .with(
            "participant",
            Column::Factor(rows.iter().map(|r| r.participant_id.clone()).collect()),
        )
}

pub fn build_report(ratings: &[RatingRow], profiles: &[ProfileRow]) -> Result<Report, ReportError> {
    let excluded: HashMap<&str, bool> = profiles
        .iter()
        .map(|p| (p.participant_id.as_str(), p.excluded))
        .collect();
    let rows: Vec<RatingRow> = ratings
        .iter()
        .filter(|r| !excluded.get(r.participant_id.as_str()).copied().unwrap_or(false))
        .cloned()
        .collect();
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }

    let cells = NudgeKind::NUDGES
        .iter()
        .map(|&kind| {
            let scores = |g: Group| -> Vec<f64> {
                rows.iter()
                    .filter(|r| r.nudge_kind == kind && r.group == g)
                    .map(|r| r.raw_score)
                    .collect()
            };
            let (c, t) = (scores(Group::Control), scores(Group::Treatment));
            let mwu = (!c.is_empty() && !t.is_empty()).then(|| mann_whitney_u(&t, &c).ok()).flatten();
            let effect = cohens_d(&t, &c).ok();
            CellComparison {
                kind,
                label: kind.short_label(),
                control: summarize(&c),
                treatment: summarize(&t),
                stars: mwu.map_or("", |m| stars(m.p_two_sided)),
                mwu,
                effect,
            }
        })
        .collect();

    let items: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.items().iter().map(|&v| f64::from(v)).collect())
        .collect();
    let reliability = cronbach_alpha(&items).ok().map(|alpha| ReliabilitySummary {
        n: items.len(),
        alpha,
        item_total: item_total_correlations(&items).unwrap_or_default(),
    });

    let mut scored: Vec<ParticipantProfile> = profiles
        .iter()
        .map(|p| ParticipantProfile::score(p.to_input(), p.group))
        .collect::<Result<_, _>>()?;
    let medians: CohortMedians = apply_median_splits(&mut scored);
    let split = |median: Option<f64>, get: fn(&ParticipantProfile) -> Option<SplitLabel>| SplitSummary {
        median,
        high: scored.iter().filter(|p| get(p) == Some(SplitLabel::High)).count(),
        low: scored.iter().filter(|p| get(p) == Some(SplitLabel::Low)).count(),
    };
    let cynicism = split(medians.cynicism, |p| p.cynicism_label);
    let skepticism = split(medians.skepticism, |p| p.skepticism_label);
    let mut ideology = BTreeMap::new();
    for p in scored.iter().filter(|p| !p.excluded) {
        let key = match p.ideology_bucket {
            Ideology::Republican => "Republican",
            Ideology::Independent => "Independent",
            Ideology::Democrat => "Democrat",
        };
        *ideology.entry(key.to_string()).or_insert(0) += 1;
    }

    let (regression, regression_error) = match ols_fit(&ratings_frame(&rows), &base_model_formula()) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let mut participants: Vec<&str> = rows.iter().map(|r| r.participant_id.as_str()).collect();
    participants.sort_unstable();
    participants.dedup();

    Ok(Report {
        n_ratings: rows.len(),
        n_participants: participants.len(),
        cells,
        reliability,
        cynicism,
        skepticism,
        ideology,
        regression,
        regression_error,
    })
}

impl Report {
    pub fn cell(&self, kind: NudgeKind) -> Option<&CellComparison> {
        self.cells.iter().find(|c| c.kind == kind)
    }

    /// Plain-text group comparison table. The table shows the smaller of
    /// the two U statistics and |d|; the detail
    /// lines below it keep the treatment-side U and the signed d.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let fmt_mean = |g: &Option<GroupSummary>| g.as_ref().map_or("N/A".to_string(), |g| format!("{:.2}", g.mean));
        let _ = writeln!(out, "{:<6}| {:>10} | {:>10} | Bet. Subj. MWU-test", "", "Control", "Treatment");
        let _ = writeln!(out, "{:<6}| {:>10} | {:>10} | U (Cohen's d)", "", "Avg. Cred.", "Avg. Cred.");
        let _ = writeln!(out, "{}", "-".repeat(60));
        for c in &self.cells {
            let test = match (&c.mwu, &c.effect) {
                (Some(m), Some(e)) => format!("{:.1}({:.3}){}", m.u_statistic.min(m.u_other), e.cohens_d.abs(), c.stars),
                (Some(m), None) => format!("{:.1}(N/A){}", m.u_statistic.min(m.u_other), c.stars),
                _ => "N/A".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<6}| {:>10} | {:>10} | {}",
                c.label,
                fmt_mean(&c.control),
                fmt_mean(&c.treatment),
                test
            );
        }
        let _ = writeln!(out, "{}", "-".repeat(60));
        let n_of = |g: Group| {
            self.cells
                .iter()
                .map(|c| match g {
                    Group::Control => c.control.as_ref().map_or(0, |s| s.n),
                    Group::Treatment => c.treatment.as_ref().map_or(0, |s| s.n),
                })
                .max()
                .unwrap_or(0)
        };
        let _ = writeln!(out, "{:<6}| {:>10} | {:>10} |", "n", n_of(Group::Control), n_of(Group::Treatment));
        let _ = writeln!(out);
        for c in &self.cells {
            if let Some(m) = &c.mwu {
                let _ = writeln!(
                    out,
                    "{}: U = {:.1}, rank sum = {:.1}, Z = {:.3}, p = {:.3e}, d = {}",
                    c.label,
                    m.u_statistic,
                    m.rank_sum_a,
                    m.z,
                    m.p_two_sided,
                    c.effect.map_or("N/A".into(), |e| format!("{:.3}", e.cohens_d)),
                );
            }
        }
        let _ = writeln!(out);
        match &self.reliability {
            Some(r) => {
                let _ = writeln!(out, "Credibility scale: Cronbach's alpha = {:.3} (n = {})", r.alpha, r.n);
                for (i, it) in r.item_total.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "  item{}: item-total r = {:.3}, corrected r = {:.3}",
                        i + 1,
                        it.uncorrected,
                        it.corrected
                    );
                }
            }
            None => {
                let _ = writeln!(out, "Credibility scale: Cronbach's alpha = N/A");
            }
        }
        let fmt_split = |name: &str, s: &SplitSummary| match s.median {
            Some(m) => format!("{name}: median = {m:.2}, high = {}, low = {}", s.high, s.low),
            None => format!("{name}: N/A"),
        };
        let _ = writeln!(out, "{}", fmt_split("Media skepticism", &self.skepticism));
        let _ = writeln!(out, "{}", fmt_split("Political cynicism", &self.cynicism));
        if !self.ideology.is_empty() {
            let parts: Vec<String> = self.ideology.iter().map(|(k, v)| format!("{k} {v}")).collect();
            let _ = writeln!(out, "Ideology: {}", parts.join(", "));
        }
        if let Some(fit) = &self.regression {
            let _ = writeln!(out);
            let _ = writeln!(out, "Base model (z-scored credibility), n = {}, adj. R^2 = {:.3}", fit.n, fit.adj_r_squared);
            for c in &fit.coefficients {
                let _ = writeln!(
                    out,
                    "  {:<36} {:>8.3} (SE {:.3}){}",
                    c.name,
                    c.estimate,
                    c.std_error,
                    stars(c.p)
                );
            }
        } else if let Some(e) = &self.regression_error {
            let _ = writeln!(out, "\nBase model: N/A ({e})");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pid: &str, group: Group, kind: NudgeKind, score: f64) -> RatingRow {
        RatingRow {
            participant_id: pid.into(),
            post_id: format!("{}-{}", kind.as_str(), pid),
            group,
            nudge_kind: kind,
            item1: 3,
            item2: 4,
            item3: 3,
            item4: 2,
            item5: 3,
            interest: 3,
            raw_score: score,
            z_score: score,
        }
    }

    #[test]
    fn single_group_marks_tests_na() {
        let rows: Vec<RatingRow> = (0..6)
            .map(|i| row(&format!("p{i}"), Group::Control, NudgeKind::NUDGES[i % 3], i as f64))
            .collect();
        let report = build_report(&rows, &[]).unwrap();
        assert!(report.cells.iter().all(|c| c.mwu.is_none() && c.treatment.is_none()));
        let text = report.render_text();
        assert!(text.contains("N/A"));
        assert!(report.regression.is_none());
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(build_report(&[], &[]), Err(ReportError::Empty)));
    }
}
