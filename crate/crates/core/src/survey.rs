//! Survey instruments: credibility ratings, participant profiles and the
//! scoring rules applied to them.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;

/// Item labels of the five-item credibility questionnaire.
pub const CREDIBILITY_ITEMS: [&str; 5] = [
    "Is/not biased",
    "Is/not fair",
    "Does/not tell the whole story",
    "Is/not accurate",
    "Can/not be trusted",
];

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoreError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("no answered items on the {0} scale")]
    MissingScale(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Control,
    Treatment,
}

impl std::str::FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "control" => Ok(Group::Control),
            "treatment" => Ok(Group::Treatment),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Group::Control => "Control",
            Group::Treatment => "Treatment",
        })
    }
}

fn check_likert(name: &str, v: u8) -> Result<(), ScoreError> {
    if (LIKERT_MIN..=LIKERT_MAX).contains(&v) {
        Ok(())
    } else {
        Err(ScoreError::Validation(format!("{name} = {v} is outside {LIKERT_MIN}..={LIKERT_MAX}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredibilityRating {
    pub post_id: String,
    pub participant_id: String,
    pub items: [u8; 5],
    pub interest: u8,
    #[serde(default = "Utc::now")]
    pub submitted_at: DateTime<Utc>,
    /// Reserved slot for an attention-check answer; not scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_check: Option<u8>,
}

impl CredibilityRating {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.post_id.trim().is_empty() || self.participant_id.trim().is_empty() {
            return Err(ScoreError::Validation("post_id and participant_id are required".into()));
        }
        for (i, &v) in self.items.iter().enumerate() {
            check_likert(&format!("item{}", i + 1), v)?;
        }
        if let Some(v) = self.attention_check {
            check_likert("attention_check", v)?;
        }
        check_likert("interest", self.interest)
    }
}

/// Mean of the five credibility items.
pub fn credibility_score(rating: &CredibilityRating) -> f64 {
    rating.items.iter().map(|&v| f64::from(v)).sum::<f64>() / rating.items.len() as f64
}

/// Z-scores with the sample (n - 1) standard deviation.
pub fn standardize(scores: &[f64]) -> Result<Vec<f64>, ScoreError> {
    if scores.len() < 2 {
        return Err(ScoreError::Validation("standardize needs at least two scores".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(ScoreError::DegenerateVariance("scores have zero variance".into()));
    }
    Ok(scores.iter().map(|x| (x - mean) / sd).collect())
}

/// Reverse-code a five-point answer.
pub fn reverse_likert(v: u8) -> u8 {
    LIKERT_MAX + LIKERT_MIN - v
}

fn scale_mean(name: &'static str, answers: impl Iterator<Item = Option<u8>>) -> Result<f64, ScoreError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, a) in answers.enumerate() {
        if let Some(v) = a {
            check_likert(&format!("{name} item {}", i + 1), v)?;
            sum += f64::from(v);
            n += 1;
        }
    }
    if n == 0 {
        return Err(ScoreError::MissingScale(name));
    }
    Ok(sum / n as f64)
}

/// Media skepticism: items 1-3 reverse-coded, item 4 as is; `None` is
/// "don't know" and is left out of the mean.
pub fn skepticism_score(items: [Option<u8>; 4]) -> Result<f64, ScoreError> {
    for (i, v) in items.iter().enumerate() {
        if let Some(v) = v {
            check_likert(&format!("skepticism item {}", i + 1), *v)?;
        }
    }
    scale_mean(
        "skepticism",
        items
            .iter()
            .enumerate()
            .map(|(i, v)| v.map(|v| if i < 3 { reverse_likert(v) } else { v })),
    )
}

/// Political cynicism: plain mean of the two items, "don't know" excluded.
pub fn cynicism_score(items: [Option<u8>; 2]) -> Result<f64, ScoreError> {
    scale_mean("cynicism", items.into_iter())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitLabel {
    High,
    Low,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Label each score High when strictly above the sample median.
pub fn median_split(scores: &[f64]) -> Result<(f64, Vec<SplitLabel>), ScoreError> {
    let m = median(scores).ok_or_else(|| ScoreError::Validation("median split of an empty list".into()))?;
    let labels = scores
        .iter()
        .map(|&s| if s > m { SplitLabel::High } else { SplitLabel::Low })
        .collect();
    Ok((m, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ideology {
    Republican,
    Independent,
    Democrat,
}

/// Collapse the seven-point scale (1 = strong Republican, 7 = strong Democrat).
pub fn ideology_bucket(raw: u8) -> Result<Ideology, ScoreError> {
    match raw {
        1..=3 => Ok(Ideology::Republican),
        4 => Ok(Ideology::Independent),
        5..=7 => Ok(Ideology::Democrat),
        _ => Err(ScoreError::Validation(format!("ideology {raw} is outside 1..=7"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    #[serde(default)]
    pub gender: String,
    #[serde(default)]
    pub age_band: String,
    #[serde(default)]
    pub education: String,
    #[serde(default)]
    pub usage_frequency: String,
}

/// Participant answers as submitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileInput {
    pub participant_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<Group>,
    pub ideology_raw: u8,
    pub cynicism_items: [Option<u8>; 2],
    pub skepticism_items: [Option<u8>; 4],
    #[serde(default)]
    pub demographics: Demographics,
    #[serde(default)]
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub participant_id: String,
    pub group: Group,
    pub ideology_raw: u8,
    pub ideology_bucket: Ideology,
    pub cynicism_items: [Option<u8>; 2],
    pub skepticism_items: [Option<u8>; 4],
    pub cynicism_score: Option<f64>,
    pub skepticism_score: Option<f64>,
    pub cynicism_label: Option<SplitLabel>,
    pub skepticism_label: Option<SplitLabel>,
    pub demographics: Demographics,
    pub excluded: bool,
}

impl ParticipantProfile {
    /// Score a profile. A scale with no answered items leaves its score empty;
    /// labels stay empty until [`apply_median_splits`] runs over the cohort.
    pub fn score(input: ProfileInput, group: Group) -> Result<ParticipantProfile, ScoreError> {
        let ideology_bucket = ideology_bucket(input.ideology_raw)?;
        let optional = |r: Result<f64, ScoreError>| match r {
            Ok(v) => Ok(Some(v)),
            Err(ScoreError::MissingScale(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(ParticipantProfile {
            cynicism_score: optional(cynicism_score(input.cynicism_items))?,
            skepticism_score: optional(skepticism_score(input.skepticism_items))?,
            participant_id: input.participant_id,
            group,
            ideology_raw: input.ideology_raw,
            ideology_bucket,
            cynicism_items: input.cynicism_items,
            skepticism_items: input.skepticism_items,
            cynicism_label: None,
            skepticism_label: None,
            demographics: input.demographics,
            excluded: input.excluded,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CohortMedians {
    pub cynicism: Option<f64>,
    pub skepticism: Option<f64>,
}

/// Median-split cynicism and skepticism over the non-excluded cohort.
pub fn apply_median_splits(profiles: &mut [ParticipantProfile]) -> CohortMedians {
    fn split(
        profiles: &mut [ParticipantProfile],
        get: fn(&ParticipantProfile) -> Option<f64>,
        set: fn(&mut ParticipantProfile, Option<SplitLabel>),
    ) -> Option<f64> {
        let scores: Vec<f64> = profiles.iter().filter(|p| !p.excluded).filter_map(get).collect();
        let m = median(&scores)?;
        for p in profiles.iter_mut() {
            let label = match (p.excluded, get(p)) {
                (false, Some(s)) => Some(if s > m { SplitLabel::High } else { SplitLabel::Low }),
                _ => None,
            };
            set(p, label);
        }
        Some(m)
    }
    CohortMedians {
        cynicism: split(profiles, |p| p.cynicism_score, |p, l| p.cynicism_label = l),
        skepticism: split(profiles, |p| p.skepticism_score, |p, l| p.skepticism_label = l),
    }
}
