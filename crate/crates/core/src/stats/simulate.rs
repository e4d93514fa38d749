//! Synthetic cohorts shaped like the between-subjects feed experiment.
//!
//! Every participant rates every post in one of several alternative feeds.
//! A rating's latent credibility is the (group, nudge) cell mean plus a
//! participant intercept, a post intercept and residual noise. With
//! `exact_cell_moments` the per-cell sample mean and SD are then pinned to
//! their targets, so recovered cell summaries match by construction.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{fill_z_scores, ProfileRow, RatingRow};
use crate::nudge::NudgeKind;
use crate::survey::Group;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid simulation spec: {field}: {message}")]
pub struct SimulationError {
    pub field: String,
    pub message: String,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SimulationError {
    SimulationError {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellTarget {
    pub group: Group,
    pub kind: NudgeKind,
    pub mean: f64,
    /// Residual SD for this cell; falls back to the spec-wide `residual_sd`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSize {
    pub control: usize,
    pub treatment: usize,
}

fn default_true() -> bool {
    true
}

fn default_tweets_per_kind() -> usize {
    3
}

fn default_feeds() -> usize {
    2
}

fn default_item_loading() -> f64 {
    1.0
}

fn default_item_noise_sd() -> f64 {
    0.35
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub seed: u64,
    pub participants: CohortSize,
    #[serde(default = "default_tweets_per_kind")]
    pub tweets_per_kind: usize,
    #[serde(default = "default_feeds")]
    pub feeds: usize,
    pub cells: Vec<CellTarget>,
    #[serde(default)]
    pub participant_sd: f64,
    #[serde(default)]
    pub tweet_sd: f64,
    #[serde(default)]
    pub residual_sd: f64,
    #[serde(default = "default_true")]
    pub exact_cell_moments: bool,
    /// Slope of each Likert item on the standardized latent score.
    #[serde(default = "default_item_loading")]
    pub item_loading: f64,
    #[serde(default = "default_item_noise_sd")]
    pub item_noise_sd: f64,
}

const COMPARISON_MEANS: [(NudgeKind, f64, f64, f64); 3] = [
    // kind, control mean, treatment mean, Cohen's d
    (NudgeKind::Reliable, 0.62, 0.67, 0.162),
    (NudgeKind::Questionable, 0.58, 0.55, 0.072),
    (NudgeKind::Unreliable, 0.46, 0.37, 0.296),
];

impl SimulationSpec {
    /// Reference control/treatment cell means, with each nudge's
    /// SD set to |difference| / d and 231 / 199 participants rating three
    /// posts per nudge (693 / 597 ratings per cell).
    pub fn group_comparison(seed: u64) -> SimulationSpec {
        let mut cells = Vec::new();
        for (kind, control, treatment, d) in COMPARISON_MEANS {
            let sd = (treatment - control).abs() / d;
            cells.push(CellTarget {
                group: Group::Control,
                kind,
                mean: control,
                residual_sd: Some(sd),
            });
            cells.push(CellTarget {
                group: Group::Treatment,
                kind,
                mean: treatment,
                residual_sd: Some(sd),
            });
        }
        SimulationSpec {
            seed,
            participants: CohortSize {
                control: 231,
                treatment: 199,
            },
            tweets_per_kind: 3,
            feeds: 2,
            cells,
            participant_sd: 0.0,
            tweet_sd: 0.0,
            residual_sd: 0.0,
            exact_cell_moments: true,
            item_loading: default_item_loading(),
            item_noise_sd: default_item_noise_sd(),
        }
    }

    /// Treatment-coded base model on a roughly unit-variance outcome:
    /// Questionable -0.03, Unreliable -0.16, Treatment +0.05,
    /// Questionable x Treatment -0.06, Unreliable x Treatment -0.10.
    pub fn interaction_model(seed: u64) -> SimulationSpec {
        let effects = [
            (NudgeKind::Reliable, 0.0, 0.0),
            (NudgeKind::Questionable, -0.03, -0.06),
            (NudgeKind::Unreliable, -0.16, -0.10),
        ];
        let treatment_main = 0.05;
        let mut cells = Vec::new();
        for (kind, main, inter) in effects {
            cells.push(CellTarget {
                group: Group::Control,
                kind,
                mean: main,
                residual_sd: None,
            });
            cells.push(CellTarget {
                group: Group::Treatment,
                kind,
                mean: main + treatment_main + inter,
                residual_sd: None,
            });
        }
        SimulationSpec {
            seed,
            participants: CohortSize {
                control: 231,
                treatment: 199,
            },
            tweets_per_kind: 3,
            feeds: 2,
            cells,
            participant_sd: 0.95,
            tweet_sd: 0.10,
            residual_sd: 0.28,
            exact_cell_moments: true,
            item_loading: default_item_loading(),
            item_noise_sd: default_item_noise_sd(),
        }
    }

    pub fn from_json(text: &str) -> Result<SimulationSpec, SimulationError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: SimulationSpec = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.inner().to_string();
            // unknown fields are reported at the parent; name the offending key
            let field = match msg.split('`').nth(1) {
                Some(key) if msg.starts_with("unknown field") => key.to_string(),
                _ if path == "." => "spec".to_string(),
                _ => path,
            };
            invalid(field, msg)
        })?;
        spec.validate()?;
        Ok(spec)
    }

    fn cell(&self, group: Group, kind: NudgeKind) -> Option<&CellTarget> {
        self.cells.iter().find(|c| c.group == group && c.kind == kind)
    }

    fn cell_residual_sd(&self, cell: &CellTarget) -> f64 {
        cell.residual_sd.unwrap_or(self.residual_sd)
    }

    /// Marginal SD of a rating in the given cell.
    pub fn cell_total_sd(&self, cell: &CellTarget) -> f64 {
        (self.participant_sd.powi(2) + self.tweet_sd.powi(2) + self.cell_residual_sd(cell).powi(2)).sqrt()
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let sd_ok = |v: f64| v.is_finite() && v >= 0.0;
        for (name, v) in [
            ("participant_sd", self.participant_sd),
            ("tweet_sd", self.tweet_sd),
            ("residual_sd", self.residual_sd),
            ("item_noise_sd", self.item_noise_sd),
        ] {
            if !sd_ok(v) {
                return Err(invalid(name, format!("must be a finite non-negative number, got {v}")));
            }
        }
        if !self.item_loading.is_finite() {
            return Err(invalid("item_loading", "must be finite"));
        }
        if self.participants.control + self.participants.treatment == 0 {
            return Err(invalid("participants", "cohort is empty"));
        }
        if self.tweets_per_kind == 0 {
            return Err(invalid("tweets_per_kind", "must be at least 1"));
        }
        if self.feeds == 0 {
            return Err(invalid("feeds", "must be at least 1"));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if c.kind == NudgeKind::None {
                return Err(invalid(format!("cells[{i}].kind"), "must be a nudge kind"));
            }
            if !c.mean.is_finite() {
                return Err(invalid(format!("cells[{i}].mean"), "must be finite"));
            }
            if let Some(sd) = c.residual_sd {
                if !sd_ok(sd) {
                    return Err(invalid(
                        format!("cells[{i}].residual_sd"),
                        format!("must be a finite non-negative number, got {sd}"),
                    ));
                }
            }
            if self.cells[..i].iter().any(|o| o.group == c.group && o.kind == c.kind) {
                return Err(invalid(format!("cells[{i}]"), "duplicate (group, kind) cell"));
            }
        }
        for group in [Group::Control, Group::Treatment] {
            for kind in NudgeKind::NUDGES {
                if self.cell(group, kind).is_none() {
                    return Err(invalid("cells", format!("missing cell ({group}, {})", kind.as_str())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    pub ratings: Vec<RatingRow>,
    pub profiles: Vec<ProfileRow>,
}

const STREAM_PROFILE: u64 = 1;
const STREAM_TWEET: u64 = 2;
const STREAM_RATING: u64 = 3;
const STREAM_ITEMS: u64 = 4;

/// Independent generator for one (component, index) pair, so generation
/// order never changes the draws.
fn stream(seed: u64, component: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((component << 40) | index);
    rng
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated non-negative sd")
}

fn likert(rng: &mut ChaCha8Rng, center: f64, noise: f64) -> u8 {
    (center + normal(noise).sample(rng)).round().clamp(1.0, 5.0) as u8
}

fn draw_profile(seed: u64, idx: usize, id: &str, group: Group) -> ProfileRow {
    const GENDERS: [&str; 3] = ["female", "male", "other"];
    const AGES: [&str; 5] = ["18-24", "25-34", "35-44", "45-54", "55+"];
    const EDUCATION: [&str; 4] = ["high school", "some college", "bachelor", "graduate"];
    const USAGE: [&str; 4] = ["daily", "weekly", "monthly", "rarely"];

    let mut rng = stream(seed, STREAM_PROFILE, idx as u64);
    let skeptic: f64 = normal(0.8).sample(&mut rng);
    let cynic: f64 = normal(0.6).sample(&mut rng);
    let answer = |rng: &mut ChaCha8Rng, center: f64| {
        if rng.random_bool(0.02) {
            None
        } else {
            Some(likert(rng, center, 0.7))
        }
    };
    let cyn = [answer(&mut rng, 4.0 + cynic), answer(&mut rng, 4.0 + cynic)];
    let skep = [
        answer(&mut rng, 3.3 - skeptic),
        answer(&mut rng, 3.3 - skeptic),
        answer(&mut rng, 3.0 - skeptic),
        answer(&mut rng, 3.8 + skeptic),
    ];
    ProfileRow {
        participant_id: id.to_string(),
        group,
        ideology_raw: rng.random_range(1..=7),
        cynicism1: cyn[0],
        cynicism2: cyn[1],
        skepticism1: skep[0],
        skepticism2: skep[1],
        skepticism3: skep[2],
        skepticism4: skep[3],
        gender: GENDERS[rng.random_range(0..GENDERS.len())].to_string(),
        age_band: AGES[rng.random_range(0..AGES.len())].to_string(),
        education: EDUCATION[rng.random_range(0..EDUCATION.len())].to_string(),
        usage_frequency: USAGE[rng.random_range(0..USAGE.len())].to_string(),
        excluded: false,
    }
}

fn tweet_id(feed: usize, kind: NudgeKind, j: usize) -> String {
    let tag = match kind {
        NudgeKind::Reliable => "r",
        NudgeKind::Questionable => "q",
        NudgeKind::Unreliable => "u",
        NudgeKind::None => "n",
    };
    format!("f{feed}-{tag}{j}")
}

pub fn simulate_cohort(spec: &SimulationSpec) -> Result<SimulatedCohort, SimulationError> {
    spec.validate()?;
    let seed = spec.seed;
    let n_participants = spec.participants.control + spec.participants.treatment;

    // post intercepts, one per (feed, kind, slot)
    let mut tweets: Vec<(usize, NudgeKind, String, f64)> = Vec::new();
    for feed in 0..spec.feeds {
        for kind in NudgeKind::NUDGES {
            for j in 0..spec.tweets_per_kind {
                let idx = tweets.len() as u64;
                let effect = normal(spec.tweet_sd).sample(&mut stream(seed, STREAM_TWEET, idx));
                tweets.push((feed, kind, tweet_id(feed, kind, j), effect));
            }
        }
    }

    let mut profiles = Vec::with_capacity(n_participants);
    let mut ratings = Vec::new();
    for idx in 0..n_participants {
        let group = if idx < spec.participants.control {
            Group::Control
        } else {
            Group::Treatment
        };
        let id = format!("s{idx:04}");
        profiles.push(draw_profile(seed, idx, &id, group));

        let mut rng = stream(seed, STREAM_RATING, idx as u64);
        let intercept = normal(spec.participant_sd).sample(&mut rng);
        let feed = idx % spec.feeds;
        for (_, kind, post_id, effect) in tweets.iter().filter(|t| t.0 == feed) {
            let cell = spec.cell(group, *kind).expect("validated cells");
            let noise = normal(spec.cell_residual_sd(cell)).sample(&mut rng);
            ratings.push(RatingRow {
                participant_id: id.clone(),
                post_id: post_id.clone(),
                group,
                nudge_kind: *kind,
                item1: 3,
                item2: 3,
                item3: 3,
                item4: 3,
                item5: 3,
                interest: rng.random_range(1..=5),
                raw_score: cell.mean + intercept + effect + noise,
                z_score: 0.0,
            });
        }
    }

    if spec.exact_cell_moments {
        pin_cell_moments(spec, &mut ratings);
    }

    // Likert items from the standardized latent score
    let n = ratings.len() as f64;
    let grand_mean = ratings.iter().map(|r| r.raw_score).sum::<f64>() / n;
    let grand_sd = if ratings.len() > 1 {
        (ratings.iter().map(|r| (r.raw_score - grand_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let per_participant = spec.tweets_per_kind * NudgeKind::NUDGES.len();
    for (p, chunk) in ratings.chunks_mut(per_participant).enumerate() {
        let mut rng = stream(seed, STREAM_ITEMS, p as u64);
        for r in chunk {
            let z = if grand_sd > 0.0 {
                (r.raw_score - grand_mean) / grand_sd
            } else {
                0.0
            };
            let center = 3.0 + spec.item_loading * z;
            r.item1 = likert(&mut rng, center, spec.item_noise_sd);
            r.item2 = likert(&mut rng, center, spec.item_noise_sd);
            r.item3 = likert(&mut rng, center, spec.item_noise_sd);
            r.item4 = likert(&mut rng, center, spec.item_noise_sd);
            r.item5 = likert(&mut rng, center, spec.item_noise_sd);
        }
    }

    fill_z_scores(&mut ratings);
    Ok(SimulatedCohort { ratings, profiles })
}

fn pin_cell_moments(spec: &SimulationSpec, ratings: &mut [RatingRow]) {
    let mut cells: HashMap<(Group, NudgeKind), Vec<usize>> = HashMap::new();
    for (i, r) in ratings.iter().enumerate() {
        cells.entry((r.group, r.nudge_kind)).or_default().push(i);
    }
    for ((group, kind), idx) in cells {
        let target = spec.cell(group, kind).expect("validated cells");
        let target_sd = spec.cell_total_sd(target);
        let n = idx.len() as f64;
        let m = idx.iter().map(|&i| ratings[i].raw_score).sum::<f64>() / n;
        let s = if idx.len() > 1 {
            (idx.iter().map(|&i| (ratings[i].raw_score - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let scale = if target_sd == 0.0 {
            0.0
        } else if s > 0.0 {
            target_sd / s
        } else {
            1.0
        };
        for &i in &idx {
            ratings[i].raw_score = target.mean + (ratings[i].raw_score - m) * scale;
        }
    }
}
