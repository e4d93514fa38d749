//! CSV exchange formats for ratings and participant profiles.

use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::nudge::NudgeKind;
use crate::survey::{self, CredibilityRating, Demographics, Group, ProfileInput};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{what}: row {row}: {message}")]
    Row { what: &'static str, row: usize, message: String },
    #[error("{0} file has no data rows")]
    Empty(&'static str),
    #[error("{what}: missing column {column}")]
    MissingColumn { what: &'static str, column: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Score(#[from] survey::ScoreError),
}

pub const RATING_COLUMNS: [&str; 12] = [
    "participant_id",
    "post_id",
    "group",
    "nudge_kind",
    "item1",
    "item2",
    "item3",
    "item4",
    "item5",
    "interest",
    "raw_score",
    "z_score",
];

/// One exported rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    pub participant_id: String,
    pub post_id: String,
    pub group: Group,
    #[serde(serialize_with = "ser_kind", deserialize_with = "de_kind")]
    pub nudge_kind: NudgeKind,
    pub item1: u8,
    pub item2: u8,
    pub item3: u8,
    pub item4: u8,
    pub item5: u8,
    pub interest: u8,
    pub raw_score: f64,
    pub z_score: f64,
}

impl RatingRow {
    pub fn items(&self) -> [u8; 5] {
        [self.item1, self.item2, self.item3, self.item4, self.item5]
    }

    /// Build an export row from a stored rating; `z_score` is filled in by
    /// [`fill_z_scores`].
    pub fn from_rating(rating: &CredibilityRating, group: Group, kind: NudgeKind) -> RatingRow {
        let [item1, item2, item3, item4, item5] = rating.items;
        RatingRow {
            participant_id: rating.participant_id.clone(),
            post_id: rating.post_id.clone(),
            group,
            nudge_kind: kind,
            item1,
            item2,
            item3,
            item4,
            item5,
            interest: rating.interest,
            raw_score: survey::credibility_score(rating),
            z_score: f64::NAN,
        }
    }
}

fn ser_kind<S: Serializer>(k: &NudgeKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(k.as_str())
}

fn de_kind<'de, D: Deserializer<'de>>(d: D) -> Result<NudgeKind, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

/// Standardize `raw_score` over all rows. With fewer than two rows or no
/// variance, z-scores are left at 0.
pub fn fill_z_scores(rows: &mut [RatingRow]) {
    let raw: Vec<f64> = rows.iter().map(|r| r.raw_score).collect();
    match survey::standardize(&raw) {
        Ok(z) => rows.iter_mut().zip(z).for_each(|(r, z)| r.z_score = z),
        Err(_) => rows.iter_mut().for_each(|r| r.z_score = 0.0),
    }
}

pub fn write_ratings<W: Write>(rows: &[RatingRow], out: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(RATING_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_ratings<R: Read>(input: R) -> Result<Vec<RatingRow>, DatasetError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers()?.clone();
    for col in RATING_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(DatasetError::MissingColumn {
                what: "ratings",
                column: col.to_string(),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<RatingRow>().enumerate() {
        let row = rec.map_err(|e| DatasetError::Row {
            what: "ratings",
            row: i + 1,
            message: e.to_string(),
        })?;
        for (j, v) in row.items().iter().chain([&row.interest]).enumerate() {
            if !(survey::LIKERT_MIN..=survey::LIKERT_MAX).contains(v) {
                return Err(DatasetError::Row {
                    what: "ratings",
                    row: i + 1,
                    message: format!("column {} value {v} outside the five-point scale", j + 1),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DatasetError::Empty("ratings"));
    }
    Ok(rows)
}

/// One participant row. Empty or `DK` cells are "don't know" answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub participant_id: String,
    pub group: Group,
    pub ideology_raw: u8,
    #[serde(with = "dont_know")]
    pub cynicism1: Option<u8>,
    #[serde(with = "dont_know")]
    pub cynicism2: Option<u8>,
    #[serde(with = "dont_know")]
    pub skepticism1: Option<u8>,
    #[serde(with = "dont_know")]
    pub skepticism2: Option<u8>,
    #[serde(with = "dont_know")]
    pub skepticism3: Option<u8>,
    #[serde(with = "dont_know")]
    pub skepticism4: Option<u8>,
    #[serde(default)]
    pub gender: String,
    #[serde(default)]
    pub age_band: String,
    #[serde(default)]
    pub education: String,
    #[serde(default)]
    pub usage_frequency: String,
    #[serde(default)]
    pub excluded: bool,
}

mod dont_know {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<u8>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_u8(*v),
            None => s.serialize_str("DK"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u8>, D::Error> {
        let s = String::deserialize(d)?;
        match s.trim() {
            "" | "DK" | "dk" | "NA" => Ok(None),
            v => v.parse().map(Some).map_err(serde::de::Error::custom),
        }
    }
}

impl ProfileRow {
    pub fn from_input(input: &ProfileInput, group: Group) -> ProfileRow {
        ProfileRow {
            participant_id: input.participant_id.clone(),
            group,
            ideology_raw: input.ideology_raw,
            cynicism1: input.cynicism_items[0],
            cynicism2: input.cynicism_items[1],
            skepticism1: input.skepticism_items[0],
            skepticism2: input.skepticism_items[1],
            skepticism3: input.skepticism_items[2],
            skepticism4: input.skepticism_items[3],
            gender: input.demographics.gender.clone(),
            age_band: input.demographics.age_band.clone(),
            education: input.demographics.education.clone(),
            usage_frequency: input.demographics.usage_frequency.clone(),
            excluded: input.excluded,
        }
    }

    pub fn to_input(&self) -> ProfileInput {
        ProfileInput {
            participant_id: self.participant_id.clone(),
            group: Some(self.group),
            ideology_raw: self.ideology_raw,
            cynicism_items: [self.cynicism1, self.cynicism2],
            skepticism_items: [self.skepticism1, self.skepticism2, self.skepticism3, self.skepticism4],
            demographics: Demographics {
                gender: self.gender.clone(),
                age_band: self.age_band.clone(),
                education: self.education.clone(),
                usage_frequency: self.usage_frequency.clone(),
            },
            excluded: self.excluded,
        }
    }
}

pub fn write_profiles<W: Write>(rows: &[ProfileRow], out: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_profiles<R: Read>(input: R) -> Result<Vec<ProfileRow>, DatasetError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<ProfileRow>().enumerate() {
        rows.push(rec.map_err(|e| DatasetError::Row {
            what: "profiles",
            row: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}
