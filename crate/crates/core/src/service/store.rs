//! Append-only JSONL logs for ratings, profiles and group assignments.
//!
//! Each record is written as one complete line followed by a flush and
//! `sync_data`. On open, a trailing line without its newline is a torn write
//! and is cut off; any other unparseable line is corruption.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nudge::NudgeKind;
use crate::survey::{CredibilityRating, Group, ProfileInput};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("participant {participant_id} already rated post {post_id}")]
    DuplicateRating { participant_id: String, post_id: String },
    #[error("participant {0} already submitted a profile")]
    DuplicateProfile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingStoreRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub rating: CredibilityRating,
    pub group: Group,
    pub nudge_kind: NudgeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileStoreRecord {
    pub seq: u64,
    pub profile: ProfileInput,
    pub group: Group,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub seq: u64,
    pub participant_id: String,
    pub group: Group,
}

struct Log {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl Log {
    fn open<T: DeserializeOwned>(path: PathBuf, seq_of: fn(&T) -> u64) -> Result<(Log, Vec<T>), StoreError> {
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err)?;
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            tracing::warn!(path = %path.display(), dropped = bytes.len() - complete, "discarding torn trailing record");
            file.set_len(complete as u64).map_err(io_err)?;
        }
        let mut records = Vec::new();
        let mut last_seq = 0;
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let corrupt = |message: String| StoreError::Corrupt {
                path: path.clone(),
                line: i + 1,
                message,
            };
            let rec: T = serde_json::from_slice(line).map_err(|e| corrupt(e.to_string()))?;
            let seq = seq_of(&rec);
            if seq <= last_seq {
                return Err(corrupt(format!("sequence {seq} does not follow {last_seq}")));
            }
            last_seq = seq;
            records.push(rec);
        }
        Ok((
            Log {
                path,
                file,
                next_seq: last_seq + 1,
            },
            records,
        ))
    }

    fn append<T: Serialize>(&mut self, record: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record).expect("store records serialize");
        line.push(b'\n');
        let io_err = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&line).map_err(io_err)?;
        self.file.flush().map_err(io_err)?;
        self.file.sync_data().map_err(io_err)?;
        self.next_seq += 1;
        Ok(())
    }
}

/// Ratings, profiles and assignments under one directory. Not internally
/// synchronized; the service wraps it in a mutex so there is one writer.
pub struct RatingStore {
    ratings: Log,
    profiles: Log,
    assignments: Log,
    rating_records: Vec<RatingStoreRecord>,
    rated: HashMap<(String, String), usize>,
    profile_records: Vec<ProfileStoreRecord>,
    profiled: HashMap<String, usize>,
    groups: HashMap<String, Group>,
}

pub const RATINGS_FILE: &str = "ratings.jsonl";
pub const PROFILES_FILE: &str = "profiles.jsonl";
pub const ASSIGNMENTS_FILE: &str = "assignments.jsonl";

impl RatingStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<RatingStore, StoreError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let (ratings, rating_records) = Log::open(dir.join(RATINGS_FILE), |r: &RatingStoreRecord| r.seq)?;
        let (profiles, profile_records) = Log::open(dir.join(PROFILES_FILE), |r: &ProfileStoreRecord| r.seq)?;
        let (assignments, assignment_records) = Log::open(dir.join(ASSIGNMENTS_FILE), |r: &AssignmentRecord| r.seq)?;

        let mut rated = HashMap::new();
        for (i, r) in rating_records.iter().enumerate() {
            let key = (r.rating.participant_id.clone(), r.rating.post_id.clone());
            if rated.insert(key, i).is_some() {
                return Err(StoreError::Corrupt {
                    path: ratings.path.clone(),
                    line: i + 1,
                    message: format!(
                        "second rating by {} for {}",
                        r.rating.participant_id, r.rating.post_id
                    ),
                });
            }
        }
        let profiled = profile_records
            .iter()
            .enumerate()
            .map(|(i, p)| (p.profile.participant_id.clone(), i))
            .collect();
        let groups = assignment_records
            .into_iter()
            .map(|a| (a.participant_id, a.group))
            .collect();
        Ok(RatingStore {
            ratings,
            profiles,
            assignments,
            rating_records,
            rated,
            profile_records,
            profiled,
            groups,
        })
    }

    pub fn ratings(&self) -> &[RatingStoreRecord] {
        &self.rating_records
    }

    pub fn profiles(&self) -> &[ProfileStoreRecord] {
        &self.profile_records
    }

    pub fn has_rated(&self, participant_id: &str, post_id: &str) -> bool {
        self.rated.contains_key(&(participant_id.to_string(), post_id.to_string()))
    }

    pub fn append_rating(
        &mut self,
        rating: CredibilityRating,
        group: Group,
        nudge_kind: NudgeKind,
    ) -> Result<&RatingStoreRecord, StoreError> {
        let key = (rating.participant_id.clone(), rating.post_id.clone());
        if self.rated.contains_key(&key) {
            return Err(StoreError::DuplicateRating {
                participant_id: key.0,
                post_id: key.1,
            });
        }
        let record = RatingStoreRecord {
            seq: self.ratings.next_seq,
            rating,
            group,
            nudge_kind,
        };
        self.ratings.append(&record)?;
        self.rated.insert(key, self.rating_records.len());
        self.rating_records.push(record);
        Ok(self.rating_records.last().unwrap())
    }

    pub fn append_profile(&mut self, profile: ProfileInput, group: Group) -> Result<&ProfileStoreRecord, StoreError> {
        if self.profiled.contains_key(&profile.participant_id) {
            return Err(StoreError::DuplicateProfile(profile.participant_id));
        }
        let record = ProfileStoreRecord {
            seq: self.profiles.next_seq,
            profile,
            group,
        };
        self.profiles.append(&record)?;
        self.profiled
            .insert(record.profile.participant_id.clone(), self.profile_records.len());
        self.profile_records.push(record);
        Ok(self.profile_records.last().unwrap())
    }

    /// Group recorded for a participant by an earlier [`Self::record_group`].
    pub fn recorded_group(&self, participant_id: &str) -> Option<Group> {
        self.groups.get(participant_id).copied()
    }

    pub fn group_counts(&self) -> (usize, usize) {
        let t = self.groups.values().filter(|g| **g == Group::Treatment).count();
        (self.groups.len() - t, t)
    }

    pub fn record_group(&mut self, participant_id: &str, group: Group) -> Result<(), StoreError> {
        if self.groups.contains_key(participant_id) {
            return Ok(());
        }
        let record = AssignmentRecord {
            seq: self.assignments.next_seq,
            participant_id: participant_id.to_string(),
            group,
        };
        self.assignments.append(&record)?;
        self.groups.insert(record.participant_id, group);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn rating(p: &str, post: &str) -> CredibilityRating {
        CredibilityRating {
            post_id: post.into(),
            participant_id: p.into(),
            items: [1, 2, 3, 4, 5],
            interest: 3,
            submitted_at: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            attention_check: None,
        }
    }

    #[test]
    fn append_reopen_and_reject_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = RatingStore::open(dir.path()).unwrap();
            assert_eq!(s.append_rating(rating("a", "t1"), Group::Control, NudgeKind::Reliable).unwrap().seq, 1);
            assert_eq!(s.append_rating(rating("a", "t2"), Group::Control, NudgeKind::Unreliable).unwrap().seq, 2);
            assert!(matches!(
                s.append_rating(rating("a", "t1"), Group::Control, NudgeKind::Reliable),
                Err(StoreError::DuplicateRating { .. })
            ));
            s.record_group("a", Group::Control).unwrap();
        }
        let mut s = RatingStore::open(dir.path()).unwrap();
        assert_eq!(s.ratings().len(), 2);
        assert!(s.has_rated("a", "t2"));
        assert_eq!(s.recorded_group("a"), Some(Group::Control));
        assert!(s.append_rating(rating("a", "t1"), Group::Control, NudgeKind::Reliable).is_err());
        assert_eq!(s.append_rating(rating("b", "t1"), Group::Treatment, NudgeKind::Reliable).unwrap().seq, 3);
    }

    #[test]
    fn profiles_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let input = ProfileInput {
            participant_id: "a".into(),
            group: Some(Group::Treatment),
            ideology_raw: 4,
            cynicism_items: [Some(2), None],
            skepticism_items: [Some(1), Some(2), None, Some(5)],
            demographics: Default::default(),
            excluded: false,
        };
        {
            let mut s = RatingStore::open(dir.path()).unwrap();
            s.append_profile(input.clone(), Group::Treatment).unwrap();
            assert!(matches!(
                s.append_profile(input.clone(), Group::Treatment),
                Err(StoreError::DuplicateProfile(_))
            ));
        }
        let s = RatingStore::open(dir.path()).unwrap();
        assert_eq!(s.profiles()[0].profile, input);
        assert_eq!(s.profiles()[0].group, Group::Treatment);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = RatingStore::open(dir.path()).unwrap();
            s.append_rating(rating("a", "t1"), Group::Control, NudgeKind::Reliable).unwrap();
        }
        let path = dir.path().join(RATINGS_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"seq":2,"post_id":"t2","partic"#).unwrap();
        drop(f);
        let mut s = RatingStore::open(dir.path()).unwrap();
        assert_eq!(s.ratings().len(), 1);
        assert_eq!(s.append_rating(rating("a", "t2"), Group::Control, NudgeKind::Reliable).unwrap().seq, 2);
        drop(s);
        let s = RatingStore::open(dir.path()).unwrap();
        assert_eq!(s.ratings().len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(RATINGS_FILE), "not json\n").unwrap();
        assert!(matches!(RatingStore::open(dir.path()), Err(StoreError::Corrupt { line: 1, .. })));
    }
}
