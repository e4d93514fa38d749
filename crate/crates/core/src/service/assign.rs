use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::survey::Group;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    /// Group from a salted hash of the participant id.
    #[default]
    Hash,
    /// New participants go to whichever group is smaller; ties fall back to
    /// the hash. Assignments are persisted so they survive restarts.
    Quota,
}

#[derive(Debug, Clone)]
pub struct GroupAssigner {
    pub salt: String,
    pub mode: AssignmentMode,
}

impl GroupAssigner {
    pub fn new(salt: impl Into<String>, mode: AssignmentMode) -> GroupAssigner {
        GroupAssigner {
            salt: salt.into(),
            mode,
        }
    }

    pub fn digest(&self, participant_id: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.salt.as_bytes());
        h.update([0]);
        h.update(participant_id.as_bytes());
        h.finalize().into()
    }

    pub fn hash_group(&self, participant_id: &str) -> Group {
        if self.digest(participant_id)[0] & 1 == 0 {
            Group::Control
        } else {
            Group::Treatment
        }
    }

    /// Group for a participant not yet assigned, given current
    /// (control, treatment) counts.
    pub fn assign(&self, participant_id: &str, counts: (usize, usize)) -> Group {
        match self.mode {
            AssignmentMode::Quota if counts.0 < counts.1 => Group::Control,
            AssignmentMode::Quota if counts.1 < counts.0 => Group::Treatment,
            _ => self.hash_group(participant_id),
        }
    }

    /// Per-participant seed for presentation order.
    pub fn order_seed(&self, participant_id: &str, seed: u64) -> u64 {
        let d = self.digest(participant_id);
        u64::from_le_bytes(d[8..16].try_into().unwrap()) ^ seed
    }
}
