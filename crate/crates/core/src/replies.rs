//! Question detection over a post's direct replies (the bandwagon cue).

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A direct reply to a post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub id: String,
    pub author_handle: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    /// Id of the post being replied to. Implied by nesting in the feed format.
    #[serde(default, skip_serializing)]
    pub parent_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QuestionStats {
    pub question_count: usize,
    pub first_question: Option<Reply>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("replies belong to different parents ({first:?} and {other:?})")]
pub struct InvalidThreadError {
    pub first: String,
    pub other: String,
}

/// True when the text contains an ASCII or fullwidth question mark.
pub fn is_question(text: &str) -> bool {
    text.contains(['?', '\u{FF1F}'])
}

/// Count question replies and pick the earliest one.
///
/// The earliest question is chosen by `created_at`, ties broken by ascending
/// id, so the result does not depend on input order.
pub fn analyze_replies(replies: &[Reply]) -> Result<QuestionStats, InvalidThreadError> {
    if let Some(first) = replies.first() {
        if let Some(other) = replies.iter().find(|r| r.parent_id != first.parent_id) {
            return Err(InvalidThreadError {
                first: first.parent_id.clone(),
                other: other.parent_id.clone(),
            });
        }
    }

    let mut count = 0;
    let mut earliest: Option<&Reply> = None;
    for reply in replies.iter().filter(|r| is_question(&r.text)) {
        count += 1;
        earliest = match earliest {
            Some(e) if (e.created_at, &e.id) <= (reply.created_at, &reply.id) => Some(e),
            _ => Some(reply),
        };
    }

    Ok(QuestionStats {
        question_count: count,
        first_question: earliest.cloned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn reply(id: &str, text: &str, minute: u32) -> Reply {
        Reply {
            id: id.into(),
            author_handle: format!("user_{id}"),
            text: text.into(),
            created_at: Utc.with_ymd_and_hms(2019, 7, 15, 12, minute, 0).unwrap(),
            parent_id: "p1".into(),
        }
    }

    fn naive_count(replies: &[Reply]) -> usize {
        replies
            .iter()
            .filter(|r| r.text.chars().any(|c| c == '?' || c == '？'))
            .count()
    }

    #[test]
    fn question_mark_detection() {
        assert!(is_question("When did this happen?"));
        assert!(!is_question("Great reporting."));
        assert!(is_question("??!?"));
        assert!(is_question("本当？"));
        assert!(is_question("see https://x.com/a?b=1"));
        assert!(!is_question(""));
    }

    #[test]
    fn empty_thread() {
        assert_eq!(analyze_replies(&[]).unwrap(), QuestionStats::default());
    }

    #[test]
    fn counts_per_reply() {
        let r = vec![reply("1", "Why?", 0), reply("2", "Nice.", 1), reply("3", "How come??", 2)];
        let s = analyze_replies(&r).unwrap();
        assert_eq!(s.question_count, 2);
        assert_eq!(s.first_question.unwrap().text, "Why?");
    }

    #[test]
    fn ties_break_on_id() {
        let r = vec![reply("b", "what?", 5), reply("a", "who?", 5), reply("c", "where?", 6)];
        assert_eq!(analyze_replies(&r).unwrap().first_question.unwrap().id, "a");
    }

    #[test]
    fn mixed_parents_rejected() {
        let mut other = reply("2", "?", 1);
        other.parent_id = "p2".into();
        let err = analyze_replies(&[reply("1", "x", 0), other]).unwrap_err();
        assert_eq!(err.other, "p2");
    }

    fn arb_thread() -> impl Strategy<Value = Vec<Reply>> {
        prop::collection::vec(
            (
                "[a-z0-9]{1,4}",
                prop_oneof!["\\PC{0,20}", "[a-z ?？.!]{0,12}"],
                0u32..30,
            ),
            0..40,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .map(|(id, text, minute)| reply(&id, &text, minute))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn permutation_invariant(thread in arb_thread(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = thread.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = analyze_replies(&thread).unwrap();
            let b = analyze_replies(&shuffled).unwrap();
            prop_assert_eq!(a.question_count, b.question_count);
            // ids may repeat in generated threads, so compare the sort key
            prop_assert_eq!(
                a.first_question.map(|r| (r.created_at, r.id)),
                b.first_question.map(|r| (r.created_at, r.id))
            );
        }

        #[test]
        fn monotone_under_append(thread in arb_thread(), text in "\\PC{0,10}") {
            let before = analyze_replies(&thread).unwrap().question_count;
            let mut grown = thread.clone();
            grown.push(reply("z", &text, 59));
            let after = analyze_replies(&grown).unwrap().question_count;
            if is_question(&text) {
                prop_assert_eq!(after, before + 1);
            } else {
                prop_assert_eq!(after, before);
            }
        }

        #[test]
        fn matches_naive_scan(thread in arb_thread()) {
            let s = analyze_replies(&thread).unwrap();
            prop_assert_eq!(s.question_count, naive_count(&thread));
            prop_assert_eq!(s.question_count == 0, s.first_question.is_none());
        }
    }
}
