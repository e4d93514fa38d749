//! Post and feed model, the JSONL corpus format, and remote acquisition.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::time::Duration as StdDuration;

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::registry::normalize_domain;
use crate::replies::Reply;

pub const ENV_API_BASE: &str = "NUDGECRED_API_BASE";
pub const ENV_API_TOKEN: &str = "NUDGECRED_API_TOKEN";

/// Default cap on direct replies pulled per post.
pub const DEFAULT_MAX_REPLIES: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub author_handle: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_domain: Option<String>,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub share_count: u64,
    #[serde(default)]
    pub replies: Vec<Reply>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feed {
    pub feed_id: String,
    pub posts: Vec<Post>,
    pub captured_at: DateTime<Utc>,
}

impl Feed {
    pub fn new(feed_id: impl Into<String>, posts: Vec<Post>) -> Feed {
        let captured_at = posts
            .iter()
            .flat_map(|p| std::iter::once(p.created_at).chain(p.replies.iter().map(|r| r.created_at)))
            .max()
            .unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
        Feed {
            feed_id: feed_id.into(),
            posts,
            captured_at,
        }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("line {line}: malformed JSON: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("line {line}: invalid field `{field}`: {message}")]
    InvalidField {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate post id {id:?} (first seen on line {first_line})")]
    DuplicateId {
        line: usize,
        id: String,
        first_line: usize,
    },
    #[error("line {line}: reply {reply_id:?} points at {parent:?}, not at post {post_id:?}")]
    OrphanedReply {
        line: usize,
        post_id: String,
        reply_id: String,
        parent: String,
    },
    #[error("reading line {line}: {source}")]
    Io {
        line: usize,
        #[source]
        source: std::io::Error,
    },
}

impl FeedError {
    pub fn line(&self) -> usize {
        match self {
            FeedError::Json { line, .. }
            | FeedError::MissingField { line, .. }
            | FeedError::InvalidField { line, .. }
            | FeedError::DuplicateId { line, .. }
            | FeedError::OrphanedReply { line, .. }
            | FeedError::Io { line, .. } => *line,
        }
    }
}

const POST_FIELDS: [&str; 5] = ["id", "author_handle", "text", "created_at", "share_count"];
const REPLY_FIELDS: [&str; 4] = ["id", "author_handle", "text", "created_at"];

#[derive(Deserialize)]
struct WireReply {
    id: String,
    author_handle: String,
    text: String,
    created_at: DateTime<Utc>,
    #[serde(default)]
    parent_id: Option<String>,
}

#[derive(Deserialize)]
struct WirePost {
    id: String,
    author_handle: String,
    #[serde(default)]
    source_domain: Option<String>,
    text: String,
    created_at: DateTime<Utc>,
    share_count: u64,
    #[serde(default)]
    replies: Vec<WireReply>,
}

/// Parse and validate one JSONL post object. Nested replies (those whose
/// `parent_id` names a sibling reply) are dropped.
pub fn parse_post_line(line: &str, line_no: usize) -> Result<Post, FeedError> {
    let value: Value = serde_json::from_str(line).map_err(|e| FeedError::Json {
        line: line_no,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| FeedError::Json {
        line: line_no,
        message: "expected a JSON object".into(),
    })?;
    for field in POST_FIELDS {
        if obj.get(field).is_none_or(Value::is_null) {
            return Err(FeedError::MissingField {
                line: line_no,
                field: field.into(),
            });
        }
    }
    if let Some(replies) = obj.get("replies").and_then(Value::as_array) {
        for (i, r) in replies.iter().enumerate() {
            for field in REPLY_FIELDS {
                if r.get(field).is_none_or(Value::is_null) {
                    return Err(FeedError::MissingField {
                        line: line_no,
                        field: format!("replies[{i}].{field}"),
                    });
                }
            }
        }
    }
    let wire: WirePost = serde_json::from_value(value).map_err(|e| FeedError::InvalidField {
        line: line_no,
        field: "post".into(),
        message: e.to_string(),
    })?;
    post_from_wire(wire, line_no)
}

fn post_from_wire(wire: WirePost, line_no: usize) -> Result<Post, FeedError> {
    let source_domain = match wire.source_domain.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(raw) => Some(normalize_domain(raw).map_err(|e| FeedError::InvalidField {
            line: line_no,
            field: "source_domain".into(),
            message: e.to_string(),
        })?),
    };

    let reply_ids: HashSet<&str> = wire.replies.iter().map(|r| r.id.as_str()).collect();
    let mut seen = HashSet::new();
    let mut replies = Vec::with_capacity(wire.replies.len());
    for r in &wire.replies {
        match r.parent_id.as_deref() {
            None => {}
            Some(p) if p == wire.id => {}
            Some(p) if reply_ids.contains(p) => continue,
            Some(p) => {
                return Err(FeedError::OrphanedReply {
                    line: line_no,
                    post_id: wire.id.clone(),
                    reply_id: r.id.clone(),
                    parent: p.to_string(),
                })
            }
        }
        if !seen.insert(r.id.as_str()) {
            return Err(FeedError::InvalidField {
                line: line_no,
                field: "replies".into(),
                message: format!("duplicate reply id {:?}", r.id),
            });
        }
        replies.push(Reply {
            id: r.id.clone(),
            author_handle: r.author_handle.clone(),
            text: r.text.clone(),
            created_at: r.created_at,
            parent_id: wire.id.clone(),
        });
    }

    Ok(Post {
        id: wire.id,
        author_handle: wire.author_handle,
        source_domain,
        text: wire.text,
        created_at: wire.created_at,
        share_count: wire.share_count,
        replies,
    })
}

/// Read a JSONL feed. Blank lines are skipped.
pub fn parse_feed<R: BufRead>(feed_id: &str, reader: R) -> Result<Feed, FeedError> {
    let mut posts = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| FeedError::Io { line: line_no, source })?;
        if line.trim().is_empty() {
            continue;
        }
        let post = parse_post_line(&line, line_no)?;
        if let Some(&first_line) = first_seen.get(&post.id) {
            return Err(FeedError::DuplicateId {
                line: line_no,
                id: post.id,
                first_line,
            });
        }
        first_seen.insert(post.id.clone(), line_no);
        posts.push(post);
    }
    Ok(Feed::new(feed_id, posts))
}

pub fn serialize_feed<W: Write>(feed: &Feed, mut out: W) -> std::io::Result<()> {
    for post in &feed.posts {
        serde_json::to_writer(&mut out, post)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Deterministic permutation of the feed's posts.
pub fn shuffle_feed(feed: &Feed, seed: u64) -> Feed {
    let mut posts = feed.posts.clone();
    posts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Feed {
        feed_id: feed.feed_id.clone(),
        posts,
        captured_at: feed.captured_at,
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FetchError {
    #[error("unauthorized (HTTP {status})")]
    Unauthorized { status: u16 },
    #[error("HTTP {status}")]
    Http { status: u16 },
    #[error("network error: {0}")]
    Network(String),
    #[error("undecodable response: {0}")]
    Decode(String),
    #[error("missing configuration: {0}")]
    Config(String),
}

/// Source of posts for an account. Replies returned by the fetcher carry
/// their `parent_id`; replies to other replies are discarded by [`fetch_feed`].
pub trait RemoteFetcher: Sync {
    fn fetch_account(&self, handle: &str, since: DateTime<Utc>) -> Result<Vec<Post>, FetchError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FetchWarning {
    pub account: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct FetchOutcome {
    pub feed: Feed,
    pub warnings: Vec<FetchWarning>,
    /// Ids of posts whose reply list hit the cap.
    pub truncated: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FetchRequest<'a> {
    pub accounts: &'a [String],
    pub window: Duration,
    pub top_k: usize,
    pub now: DateTime<Utc>,
    pub max_replies: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FetchRequestError {
    #[error("window must be positive")]
    NonPositiveWindow,
    #[error("top_k must be at least 1")]
    ZeroTopK,
}

/// Pull the `top_k` most-shared posts per account within `window` before
/// `now`, keeping only direct replies. Accounts are fetched concurrently;
/// failures become warnings and the remaining accounts are still returned.
pub fn fetch_feed<F: RemoteFetcher + ?Sized>(
    fetcher: &F,
    req: &FetchRequest<'_>,
) -> Result<FetchOutcome, FetchRequestError> {
    if req.window <= Duration::zero() {
        return Err(FetchRequestError::NonPositiveWindow);
    }
    if req.top_k == 0 {
        return Err(FetchRequestError::ZeroTopK);
    }
    let since = req.now - req.window;

    let results: Vec<Result<Vec<Post>, FetchError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = req
            .accounts
            .iter()
            .map(|account| scope.spawn(move || fetcher.fetch_account(account, since)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(FetchError::Network("fetch thread panicked".into()))))
            .collect()
    });

    let mut posts = Vec::new();
    let mut warnings = Vec::new();
    let mut truncated = Vec::new();
    let mut seen = HashSet::new();
    for (account, result) in req.accounts.iter().zip(results) {
        let mut candidates = match result {
            Ok(p) => p,
            Err(e) => {
                warnings.push(FetchWarning {
                    account: account.clone(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        candidates.retain(|p| p.created_at >= since && p.created_at <= req.now);
        candidates.sort_by(|a, b| {
            b.share_count
                .cmp(&a.share_count)
                .then(b.created_at.cmp(&a.created_at))
                .then(a.id.cmp(&b.id))
        });
        for mut post in candidates.into_iter().take(req.top_k) {
            if !seen.insert(post.id.clone()) {
                continue;
            }
            let post_id = post.id.clone();
            post.replies.retain(|r| r.parent_id.is_empty() || r.parent_id == post_id);
            for r in &mut post.replies {
                r.parent_id = post_id.clone();
            }
            if post.replies.len() > req.max_replies {
                post.replies.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
                post.replies.truncate(req.max_replies);
                truncated.push(post_id);
            }
            if let Some(d) = post.source_domain.take() {
                post.source_domain = normalize_domain(&d).ok();
            }
            posts.push(post);
        }
    }

    let mut feed = Feed::new("fetched", posts);
    feed.captured_at = req.now;
    Ok(FetchOutcome {
        feed,
        warnings,
        truncated,
    })
}

/// Fetcher for a JSON API exposing `GET {base}/accounts/{handle}/posts?since=<rfc3339>`,
/// returning an array of post objects in the feed schema (replies may carry `parent_id`).
/// Repost counts are expected in `share_count`.
pub struct HttpFetcher {
    base: url::Url,
    token: String,
    client: reqwest::blocking::Client,
    retries: u32,
}

impl HttpFetcher {
    pub fn new(base: &str, token: &str) -> Result<HttpFetcher, FetchError> {
        let mut base = url::Url::parse(base).map_err(|e| FetchError::Config(format!("{ENV_API_BASE}: {e}")))?;
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(StdDuration::from_secs(30))
            .build()
            .map_err(|e| FetchError::Config(e.to_string()))?;
        Ok(HttpFetcher {
            base,
            token: token.to_string(),
            client,
            retries: 2,
        })
    }

    /// Build from `NUDGECRED_API_BASE` and `NUDGECRED_API_TOKEN`.
    pub fn from_env() -> Result<HttpFetcher, FetchError> {
        let base = std::env::var(ENV_API_BASE).map_err(|_| FetchError::Config(ENV_API_BASE.into()))?;
        let token = std::env::var(ENV_API_TOKEN).map_err(|_| FetchError::Config(ENV_API_TOKEN.into()))?;
        HttpFetcher::new(&base, &token)
    }
}

impl RemoteFetcher for HttpFetcher {
    fn fetch_account(&self, handle: &str, since: DateTime<Utc>) -> Result<Vec<Post>, FetchError> {
        let mut url = self
            .base
            .join(&format!("accounts/{}/posts", handle.trim_start_matches('@')))
            .map_err(|e| FetchError::Config(e.to_string()))?;
        url.query_pairs_mut().append_pair("since", &since.to_rfc3339());

        let mut attempt = 0;
        loop {
            let resp = self.client.get(url.clone()).bearer_auth(&self.token).send();
            let retryable = match resp {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let body = resp.text().map_err(|e| FetchError::Network(e.to_string()))?;
                        return decode_posts(&body);
                    }
                    if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(FetchError::Unauthorized {
                            status: status.as_u16(),
                        });
                    }
                    if !status.is_server_error() && status.as_u16() != 429 {
                        return Err(FetchError::Http {
                            status: status.as_u16(),
                        });
                    }
                    FetchError::Http {
                        status: status.as_u16(),
                    }
                }
                Err(e) => FetchError::Network(e.to_string()),
            };
            if attempt >= self.retries {
                return Err(retryable);
            }
            attempt += 1;
            std::thread::sleep(StdDuration::from_millis(200 * u64::from(attempt)));
        }
    }
}

fn decode_posts(body: &str) -> Result<Vec<Post>, FetchError> {
    let wire: Vec<WirePost> = serde_json::from_str(body).map_err(|e| FetchError::Decode(e.to_string()))?;
    Ok(wire
        .into_iter()
        .map(|w| {
            let post_id = w.id.clone();
            Post {
                id: w.id,
                author_handle: w.author_handle,
                source_domain: w.source_domain,
                text: w.text,
                created_at: w.created_at,
                share_count: w.share_count,
                replies: w
                    .replies
                    .into_iter()
                    .map(|r| Reply {
                        id: r.id,
                        author_handle: r.author_handle,
                        text: r.text,
                        created_at: r.created_at,
                        parent_id: r.parent_id.unwrap_or_else(|| post_id.clone()),
                    })
                    .collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn line(id: &str) -> String {
        format!(
            r#"{{"id":"{id}","author_handle":"cnnbrk","source_domain":"https://www.cnn.com/x","text":"t","created_at":"2019-07-15T12:00:00Z","share_count":3,"replies":[{{"id":"{id}-r1","author_handle":"a","text":"When?","created_at":"2019-07-15T12:05:00Z"}}]}}"#
        )
    }

    #[test]
    fn parses_and_normalizes() {
        let input = format!("{}\n\n{}\n", line("1"), line("2"));
        let feed = parse_feed("f", input.as_bytes()).unwrap();
        assert_eq!(feed.len(), 2);
        assert_eq!(feed.posts[0].source_domain.as_deref(), Some("cnn.com"));
        assert_eq!(feed.posts[0].replies[0].parent_id, "1");
        assert_eq!(feed.captured_at, Utc.with_ymd_and_hms(2019, 7, 15, 12, 5, 0).unwrap());
    }

    #[test]
    fn empty_stream() {
        let feed = parse_feed("f", "".as_bytes()).unwrap();
        assert!(feed.is_empty());
    }

    #[test]
    fn duplicate_id_names_line() {
        let input = format!("{}\n{}\n{}\n", line("1"), line("2"), line("1"));
        match parse_feed("f", input.as_bytes()) {
            Err(FeedError::DuplicateId { line, id, first_line }) => {
                assert_eq!((line, id.as_str(), first_line), (3, "1", 1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_and_missing() {
        let err = parse_feed("f", "{not json\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FeedError::Json { line: 1, .. }));
        let no_text = r#"{"id":"1","author_handle":"a","created_at":"2019-07-15T12:00:00Z","share_count":1}"#;
        match parse_feed("f", format!("{}\n{no_text}\n", line("0")).as_bytes()) {
            Err(FeedError::MissingField { line, field }) => assert_eq!((line, field.as_str()), (2, "text")),
            other => panic!("{other:?}"),
        }
        let bad_ts = r#"{"id":"1","author_handle":"a","text":"x","created_at":"yesterday","share_count":1}"#;
        assert!(matches!(parse_feed("f", bad_ts.as_bytes()), Err(FeedError::InvalidField { .. })));
    }

    #[test]
    fn orphaned_and_nested_replies() {
        let orphan = r#"{"id":"1","author_handle":"a","text":"x","created_at":"2019-07-15T12:00:00Z","share_count":1,"replies":[{"id":"r","author_handle":"b","text":"?","created_at":"2019-07-15T12:00:00Z","parent_id":"99"}]}"#;
        assert!(matches!(
            parse_feed("f", orphan.as_bytes()),
            Err(FeedError::OrphanedReply { line: 1, .. })
        ));
        let nested = r#"{"id":"1","author_handle":"a","text":"x","created_at":"2019-07-15T12:00:00Z","share_count":1,"replies":[{"id":"r","author_handle":"b","text":"ok","created_at":"2019-07-15T12:00:00Z","parent_id":"1"},{"id":"r2","author_handle":"c","text":"?","created_at":"2019-07-15T12:01:00Z","parent_id":"r"}]}"#;
        let feed = parse_feed("f", nested.as_bytes()).unwrap();
        assert_eq!(feed.posts[0].replies.len(), 1);
    }

    #[test]
    fn shuffle_is_deterministic_permutation() {
        let input: String = (0..9).map(|i| line(&i.to_string()) + "\n").collect();
        let feed = parse_feed("f", input.as_bytes()).unwrap();
        let a = shuffle_feed(&feed, 7);
        let b = shuffle_feed(&feed, 7);
        assert_eq!(a, b);
        let mut ids: Vec<_> = a.posts.iter().map(|p| p.id.clone()).collect();
        ids.sort();
        let mut orig: Vec<_> = feed.posts.iter().map(|p| p.id.clone()).collect();
        orig.sort();
        assert_eq!(ids, orig);
        assert!(shuffle_feed(&Feed::new("e", vec![]), 7).is_empty());
    }

    fn arb_post() -> impl Strategy<Value = Post> {
        (
            "[a-z0-9]{1,6}",
            "[A-Za-z_]{1,10}",
            prop::option::of("[a-z]{1,8}\\.(com|org|net)"),
            "\\PC{0,30}",
            0i64..2_000_000_000,
            any::<u32>(),
            prop::collection::vec(("[a-z0-9]{1,5}", "\\PC{0,20}", 0i64..2_000_000_000), 0..5),
        )
            .prop_map(|(id, handle, domain, text, ts, shares, replies)| {
                let mut seen = HashSet::new();
                let replies = replies
                    .into_iter()
                    .filter(|(rid, _, _)| seen.insert(rid.clone()))
                    .map(|(rid, rtext, rts)| Reply {
                        id: rid,
                        author_handle: "u".into(),
                        text: rtext,
                        created_at: Utc.timestamp_opt(rts, 0).unwrap(),
                        parent_id: id.clone(),
                    })
                    .collect();
                Post {
                    id,
                    author_handle: handle,
                    source_domain: domain,
                    text,
                    created_at: Utc.timestamp_opt(ts, 0).unwrap(),
                    share_count: u64::from(shares),
                    replies,
                }
            })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_round_trips(posts in prop::collection::vec(arb_post(), 0..6)) {
            let mut seen = HashSet::new();
            let posts: Vec<Post> = posts.into_iter().filter(|p| seen.insert(p.id.clone())).collect();
            let feed = Feed::new("rt", posts);
            let mut buf = Vec::new();
            serialize_feed(&feed, &mut buf).unwrap();
            let back = parse_feed("rt", buf.as_slice()).unwrap();
            prop_assert_eq!(back, feed);
        }
    }
}
