//! Curated news-source registry backing the authority heuristic.
//!
//! Two tab-separated tables are loaded: one of mainstream outlets and one of
//! non-mainstream outlets tagged with the kind of inaccuracy they are known
//! for. Lookups go by platform handle first, then by normalized domain,
//! walking up to a registered parent domain when a subdomain is given.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version tag of the registry tables shipped with the crate.
pub const DEFAULT_EDITION: &str = "reconstructed-2019.07";

const DEFAULT_MAINSTREAM: &str = include_str!("../data/mainstream.tsv");
const DEFAULT_NONMAINSTREAM: &str = include_str!("../data/nonmainstream.tsv");

const MAINSTREAM_HEADER: [&str; 4] = ["domain", "handle", "display_name", "bias"];
const NONMAINSTREAM_HEADER: [&str; 5] = ["domain", "handle", "display_name", "bias", "category"];

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot extract a hostname from {input:?}")]
pub struct NormalizationError {
    pub input: String,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("{table}:{line}: {message}")]
    Parse {
        table: String,
        line: usize,
        message: String,
    },
    #[error("{table}:{line}: non-mainstream row for {domain} has no inaccuracy category")]
    MissingCategory {
        table: String,
        line: usize,
        domain: String,
    },
    #[error("duplicate domain {domain} ({first} and {second})")]
    DuplicateDomain {
        domain: String,
        first: String,
        second: String,
    },
    #[error("duplicate handle @{handle} ({first} and {second})")]
    DuplicateHandle {
        handle: String,
        first: String,
        second: String,
    },
    #[error("{table}:{line}: {message}")]
    Invariant {
        table: String,
        line: usize,
        message: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Political leaning of a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bias {
    Left,
    Center,
    Right,
    Conspiracy,
}

impl FromStr for Bias {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Bias::Left),
            "center" | "centre" => Ok(Bias::Center),
            "right" => Ok(Bias::Right),
            "conspiracy" => Ok(Bias::Conspiracy),
            other => Err(format!("unknown bias {other:?}")),
        }
    }
}

/// Why a non-mainstream source is considered unreliable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InaccuracyCategory {
    FakeNews,
    ExtremeBias,
    RumorMills,
    ConspiracyTheory,
    StateNews,
    Clickbait,
    Satire,
    Junksci,
    Hate,
    Unreliable,
}

impl InaccuracyCategory {
    pub const ALL: [InaccuracyCategory; 10] = [
        InaccuracyCategory::FakeNews,
        InaccuracyCategory::ExtremeBias,
        InaccuracyCategory::RumorMills,
        InaccuracyCategory::ConspiracyTheory,
        InaccuracyCategory::StateNews,
        InaccuracyCategory::Clickbait,
        InaccuracyCategory::Satire,
        InaccuracyCategory::Junksci,
        InaccuracyCategory::Hate,
        InaccuracyCategory::Unreliable,
    ];

    /// The phrase completing "This source is considered unreliable because it promotes ...".
    pub fn message_fragment(self) -> &'static str {
        match self {
            InaccuracyCategory::FakeNews => "misinformation",
            InaccuracyCategory::ExtremeBias => "partisan stories",
            InaccuracyCategory::RumorMills => "rumor",
            InaccuracyCategory::ConspiracyTheory => "conspiracy",
            InaccuracyCategory::StateNews => "state propaganda",
            InaccuracyCategory::Clickbait => "clickbait",
            InaccuracyCategory::Satire => "satire",
            InaccuracyCategory::Junksci => "junk science",
            InaccuracyCategory::Hate => "hate",
            InaccuracyCategory::Unreliable => "unreliable news",
        }
    }
}

impl FromStr for InaccuracyCategory {
    type Err = String;

    /// Accepts the canonical variant names as well as the short opensources-style tags.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "fakenews" | "fake" => InaccuracyCategory::FakeNews,
            "extremebias" | "bias" => InaccuracyCategory::ExtremeBias,
            "rumormills" | "rumormill" | "rumor" => InaccuracyCategory::RumorMills,
            "conspiracytheory" | "conspiracy" => InaccuracyCategory::ConspiracyTheory,
            "statenews" | "state" => InaccuracyCategory::StateNews,
            "clickbait" => InaccuracyCategory::Clickbait,
            "satire" => InaccuracyCategory::Satire,
            "junksci" | "junkscience" => InaccuracyCategory::Junksci,
            "hate" => InaccuracyCategory::Hate,
            "unreliable" => InaccuracyCategory::Unreliable,
            _ => return Err(format!("unknown inaccuracy category {s:?}")),
        })
    }
}

/// Free-function form of [`InaccuracyCategory::message_fragment`].
pub fn inaccuracy_message_fragment(category: InaccuracyCategory) -> &'static str {
    category.message_fragment()
}

/// Registry tier of a source. Non-mainstream entries always carry a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    Mainstream,
    NonMainstream(InaccuracyCategory),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub domain: String,
    pub handle: Option<String>,
    pub display_name: String,
    pub tier: Tier,
    pub bias: Bias,
}

impl SourceRecord {
    pub fn inaccuracy_category(&self) -> Option<InaccuracyCategory> {
        match self.tier {
            Tier::Mainstream => None,
            Tier::NonMainstream(c) => Some(c),
        }
    }

    pub fn class(&self) -> SourceClass {
        match self.tier {
            Tier::Mainstream => SourceClass::Mainstream { bias: self.bias },
            Tier::NonMainstream(category) => SourceClass::NonMainstream {
                category,
                bias: self.bias,
            },
        }
    }
}

/// Result of looking a source up in the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum SourceClass {
    Mainstream {
        bias: Bias,
    },
    NonMainstream {
        category: InaccuracyCategory,
        bias: Bias,
    },
    Unknown,
}

impl fmt::Display for SourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceClass::Mainstream { bias } => write!(f, "Mainstream({bias:?})"),
            SourceClass::NonMainstream { category, bias } => {
                write!(f, "NonMainstream({category:?}, {bias:?})")
            }
            SourceClass::Unknown => f.write_str("Unknown"),
        }
    }
}

/// Reduce a URL or bare domain to a lowercase hostname.
///
/// Scheme, credentials, port, path, query and fragment are dropped, as are
/// leading `www.` labels (only while a dotted name remains, so the function
/// is idempotent).
pub fn normalize_domain(input: &str) -> Result<String, NormalizationError> {
    let err = || NormalizationError {
        input: input.to_string(),
    };
    let trimmed = input.trim();
    if trimmed.is_empty() || trimmed.chars().any(char::is_whitespace) {
        return Err(err());
    }
    let candidate = if trimmed.contains("://") {
        trimmed.to_string()
    } else {
        format!("http://{}", trimmed.trim_start_matches('/'))
    };
    let parsed = url::Url::parse(&candidate).map_err(|_| err())?;
    let host = parsed.host_str().ok_or_else(err)?;
    let mut host = host.trim_end_matches('.').to_ascii_lowercase();
    if host.is_empty() {
        return Err(err());
    }
    while let Some(rest) = host.strip_prefix("www.") {
        if !rest.contains('.') {
            break;
        }
        host = rest.to_string();
    }
    Ok(host)
}

fn normalize_handle(handle: &str) -> String {
    handle.trim().trim_start_matches('@').to_ascii_lowercase()
}

/// An immutable, validated pair of source tables.
#[derive(Debug, Clone)]
pub struct Registry {
    version: String,
    mainstream: Vec<SourceRecord>,
    nonmainstream: Vec<SourceRecord>,
    by_domain: HashMap<String, (bool, usize)>,
    by_handle: HashMap<String, (bool, usize)>,
}

struct ParsedTable {
    version: Option<String>,
    rows: Vec<(usize, SourceRecord)>,
}

fn parse_table(text: &str, table: &str, nonmainstream: bool) -> Result<ParsedTable, RegistryError> {
    let parse_err = |line: usize, message: String| RegistryError::Parse {
        table: table.to_string(),
        line,
        message,
    };
    let expected: &[&str] = if nonmainstream {
        &NONMAINSTREAM_HEADER
    } else {
        &MAINSTREAM_HEADER
    };

    let mut version = None;
    let mut header_seen = false;
    let mut rows = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("version:") {
                version = Some(v.trim().to_string());
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !header_seen {
            let got: Vec<&str> = fields.iter().map(|f| f.trim()).collect();
            if got != expected {
                return Err(parse_err(
                    line_no,
                    format!("expected header {:?}, found {:?}", expected.join("\\t"), got.join("\\t")),
                ));
            }
            header_seen = true;
            continue;
        }

        if nonmainstream && fields.len() == MAINSTREAM_HEADER.len() {
            return Err(RegistryError::MissingCategory {
                table: table.to_string(),
                line: line_no,
                domain: fields[0].trim().to_string(),
            });
        }
        if fields.len() != expected.len() {
            return Err(parse_err(
                line_no,
                format!("expected {} fields, found {}", expected.len(), fields.len()),
            ));
        }

        let raw_domain = fields[0].trim();
        if raw_domain.is_empty() || raw_domain.contains('/') || raw_domain.chars().any(char::is_whitespace) {
            return Err(parse_err(line_no, format!("invalid domain {raw_domain:?}")));
        }
        let domain = normalize_domain(raw_domain).map_err(|e| parse_err(line_no, e.to_string()))?;
        let handle = Some(fields[1].trim())
            .filter(|h| !h.is_empty())
            .map(|h| h.trim_start_matches('@').to_string());
        let display_name = match fields[2].trim() {
            "" => domain.clone(),
            name => name.to_string(),
        };
        let bias: Bias = fields[3].parse().map_err(|m| parse_err(line_no, m))?;

        let tier = if nonmainstream {
            let cat = fields[4].trim();
            if cat.is_empty() {
                return Err(RegistryError::MissingCategory {
                    table: table.to_string(),
                    line: line_no,
                    domain,
                });
            }
            Tier::NonMainstream(cat.parse().map_err(|m| parse_err(line_no, m))?)
        } else {
            if bias == Bias::Conspiracy {
                return Err(RegistryError::Invariant {
                    table: table.to_string(),
                    line: line_no,
                    message: format!("mainstream source {domain} cannot carry the Conspiracy bias"),
                });
            }
            Tier::Mainstream
        };

        rows.push((
            line_no,
            SourceRecord {
                domain,
                handle,
                display_name,
                tier,
                bias,
            },
        ));
    }

    if !header_seen && !rows.is_empty() {
        return Err(parse_err(1, "missing header row".into()));
    }
    Ok(ParsedTable { version, rows })
}

impl Registry {
    /// The registry shipped with the crate.
    pub fn default_edition() -> Registry {
        Registry::from_tables(DEFAULT_MAINSTREAM, DEFAULT_NONMAINSTREAM)
            .expect("bundled registry tables are valid")
    }

    /// Load both tables from disk.
    pub fn load(mainstream: impl AsRef<Path>, nonmainstream: impl AsRef<Path>) -> Result<Registry, RegistryError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| RegistryError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let m = read(mainstream.as_ref())?;
        let n = read(nonmainstream.as_ref())?;
        Registry::from_tables(&m, &n)
    }

    pub fn from_tables(mainstream: &str, nonmainstream: &str) -> Result<Registry, RegistryError> {
        let m = parse_table(mainstream, "mainstream", false)?;
        let n = parse_table(nonmainstream, "nonmainstream", true)?;

        let mut by_domain: HashMap<String, (bool, usize)> = HashMap::new();
        let mut by_handle: HashMap<String, (bool, usize)> = HashMap::new();
        let mut tables: [Vec<SourceRecord>; 2] = [Vec::new(), Vec::new()];
        let names = ["mainstream", "nonmainstream"];

        for (t, parsed) in [m.rows, n.rows].into_iter().enumerate() {
            let is_nm = t == 1;
            for (line, rec) in parsed {
                let here = format!("{}:{}", names[t], line);
                if let Some(&(prev_nm, prev_idx)) = by_domain.get(&rec.domain) {
                    let prev = &tables[prev_nm as usize][prev_idx];
                    return Err(RegistryError::DuplicateDomain {
                        domain: rec.domain.clone(),
                        first: format!("{} ({})", names[prev_nm as usize], prev.display_name),
                        second: here,
                    });
                }
                if let Some(h) = &rec.handle {
                    let key = normalize_handle(h);
                    if let Some(&(prev_nm, prev_idx)) = by_handle.get(&key) {
                        let prev = &tables[prev_nm as usize][prev_idx];
                        return Err(RegistryError::DuplicateHandle {
                            handle: h.clone(),
                            first: format!("{} ({})", names[prev_nm as usize], prev.domain),
                            second: here,
                        });
                    }
                    by_handle.insert(key, (is_nm, tables[t].len()));
                }
                by_domain.insert(rec.domain.clone(), (is_nm, tables[t].len()));
                tables[t].push(rec);
            }
        }

        let [mainstream, nonmainstream] = tables;
        let version = n
            .version
            .or(m.version)
            .unwrap_or_else(|| "unversioned".to_string());
        Ok(Registry {
            version,
            mainstream,
            nonmainstream,
            by_domain,
            by_handle,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn mainstream(&self) -> &[SourceRecord] {
        &self.mainstream
    }

    pub fn nonmainstream(&self) -> &[SourceRecord] {
        &self.nonmainstream
    }

    /// Distinct inaccuracy categories present in the non-mainstream table.
    pub fn categories(&self) -> BTreeSet<InaccuracyCategory> {
        self.nonmainstream
            .iter()
            .filter_map(SourceRecord::inaccuracy_category)
            .collect()
    }

    fn record(&self, slot: (bool, usize)) -> &SourceRecord {
        if slot.0 {
            &self.nonmainstream[slot.1]
        } else {
            &self.mainstream[slot.1]
        }
    }

    pub fn lookup_handle(&self, handle: &str) -> Option<&SourceRecord> {
        let key = normalize_handle(handle);
        if key.is_empty() {
            return None;
        }
        self.by_handle.get(&key).map(|&s| self.record(s))
    }

    /// Exact domain match, falling back to the closest registered parent domain.
    pub fn lookup_domain(&self, url_or_domain: &str) -> Option<&SourceRecord> {
        let host = normalize_domain(url_or_domain).ok()?;
        let mut candidate = host.as_str();
        loop {
            if let Some(&slot) = self.by_domain.get(candidate) {
                return Some(self.record(slot));
            }
            match candidate.split_once('.') {
                Some((_, parent)) if parent.contains('.') => candidate = parent,
                _ => return None,
            }
        }
    }

    /// Classify a single identifier that may be a handle, a domain or a URL.
    pub fn classify_source(&self, domain_or_handle: &str) -> SourceClass {
        self.lookup_handle(domain_or_handle)
            .or_else(|| self.lookup_domain(domain_or_handle))
            .map_or(SourceClass::Unknown, SourceRecord::class)
    }

    /// Classify a post by its author handle, then by its linked domain.
    pub fn classify_parts(&self, handle: &str, domain: Option<&str>) -> SourceClass {
        self.lookup_handle(handle)
            .or_else(|| domain.and_then(|d| self.lookup_domain(d)))
            .map_or(SourceClass::Unknown, SourceRecord::class)
    }
}
