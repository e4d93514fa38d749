//! The nudge decision tree and tooltip rendering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feed::Post;
use crate::registry::{Registry, SourceClass};
use crate::replies::{analyze_replies, InvalidThreadError, QuestionStats};

pub const RELIABLE_TOOLTIP: &str = "This tweet seems more reliable. Nobody has questioned this item yet.";
pub const QUESTIONABLE_PREFIX: &str = "Several users have questioned this item. Questions include: ";
pub const UNRELIABLE_PREFIX: &str = "This source is considered unreliable because it promotes ";

pub const DEFAULT_DIM_OPACITY: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NudgeKind {
    Reliable,
    Questionable,
    Unreliable,
    None,
}

impl NudgeKind {
    pub const NUDGES: [NudgeKind; 3] = [NudgeKind::Reliable, NudgeKind::Questionable, NudgeKind::Unreliable];

    pub fn as_str(self) -> &'static str {
        match self {
            NudgeKind::Reliable => "Reliable",
            NudgeKind::Questionable => "Questionable",
            NudgeKind::Unreliable => "Unreliable",
            NudgeKind::None => "None",
        }
    }

    /// Short label used in reports.
    pub fn short_label(self) -> &'static str {
        match self {
            NudgeKind::Reliable => "T_R",
            NudgeKind::Questionable => "T_Q",
            NudgeKind::Unreliable => "T_U",
            NudgeKind::None => "-",
        }
    }
}

impl std::str::FromStr for NudgeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reliable" | "t_r" => Ok(NudgeKind::Reliable),
            "questionable" | "t_q" => Ok(NudgeKind::Questionable),
            "unreliable" | "t_u" => Ok(NudgeKind::Unreliable),
            "none" | "" => Ok(NudgeKind::None),
            other => Err(format!("unknown nudge kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Background {
    GreenHighlight,
    YellowHighlight,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderHint {
    pub background: Background,
    pub opacity: f64,
}

impl RenderHint {
    pub const PLAIN: RenderHint = RenderHint {
        background: Background::Plain,
        opacity: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NudgeAnnotation {
    pub post_id: String,
    pub kind: NudgeKind,
    pub question_stats: QuestionStats,
    pub tooltip: String,
    pub render: RenderHint,
    pub source_class: SourceClass,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TooltipError {
    #[error("posts without a nudge have no tooltip")]
    NoTooltip,
    #[error("questionable nudge requires a first question")]
    MissingFirstQuestion,
    #[error("unreliable nudge requires a non-mainstream source, got {0}")]
    NotNonMainstream(SourceClass),
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("dim opacity must lie in (0, 1), got {0}")]
pub struct ConfigError(pub f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NudgeConfig {
    dim_opacity: f64,
}

impl NudgeConfig {
    pub fn new(dim_opacity: f64) -> Result<NudgeConfig, ConfigError> {
        if dim_opacity > 0.0 && dim_opacity < 1.0 {
            Ok(NudgeConfig { dim_opacity })
        } else {
            Err(ConfigError(dim_opacity))
        }
    }

    pub fn dim_opacity(&self) -> f64 {
        self.dim_opacity
    }

    pub fn render_hint(&self, kind: NudgeKind) -> RenderHint {
        match kind {
            NudgeKind::Reliable => RenderHint {
                background: Background::GreenHighlight,
                opacity: 1.0,
            },
            NudgeKind::Questionable => RenderHint {
                background: Background::YellowHighlight,
                opacity: 1.0,
            },
            NudgeKind::Unreliable => RenderHint {
                background: Background::Plain,
                opacity: self.dim_opacity,
            },
            NudgeKind::None => RenderHint::PLAIN,
        }
    }
}

impl Default for NudgeConfig {
    fn default() -> Self {
        NudgeConfig {
            dim_opacity: DEFAULT_DIM_OPACITY,
        }
    }
}

pub fn classify_post(source_class: &SourceClass, stats: &QuestionStats) -> NudgeKind {
    match source_class {
        SourceClass::Unknown => NudgeKind::None,
        SourceClass::NonMainstream { .. } => NudgeKind::Unreliable,
        SourceClass::Mainstream { .. } if stats.question_count > 0 => NudgeKind::Questionable,
        SourceClass::Mainstream { .. } => NudgeKind::Reliable,
    }
}

pub fn render_tooltip(kind: NudgeKind, source_class: &SourceClass, stats: &QuestionStats) -> Result<String, TooltipError> {
    match kind {
        NudgeKind::None => Err(TooltipError::NoTooltip),
        NudgeKind::Reliable => Ok(RELIABLE_TOOLTIP.to_string()),
        NudgeKind::Questionable => {
            let first = stats
                .first_question
                .as_ref()
                .filter(|r| !r.text.is_empty())
                .ok_or(TooltipError::MissingFirstQuestion)?;
            Ok(format!("{QUESTIONABLE_PREFIX}{}", first.text))
        }
        NudgeKind::Unreliable => match source_class {
            SourceClass::NonMainstream { category, .. } => {
                Ok(format!("{UNRELIABLE_PREFIX}{}", category.message_fragment()))
            }
            other => Err(TooltipError::NotNonMainstream(*other)),
        },
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AnnotateError {
    #[error("post {post_id}: {source}")]
    Thread {
        post_id: String,
        #[source]
        source: InvalidThreadError,
    },
    #[error("post {post_id}: {source}")]
    Tooltip {
        post_id: String,
        #[source]
        source: TooltipError,
    },
}

pub fn annotate_post(registry: &Registry, post: &Post, config: &NudgeConfig) -> Result<NudgeAnnotation, AnnotateError> {
    let source_class = registry.classify_parts(&post.author_handle, post.source_domain.as_deref());
    let question_stats = analyze_replies(&post.replies).map_err(|source| AnnotateError::Thread {
        post_id: post.id.clone(),
        source,
    })?;
    let kind = classify_post(&source_class, &question_stats);
    let tooltip = match kind {
        NudgeKind::None => String::new(),
        _ => render_tooltip(kind, &source_class, &question_stats).map_err(|source| AnnotateError::Tooltip {
            post_id: post.id.clone(),
            source,
        })?,
    };
    Ok(NudgeAnnotation {
        post_id: post.id.clone(),
        kind,
        question_stats,
        tooltip,
        render: config.render_hint(kind),
        source_class,
    })
}

/// One result per post, in input order. A bad thread fails only its own post.
pub fn annotate_feed(registry: &Registry, posts: &[Post], config: &NudgeConfig) -> Vec<Result<NudgeAnnotation, AnnotateError>> {
    posts.iter().map(|p| annotate_post(registry, p, config)).collect()
}
