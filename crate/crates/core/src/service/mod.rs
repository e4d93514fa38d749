//! HTTP service: serves the annotated feed, collects ratings and profiles,
//! and reports on them.

pub mod assign;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assign::{AssignmentMode, GroupAssigner};
pub use store::{ProfileStoreRecord, RatingStore, RatingStoreRecord, StoreError};

use crate::dataset::{fill_z_scores, ProfileRow, RatingRow};
use crate::feed::{shuffle_feed, Feed, Post};
use crate::nudge::{annotate_feed, AnnotateError, NudgeAnnotation, NudgeConfig, NudgeKind, RenderHint};
use crate::registry::Registry;
use crate::replies::is_question;
use crate::report::{build_report, ReportError};
use crate::survey::{CredibilityRating, Group, ParticipantProfile, ProfileInput};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub struct ServiceConfig {
    pub registry: Registry,
    pub feed: Feed,
    pub store_dir: PathBuf,
    pub assigner: GroupAssigner,
    pub nudge: NudgeConfig,
    /// Shuffle presentation order per participant with this seed.
    pub shuffle_seed: Option<u64>,
}

pub struct AppState {
    feed: Feed,
    annotations: HashMap<String, NudgeAnnotation>,
    assigner: GroupAssigner,
    shuffle_seed: Option<u64>,
    store: Mutex<RatingStore>,
}

impl AppState {
    /// Annotate the whole feed and open the store. Any bad post aborts startup.
    pub fn new(config: ServiceConfig) -> Result<AppState, ServiceError> {
        let mut annotations = HashMap::new();
        for result in annotate_feed(&config.registry, &config.feed.posts, &config.nudge) {
            let a = result?;
            annotations.insert(a.post_id.clone(), a);
        }
        Ok(AppState {
            feed: config.feed,
            annotations,
            assigner: config.assigner,
            shuffle_seed: config.shuffle_seed,
            store: Mutex::new(RatingStore::open(&config.store_dir)?),
        })
    }

    fn store(&self) -> MutexGuard<'_, RatingStore> {
        // a panic mid-append leaves at most a torn line, which the log tolerates
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Sticky group for a participant, recording first assignments.
    pub fn group_for(&self, participant_id: &str) -> Result<Group, StoreError> {
        let mut store = self.store();
        if let Some(g) = store.recorded_group(participant_id) {
            return Ok(g);
        }
        let g = self.assigner.assign(participant_id, store.group_counts());
        store.record_group(participant_id, g)?;
        Ok(g)
    }

    pub fn annotation(&self, post_id: &str) -> Option<&NudgeAnnotation> {
        self.annotations.get(post_id)
    }
}

/// Nudge as shown to one participant. Control participants get only the
/// plain render hint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NudgeView {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<NudgeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tooltip: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_count: Option<usize>,
    /// Ids of the questioning replies, oldest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub question_ids: Vec<String>,
    pub render: RenderHint,
}

impl NudgeView {
    pub fn blinded() -> NudgeView {
        NudgeView {
            kind: None,
            tooltip: None,
            question_count: None,
            question_ids: Vec::new(),
            render: RenderHint::PLAIN,
        }
    }

    pub fn shown(annotation: &NudgeAnnotation, post: &Post) -> NudgeView {
        let mut questions: Vec<_> = post.replies.iter().filter(|r| is_question(&r.text)).collect();
        questions.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        NudgeView {
            kind: Some(annotation.kind),
            tooltip: (!annotation.tooltip.is_empty()).then(|| annotation.tooltip.clone()),
            question_count: Some(annotation.question_stats.question_count),
            question_ids: questions.into_iter().map(|r| r.id.clone()).collect(),
            render: annotation.render,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostView {
    #[serde(flatten)]
    pub post: Post,
    pub nudge: NudgeView,
    pub rated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedView {
    pub participant_id: String,
    pub group: Group,
    pub feed_id: String,
    pub posts: Vec<PostView>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        let status = match e {
            StoreError::DuplicateRating { .. } | StoreError::DuplicateProfile(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> ApiError {
        ApiError::new(e.status(), e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, e.body_text())
    }
}

type Shared = Arc<AppState>;

#[derive(Debug, Deserialize)]
struct ParticipantQuery {
    participant: Option<String>,
}

fn participant_id(q: Result<Query<ParticipantQuery>, QueryRejection>) -> Result<Option<String>, ApiError> {
    let Query(q) = q?;
    match q.participant {
        Some(p) if p.trim().is_empty() => Err(ApiError::new(StatusCode::BAD_REQUEST, "participant must not be empty")),
        p => Ok(p),
    }
}

async fn get_feed(
    State(state): State<Shared>,
    q: Result<Query<ParticipantQuery>, QueryRejection>,
) -> Result<Json<FeedView>, ApiError> {
    let pid = participant_id(q)?.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "participant is required"))?;
    let group = state.group_for(&pid)?;
    let feed = match state.shuffle_seed {
        Some(seed) => shuffle_feed(&state.feed, state.assigner.order_seed(&pid, seed)),
        None => state.feed.clone(),
    };
    let store = state.store();
    let posts = feed
        .posts
        .into_iter()
        .map(|post| {
            let annotation = &state.annotations[&post.id];
            PostView {
                nudge: match group {
                    Group::Treatment => NudgeView::shown(annotation, &post),
                    Group::Control => NudgeView::blinded(),
                },
                rated: store.has_rated(&pid, &post.id),
                post,
            }
        })
        .collect();
    Ok(Json(FeedView {
        participant_id: pid,
        group,
        feed_id: feed.feed_id,
        posts,
    }))
}

async fn get_annotation(
    State(state): State<Shared>,
    Path(post_id): Path<String>,
    q: Result<Query<ParticipantQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let annotation = state
        .annotation(&post_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown post {post_id}")))?;
    match participant_id(q)? {
        Some(pid) => {
            let view = match state.group_for(&pid)? {
                Group::Treatment => {
                    let post = state.feed.posts.iter().find(|p| p.id == post_id).expect("annotated post");
                    NudgeView::shown(annotation, post)
                }
                Group::Control => NudgeView::blinded(),
            };
            Ok(Json(view).into_response())
        }
        None => Ok(Json(annotation.clone()).into_response()),
    }
}

async fn post_rating(
    State(state): State<Shared>,
    body: Result<Json<CredibilityRating>, JsonRejection>,
) -> Result<(StatusCode, Json<RatingStoreRecord>), ApiError> {
    let Json(rating) = body?;
    rating
        .validate()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let kind = state
        .annotation(&rating.post_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown post {}", rating.post_id)))?
        .kind;
    let group = state.group_for(&rating.participant_id)?;
    let mut store = state.store();
    let record = store.append_rating(rating, group, kind)?.clone();
    Ok((StatusCode::CREATED, Json(record)))
}

async fn post_profile(
    State(state): State<Shared>,
    body: Result<Json<ProfileInput>, JsonRejection>,
) -> Result<(StatusCode, Json<ProfileStoreRecord>), ApiError> {
    let Json(mut profile) = body?;
    if profile.participant_id.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "participant_id is required"));
    }
    let group = state.group_for(&profile.participant_id)?;
    if profile.group.is_some_and(|g| g != group) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("participant {} is assigned to {group}", profile.participant_id),
        ));
    }
    profile.group = Some(group);
    ParticipantProfile::score(profile.clone(), group)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let mut store = state.store();
    let record = store.append_profile(profile, group)?.clone();
    Ok((StatusCode::CREATED, Json(record)))
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

/// Export rows for everything in the store, z-scored over the whole set.
pub fn export_rows(store: &RatingStore) -> (Vec<RatingRow>, Vec<ProfileRow>) {
    let mut ratings: Vec<RatingRow> = store
        .ratings()
        .iter()
        .map(|r| RatingRow::from_rating(&r.rating, r.group, r.nudge_kind))
        .collect();
    fill_z_scores(&mut ratings);
    let profiles = store
        .profiles()
        .iter()
        .map(|p| ProfileRow::from_input(&p.profile, p.group))
        .collect();
    (ratings, profiles)
}

async fn get_report(
    State(state): State<Shared>,
    q: Result<Query<ReportQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = q?;
    let (ratings, profiles) = export_rows(&state.store());
    let report = build_report(&ratings, &profiles).map_err(|e| match e {
        ReportError::Empty => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        ReportError::Score(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    })?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(report).into_response()),
        Some("text") => Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], report.render_text()).into_response()),
        Some(other) => Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unknown format {other:?}"))),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/feed", get(get_feed))
        .route("/api/posts/{id}/annotation", get(get_annotation))
        .route("/api/ratings", post(post_rating))
        .route("/api/profiles", post(post_profile))
        .route("/api/report", get(get_report))
        .with_state(state)
}

/// Serve on an already bound listener until `shutdown` resolves.
pub async fn serve_until<F>(listener: tokio::net::TcpListener, state: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Bind `addr` and serve until ctrl-c. `on_bound` sees the actual address,
/// which matters when the port is 0.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tracing::info!(addr = %local, "listening");
    on_bound(local);
    serve_until(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
