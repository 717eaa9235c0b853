//! HTTP service for collaborative partial annotation: contributors submit
//! inaccurate true targets per instance, inspect assessments, start training
//! rounds and fetch prediction comparisons.
//!
//! | method | path | body / result |
//! |---|---|---|
//! | POST | `/projects` | `{name?}` → 201 project summary |
//! | GET | `/projects/{id}` | project summary |
//! | POST | `/projects/{id}/instances?id=ID` | ASCII PGM → 201 `{instance_id, width, height}` |
//! | POST | `/projects/{id}/instances/{iid}/annotations` | `{contributor_id, cells: [{pixel, label}]}` → assessment report |
//! | GET | `/projects/{id}/instances/{iid}/assessment` | assessment report |
//! | POST | `/projects/{id}/rounds` | training config (empty body for defaults) → 202 `{token}` |
//! | GET | `/projects/{id}/rounds/{token}/status` | round status and latest record |
//! | GET | `/projects/{id}/rounds/{token}/history` | training history |
//! | GET | `/projects/{id}/instances/{iid}/comparison` | rasters, agreement classes, counts |
//!
//! Errors are `{code, message, details}` with status 404, 409, 412 or 422.

mod error;
mod payload;
mod state;

use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use miatt_forge::formats::parse_pgm;
use miatt_forge::uttl::{forward, train_uttl_with, TrainConfig};
use miatt_forge::{agreement_map, binarize, derive_ltt, evaluate, AgreementCounts, LafParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use error::{ApiError, ApiResult, ErrorBody};
pub use payload::{decode_raster, label_code, Raster};
pub use state::{CellFact, Event, FactLabel, RoundStatus};
use state::{Event as E, Project, ProjectHandle, Registry};

#[derive(Clone)]
pub struct AppState {
    registry: Arc<Registry>,
}

impl AppState {
    pub fn open(data_dir: &Path) -> std::io::Result<Self> {
        Ok(Self { registry: Arc::new(Registry::open(data_dir)?) })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/instances", post(add_instance))
        .route("/projects/{id}/instances/{iid}/annotations", post(submit_annotation))
        .route("/projects/{id}/instances/{iid}/assessment", get(get_assessment))
        .route("/projects/{id}/instances/{iid}/comparison", get(get_comparison))
        .route("/projects/{id}/rounds", post(start_round))
        .route("/projects/{id}/rounds/{token}/status", get(get_status))
        .route("/projects/{id}/rounds/{token}/history", get(get_history))
        .with_state(state)
}

/// Serves the API on `listener` with state replayed from `data_dir`.
pub async fn serve(listener: tokio::net::TcpListener, data_dir: &Path) -> std::io::Result<()> {
    let state = AppState::open(data_dir)?;
    axum::serve(listener, router(state)).await
}

fn parse_json<T: DeserializeOwned + Default>(body: &[u8]) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("invalid JSON body: {e}")))
}

fn project_summary(p: &Project) -> serde_json::Value {
    let instances: Vec<_> = p
        .instances
        .iter()
        .map(|i| {
            json!({
                "id": i.id,
                "width": i.instance.width(),
                "height": i.instance.height(),
                "contributors": i.submissions.iter().map(|s| s.contributor_id.as_str()).collect::<Vec<_>>(),
                "assessment_passed": i.assessment().passed,
            })
        })
        .collect();
    json!({
        "id": p.id,
        "name": p.name,
        "instances": instances,
        "round_status": p.round_status(),
        "rounds": p.rounds.iter().map(|r| r.token.as_str()).collect::<Vec<_>>(),
        "latest_model_round": p.latest_model.as_ref().map(|(t, _)| t.as_str()),
    })
}

#[derive(Debug, Default, Deserialize)]
struct CreateProject {
    name: Option<String>,
}

async fn create_project(State(s): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateProject = parse_json(&body)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let handle = s.registry.create(id, req.name)?;
    let summary = project_summary(&handle.state.read().expect("project lock poisoned"));
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn get_project(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let handle = s.registry.get(&id)?;
    let summary = project_summary(&handle.state.read().expect("project lock poisoned"));
    Ok(Json(summary))
}

#[derive(Debug, Deserialize)]
struct InstanceQuery {
    id: Option<String>,
}

async fn add_instance(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<InstanceQuery>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let handle = s.registry.get(&id)?;
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::invalid("instance body is not UTF-8 text"))?;
    let instance = parse_pgm(text).map_err(|e| ApiError::invalid(format!("invalid PGM: {e}")))?;
    let instance_id = q.id.unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
    if instance_id.is_empty() {
        return Err(ApiError::invalid("instance id must not be empty"));
    }
    let (width, height) = (instance.width(), instance.height());
    handle.record(E::InstanceAdded {
        instance_id: instance_id.clone(),
        width,
        height,
        pixels: instance.pixels().to_vec(),
    })?;
    Ok((StatusCode::CREATED, Json(json!({ "instance_id": instance_id, "width": width, "height": height }))))
}

#[derive(Debug, Deserialize)]
struct AnnotationRequest {
    contributor_id: String,
    cells: Vec<CellFact>,
}

async fn submit_annotation(
    State(s): State<AppState>,
    UrlPath((id, iid)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let handle = s.registry.get(&id)?;
    let req: AnnotationRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid(format!("invalid annotation: {e}")))?;
    if req.contributor_id.is_empty() {
        return Err(ApiError::invalid("contributor_id must not be empty"));
    }
    let mut project = handle.state.write().expect("project lock poisoned");
    project.instance(&iid)?;
    handle.record_locked(
        &mut project,
        E::AnnotationSubmitted { instance_id: iid.clone(), contributor_id: req.contributor_id, cells: req.cells },
    )?;
    Ok(Json(project.instance(&iid)?.assessment()))
}

async fn get_assessment(
    State(s): State<AppState>,
    UrlPath((id, iid)): UrlPath<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    let handle = s.registry.get(&id)?;
    let project = handle.state.read().expect("project lock poisoned");
    Ok(Json(project.instance(&iid)?.assessment()))
}

async fn start_round(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let handle = s.registry.get(&id)?;
    let config: TrainConfig = parse_json(&body)?;
    config.validate().map_err(|e| ApiError::invalid(e.to_string()))?;
    let (token, dataset) = {
        let mut project = handle.state.write().expect("project lock poisoned");
        if let Some(r) = project.running_round() {
            return Err(ApiError::Conflict(format!("round {} is still running", r.token)));
        }
        if project.instances.is_empty() {
            return Err(ApiError::AssessmentFailed {
                message: "project has no instances".into(),
                details: json!({ "failing_instances": [] }),
            });
        }
        let failing: Vec<&str> =
            project.instances.iter().filter(|i| !i.assessment().passed).map(|i| i.id.as_str()).collect();
        if !failing.is_empty() {
            return Err(ApiError::AssessmentFailed {
                message: format!("MIATTs assessment fails for {}", failing.join(", ")),
                details: json!({ "failing_instances": failing }),
            });
        }
        for i in &project.instances {
            config.alpha_for(i.submissions.len()).map_err(|e| ApiError::invalid(format!("instance {}: {e}", i.id)))?;
        }
        let dataset: Vec<_> = project.instances.iter().map(|i| (i.instance.clone(), i.miatts())).collect();
        let token = uuid::Uuid::new_v4().simple().to_string();
        handle.record_locked(&mut project, E::RoundStarted { token: token.clone(), config: config.clone() })?;
        (token, dataset)
    };
    let round = handle.state.read().expect("project lock poisoned").round(&token)?.clone();
    let task_handle = handle.clone();
    let task_token = token.clone();
    tokio::task::spawn_blocking(move || {
        let result = train_uttl_with(&dataset, &config, &LafParams::default(), |p| {
            round.publish_epoch(p.epoch, p.max_epochs, p.record);
        });
        let event = match result {
            Ok((model, history)) => E::RoundFinished { token: task_token, history, model },
            Err(e) => E::RoundFailed { token: task_token, message: e.to_string() },
        };
        if let Err(e) = task_handle.record(event) {
            tracing::error!(error = %e, "could not record the end of a round");
            round.fail(e.to_string());
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "token": token }))))
}

#[derive(Debug, Serialize)]
struct StatusResponse {
    token: String,
    #[serde(flatten)]
    status: RoundStatus,
    config: TrainConfig,
    records: usize,
    latest: Option<miatt_forge::uttl::HistoryRecord>,
}

async fn get_status(
    State(s): State<AppState>,
    UrlPath((id, token)): UrlPath<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    let handle = s.registry.get(&id)?;
    let round = handle.state.read().expect("project lock poisoned").round(&token)?.clone();
    let snap = round.snapshot();
    Ok(Json(StatusResponse {
        token,
        status: snap.status,
        config: round.config.clone(),
        records: snap.history.records.len(),
        latest: snap.history.records.last().cloned(),
    }))
}

async fn get_history(
    State(s): State<AppState>,
    UrlPath((id, token)): UrlPath<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    let handle = s.registry.get(&id)?;
    let round = handle.state.read().expect("project lock poisoned").round(&token)?.clone();
    Ok(Json(round.snapshot().history))
}

#[derive(Debug, Serialize)]
struct TargetLayer {
    contributor_id: String,
    labels: Raster,
    agreement: Raster,
    agreement_counts: AgreementCounts,
}

async fn get_comparison(
    State(s): State<AppState>,
    UrlPath((id, iid)): UrlPath<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    let handle: Arc<ProjectHandle> = s.registry.get(&id)?;
    let (entry, model_round, model) = {
        let project = handle.state.read().expect("project lock poisoned");
        let entry = project.instance(&iid)?.clone();
        let (round, model) = project
            .latest_model
            .clone()
            .ok_or_else(|| ApiError::NoModel(format!("project {id} has no trained model yet")))?;
        (entry, round, model)
    };
    let report = entry.assessment();
    if !report.passed {
        return Err(ApiError::AssessmentFailed {
            message: format!("MIATTs assessment fails for {iid}"),
            details: json!({ "failing_instances": [iid], "assessment": report }),
        });
    }
    let laf = LafParams::default();
    let m = entry.miatts();
    let internal = |e: miatt_forge::MiattError| ApiError::Internal(e.to_string());
    let probs = forward(&model, &entry.instance);
    let (counts, metrics) = evaluate(&probs, &m, &laf).map_err(internal)?;
    let prediction = binarize(&probs, laf.binarize_threshold).map_err(internal)?;
    let ltt = derive_ltt(&m).map_err(internal)?;
    let ltt_classes = agreement_map(&prediction, &ltt).map_err(internal)?;
    let targets = entry
        .submissions
        .iter()
        .map(|s| {
            let classes = agreement_map(&prediction, &s.target).map_err(internal)?;
            Ok(TargetLayer {
                contributor_id: s.contributor_id.clone(),
                labels: Raster::labels(&s.target),
                agreement: Raster::agreement(s.target.width(), s.target.height(), &classes),
                agreement_counts: AgreementCounts::tally(&classes),
            })
        })
        .collect::<ApiResult<Vec<_>>>()?;
    let (w, h) = (entry.instance.width(), entry.instance.height());
    Ok(Json(json!({
        "instance_id": iid,
        "model_round": model_round,
        "width": w,
        "height": h,
        "instance": Raster::instance(&entry.instance),
        "prediction": Raster::labels(&prediction),
        "ltt": Raster::labels(&ltt),
        "agreement": Raster::agreement(w, h, &ltt_classes),
        "agreement_counts": AgreementCounts::tally(&ltt_classes),
        "counts": counts,
        "metrics": metrics,
        "targets": targets,
    })))
}
