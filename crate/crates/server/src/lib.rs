//! Axum service exposing simulation, comparison, training and step-by-step
//! environment sessions. Simulation work runs on the blocking pool.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;

use sodfeeder_api as api;
use sodfeeder_core::dispatch::{ACTION_COUNT, PolicyKind};
use sodfeeder_core::econ::aggregate_csv;
use sodfeeder_core::env::{LAYOUT_VERSION, OBS_DIM, OBS_NAMES, SodEnv};
use sodfeeder_core::experiment::{
    action_density_csv, build_world, compare, dispatch_log_csv, run_episode, runs_csv, train, train_stats_csv,
};
use sodfeeder_core::ppo::{ActorCritic, Checkpoint};
use sodfeeder_core::scenario::{Prepared, Scenario};
use sodfeeder_core::{Error, demand, network};

/// Error returned by handlers, rendered as an `ErrorBody`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: api::ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, category: &str, message: impl Into<String>) -> Self {
        Self { status, body: api::ErrorBody { category: category.into(), message: message.into() } }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let category = e.category();
        let status = match category {
            "config" | "usage" | "checkpoint" => StatusCode::UNPROCESSABLE_ENTITY,
            "state" => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, category, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Default)]
pub struct AppState {
    sessions: Mutex<HashMap<String, SodEnv>>,
}

pub type SharedState = Arc<AppState>;

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route(api::HEALTH, get(health))
        .route(api::NETWORK, post(network_dump))
        .route(api::DEMAND, post(demand_dump))
        .route(api::SIMULATE, post(simulate))
        .route(api::COMPARE, post(compare_policies))
        .route(api::TRAIN, post(train_policy))
        .route(api::SESSIONS, post(create_session))
        .route("/sessions/{id}/step", post(step_session))
        .route("/sessions/{id}", delete(delete_session))
        .with_state(state)
}

/// Serve on an already bound listener until the future is dropped.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(SharedState::default())).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

fn prepare(scenario: Option<Scenario>) -> Result<Arc<Prepared>, ApiError> {
    Ok(Arc::new(Prepared::new(scenario.unwrap_or_default())?))
}

fn restore(ck: Option<Checkpoint>) -> Result<Option<ActorCritic>, ApiError> {
    Ok(match ck {
        Some(c) => Some(c.restore(LAYOUT_VERSION, OBS_DIM, ACTION_COUNT)?),
        None => None,
    })
}

async fn health() -> Json<api::Health> {
    Json(api::Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into(), layout_version: LAYOUT_VERSION })
}

async fn network_dump(Json(req): Json<api::NetworkRequest>) -> ApiResult<api::NetworkResponse> {
    blocking(move || {
        let sc = req.scenario.unwrap_or_default();
        sc.validate()?;
        let net = network::build_corridor(&sc.corridor)?;
        let (nodes_csv, edges_csv) = net.to_csv_strings()?;
        Ok(api::NetworkResponse { nodes: net.node_count(), edges: net.edges().len(), nodes_csv, edges_csv })
    })
    .await
}

async fn demand_dump(Json(req): Json<api::DemandRequest>) -> ApiResult<api::DemandResponse> {
    blocking(move || {
        let p = prepare(req.scenario)?;
        let world = build_world(&p, PolicyKind::SoD, req.seed);
        let requests_csv = demand::requests_to_csv_string(&world.requests)?;
        Ok(api::DemandResponse { seed: req.seed, count: world.requests.len(), requests_csv })
    })
    .await
}

async fn simulate(Json(req): Json<api::SimulateRequest>) -> ApiResult<api::SimulateResponse> {
    blocking(move || {
        let p = prepare(req.scenario)?;
        let ac = restore(req.checkpoint)?;
        let result = run_episode(&p, req.policy, req.seed, ac.as_ref())?;
        let one = std::slice::from_ref(&result);
        Ok(api::SimulateResponse { runs_csv: runs_csv(one)?, dispatch_log_csv: dispatch_log_csv(one)?, result })
    })
    .await
}

async fn compare_policies(Json(req): Json<api::CompareRequest>) -> ApiResult<api::CompareResponse> {
    blocking(move || {
        if req.policies.is_empty() {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "usage", "no policies given"));
        }
        let p = prepare(req.scenario)?;
        let ac = restore(req.checkpoint)?;
        let seeds = req.seeds.unwrap_or_else(|| p.scenario.seeds.eval_seeds());
        let comparison = compare(&p, &req.policies, &seeds, ac.as_ref());
        for &k in &req.policies {
            let failed: Vec<_> = comparison.failures.iter().filter(|f| f.policy == k).collect();
            if let Some(f) = failed.first() {
                tracing::warn!(policy = %k, cells = failed.len(), "cells failed, first: {}", f.message);
            }
        }
        Ok(api::CompareResponse {
            aggregate_csv: aggregate_csv(&comparison.rows)?,
            runs_csv: runs_csv(&comparison.results)?,
            dispatch_log_csv: dispatch_log_csv(&comparison.results)?,
            action_density_csv: action_density_csv(&comparison.action_density)?,
            comparison,
        })
    })
    .await
}

async fn train_policy(Json(req): Json<api::TrainRequest>) -> ApiResult<api::TrainResponse> {
    blocking(move || {
        let mut sc = req.scenario.unwrap_or_default();
        if let Some(seed) = req.seed {
            sc.ppo.seed = seed;
        }
        let updates = req.updates.unwrap_or(sc.training.updates);
        let wall = req.wall_clock_secs.or(sc.training.wall_clock_secs);
        let p = prepare(Some(sc))?;
        let out = train(&p, updates, wall, |s| {
            tracing::info!(
                update = s.update,
                mean_return = s.mean_episode_return,
                value_loss = s.value_loss,
                entropy = s.entropy,
                "update done"
            );
        })?;
        Ok(api::TrainResponse {
            stats_csv: train_stats_csv(&out.stats)?,
            checkpoint: out.checkpoint,
            stats: out.stats,
            stopped_early: out.stopped_early,
            aborted: out.aborted,
        })
    })
    .await
}

async fn create_session(State(state): State<SharedState>, Json(req): Json<api::SessionRequest>) -> ApiResult<api::SessionCreated> {
    let p = prepare(req.scenario)?;
    let mut env = SodEnv::new(p);
    let observation = env.reset(req.seed);
    let id = uuid::Uuid::new_v4().to_string();
    let created = api::SessionCreated {
        id: id.clone(),
        observation,
        observation_names: OBS_NAMES.iter().map(|s| s.to_string()).collect(),
        episode_steps: env.episode_steps(),
        actions: ACTION_COUNT,
    };
    state.sessions.lock().expect("session lock").insert(id, env);
    Ok(Json(created))
}

fn unknown_session(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not-found", format!("no session {id}"))
}

async fn step_session(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Json(req): Json<api::StepRequest>,
) -> ApiResult<api::StepResponse> {
    let mut sessions = state.sessions.lock().expect("session lock");
    let env = sessions.get_mut(&id).ok_or_else(|| unknown_session(&id))?;
    Ok(Json(env.step(req.action)?))
}

async fn delete_session(State(state): State<SharedState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match state.sessions.lock().expect("session lock").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(unknown_session(&id)),
    }
}
