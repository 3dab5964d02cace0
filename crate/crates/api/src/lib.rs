//! Wire types shared by the service and its client. Every body is JSON.
//!
//! A missing `scenario` means the default scenario.

use serde::{Deserialize, Serialize};

use sodfeeder_core::dispatch::PolicyKind;
use sodfeeder_core::env::StepOutcome;
use sodfeeder_core::experiment::{Comparison, EpisodeResult};
use sodfeeder_core::ppo::{Checkpoint, UpdateStats};
use sodfeeder_core::scenario::Scenario;

pub const HEALTH: &str = "/health";
pub const NETWORK: &str = "/network";
pub const DEMAND: &str = "/demand";
pub const SIMULATE: &str = "/simulate";
pub const COMPARE: &str = "/compare";
pub const TRAIN: &str = "/train";
pub const SESSIONS: &str = "/sessions";

pub fn session_path(id: &str) -> String {
    format!("{SESSIONS}/{id}")
}

pub fn session_step_path(id: &str) -> String {
    format!("{SESSIONS}/{id}/step")
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// One of config, usage, state, numeric, checkpoint, io, not-found, internal.
    pub category: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub layout_version: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkRequest {
    #[serde(default)]
    pub scenario: Option<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkResponse {
    pub nodes: usize,
    pub edges: usize,
    pub nodes_csv: String,
    pub edges_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandRequest {
    #[serde(default)]
    pub scenario: Option<Scenario>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandResponse {
    pub seed: u64,
    pub count: usize,
    pub requests_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    #[serde(default)]
    pub scenario: Option<Scenario>,
    pub policy: PolicyKind,
    pub seed: u64,
    /// Required for the learned policy.
    #[serde(default)]
    pub checkpoint: Option<Checkpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub result: EpisodeResult,
    pub runs_csv: String,
    pub dispatch_log_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRequest {
    #[serde(default)]
    pub scenario: Option<Scenario>,
    pub policies: Vec<PolicyKind>,
    /// Defaults to the scenario's evaluation seeds.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub checkpoint: Option<Checkpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub comparison: Comparison,
    pub aggregate_csv: String,
    pub runs_csv: String,
    pub dispatch_log_csv: String,
    pub action_density_csv: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    #[serde(default)]
    pub scenario: Option<Scenario>,
    /// Overrides the scenario's training budget.
    #[serde(default)]
    pub updates: Option<usize>,
    #[serde(default)]
    pub wall_clock_secs: Option<f64>,
    /// Overrides the network initialization and sampling seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub checkpoint: Checkpoint,
    pub stats: Vec<UpdateStats>,
    pub stats_csv: String,
    pub stopped_early: bool,
    /// Non-finite values stopped training; the checkpoint is the last good one.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    #[serde(default)]
    pub scenario: Option<Scenario>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub observation: Vec<f64>,
    pub observation_names: Vec<String>,
    pub episode_steps: usize,
    pub actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub action: usize,
}

pub type StepResponse = StepOutcome;
