//! Separated nets, Delone sets and corona-gap perturbations in Euclidean
//! boxes, the pointed colored-graph space with its ball-isomorphism metric,
//! and the recursive hierarchy of nested separated subsets with stored
//! partial isomorphisms.
//!
//! Layering (bottom to top): [`metric`] gives backend-agnostic net
//! primitives, [`delone`] the Euclidean backend, [`graph`] the colored-graph
//! kernel, [`schedule`] + [`hierarchy`] the recursive construction, and
//! [`pipeline`] the orchestration used by the `repnet` binary.

pub mod config;
pub mod delone;
pub mod graph;
pub mod hierarchy;
pub mod metric;
pub mod pipeline;
pub mod report;
pub mod schedule;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("subset is empty: {0}")]
    EmptySubset(&'static str),
    #[error("required set is not {0}-separated")]
    RequiredNotSeparated(f64),
    #[error("perturbation pairing is not a bijection on the subset")]
    PairingNotBijective,
    #[error("perturbation moves point {point} by {moved} > epsilon = {epsilon}")]
    PerturbationBound { point: usize, moved: f64, epsilon: f64 },
    #[error("degenerate box: lo must be strictly below hi in every coordinate")]
    DegenerateBox,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no positive rho satisfies the corona volume inequality (C={c}, K={k}, L={l})")]
    NoPositiveRho { c: u64, k: f64, l: f64 },
    #[error("candidate search exhausted its budget for point {point}")]
    SearchExhausted { point: usize },
    #[error("sigma = {sigma} < 3*eta = {three_eta}: connectivity claim unsupported")]
    ConnectivityUnsupported { sigma: f64, three_eta: f64 },
    #[error("extracted graph is not connected")]
    NotConnected,
    #[error("ball radius mismatch: {0} vs {1}")]
    RadiusMismatch(u32, u32),
    #[error("ball of radius {radius} at vertex {vertex} leaves the window")]
    BallTruncated { vertex: u32, radius: u32 },
    #[error("not repetitive at R = {radius} in the window (only the base point matches)")]
    NotRepetitive { radius: u32 },
    #[error("map domain does not equal D(x1, {0})")]
    DomainMismatch(u32),
    #[error("schedule failed at level {level}: {reason}")]
    Schedule { level: usize, reason: String },
    #[error("hierarchy level ({i},{j}): {reason}")]
    Hierarchy { i: usize, j: usize, reason: String },
    #[error("level ({i},{j}) needs radius {needed} beyond the window radius {available}")]
    LevelBeyondWindow { i: usize, j: usize, needed: f64, available: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error in {file}:{line}: {reason}")]
    Parse { file: String, line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
