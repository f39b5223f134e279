//! Run reports and error mapping to exit codes.

use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use pro_core::model::WebGraphInstance;

pub const EXIT_QUALIFIED: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid input.
    #[error("{0}")]
    Input(String),
    /// The request cannot be answered as asked, e.g. a coupled instance
    /// passed to the local optimizer.
    #[error("{0}")]
    Qualified(String),
    /// An iteration or enumeration limit was hit.
    #[error("{0}")]
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Input(_) => 1,
            Self::Qualified(_) => EXIT_QUALIFIED,
            Self::Resource(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Input(_) => "input",
            Self::Qualified(_) => "qualified",
            Self::Resource(_) => "resource_limit",
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

/// Sizes of an instance.
#[derive(Debug, Serialize)]
pub struct Digest {
    pub pages: usize,
    pub obligatory_links: usize,
    pub facultative_links: usize,
    pub skeleton_pages: usize,
    pub coupling_rows: usize,
}

impl Digest {
    pub fn of(instance: &WebGraphInstance) -> Self {
        Self {
            pages: instance.num_pages(),
            obligatory_links: instance.num_obligatory(),
            facultative_links: instance.num_facultative(),
            skeleton_pages: instance.num_skeleton(),
            coupling_rows: instance.coupling().len(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub instance: Digest,
    pub result: Value,
    pub iterations: Option<usize>,
    /// Residual or gap reached, in the command's own measure.
    pub tolerance_achieved: Option<f64>,
    pub wall_time_ms: f64,
}

/// Wall clock started at command entry.
pub struct Timer {
    start: Instant,
    deterministic: bool,
}

impl Timer {
    pub fn start(deterministic: bool) -> Self {
        Self {
            start: Instant::now(),
            deterministic,
        }
    }

    pub fn elapsed_ms(&self) -> f64 {
        if self.deterministic {
            0.0
        } else {
            self.start.elapsed().as_secs_f64() * 1e3
        }
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}
