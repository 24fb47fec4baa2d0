//! Machine-readable verification reports.
//!
//! A report aggregates per-suite outcomes plus the sampling configuration
//! that produced them. Serialization is deliberately free of timing data so
//! that identical (scenario, seed, samples) runs are byte-identical.

use serde::{Deserialize, Serialize};

/// Failing (or worst) sample of a suite.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct WorstSample {
    /// Coordinates of the sample point realizing the max defect.
    pub point: Vec<f64>,
    /// Human-readable description of the failing check.
    pub detail: String,
}

/// Outcome of one suite.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct SuiteReport {
    pub name: String,
    /// Number of individual checks evaluated.
    pub checks: usize,
    pub max_defect: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst: Option<WorstSample>,
}

/// Full run outcome.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub suites: Vec<SuiteReport>,
    pub pass: bool,
    pub seed: u64,
    pub samples: usize,
}

impl Report {
    pub fn from_suites(suites: Vec<SuiteReport>, seed: u64, samples: usize) -> Self {
        let pass = suites.iter().all(|s| s.pass);
        Report {
            suites,
            pass,
            seed,
            samples,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            out.push_str(&format!(
                "{:6} {:<22} checks={:<5} maxDefect={:<12.3e} tol={:.1e}\n",
                if s.pass { "PASS" } else { "FAIL" },
                s.name,
                s.checks,
                s.max_defect,
                s.tolerance,
            ));
            if let Some(w) = &s.worst {
                out.push_str(&format!("       worst at {:?}: {}\n", w.point, w.detail));
            }
        }
        out.push_str(&format!(
            "overall: {} (seed={}, samples={})\n",
            if self.pass { "PASS" } else { "FAIL" },
            self.seed,
            self.samples
        ));
        out
    }
}
