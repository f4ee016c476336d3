//! Built-in problem instances and problem files.
//!
//! A problem file is JSON with a `source` vector, a `distortion` matrix given
//! as one row per source letter, and optional `labels`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rdtrack::problem::{Labels, RdProblem};

use crate::CliError;

/// Four-letter source with a four-letter reproduction alphabet whose optimal
/// support shrinks one letter at a time.
pub fn fig3() -> RdProblem {
    let rows = [[0.0, 1.0, 1.0, 2.0], [4.0, 1.0, 5.0, 2.0], [4.0, 5.0, 1.0, 2.0], [8.0, 5.0, 5.0, 2.0]];
    let distortion = rows.iter().map(|r| r.iter().map(|v| v / 8.0).collect()).collect();
    RdProblem::checked(vec![0.4, 0.3, 0.2, 0.1], distortion).expect("valid built-in problem")
}

/// Binary source with a third "don't care" reproduction letter; its curve
/// has a support switch followed by a cluster vanishing.
pub fn berger273() -> RdProblem {
    RdProblem::checked(vec![0.4, 0.6], vec![vec![1.0, 0.0, 0.3], vec![0.0, 1.0, 0.3]]).expect("valid built-in problem")
}

/// On-disk problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub source: Vec<f64>,
    pub distortion: Vec<Vec<f64>>,
    #[serde(default)]
    pub labels: Option<Labels>,
}

/// Parses `binary-hamming:p=<value>`.
pub fn parse_binary_hamming(spec: &str) -> Option<Result<f64, CliError>> {
    let rest = spec.strip_prefix("binary-hamming")?;
    let value = match rest.strip_prefix(":p=") {
        Some(v) => v,
        None if rest.is_empty() => return Some(Err(CliError::Usage("binary-hamming needs a parameter, e.g. binary-hamming:p=0.3".into()))),
        None => return None,
    };
    Some(match value.parse::<f64>() {
        Ok(p) if p > 0.0 && p < 0.5 => Ok(p),
        _ => Err(CliError::Usage(format!("binary-hamming: p must lie in (0, 1/2), got {value:?}"))),
    })
}

/// Resolves a built-in name or reads a problem file.
pub fn load_problem(spec: &str) -> Result<RdProblem, CliError> {
    match spec {
        "fig3" => return Ok(fig3()),
        "berger273" => return Ok(berger273()),
        _ => {}
    }
    if let Some(p) = parse_binary_hamming(spec) {
        return Ok(RdProblem::binary_hamming(p?));
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: ProblemFile = serde_json::from_str(&text).map_err(|e| CliError::format(path, e))?;
    let problem = RdProblem::checked(file.source, file.distortion).map_err(|e| CliError::format(path, e))?;
    match file.labels {
        Some(labels) => problem.with_labels(labels).map_err(|e| CliError::format(path, e)),
        None => Ok(problem),
    }
}
