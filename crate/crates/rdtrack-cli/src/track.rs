//! `track`: Taylor-method root tracking with bifurcation handling.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use rdtrack::ba_core::{encoder_from_marginal, rd_functionals};
use rdtrack::implicit::TaylorPolynomial;
use rdtrack::problem::{Marginal, RdProblem, SupportSet};
use rdtrack::tracker::{
    root_track, BifurcationRecord, BifurcationReport, Classification, GridPoint, PointEvent, TrackConfig, TrackStats, TrackTrace, DEFAULT_DELTA,
    DEFAULT_EIGEN_THRESHOLD, DEFAULT_TRACK_BA_TOL,
};

use crate::output::{fmt_f64, write_csv, write_json};
use crate::problems::load_problem;
use crate::{CliError, RunManifest, Summary};

#[derive(Debug, Clone, Args)]
pub struct TrackArgs {
    /// Problem file, or one of fig3, berger273, binary-hamming:p=<p>.
    #[arg(long)]
    pub problem: String,
    /// Taylor order.
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Step in β; must be negative.
    #[arg(long, default_value_t = -0.1, allow_hyphen_values = true)]
    pub step: f64,
    /// Cluster mass threshold.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Starting β.
    #[arg(long, default_value_t = 32.0)]
    pub beta0: f64,
    /// Smallest β to reach.
    #[arg(long, default_value_t = 0.0)]
    pub beta_min: f64,
    /// BA stopping tolerance for the initial and refreshed roots.
    #[arg(long, default_value_t = DEFAULT_TRACK_BA_TOL)]
    pub ba_tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub ba_max_iter: usize,
    /// Encoder-Jacobian eigenvalue modulus counted as vanishing.
    #[arg(long, default_value_t = DEFAULT_EIGEN_THRESHOLD)]
    pub eigen_threshold: f64,
    /// Classify every k-th grid point as well.
    #[arg(long)]
    pub classify_every: Option<usize>,
    /// Trace JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// CSV output; defaults to the JSON path with a .csv extension.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

impl TrackArgs {
    pub fn config(&self) -> TrackConfig {
        TrackConfig {
            beta0: self.beta0,
            beta_min: self.beta_min,
            step: self.step,
            order: self.order,
            delta: self.delta,
            ba_tol: self.ba_tol,
            ba_max_iter: self.ba_max_iter,
            eigen_threshold: self.eigen_threshold,
            classify_every: self.classify_every,
        }
    }

    fn csv_path(&self) -> PathBuf {
        self.csv.clone().unwrap_or_else(|| self.out.with_extension("csv"))
    }
}

/// One grid point as stored in the trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub beta: f64,
    pub support: Vec<usize>,
    pub r_tilde: Vec<f64>,
    /// `taylor_coeffs[k]` multiplies `Δβᵏ`.
    pub taylor_coeffs: Vec<Vec<f64>>,
    pub event: PointEvent,
    pub report: Option<BifurcationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSegment {
    pub support: Vec<usize>,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBifurcation {
    pub beta_window: (f64, f64),
    pub kind: Classification,
    pub report: Option<BifurcationReport>,
    pub pre_support: Vec<usize>,
    pub post_support: Vec<usize>,
}

/// Deterministic work counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCounts {
    pub ba_invocations: usize,
    pub ba_iterations: usize,
    pub derivative_evaluations: usize,
}

/// Trace JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub manifest: RunManifest,
    pub alphabet_size: usize,
    pub points: Vec<TracePoint>,
    pub segments: Vec<TraceSegment>,
    pub bifurcations: Vec<TraceBifurcation>,
    pub warnings: Vec<String>,
    pub counts: TraceCounts,
}

impl TraceFile {
    pub fn from_trace(trace: &TrackTrace, manifest: RunManifest) -> Self {
        let points = trace
            .points
            .iter()
            .map(|p| TracePoint {
                beta: p.beta,
                support: p.support.indices().to_vec(),
                r_tilde: p.r_tilde.iter().cloned().collect(),
                taylor_coeffs: p.taylor.coeffs.iter().map(|c| c.iter().cloned().collect()).collect(),
                event: p.event,
                report: p.report.clone(),
            })
            .collect();
        let segments = trace
            .segments
            .iter()
            .map(|(s, start, end)| TraceSegment { support: s.indices().to_vec(), start: *start, end: *end })
            .collect();
        let bifurcations = trace
            .bifurcations
            .iter()
            .map(|b| TraceBifurcation {
                beta_window: b.beta_window,
                kind: b.kind,
                report: b.report.clone(),
                pre_support: b.pre_support.indices().to_vec(),
                post_support: b.post_support.indices().to_vec(),
            })
            .collect();
        Self {
            manifest,
            alphabet_size: trace.alphabet_size().unwrap_or(0),
            points,
            segments,
            bifurcations,
            warnings: trace.warnings.clone(),
            counts: TraceCounts {
                ba_invocations: trace.stats.ba_invocations,
                ba_iterations: trace.stats.ba_iterations,
                derivative_evaluations: trace.stats.derivative_evaluations,
            },
        }
    }

    /// Rebuilds the library trace; timing fields are zero.
    pub fn to_trace(&self) -> Result<TrackTrace, String> {
        let m = self.alphabet_size;
        let support = |idx: &[usize]| SupportSet::new(idx.to_vec(), m).map_err(|e| e.to_string());
        let mut points = Vec::with_capacity(self.points.len());
        for p in &self.points {
            let s = support(&p.support)?;
            if p.r_tilde.len() != s.len() || p.taylor_coeffs.iter().any(|c| c.len() != s.len()) || p.taylor_coeffs.is_empty() {
                return Err(format!("point at beta = {} has inconsistent lengths", p.beta));
            }
            points.push(GridPoint {
                beta: p.beta,
                r_tilde: DVector::from_vec(p.r_tilde.clone()),
                support: s,
                taylor: TaylorPolynomial { coeffs: p.taylor_coeffs.iter().map(|c| DVector::from_vec(c.clone())).collect() },
                event: p.event,
                report: p.report.clone(),
            });
        }
        let mut segments = Vec::new();
        for s in &self.segments {
            segments.push((support(&s.support)?, s.start, s.end));
        }
        let mut bifurcations = Vec::new();
        for b in &self.bifurcations {
            bifurcations.push(BifurcationRecord {
                beta_window: b.beta_window,
                kind: b.kind,
                report: b.report.clone(),
                pre_support: support(&b.pre_support)?,
                post_support: support(&b.post_support)?,
            });
        }
        let stats = TrackStats {
            ba_invocations: self.counts.ba_invocations,
            ba_iterations: self.counts.ba_iterations,
            derivative_evaluations: self.counts.derivative_evaluations,
            ..Default::default()
        };
        Ok(TrackTrace { points, segments, bifurcations, warnings: self.warnings.clone(), stats })
    }
}

/// Reads a trace JSON file.
pub fn read_trace(path: &Path) -> Result<TraceFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

/// Kebab-case name of an event.
pub fn event_name(event: PointEvent) -> String {
    serde_json::to_value(event).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// CSV rows: β, the embedded marginal, distortion, rate (nats), smallest
/// positive entry and event.
pub fn trace_csv(problem: &RdProblem, trace: &TrackTrace) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let m = problem.m();
    let mut header = vec!["beta".to_string()];
    header.extend((0..m).map(|j| format!("r{j}")));
    header.extend(["distortion", "rate", "min_marginal", "event"].map(String::from));
    let mut rows = Vec::with_capacity(trace.points.len());
    for p in &trace.points {
        let r = p.embedded();
        let q = encoder_from_marginal(problem, &Marginal::unnormalized(r.clone()), p.beta)?;
        let values = rd_functionals(problem, &q);
        let min_pos = r.iter().cloned().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
        let mut row = vec![fmt_f64(p.beta)];
        row.extend(r.iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(values.distortion));
        row.push(fmt_f64(values.rate));
        row.push(fmt_f64(min_pos));
        row.push(event_name(p.event));
        rows.push(row);
    }
    Ok((header, rows))
}

/// Runs `track` and writes the trace JSON and CSV.
pub fn cmd_track(args: &TrackArgs) -> Result<Summary, CliError> {
    let problem = load_problem(&args.problem)?;
    let config = args.config();
    config.validate()?;
    let csv_path = args.csv_path();
    let mut manifest = RunManifest::new("track", &args.problem);
    manifest.config = Some(config.clone());
    manifest.outputs = vec![args.out.display().to_string(), csv_path.display().to_string()];

    let start = Instant::now();
    let trace = root_track(&problem, &config)?;
    let elapsed = start.elapsed();

    write_json(&args.out, &TraceFile::from_trace(&trace, manifest.clone()))?;
    let (header, rows) = trace_csv(&problem, &trace)?;
    write_csv(&csv_path, &manifest, &header, &rows)?;

    let mut summary = Summary::default();
    summary.push(format!("points: {}", trace.points.len()));
    summary.push(format!("segments: {}", trace.segments.len()));
    for (s, start, end) in &trace.segments {
        summary.push(format!(
            "  support {:?}: beta {} .. {}",
            s.indices(),
            trace.points[*start].beta,
            trace.points[*end].beta
        ));
    }
    summary.push(format!("bifurcations: {}", trace.bifurcations.len()));
    for b in &trace.bifurcations {
        let check = b.report.as_ref().map(|r| r.classification.to_string()).unwrap_or_else(|| "not evaluated".into());
        summary.push(format!(
            "  beta in ({}, {}): {:?} -> {:?}, {} (flowchart before crossing: {check})",
            b.beta_window.1,
            b.beta_window.0,
            b.pre_support.indices(),
            b.post_support.indices(),
            b.kind
        ));
    }
    for w in &trace.warnings {
        summary.push(format!("warning: {w}"));
    }
    let s = &trace.stats;
    summary.push(format!("BA invocations: {} ({} iterations)", s.ba_invocations, s.ba_iterations));
    summary.push(format!("derivative evaluations: {}", s.derivative_evaluations));
    summary.push(format!(
        "wall time: {:.3} s (derivatives {:.3} s, BA {:.3} s, classification {:.3} s)",
        elapsed.as_secs_f64(),
        s.derivative_time.as_secs_f64(),
        s.ba_time.as_secs_f64(),
        s.classify_time.as_secs_f64()
    ));
    Ok(summary)
}
