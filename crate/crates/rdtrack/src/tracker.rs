//! Root tracking of rate-distortion solutions in decreasing β: a Taylor
//! method between bifurcations, the cluster-vanishing heuristic with problem
//! reduction, bifurcation classification, extrapolation off the grid, and the
//! reverse-annealing baseline.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ba_core::{
    ba_fixed_point, encoder_from_marginal, jacobian_encoder, jacobian_marginal, BaError, FixedPointResult,
};
use crate::implicit::{taylor_polynomial, ImplicitEngine, ImplicitError, TaylorPolynomial};
use crate::linalg::eigenvalues;
use crate::problem::{embed, reduce, Encoder, Marginal, ProblemError, RdProblem, SupportSet};
use crate::tensors::{RdTensorProvider, TensorError};

/// Default cluster mass threshold.
pub const DEFAULT_DELTA: f64 = 0.01;
/// Default threshold below which an eigenvalue modulus counts as vanishing.
pub const DEFAULT_EIGEN_THRESHOLD: f64 = 1e-6;
/// Default BA tolerance used by the tracker.
pub const DEFAULT_TRACK_BA_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("step must be negative, got {0}")]
    NonNegativeStep(f64),
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("cluster threshold must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("beta_min must be non-negative and below beta0 (beta0 = {beta0}, beta_min = {beta_min})")]
    BadBetaRange { beta0: f64, beta_min: f64 },
    #[error("beta grid must be non-empty and strictly decreasing")]
    BadGrid,
    #[error("beta {beta} outside the traced range [{low}, {high}]")]
    OutOfRange { beta: f64, low: f64, high: f64 },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("Blahut-Arimoto did not converge at beta = {beta} (residual {residual:.3e} after {iterations} iterations)")]
    BaNotConverged { beta: f64, residual: f64, iterations: usize },
    #[error("zeroed letter {index} regained mass {value:.3e} under Blahut-Arimoto")]
    SupportRegrowth { index: usize, value: f64 },
    #[error(transparent)]
    Ba(#[from] BaError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Implicit(#[from] ImplicitError),
}

/// Tracking parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub beta0: f64,
    pub beta_min: f64,
    /// Negative step in β.
    pub step: f64,
    /// Taylor order `L`.
    pub order: usize,
    /// Cluster mass threshold `δ`.
    pub delta: f64,
    pub ba_tol: f64,
    pub ba_max_iter: usize,
    /// Eigenvalue modulus below which the encoder Jacobian counts as singular.
    pub eigen_threshold: f64,
    /// Classify every `k`-th grid point in addition to segment stops.
    pub classify_every: Option<usize>,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            beta0: 32.0,
            beta_min: 0.0,
            step: -0.1,
            order: 3,
            delta: DEFAULT_DELTA,
            ba_tol: DEFAULT_TRACK_BA_TOL,
            ba_max_iter: 1_000_000,
            eigen_threshold: DEFAULT_EIGEN_THRESHOLD,
            classify_every: None,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        if !(self.step < 0.0) {
            return Err(TrackError::NonNegativeStep(self.step));
        }
        if self.order == 0 {
            return Err(TrackError::ZeroOrder);
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(TrackError::BadDelta(self.delta));
        }
        if !(self.beta_min >= 0.0 && self.beta_min < self.beta0) {
            return Err(TrackError::BadBetaRange { beta0: self.beta0, beta_min: self.beta_min });
        }
        if !(self.ba_tol > 0.0) {
            return Err(BaError::BadTolerance.into());
        }
        Ok(())
    }
}

/// What happened at a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointEvent {
    None,
    /// An entry fell to `δ` or below; tracking on this support stops here.
    ThresholdCrossed,
    /// Root recomputed by BA on a reduced support after a threshold crossing.
    BaRefresh,
    /// A classification found a vanishing encoder-Jacobian eigenvalue.
    BifurcationClassified,
}

/// Outcome of the bifurcation flowchart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    None,
    ClusterVanishing,
    PossiblySupportSwitching,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::None => "none",
            Classification::ClusterVanishing => "cluster-vanishing",
            Classification::PossiblySupportSwitching => "possibly-support-switching",
        })
    }
}

/// Thresholds of the classification flowchart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Eigenvalue modulus counted as vanishing.
    pub eigen: f64,
    /// Marginal mass counted as vanishing.
    pub delta: f64,
}

/// Measured indicators and their classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub beta: f64,
    /// Smallest eigenvalue modulus of `D_q(Id − BA_β)`.
    pub min_encoder_eigenvalue: f64,
    /// Smallest eigenvalue modulus of `D_r(Id − BA_β)` on the support of `r`.
    pub min_marginal_eigenvalue: f64,
    /// Smallest positive marginal entry.
    pub min_marginal_entry: f64,
    pub classification: Classification,
}

/// One tracked point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub beta: f64,
    /// Approximate root on `support`.
    pub r_tilde: DVector<f64>,
    /// Support within the full reproduction alphabet.
    pub support: SupportSet,
    /// Expansion around `(r_tilde, beta)` in `Δβ`; the threshold-crossing
    /// point carries only its constant term.
    pub taylor: TaylorPolynomial,
    pub event: PointEvent,
    pub report: Option<BifurcationReport>,
}

impl GridPoint {
    /// `r_tilde` embedded into the full alphabet.
    pub fn embedded(&self) -> Vec<f64> {
        embed(self.r_tilde.as_slice(), &self.support, self.support.parent_size()).expect("consistent support")
    }
}

/// A support change recorded between two segments.
#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationRecord {
    /// `(β of the last point with every entry above δ, β of the crossing)`.
    pub beta_window: (f64, f64),
    /// How the event was handled; threshold crossings are treated as cluster vanishing.
    pub kind: Classification,
    /// Classification at the last point before the crossing, when available.
    pub report: Option<BifurcationReport>,
    pub pre_support: SupportSet,
    pub post_support: SupportSet,
}

/// Why a segment ended.
#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    Threshold,
    BetaMin,
    /// Implicit derivatives unavailable; the segment is truncated.
    Singular(String),
}

/// Points tracked on one support.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub points: Vec<GridPoint>,
    pub stop: StopReason,
}

/// Work counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackStats {
    pub ba_invocations: usize,
    pub ba_iterations: usize,
    pub derivative_evaluations: usize,
    pub derivative_time: Duration,
    pub ba_time: Duration,
    pub classify_time: Duration,
}

/// Output of [`root_track`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackTrace {
    /// Grid points in strictly decreasing β.
    pub points: Vec<GridPoint>,
    /// Support of each segment with its `[start, end]` point indices.
    pub segments: Vec<(SupportSet, usize, usize)>,
    pub bifurcations: Vec<BifurcationRecord>,
    pub warnings: Vec<String>,
    pub stats: TrackStats,
}

impl TrackTrace {
    /// Size of the full reproduction alphabet.
    pub fn alphabet_size(&self) -> Option<usize> {
        self.points.first().map(|p| p.support.parent_size())
    }

    /// Indices of points produced by the cluster-vanishing heuristic.
    pub fn heuristic_points(&self) -> Vec<usize> {
        self.points.iter().enumerate().filter(|(_, p)| p.event == PointEvent::BaRefresh).map(|(i, _)| i).collect()
    }
}

fn min_entry(v: &DVector<f64>) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn constant_polynomial(r: &DVector<f64>, order: usize) -> TaylorPolynomial {
    let mut coeffs = vec![r.clone()];
    coeffs.extend((0..order).map(|_| DVector::zeros(r.len())));
    TaylorPolynomial { coeffs }
}

/// Evaluates the flowchart at a (near-)fixed point.
pub fn classify_bifurcation(
    problem: &RdProblem,
    q: &Encoder,
    r: &Marginal,
    beta: f64,
    thresholds: Thresholds,
) -> Result<BifurcationReport, TrackError> {
    let enc = jacobian_encoder(problem, q, beta)?;
    let min_encoder_eigenvalue = eigenvalues(&enc).iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let support = r.support();
    let min_marginal_entry = support.iter().map(|&i| r.weights[i]).fold(f64::INFINITY, f64::min);
    let sub = SupportSet::new(support.clone(), problem.m())?;
    let reduced = reduce(problem, &sub)?;
    let rs: Vec<f64> = support.iter().map(|&i| r.weights[i]).collect();
    let marg = jacobian_marginal(&reduced, &rs, beta)?;
    let min_marginal_eigenvalue = eigenvalues(&marg).iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let classification = if min_encoder_eigenvalue >= thresholds.eigen {
        Classification::None
    } else if min_marginal_entry < thresholds.delta {
        Classification::ClusterVanishing
    } else {
        Classification::PossiblySupportSwitching
    };
    Ok(BifurcationReport { beta, min_encoder_eigenvalue, min_marginal_eigenvalue, min_marginal_entry, classification })
}

/// Classification at a point of a reduced problem, reported on the full alphabet.
fn classify_point(full: &RdProblem, support: &SupportSet, r: &DVector<f64>, beta: f64, config: &TrackConfig) -> Result<BifurcationReport, TrackError> {
    let weights = embed(r.as_slice(), support, full.m())?;
    let marginal = Marginal::unnormalized(weights);
    let q = encoder_from_marginal(full, &marginal, beta)?;
    classify_bifurcation(full, &q, &marginal, beta, Thresholds { eigen: config.eigen_threshold, delta: config.delta })
}

struct SegmentRun<'a> {
    full: &'a RdProblem,
    support: &'a SupportSet,
    config: &'a TrackConfig,
    stats: &'a mut TrackStats,
    warnings: &'a mut Vec<String>,
}

impl SegmentRun<'_> {
    fn run(&mut self, problem: &RdProblem, r0: &DVector<f64>, beta0: f64, first_event: PointEvent) -> Result<Segment, TrackError> {
        let config = self.config;
        let mut r = r0.clone();
        let mut beta = beta0;
        let mut points = Vec::new();
        let mut event = first_event;
        let mut count = 0usize;
        loop {
            if min_entry(&r) <= config.delta {
                points.push(self.point(beta, &r, constant_polynomial(&r, 0), PointEvent::ThresholdCrossed));
                return Ok(Segment { points, stop: StopReason::Threshold });
            }
            let taylor = if problem.m() == 1 {
                constant_polynomial(&r, config.order)
            } else {
                let start = Instant::now();
                let provider = RdTensorProvider::new(problem, r.as_slice(), beta, config.order)?;
                let result = ImplicitEngine::new(&provider).and_then(|engine| engine.derivatives(config.order));
                self.stats.derivative_time += start.elapsed();
                self.stats.derivative_evaluations += 1;
                match result {
                    Ok(set) => taylor_polynomial(&set, &r, config.order)?,
                    Err(e) => {
                        points.push(self.point(beta, &r, constant_polynomial(&r, 0), event));
                        self.warnings.push(format!("segment truncated at beta = {beta}: {e}"));
                        return Ok(Segment { points, stop: StopReason::Singular(e.to_string()) });
                    }
                }
            };
            let mut point = self.point(beta, &r, taylor, event);
            if let Some(every) = config.classify_every {
                if every > 0 && count.is_multiple_of(every) && problem.m() > 1 {
                    let start = Instant::now();
                    let report = classify_point(self.full, self.support, &r, beta, config)?;
                    self.stats.classify_time += start.elapsed();
                    if report.classification != Classification::None {
                        if point.event == PointEvent::None {
                            point.event = PointEvent::BifurcationClassified;
                        }
                        if report.classification == Classification::PossiblySupportSwitching {
                            self.warnings.push(format!("possible support switching near beta = {beta}"));
                        }
                    }
                    point.report = Some(report);
                }
            }
            count += 1;
            if beta <= config.beta_min {
                points.push(point);
                return Ok(Segment { points, stop: StopReason::BetaMin });
            }
            let step = config.step.max(config.beta_min - beta);
            let next = point.taylor.eval(step);
            points.push(point);
            r = next;
            beta = if beta + step <= config.beta_min { config.beta_min } else { beta + step };
            event = PointEvent::None;
        }
    }

    fn point(&self, beta: f64, r: &DVector<f64>, taylor: TaylorPolynomial, event: PointEvent) -> GridPoint {
        GridPoint { beta, r_tilde: r.clone(), support: self.support.clone(), taylor, event, report: None }
    }
}

/// Taylor-method tracking from a full-support root `r0` of `problem` at
/// `beta0` until an entry falls to `δ` or below, or `β` reaches `beta_min`.
pub fn track_to_bifurcation(problem: &RdProblem, r0: &[f64], beta0: f64, config: &TrackConfig) -> Result<Segment, TrackError> {
    config.validate()?;
    let support = SupportSet::full(problem.m());
    let mut stats = TrackStats::default();
    let mut warnings = Vec::new();
    let mut run = SegmentRun { full: problem, support: &support, config, stats: &mut stats, warnings: &mut warnings };
    run.run(problem, &DVector::from_column_slice(r0), beta0, PointEvent::None)
}

/// Result of the cluster-vanishing heuristic.
#[derive(Debug, Clone, PartialEq)]
pub enum BifurcationOutcome {
    /// Tracking continues on a smaller support from a refreshed root.
    Continue { support: SupportSet, problem: RdProblem, root: FixedPointResult },
    /// Nothing left to track: one letter remains or β is exhausted.
    Terminal { support: SupportSet, root: FixedPointResult },
}

fn run_ba(problem: &RdProblem, r0: &Marginal, beta: f64, config: &TrackConfig, stats: &mut TrackStats) -> Result<FixedPointResult, TrackError> {
    let start = Instant::now();
    let res = ba_fixed_point(problem, r0, beta, config.ba_tol, config.ba_max_iter)?;
    stats.ba_time += start.elapsed();
    stats.ba_invocations += 1;
    stats.ba_iterations += res.iterations;
    if !res.converged {
        return Err(TrackError::BaNotConverged { beta, residual: res.residual, iterations: res.iterations });
    }
    Ok(res)
}

/// Zeroes every entry at or below `δ` of the point's approximation,
/// normalizes, and reruns BA at the point's β on the surviving support.
/// `problem` is the full problem; the point's support is relative to it.
pub fn handle_bifurcation(problem: &RdProblem, last: &GridPoint, config: &TrackConfig) -> Result<BifurcationOutcome, TrackError> {
    let mut stats = TrackStats::default();
    handle_bifurcation_counted(problem, last, config, &mut stats)
}

fn handle_bifurcation_counted(
    problem: &RdProblem,
    last: &GridPoint,
    config: &TrackConfig,
    stats: &mut TrackStats,
) -> Result<BifurcationOutcome, TrackError> {
    let r = &last.r_tilde;
    let mut keep: Vec<usize> = (0..r.len()).filter(|&i| r[i] > config.delta).collect();
    if keep.is_empty() {
        let best = r.iamax_full().0;
        keep.push(best);
    }
    let inner = SupportSet::new(keep.clone(), r.len())?;
    let support = last.support.compose(&inner)?;
    let reduced = reduce(problem, &support)?;
    let total: f64 = keep.iter().map(|&i| r[i]).sum();
    let start = Marginal { weights: keep.iter().map(|&i| r[i] / total).collect(), normalized: true };
    let root = run_ba(&reduced, &start, last.beta, config, stats)?;
    if let Some((index, &value)) = root.marginal.weights.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        // BA cannot move mass onto a letter it started without; reaching zero here
        // means underflow on the surviving support.
        return Err(TrackError::SupportRegrowth { index: support.parent_index(index), value });
    }
    if support.len() <= 1 || last.beta <= 0.0 {
        Ok(BifurcationOutcome::Terminal { support, root })
    } else {
        Ok(BifurcationOutcome::Continue { support, problem: reduced, root })
    }
}

/// Full tracking run: BA from the uniform marginal at `beta0`, then Taylor
/// segments separated by the cluster-vanishing heuristic down to `beta_min`.
pub fn root_track(problem: &RdProblem, config: &TrackConfig) -> Result<TrackTrace, TrackError> {
    config.validate()?;
    let m = problem.m();
    let mut stats = TrackStats::default();
    let mut warnings = Vec::new();
    let mut points: Vec<GridPoint> = Vec::new();
    let mut segments = Vec::new();
    let mut bifurcations = Vec::new();

    let init = run_ba(problem, &Marginal::uniform(m), config.beta0, config, &mut stats)?;
    let positive: Vec<usize> = (0..m).filter(|&i| init.marginal.weights[i] > 0.0).collect();
    let mut support = SupportSet::new(positive, m)?;
    let mut current = reduce(problem, &support)?;
    let mut r = DVector::from_vec(support.indices().iter().map(|&i| init.marginal.weights[i]).collect());
    let mut beta = config.beta0;
    let mut first_event = PointEvent::None;

    loop {
        let start_index = points.len();
        let segment = {
            let mut run = SegmentRun { full: problem, support: &support, config, stats: &mut stats, warnings: &mut warnings };
            run.run(&current, &r, beta, first_event)?
        };
        points.extend(segment.points);
        segments.push((support.clone(), start_index, points.len() - 1));
        match segment.stop {
            StopReason::BetaMin => break,
            StopReason::Singular(_) => break,
            StopReason::Threshold => {}
        }
        let crossing = points.pop().expect("threshold point present");
        let (pre_beta, report) = match points.last() {
            Some(prev) if prev.support == crossing.support => {
                let start = Instant::now();
                let report = classify_point(problem, &prev.support, &prev.r_tilde, prev.beta, config).ok();
                stats.classify_time += start.elapsed();
                (prev.beta, report)
            }
            _ => (crossing.beta, None),
        };
        let outcome = handle_bifurcation_counted(problem, &crossing, config, &mut stats)?;
        let (new_support, root, reduced) = match outcome {
            BifurcationOutcome::Continue { support, problem, root } => (support, root, Some(problem)),
            BifurcationOutcome::Terminal { support, root } => (support, root, None),
        };
        bifurcations.push(BifurcationRecord {
            beta_window: (pre_beta, crossing.beta),
            kind: Classification::ClusterVanishing,
            report,
            pre_support: crossing.support.clone(),
            post_support: new_support.clone(),
        });
        if segments.last().map(|s| s.1) == Some(points.len()) {
            segments.pop();
        } else if let Some(last) = segments.last_mut() {
            last.2 = points.len() - 1;
        }
        support = new_support;
        r = DVector::from_vec(root.marginal.weights.clone());
        beta = crossing.beta;
        first_event = PointEvent::BaRefresh;
        current = match reduced {
            Some(p) => p,
            None => reduce(problem, &support)?,
        };
    }
    Ok(TrackTrace { points, segments, bifurcations, warnings, stats })
}

/// Approximate root at `beta`, embedded into the full alphabet. Uses the
/// expansion of the last grid point at or above `beta`, or of the next grid
/// point when that yields a negative coordinate.
pub fn extrapolate(trace: &TrackTrace, beta: f64) -> Result<Marginal, TrackError> {
    let pts = &trace.points;
    let (first, last) = match (pts.first(), pts.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(TrackError::EmptyTrace),
    };
    if !(beta <= first.beta && beta >= last.beta) {
        return Err(TrackError::OutOfRange { beta, low: last.beta, high: first.beta });
    }
    let i = pts.partition_point(|p| p.beta >= beta) - 1;
    let eval = |j: usize| {
        let p = &pts[j];
        let v = p.taylor.eval(beta - p.beta);
        embed(v.as_slice(), &p.support, p.support.parent_size()).expect("consistent support")
    };
    let mut v = eval(i);
    if v.iter().any(|&x| x < 0.0) && i + 1 < pts.len() {
        v = eval(i + 1);
    }
    Ok(Marginal::unnormalized(v))
}

/// Reverse deterministic annealing: BA on a strictly decreasing grid, each
/// point started from the previous solution and the first from uniform.
/// Non-converged points are recorded and the run continues.
pub fn ba_reverse_anneal(problem: &RdProblem, grid: &[f64], tol: f64, max_iter: usize) -> Result<Vec<FixedPointResult>, TrackError> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(TrackError::BadGrid);
    }
    let mut out: Vec<FixedPointResult> = Vec::with_capacity(grid.len());
    let mut r = Marginal::uniform(problem.m());
    for &beta in grid {
        let res = ba_fixed_point(problem, &r, beta, tol, max_iter)?;
        r = res.marginal.clone();
        out.push(res);
    }
    Ok(out)
}
