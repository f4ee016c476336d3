//! `compare`: errors of tracked marginals against a reference, and
//! error-versus-cost sweeps over Taylor order and step size.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Args;
use serde::{Deserialize, Serialize};

use rdtrack::oracles::BinaryHammingOracle;
use rdtrack::problem::RdProblem;
use rdtrack::tracker::{extrapolate, root_track, PointEvent, TrackConfig, TrackTrace, DEFAULT_DELTA};

use crate::output::{fmt_f64, read_csv, write_csv, write_json};
use crate::problems::{load_problem, parse_binary_hamming};
use crate::track::read_trace;
use crate::{CliError, RunManifest, Summary};

/// Reference marginals on a β grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub betas: Vec<f64>,
    pub marginals: Vec<Vec<f64>>,
}

/// Where reference values come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSource {
    /// Closed-form binary Hamming solution, evaluated at the trace's grid.
    BinaryHamming(BinaryHammingOracle),
    /// A table of marginals, e.g. a BA baseline.
    Table(Reference),
}

impl ReferenceSource {
    /// Parses `oracle:binary-hamming:p=<p>` or a CSV path written by `ba`.
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        if let Some(rest) = spec.strip_prefix("oracle:") {
            return match parse_binary_hamming(rest) {
                Some(p) => BinaryHammingOracle::new(p?)
                    .map(ReferenceSource::BinaryHamming)
                    .map_err(|e| CliError::Usage(e.to_string())),
                None => Err(CliError::Usage(format!("unknown oracle {rest:?}"))),
            };
        }
        Ok(ReferenceSource::Table(read_baseline(Path::new(spec))?))
    }

    /// Reference values for a trace.
    pub fn for_trace(&self, trace: &TrackTrace) -> Result<Reference, CliError> {
        match self {
            ReferenceSource::BinaryHamming(oracle) => {
                let betas: Vec<f64> = trace.points.iter().map(|p| p.beta).collect();
                let marginals = betas
                    .iter()
                    // Constant below β_c, so β = 0 takes the limit from above.
                    .map(|&b| oracle.marginal(b.max(f64::MIN_POSITIVE)).map(|m| m.weights))
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                Ok(Reference { betas, marginals })
            }
            ReferenceSource::Table(t) => Ok(t.clone()),
        }
    }
}

/// Reads the β and `r*` columns of a `ba` CSV file.
pub fn read_baseline(path: &Path) -> Result<Reference, CliError> {
    let table = read_csv(path)?;
    let beta_col = table.column("beta").ok_or_else(|| CliError::format(path, "missing beta column"))?;
    let betas = table.floats(beta_col).map_err(|e| CliError::format(path, e))?;
    let mut columns = Vec::new();
    for j in 0.. {
        match table.column(&format!("r{j}")) {
            Some(c) => columns.push(table.floats(c).map_err(|e| CliError::format(path, e))?),
            None => break,
        }
    }
    if columns.is_empty() {
        return Err(CliError::format(path, "no marginal columns r0, r1, ..."));
    }
    let marginals = (0..betas.len()).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    Ok(Reference { betas, marginals })
}

/// Which reference points count as close to a bifurcation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRule {
    /// Reference entries in `(zero_tol, delta)` mark a window.
    pub delta: f64,
    /// Reference entries at or below this count as zero.
    pub zero_tol: f64,
    /// Windows are widened by this distance in β on both sides.
    pub pad: f64,
}

impl Default for WindowRule {
    fn default() -> Self {
        Self { delta: DEFAULT_DELTA, zero_tol: 1e-9, pad: 0.0 }
    }
}

/// L∞ error at one reference β.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub beta: f64,
    pub error: f64,
    /// The trace point at this β was produced by the bifurcation heuristic.
    pub heuristic: bool,
    /// The point lies in a window around a bifurcation.
    pub in_window: bool,
}

/// Error summary of one trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub rows: Vec<ErrorRow>,
    pub max_error: f64,
    pub max_error_excluding_heuristic: f64,
    pub max_error_outside_windows: f64,
}

/// Compares a trace with reference marginals at every reference β inside
/// the trace's range.
pub fn compare_trace(trace: &TrackTrace, reference: &Reference, rule: WindowRule) -> Result<CompareReport, CliError> {
    let (hi, lo) = match (trace.points.first(), trace.points.last()) {
        (Some(f), Some(l)) => (f.beta, l.beta),
        _ => return Err(CliError::Numerical("empty trace".into())),
    };
    let refresh: Vec<f64> = trace.points.iter().filter(|p| p.event == PointEvent::BaRefresh).map(|p| p.beta).collect();
    let mut rows = Vec::new();
    for (&beta, target) in reference.betas.iter().zip(&reference.marginals) {
        if !(beta <= hi && beta >= lo) {
            continue;
        }
        let approx = extrapolate(trace, beta)?.weights;
        if approx.len() != target.len() {
            return Err(CliError::Usage(format!("alphabet sizes differ: trace {} vs reference {}", approx.len(), target.len())));
        }
        let error = approx.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let heuristic = refresh.contains(&beta);
        let near = target.iter().any(|&v| v > rule.zero_tol && v < rule.delta);
        let mismatch = approx.iter().zip(target).any(|(&a, &b)| (a > 0.0) != (b > rule.zero_tol));
        rows.push(ErrorRow { beta, error, heuristic, in_window: heuristic || near || mismatch });
    }
    if rule.pad > 0.0 {
        let centers: Vec<f64> = rows.iter().filter(|r| r.in_window).map(|r| r.beta).collect();
        for row in rows.iter_mut() {
            row.in_window |= centers.iter().any(|&c| (c - row.beta).abs() <= rule.pad);
        }
    }
    let max_of = |keep: &dyn Fn(&ErrorRow) -> bool| rows.iter().filter(|r| keep(r)).map(|r| r.error).fold(0.0, f64::max);
    Ok(CompareReport {
        max_error: max_of(&|_| true),
        max_error_excluding_heuristic: max_of(&|r| !r.heuristic),
        max_error_outside_windows: max_of(&|r| !r.in_window),
        rows,
    })
}

/// Error and cost of one tracking run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    pub label: String,
    pub order: usize,
    /// Step magnitude.
    pub step: f64,
    /// Number of grid points.
    pub cost: usize,
    pub derivative_evaluations: usize,
    pub max_error: f64,
    pub max_error_excluding_heuristic: f64,
    pub max_error_outside_windows: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RunError {
    fn new(label: String, config: &TrackConfig, trace: &TrackTrace, report: &CompareReport, wall_time: Duration) -> Self {
        Self {
            label,
            order: config.order,
            step: config.step.abs(),
            cost: trace.points.len(),
            derivative_evaluations: trace.stats.derivative_evaluations,
            max_error: report.max_error,
            max_error_excluding_heuristic: report.max_error_excluding_heuristic,
            max_error_outside_windows: report.max_error_outside_windows,
            wall_time,
        }
    }
}

/// Runs `root_track` for every order and step magnitude.
pub fn order_sweep(
    problem: &RdProblem,
    reference: &ReferenceSource,
    base: &TrackConfig,
    orders: &[usize],
    steps: &[f64],
    rule: WindowRule,
) -> Result<Vec<RunError>, CliError> {
    let mut out = Vec::new();
    for &order in orders {
        for &step in steps {
            let config = TrackConfig { order, step: -step.abs(), ..base.clone() };
            let start = Instant::now();
            let trace = root_track(problem, &config)?;
            let wall = start.elapsed();
            let report = compare_trace(&trace, &reference.for_trace(&trace)?, rule)?;
            out.push(RunError::new(format!("L={order} step={step}"), &config, &trace, &report, wall));
        }
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Slope fit of error outside windows against cost for one order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub order: usize,
    /// `(cost, error)` pairs used in the fit.
    pub tail: Vec<(f64, f64)>,
    pub slope: Option<f64>,
}

/// Fits the last `tail` runs of each order whose error is at least `floor`,
/// ordered by increasing cost.
pub fn tail_slopes(runs: &[RunError], tail: usize, floor: f64) -> Vec<SlopeFit> {
    let mut orders: Vec<usize> = runs.iter().map(|r| r.order).collect();
    orders.sort_unstable();
    orders.dedup();
    orders
        .into_iter()
        .map(|order| {
            let mut pts: Vec<(f64, f64)> = runs
                .iter()
                .filter(|r| r.order == order && r.max_error_outside_windows >= floor)
                .map(|r| (r.cost as f64, r.max_error_outside_windows))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let tail_pts = pts[pts.len().saturating_sub(tail)..].to_vec();
            SlopeFit { order, slope: fit_loglog_slope(&tail_pts), tail: tail_pts }
        })
        .collect()
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Trace JSON files written by `track`.
    #[arg(long)]
    pub trace: Vec<PathBuf>,
    /// `oracle:binary-hamming:p=<p>` or a CSV written by `ba`.
    #[arg(long)]
    pub reference: String,
    /// Problem for a sweep; enables sweep mode.
    #[arg(long)]
    pub problem: Option<String>,
    /// Taylor orders of a sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 6])]
    pub orders: Vec<usize>,
    /// Step magnitudes of a sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.25, 0.125, 0.0625, 0.03125])]
    pub steps: Vec<f64>,
    #[arg(long, default_value_t = 32.0)]
    pub beta0: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta_min: f64,
    /// Cluster mass threshold, used by sweeps and window detection.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Reference entries at or below this count as zero.
    #[arg(long, default_value_t = 1e-9)]
    pub zero_tol: f64,
    /// Widening of bifurcation windows in β.
    #[arg(long, default_value_t = 0.0)]
    pub pad: f64,
    /// Number of densest runs per order used in the slope fit.
    #[arg(long, default_value_t = 4)]
    pub tail: usize,
    /// Errors below this are excluded from slope fits.
    #[arg(long, default_value_t = 1e-11)]
    pub floor: f64,
    /// CSV output: per-β errors for traces, per-run errors for sweeps.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report with per-run errors and slope fits.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct CompareDocument<'a> {
    manifest: &'a RunManifest,
    runs: &'a [RunError],
    slopes: &'a [SlopeFit],
}

fn run_rows(runs: &[RunError]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = [
        "label",
        "order",
        "step",
        "cost",
        "derivative_evaluations",
        "max_error",
        "max_error_excluding_heuristic",
        "max_error_outside_windows",
    ]
    .map(String::from)
    .to_vec();
    let rows = runs
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.order.to_string(),
                fmt_f64(r.step),
                r.cost.to_string(),
                r.derivative_evaluations.to_string(),
                fmt_f64(r.max_error),
                fmt_f64(r.max_error_excluding_heuristic),
                fmt_f64(r.max_error_outside_windows),
            ]
        })
        .collect();
    (header, rows)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<Summary, CliError> {
    let reference = ReferenceSource::parse(&args.reference)?;
    let rule = WindowRule { delta: args.delta, zero_tol: args.zero_tol, pad: args.pad };
    let mut manifest = RunManifest::new("compare", args.problem.as_deref().unwrap_or(""))
        .param("reference", &args.reference)
        .param("window_rule", rule)
        .param("tail", args.tail)
        .param("floor", args.floor);
    manifest.outputs.push(args.out.display().to_string());
    if let Some(r) = &args.report {
        manifest.outputs.push(r.display().to_string());
    }
    let mut summary = Summary::default();
    let start = Instant::now();

    let runs = if let Some(problem_spec) = &args.problem {
        if !args.trace.is_empty() {
            return Err(CliError::Usage("give either --trace files or --problem for a sweep, not both".into()));
        }
        let problem = load_problem(problem_spec)?;
        let base = TrackConfig { beta0: args.beta0, beta_min: args.beta_min, delta: args.delta, ..TrackConfig::default() };
        manifest.config = Some(base.clone());
        manifest = manifest.param("orders", &args.orders).param("steps", &args.steps);
        let runs = order_sweep(&problem, &reference, &base, &args.orders, &args.steps, rule)?;
        let (header, rows) = run_rows(&runs);
        write_csv(&args.out, &manifest, &header, &rows)?;
        runs
    } else {
        if args.trace.is_empty() {
            return Err(CliError::Usage("need --trace files or --problem".into()));
        }
        manifest = manifest.param("traces", args.trace.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
        let header = ["trace", "beta", "error", "heuristic", "in_window"].map(String::from).to_vec();
        let mut rows = Vec::new();
        let mut runs = Vec::new();
        for (index, path) in args.trace.iter().enumerate() {
            let file = read_trace(path)?;
            let trace = file.to_trace().map_err(|e| CliError::format(path, e))?;
            let config = file.manifest.config.clone().unwrap_or_default();
            let report = compare_trace(&trace, &reference.for_trace(&trace)?, rule)?;
            for r in &report.rows {
                rows.push(vec![index.to_string(), fmt_f64(r.beta), fmt_f64(r.error), r.heuristic.to_string(), r.in_window.to_string()]);
            }
            runs.push(RunError::new(path.display().to_string(), &config, &trace, &report, Duration::ZERO));
        }
        write_csv(&args.out, &manifest, &header, &rows)?;
        runs
    };

    let slopes = tail_slopes(&runs, args.tail, args.floor);
    if let Some(path) = &args.report {
        write_json(path, &CompareDocument { manifest: &manifest, runs: &runs, slopes: &slopes })?;
    }
    for r in &runs {
        summary.push(format!(
            "{}: cost {} max error {:.3e}, excluding heuristic {:.3e}, outside windows {:.3e}{}",
            r.label,
            r.cost,
            r.max_error,
            r.max_error_excluding_heuristic,
            r.max_error_outside_windows,
            if r.wall_time > Duration::ZERO { format!(", wall time {:.3} s", r.wall_time.as_secs_f64()) } else { String::new() }
        ));
    }
    for s in slopes.iter().filter(|s| s.tail.len() >= 2) {
        if let Some(slope) = s.slope {
            summary.push(format!("order {}: log-log slope {slope:.3} over {} runs", s.order, s.tail.len()));
        }
    }
    summary.push(format!("wall time: {:.3} s", start.elapsed().as_secs_f64()));
    Ok(summary)
}
