//! `ba`: Blahut–Arimoto baselines on a β grid.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use rdtrack::ba_core::{ba_fixed_point, rd_functionals, FixedPointResult, DEFAULT_BA_MAX_ITER};
use rdtrack::problem::{Marginal, RdProblem};
use rdtrack::tracker::{ba_reverse_anneal, DEFAULT_TRACK_BA_TOL};

use crate::output::{fmt_f64, write_csv};
use crate::problems::load_problem;
use crate::{CliError, RunManifest, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaMode {
    /// Each point starts from the previous solution, from high to low β.
    Anneal,
    /// Each point starts from the initial condition.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaInit {
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Linear,
    Log,
}

#[derive(Debug, Clone, Args)]
pub struct BaArgs {
    /// Problem file, or one of fig3, berger273, binary-hamming:p=<p>.
    #[arg(long)]
    pub problem: String,
    #[arg(long, value_enum, default_value_t = BaMode::Anneal)]
    pub mode: BaMode,
    /// Initial marginal of the first (anneal) or every (independent) point.
    #[arg(long, value_enum, default_value_t = BaInit::Uniform)]
    pub init: BaInit,
    #[arg(long, value_enum, default_value_t = GridKind::Log)]
    pub grid: GridKind,
    #[arg(long)]
    pub beta_max: f64,
    /// Defaults to `beta_max` (a single point).
    #[arg(long)]
    pub beta_min: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub points: usize,
    #[arg(long, default_value_t = DEFAULT_TRACK_BA_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_BA_MAX_ITER)]
    pub max_iter: usize,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

/// Strictly decreasing grid from `beta_max` to `beta_min`.
pub fn make_grid(kind: GridKind, beta_max: f64, beta_min: f64, points: usize) -> Result<Vec<f64>, CliError> {
    if points == 0 {
        return Err(CliError::Usage("grid needs at least one point".into()));
    }
    if !(beta_max > 0.0 && beta_max.is_finite()) {
        return Err(CliError::Usage(format!("beta_max must be positive, got {beta_max}")));
    }
    if points == 1 {
        return Ok(vec![beta_max]);
    }
    if !(beta_min < beta_max && beta_min >= 0.0) {
        return Err(CliError::Usage(format!("need 0 <= beta_min < beta_max, got {beta_min} and {beta_max}")));
    }
    let last = (points - 1) as f64;
    let grid: Vec<f64> = match kind {
        GridKind::Linear => (0..points).map(|i| beta_max + (beta_min - beta_max) * i as f64 / last).collect(),
        GridKind::Log => {
            if beta_min <= 0.0 {
                return Err(CliError::Usage("a log grid needs beta_min > 0".into()));
            }
            let (hi, lo) = (beta_max.ln(), beta_min.ln());
            (0..points).map(|i| (hi + (lo - hi) * i as f64 / last).exp()).collect()
        }
    };
    Ok(grid)
}

/// BA on every grid point.
pub fn ba_grid(problem: &RdProblem, grid: &[f64], mode: BaMode, tol: f64, max_iter: usize) -> Result<Vec<FixedPointResult>, CliError> {
    match mode {
        BaMode::Anneal => Ok(ba_reverse_anneal(problem, grid, tol, max_iter)?),
        BaMode::Independent => {
            let uniform = Marginal::uniform(problem.m());
            let results: Result<Vec<_>, _> = grid.par_iter().map(|&beta| ba_fixed_point(problem, &uniform, beta, tol, max_iter)).collect();
            Ok(results?)
        }
    }
}

/// CSV rows: β, iterations, final step size, convergence flag, marginal,
/// distortion and rate (nats).
pub fn ba_csv(problem: &RdProblem, grid: &[f64], results: &[FixedPointResult]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["beta", "iterations", "residual", "converged"].map(String::from).to_vec();
    header.extend((0..problem.m()).map(|j| format!("r{j}")));
    header.extend(["distortion", "rate"].map(String::from));
    let rows = grid
        .iter()
        .zip(results)
        .map(|(&beta, res)| {
            let values = rd_functionals(problem, &res.encoder);
            let mut row = vec![fmt_f64(beta), res.iterations.to_string(), fmt_f64(res.residual), res.converged.to_string()];
            row.extend(res.marginal.weights.iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(values.distortion));
            row.push(fmt_f64(values.rate));
            row
        })
        .collect();
    (header, rows)
}

pub fn cmd_ba(args: &BaArgs) -> Result<Summary, CliError> {
    let problem = load_problem(&args.problem)?;
    if !(args.tol > 0.0) {
        return Err(CliError::Usage("tolerance must be positive".into()));
    }
    let beta_min = args.beta_min.unwrap_or(args.beta_max);
    let grid = make_grid(args.grid, args.beta_max, beta_min, args.points)?;
    let mut manifest = RunManifest::new("ba", &args.problem)
        .param("mode", args.mode)
        .param("init", args.init)
        .param("grid", args.grid)
        .param("beta_max", args.beta_max)
        .param("beta_min", beta_min)
        .param("points", args.points)
        .param("tol", args.tol)
        .param("max_iter", args.max_iter);
    manifest.outputs = vec![args.out.display().to_string()];

    let start = Instant::now();
    let results = ba_grid(&problem, &grid, args.mode, args.tol, args.max_iter)?;
    let elapsed = start.elapsed();
    let (header, rows) = ba_csv(&problem, &grid, &results);
    write_csv(&args.out, &manifest, &header, &rows)?;

    let total: usize = results.iter().map(|r| r.iterations).sum();
    let failed = results.iter().filter(|r| !r.converged).count();
    let mut summary = Summary::default();
    summary.push(format!("points: {}", grid.len()));
    summary.push(format!("BA iterations: {total}"));
    summary.push(format!("not converged: {failed}"));
    summary.push(format!("wall time: {:.3} s", elapsed.as_secs_f64()));
    Ok(summary)
}
