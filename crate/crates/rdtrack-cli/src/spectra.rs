//! `spectra`: Jacobian eigenvalues at BA fixed points and the bifurcation
//! classification.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use nalgebra::Complex;
use rayon::prelude::*;
use serde::Serialize;

use rdtrack::ba_core::{ba_fixed_point, jacobian_encoder, jacobian_marginal, polish_fixed_point, BaError};
use rdtrack::linalg::eigenvalues;
use rdtrack::problem::{reduce, Marginal, RdProblem, SupportSet};
use rdtrack::tracker::{classify_bifurcation, BifurcationReport, Classification, Thresholds, DEFAULT_DELTA, DEFAULT_EIGEN_THRESHOLD};

use crate::ba::{make_grid, GridKind};
use crate::output::{fmt_f64, write_csv};
use crate::problems::load_problem;
use crate::{CliError, RunManifest, Summary};

/// How the fixed point at each β is obtained and classified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectraOptions {
    /// BA tolerance, starting from the uniform marginal.
    pub tol: f64,
    pub max_iter: usize,
    /// Refine the BA result by Newton's method on its support.
    pub polish: bool,
    pub polish_tol: f64,
    pub thresholds: Thresholds,
}

impl Default for SpectraOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            polish: true,
            polish_tol: 1e-14,
            thresholds: Thresholds { eigen: DEFAULT_EIGEN_THRESHOLD, delta: DEFAULT_DELTA },
        }
    }
}

/// Spectra at one β.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraRow {
    pub beta: f64,
    pub iterations: usize,
    pub converged: bool,
    pub marginal: Vec<f64>,
    /// Eigenvalues of the encoder-coordinate Jacobian, by increasing real part.
    pub encoder_eigenvalues: Vec<Complex<f64>>,
    /// Eigenvalues of the marginal-coordinate Jacobian on the support.
    pub marginal_eigenvalues: Vec<Complex<f64>>,
    pub report: BifurcationReport,
}

fn sorted(mut v: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    v
}

/// Fixed point, both spectra and the classification at `beta`.
pub fn spectra_at(problem: &RdProblem, beta: f64, options: &SpectraOptions) -> Result<SpectraRow, BaError> {
    let ba = ba_fixed_point(problem, &Marginal::uniform(problem.m()), beta, options.tol, options.max_iter)?;
    let (iterations, converged) = (ba.iterations, ba.converged);
    let root = if options.polish { polish_fixed_point(problem, &ba.marginal.weights, beta, options.polish_tol, 200)? } else { ba };
    let r = root.marginal;
    let encoder_eigenvalues = sorted(eigenvalues(&jacobian_encoder(problem, &root.encoder, beta)?));
    let support = r.support();
    let set = SupportSet::new(support.clone(), problem.m()).map_err(|_| BaError::ZeroMarginal)?;
    let reduced = reduce(problem, &set).map_err(|_| BaError::ZeroMarginal)?;
    let rs: Vec<f64> = support.iter().map(|&i| r.weights[i]).collect();
    let marginal_eigenvalues = sorted(eigenvalues(&jacobian_marginal(&reduced, &rs, beta)?));
    let report = classify_bifurcation(problem, &root.encoder, &r, beta, options.thresholds).map_err(|e| match e {
        rdtrack::tracker::TrackError::Ba(b) => b,
        _ => BaError::ZeroMarginal,
    })?;
    Ok(SpectraRow { beta, iterations, converged, marginal: r.weights, encoder_eigenvalues, marginal_eigenvalues, report })
}

/// [`spectra_at`] on every β, in parallel; failures are kept per point.
pub fn spectra_grid(problem: &RdProblem, betas: &[f64], options: &SpectraOptions) -> Vec<Result<SpectraRow, BaError>> {
    betas.par_iter().map(|&beta| spectra_at(problem, beta, options)).collect()
}

#[derive(Debug, Clone, Args)]
pub struct SpectraArgs {
    /// Problem file, or one of fig3, berger273, binary-hamming:p=<p>.
    #[arg(long)]
    pub problem: String,
    /// Explicit β values; overrides the grid options.
    #[arg(long, value_delimiter = ',')]
    pub betas: Vec<f64>,
    #[arg(long, value_enum, default_value_t = GridKind::Linear)]
    pub grid: GridKind,
    #[arg(long)]
    pub beta_max: Option<f64>,
    #[arg(long)]
    pub beta_min: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Skip the Newton refinement of each BA result.
    #[arg(long)]
    pub no_polish: bool,
    #[arg(long, default_value_t = 1e-14)]
    pub polish_tol: f64,
    #[arg(long, default_value_t = DEFAULT_EIGEN_THRESHOLD)]
    pub eigen_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

fn join_values(values: &[Complex<f64>]) -> (String, f64) {
    let text = values.iter().map(|z| fmt_f64(z.re)).collect::<Vec<_>>().join(" ");
    let imag = values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    (text, imag)
}

pub fn cmd_spectra(args: &SpectraArgs) -> Result<Summary, CliError> {
    let problem = load_problem(&args.problem)?;
    let betas = if !args.betas.is_empty() {
        args.betas.clone()
    } else {
        let hi = args.beta_max.ok_or_else(|| CliError::Usage("need --betas or --beta-max".into()))?;
        make_grid(args.grid, hi, args.beta_min.unwrap_or(hi), args.points)?
    };
    if betas.iter().any(|b| !(*b > 0.0)) {
        return Err(CliError::Usage("beta values must be positive".into()));
    }
    let options = SpectraOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        polish: !args.no_polish,
        polish_tol: args.polish_tol,
        thresholds: Thresholds { eigen: args.eigen_threshold, delta: args.delta },
    };
    let mut manifest = RunManifest::new("spectra", &args.problem).param("betas", &betas).param("options", options);
    manifest.outputs = vec![args.out.display().to_string()];

    let start = Instant::now();
    let results = spectra_grid(&problem, &betas, &options);
    let elapsed = start.elapsed();

    let m = problem.m();
    let mut header: Vec<String> = ["beta", "iterations", "converged"].map(String::from).to_vec();
    header.extend((0..m).map(|j| format!("r{j}")));
    header.extend(
        [
            "min_encoder_eigenvalue",
            "min_marginal_eigenvalue",
            "min_marginal_entry",
            "classification",
            "encoder_eigenvalues",
            "encoder_max_imag",
            "marginal_eigenvalues",
            "marginal_max_imag",
            "error",
        ]
        .map(String::from),
    );
    let mut rows = Vec::new();
    let mut summary = Summary::default();
    let mut failures = 0;
    for (&beta, result) in betas.iter().zip(&results) {
        match result {
            Ok(row) => {
                let (enc, enc_im) = join_values(&row.encoder_eigenvalues);
                let (marg, marg_im) = join_values(&row.marginal_eigenvalues);
                let mut line = vec![fmt_f64(beta), row.iterations.to_string(), row.converged.to_string()];
                line.extend(row.marginal.iter().map(|&v| fmt_f64(v)));
                line.extend([
                    fmt_f64(row.report.min_encoder_eigenvalue),
                    fmt_f64(row.report.min_marginal_eigenvalue),
                    fmt_f64(row.report.min_marginal_entry),
                    row.report.classification.to_string(),
                    enc,
                    fmt_f64(enc_im),
                    marg,
                    fmt_f64(marg_im),
                    String::new(),
                ]);
                rows.push(line);
                if row.report.classification != Classification::None {
                    summary.push(format!("beta {beta}: {}", row.report.classification));
                }
            }
            Err(e) => {
                failures += 1;
                let mut line = vec![fmt_f64(beta), String::new(), "false".into()];
                line.extend((0..m + 8).map(|_| String::new()));
                line.push(e.to_string());
                rows.push(line);
            }
        }
    }
    write_csv(&args.out, &manifest, &header, &rows)?;
    summary.push(format!("points: {} ({failures} failed)", betas.len()));
    summary.push(format!("wall time: {:.3} s", elapsed.as_secs_f64()));
    Ok(summary)
}
