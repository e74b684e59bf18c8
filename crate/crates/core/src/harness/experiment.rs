use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::{complexity_report, ComplexityPoint, ComplexityReport};
use super::traces::{to_csv, to_json, ResultRow, TraceRow};
use crate::error::Error;
use crate::ledger::CostLedger;
use crate::operators::{build_operators, ProblemInstance};
use crate::oracle::{self, DenseSpectrum};
use crate::seqspace::{fit_sparsity_exponent, n_term_errors, SparseVector};
use crate::solvers::{
    accelerate_frozen, derive_parameters_with, minieig, perturbed_initial_guess, posteigen_rayleigh,
    ParameterChoices, SpectralBounds, StepParameters,
};

/// Failure of an experiment, classified by the stage that failed.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(Error),
    #[error("oracle failure: {0}")]
    Oracle(Error),
    #[error("solver aborted: {0}")]
    Solver(Error),
    #[error("cannot write output: {0}")]
    Output(Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Output(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Oracle(_) => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Dense reference data for a model section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub lambda: f64,
    pub gamma: f64,
    #[serde(rename = "Gamma")]
    pub gamma_max: f64,
    pub lambda_2: f64,
    pub c_norm: f64,
    pub mperp_inverse_norm: f64,
    /// Fitted decay exponent of the best N-term errors of the eigenvector.
    pub measured_s: Option<f64>,
}

pub struct OracleData {
    pub lambda: f64,
    pub u: Vec<f64>,
    pub spectrum: DenseSpectrum,
    pub mperp_inverse_norm: f64,
    pub measured_s: Option<f64>,
}

impl OracleData {
    pub fn summary(&self) -> OracleSummary {
        OracleSummary {
            lambda: self.lambda,
            gamma: self.spectrum.gamma,
            gamma_max: self.spectrum.gamma_upper,
            lambda_2: self.spectrum.lambda_2,
            c_norm: self.spectrum.c_norm,
            mperp_inverse_norm: self.mperp_inverse_norm,
            measured_s: self.measured_s,
        }
    }

    pub fn u_sparse(&self) -> SparseVector {
        SparseVector::from_dense(&self.u)
    }

    pub fn orth_error(&self, x: &SparseVector) -> f64 {
        oracle::orthogonal_error(x, &self.u)
    }
}

/// Decay exponent of `sigma_N(u)` fitted over the range where the tail is
/// well above rounding.
pub fn measured_sparsity(u: &SparseVector) -> Option<f64> {
    let sigma = n_term_errors(u);
    let hi = sigma.iter().rposition(|&s| s > 1e-11)?;
    let lo = (hi / 16).max(2);
    if hi < lo + 4 {
        return None;
    }
    fit_sparsity_exponent(u, lo, hi).ok()
}

/// Dense eigenpair, spectrum and `||M_perp^{-1}||` of an instance.
pub fn oracle_data(instance: &ProblemInstance) -> crate::error::Result<OracleData> {
    let a = instance.dense_a()?;
    let c = instance.dense_c()?;
    let spectrum = oracle::dense_spectrum(&a, &c)?;
    let (lambda, u) = oracle::dense_smallest_pair(&a, &c)?;
    let mperp_inverse_norm = oracle::dense_Mperp_inverse_norm(&a, &c, lambda, &u)?;
    let measured_s = measured_sparsity(&SparseVector::from_dense(&u));
    Ok(OracleData {
        lambda,
        u,
        spectrum,
        mperp_inverse_norm,
        measured_s,
    })
}

/// Everything needed to run the solver on one configuration.
pub struct Prepared {
    pub instance: ProblemInstance,
    pub oracle: OracleData,
    pub params: StepParameters,
    pub x0: SparseVector,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    let explicit = cfg.bounds.explicit().map_err(RunError::Config)?;
    let (a, c) = build_operators(&cfg.model).map_err(RunError::Config)?;
    let n = cfg.model.size;
    let dense_a = a.to_dense().map_err(RunError::Oracle)?;
    let dense_c = c.to_dense(n).map_err(RunError::Oracle)?;
    let spectrum = oracle::dense_spectrum(&dense_a, &dense_c).map_err(RunError::Oracle)?;
    let bounds = match explicit {
        Some(b) => b,
        None => SpectralBounds::from_spectrum(&spectrum).map_err(RunError::Oracle)?,
    };
    let instance = ProblemInstance::new(a, c, bounds).map_err(RunError::Config)?;
    let oracle = oracle_data(&instance).map_err(RunError::Oracle)?;
    let m = if cfg.m_from_oracle {
        Some(2.0 * oracle.mperp_inverse_norm)
    } else {
        cfg.m_override
    };
    let params = derive_parameters_with(
        &bounds,
        &ParameterChoices {
            eps0: cfg.eps0,
            m,
            c1: cfg.c1,
        },
    )
    .map_err(RunError::Config)?;
    let x0 = perturbed_initial_guess(&oracle.u_sparse(), params.eps0, n, cfg.seed).map_err(RunError::Solver)?;
    Ok(Prepared {
        instance,
        oracle,
        params,
        x0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub bounds: SpectralBounds,
    pub params: StepParameters,
    pub oracle: OracleSummary,
    pub results: Vec<ResultRow>,
    pub complexity: Option<ComplexityReport>,
    pub ledger: CostLedger,
}

pub struct ExperimentOutcome {
    pub trace: Vec<TraceRow>,
    pub results: Vec<ResultRow>,
    pub summary: Summary,
}

/// Runs the solver for every target accuracy; writes nothing.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, RunError> {
    let prep = prepare(cfg)?;
    let Prepared {
        instance,
        oracle,
        params,
        x0,
    } = &prep;
    let mut trace = Vec::new();
    let mut results = Vec::new();
    let mut total = CostLedger::new();
    for &eps in &cfg.eps_targets {
        let out = minieig(instance, params, x0, eps).map_err(RunError::Solver)?;
        let mut steps = 0;
        for b in &out.blocks {
            for s in &b.steps {
                trace.push(TraceRow {
                    eps_target: eps,
                    block: b.block,
                    step: s.step,
                    eps_bar: b.eps_bar,
                    eta: s.eta,
                    residual_norm: s.residual_norm,
                    lambda_bar: s.lambda_bar,
                    support: s.iterate.support_size(),
                    residual_support: s.residual_support,
                    flops: s.flops,
                    orth_error: oracle.orth_error(&s.iterate),
                });
                steps += 1;
            }
        }
        let mut ledger = out.ledger.clone();
        let (lambda_star, accel_orth_error) = match cfg.accelerate_steps {
            Some(j) => {
                let ls = posteigen_rayleigh(instance, &out.u, eps, &mut ledger).map_err(RunError::Solver)?;
                let run = accelerate_frozen(instance, params, &out.u, ls, eps, j).map_err(RunError::Solver)?;
                ledger.merge(&run.ledger);
                (Some(ls), Some(oracle.orth_error(&run.x)))
            }
            None => (None, None),
        };
        results.push(ResultRow {
            eps,
            lambda: out.lambda,
            lambda_error: (out.lambda - oracle.lambda).abs(),
            orth_error: oracle.orth_error(&out.u),
            support: out.u.support_size(),
            flops: out.ledger.flops,
            entries: out.ledger.entries_computed,
            max_support: out.ledger.max_support,
            blocks: out.blocks.len(),
            steps,
            lambda_star,
            lambda_star_error: lambda_star.map(|l| (l - oracle.lambda).abs()),
            accel_orth_error,
        });
        total.merge(&ledger);
    }
    let points: Vec<ComplexityPoint> = results
        .iter()
        .map(|r| ComplexityPoint {
            eps: r.eps,
            support: r.support as f64,
            flops: r.flops as f64,
        })
        .collect();
    let known_s = cfg.known_s.or(oracle.measured_s);
    let complexity = complexity_report(&points, known_s).ok();
    let summary = Summary {
        config: cfg.clone(),
        bounds: instance.bounds,
        params: *params,
        oracle: oracle.summary(),
        results: results.clone(),
        complexity,
        ledger: total,
    };
    Ok(ExperimentOutcome {
        trace,
        results,
        summary,
    })
}

/// Paths written by [`write_outputs`].
pub struct OutputPaths {
    pub trace: PathBuf,
    pub results: PathBuf,
    pub summary: PathBuf,
}

pub fn output_paths(cfg: &ExperimentConfig, dir: &Path, format: OutputFormat) -> OutputPaths {
    let ext = format.extension();
    OutputPaths {
        trace: dir.join(format!("{}.{ext}", cfg.output.trace)),
        results: dir.join(format!("{}.{ext}", cfg.output.results)),
        summary: dir.join(&cfg.output.summary),
    }
}

pub fn write_outputs(
    cfg: &ExperimentConfig,
    outcome: &ExperimentOutcome,
    dir: &Path,
    format: OutputFormat,
) -> Result<OutputPaths, RunError> {
    let (trace, results) = match format {
        OutputFormat::Csv => (to_csv(&outcome.trace), to_csv(&outcome.results)),
        OutputFormat::Json => (to_json(&outcome.trace), to_json(&outcome.results)),
    };
    let trace = trace.map_err(RunError::Output)?;
    let results = results.map_err(RunError::Output)?;
    let summary = serde_json::to_string_pretty(&outcome.summary).map_err(|e| RunError::Output(Error::Parse(e.to_string())))?;
    let paths = output_paths(cfg, dir, format);
    let io = |e: std::io::Error| RunError::Output(Error::Io(e));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(&paths.trace, trace).map_err(io)?;
    std::fs::write(&paths.results, results).map_err(io)?;
    std::fs::write(&paths.summary, summary).map_err(io)?;
    Ok(paths)
}

/// Runs an experiment and writes its trace, results and summary.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    dir: Option<&Path>,
    format: OutputFormat,
) -> Result<(ExperimentOutcome, OutputPaths), RunError> {
    let outcome = execute(cfg)?;
    let dir = dir.unwrap_or(&cfg.output.dir);
    let paths = write_outputs(cfg, &outcome, dir, format)?;
    Ok((outcome, paths))
}
