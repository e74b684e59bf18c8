use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adaptive_eigen::harness::config::load_model_config;
use adaptive_eigen::harness::experiment::{oracle_data, OutputFormat, RunError};
use adaptive_eigen::harness::report::{complexity_report, ComplexityPoint};
use adaptive_eigen::harness::traces::{from_csv, from_json, ResultRow};
use adaptive_eigen::harness::{run_experiment, ExperimentConfig};
use adaptive_eigen::operators::make_model;
use adaptive_eigen::Error;

#[derive(Parser)]
#[command(version, about = "Adaptive eigensolver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver for every target accuracy in a config.
    Run { config: PathBuf },
    /// Fit complexity slopes over one or more results files.
    Report {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Sparsity exponent used to flag slope deviations.
        #[arg(long)]
        known_s: Option<f64>,
    },
    /// Dense reference solution for a model config.
    Oracle { config: PathBuf },
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(RunError::Config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let (outcome, paths) = run_experiment(&cfg, cli.out_dir.as_deref(), cli.format)?;
            for r in &outcome.results {
                println!(
                    "eps {:.1e}: lambda {:.15} |lambda error| {:.3e} orth error {:.3e} support {} flops {}",
                    r.eps, r.lambda, r.lambda_error, r.orth_error, r.support, r.flops
                );
            }
            if let Some(c) = &outcome.summary.complexity {
                println!(
                    "slopes vs 1/eps: support {:.3}, flops {:.3}{}",
                    c.support.slope,
                    c.flops.slope,
                    c.reference_slope.map(|r| format!(" (reference {r:.3})")).unwrap_or_default()
                );
            }
            println!("wrote {}", paths.summary.display());
            Ok(())
        }
        Command::Report { traces, known_s } => {
            let mut rows: Vec<ResultRow> = Vec::new();
            for path in &traces {
                let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(Error::Io(e)))?;
                let parsed = if path.extension().is_some_and(|e| e == "json") {
                    from_json(&text)
                } else {
                    from_csv(&text)
                };
                rows.extend(parsed.map_err(RunError::Config)?);
            }
            let points: Vec<ComplexityPoint> = rows
                .iter()
                .map(|r| ComplexityPoint {
                    eps: r.eps,
                    support: r.support as f64,
                    flops: r.flops as f64,
                })
                .collect();
            let report = complexity_report(&points, known_s).map_err(RunError::Config)?;
            match cli.format {
                OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
                OutputFormat::Csv => {
                    println!("quantity,slope,residual,reference,flagged");
                    let reference = report.reference_slope.map(|r| format!("{r:.16e}")).unwrap_or_default();
                    for (name, fit) in [("support", report.support), ("flops", report.flops)] {
                        println!("{name},{:.16e},{:.16e},{reference},{}", fit.slope, fit.residual, fit.flagged);
                    }
                }
            }
            Ok(())
        }
        Command::Oracle { config } => {
            let model = load_model_config(&config).map_err(RunError::Config)?;
            let instance = make_model(&model).map_err(RunError::Oracle)?;
            let data = oracle_data(&instance).map_err(RunError::Oracle)?;
            let summary = data.summary();
            let dir = cli.out_dir.unwrap_or_else(|| PathBuf::from("out"));
            let io = |e: std::io::Error| RunError::Output(Error::Io(e));
            std::fs::create_dir_all(&dir).map_err(io)?;
            let eigvec = data.u_sparse().to_text();
            let dense = instance.dense_a().map_err(RunError::Oracle)?.to_text();
            let text = match cli.format {
                OutputFormat::Json => serde_json::to_string_pretty(&summary).expect("summary serializes"),
                OutputFormat::Csv => format!(
                    "lambda,gamma,Gamma,lambda_2,c_norm,mperp_inverse_norm,measured_s\n{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                    summary.lambda,
                    summary.gamma,
                    summary.gamma_max,
                    summary.lambda_2,
                    summary.c_norm,
                    summary.mperp_inverse_norm,
                    summary.measured_s.map(|s| format!("{s:.16e}")).unwrap_or_default()
                ),
            };
            std::fs::write(dir.join(format!("oracle.{}", cli.format.extension())), text).map_err(io)?;
            std::fs::write(dir.join("eigenvector.txt"), eigvec).map_err(io)?;
            std::fs::write(dir.join("a_dense.txt"), dense).map_err(io)?;
            if let Ok(c) = instance.dense_c() {
                std::fs::write(dir.join("c_dense.txt"), c.to_text()).map_err(io)?;
            }
            println!("lambda {:.16e}", summary.lambda);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
