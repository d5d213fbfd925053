use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lseig::config::{DomainArg, ExperimentConfig, Method, SigmaArg, DEFAULT_MAX_DOFS};
use lseig::experiments::{
    run_adaptive, run_apriori, run_curl_failure, run_oracle, write_adaptive, write_apriori, write_curl_failure,
    write_oracle, ERROR_COLUMNS,
};
use lseig::table::opt;
use lseig::Result;

#[derive(Parser)]
#[command(name = "lseig", version, about = "Least-squares finite element eigenvalue experiments for the Laplacian")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Write every mesh in the run to `<out>/dump`.
    #[arg(long, global = true)]
    dump_mesh: bool,
    /// Write the pencil blocks A, B, C, M of every level as Matrix Market.
    #[arg(long, global = true)]
    dump_matrices: bool,
    /// Minimum quadrature degree for the first-order assembly; 0 picks the
    /// exact degree.
    #[arg(long, global = true, default_value_t = 0)]
    quad_degree: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Uniform refinement study with error tables and fitted rates.
    Apriori {
        #[arg(long, value_enum, default_value_t = Method::F1)]
        formulation: Method,
        #[arg(long, value_enum, default_value_t = SigmaArg::Rt0)]
        sigma: SigmaArg,
        #[arg(long, value_enum, default_value_t = DomainArg::Square)]
        domain: DomainArg,
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long, default_value_t = 2)]
        start_level: usize,
        #[arg(long, default_value_t = 1)]
        num_eigs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Curl-enriched CG1-vec fluxes on the L-shape against an RT0 control.
    CurlFailure {
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long, default_value_t = 1)]
        start_level: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Dörfler-marked adaptive refinement on the L-shape; θ = 1 is always added.
    Adaptive {
        #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.5])]
        theta: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_MAX_DOFS)]
        max_dofs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Extrapolated reference eigenvalues.
    Oracle {
        #[arg(value_enum)]
        domain: OracleDomain,
        #[arg(long, default_value_t = 3)]
        first_level: usize,
        #[arg(long, default_value_t = 8)]
        last_level: usize,
        #[arg(long, default_value_t = 5)]
        num_eigs: usize,
        #[arg(long, default_value = "refdata")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleDomain {
    #[value(name = "lshape")]
    LShape,
}

impl Global {
    fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        cfg.dump_mesh = self.dump_mesh;
        cfg.dump_matrices = self.dump_matrices;
        cfg.quad_degree = self.quad_degree;
        cfg
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Apriori {
            formulation,
            sigma,
            domain,
            levels,
            start_level,
            num_eigs,
            out,
        } => {
            let cfg = cli.global.apply(
                ExperimentConfig::apriori(formulation, sigma.into(), domain.into(), levels)
                    .with_start_level(start_level)
                    .with_num_eigs(num_eigs)
                    .with_out_dir(out),
            );
            let table = run_apriori(&cfg)?;
            for p in write_apriori(&cfg, &table)? {
                println!("wrote {}", p.display());
            }
            println!("{} rates over the last {} levels", table.label, table.rows_fitted);
            for c in ERROR_COLUMNS {
                println!("  {c:<16} {}", opt(table.rate(c)));
            }
            if table.uncovered_by_theory {
                println!("  note: uncovered by theory");
            }
        }
        Command::CurlFailure { levels, start_level, out } => {
            let cfg = cli
                .global
                .apply(ExperimentConfig::curl_failure(levels).with_start_level(start_level).with_out_dir(out));
            let report = run_curl_failure(&cfg)?;
            for p in write_curl_failure(&cfg, &report)? {
                println!("wrote {}", p.display());
            }
            for v in &report.verdicts {
                println!(
                    "  {:<16} mode {} final error {:.3e} wrong_limit {} converged {}",
                    v.method,
                    v.mode,
                    v.errors.last().copied().unwrap_or(f64::NAN),
                    v.wrong_limit,
                    v.converged
                );
            }
        }
        Command::Adaptive { theta, max_dofs, out } => {
            let cfg = cli.global.apply(ExperimentConfig::adaptive(theta, max_dofs).with_out_dir(out));
            let report = run_adaptive(&cfg)?;
            for p in write_adaptive(&cfg, &report)? {
                println!("wrote {}", p.display());
            }
            for r in &report.runs {
                println!("  theta {:.2}: {} iterations, slope {}", r.theta, r.rows.len(), opt(r.slope));
            }
        }
        Command::Oracle {
            domain: OracleDomain::LShape,
            first_level,
            last_level,
            num_eigs,
            out,
        } => {
            let report = run_oracle(first_level, last_level, num_eigs)?;
            std::fs::create_dir_all(&out)?;
            write_oracle(&report, &out)?;
            for (j, (v, e)) in report.values.iter().zip(&report.error_estimates).enumerate() {
                println!("  lambda_{} = {v:.12} (± {e:.1e})", j + 1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
