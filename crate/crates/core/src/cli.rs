//! Command-line front end.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analytic;
use crate::experiment::{self, Metadata, Runner, SweepMode, SweepSpec, ThresholdPoint};
use crate::laws::PreparedLaw;
use crate::sampler::{self, GraphConfig};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "commgraph",
    version,
    about = "Random community affiliation graphs: threshold predictions and Monte Carlo checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print kappa, kappa_truncated, alpha, lambda and p_pred as JSON.
    Predict {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long)]
        m: u64,
        /// Law specification (JSON).
        #[arg(long)]
        law: PathBuf,
    },
    /// Community count whose threshold coordinate is closest to c.
    Mfor {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, allow_negative_numbers = true)]
        c: f64,
        #[arg(long)]
        law: PathBuf,
    },
    /// Run replicates at fixed (n, m) and print one threshold point.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        law: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        reps: u64,
        #[arg(long)]
        seed: u64,
        /// Write the JSON result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the edges of replicate 0 as `u v` lines.
        #[arg(long)]
        dump_edges: Option<PathBuf>,
    },
    /// Sweep threshold coordinates c, choosing m per value.
    Sweep {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long)]
        law: PathBuf,
        /// Comma-separated list, e.g. "-2,-1,0,1,2".
        #[arg(long = "c", allow_hyphen_values = true)]
        c: String,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        reps: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Exact probability that one community places no edge across ([k], [n]\[k]).
    Qk {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        x: u64,
        #[arg(long)]
        q: f64,
    },
    /// Exact crossing probability against both upper bounds for k = 1..=kmax.
    Bounds {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        x: u64,
        #[arg(long)]
        q: f64,
        /// Largest k; defaults to n/2.
        #[arg(long)]
        kmax: Option<u64>,
    },
    /// Compare the isolated-vertex count with its Poisson limit.
    Y0 {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        law: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        reps: u64,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                EXIT_VALIDATION
            } else {
                let _ = write!(stdout, "{}", e.render());
                EXIT_OK
            };
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_INTERNAL
            }
        }
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_law(path: &Path) -> Result<PreparedLaw> {
    PreparedLaw::from_path(path).map_err(|e| match e {
        Error::Io(io) => {
            Error::InvalidConfig(format!("cannot read law file {}: {io}", path.display()))
        }
        other => other,
    })
}

fn parse_c_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidConfig(format!("--c: cannot parse {s:?} as a number")))
        })
        .collect()
}

fn create(path: &Path) -> Result<File> {
    File::create(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot create {}: {e}", path.display())))
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    metadata: &'a Metadata,
    points: &'a [ThresholdPoint],
}

#[derive(Serialize)]
struct BoundsRow {
    k: u64,
    exact: f64,
    bound_a: f64,
    bound_b: f64,
    holds_a: bool,
    holds_b: bool,
}

#[derive(Serialize)]
struct Y0Output<'a> {
    metadata: &'a Metadata,
    point: &'a ThresholdPoint,
    report: &'a experiment::PoissonReport,
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match command {
        Command::Predict { n, m, law } => {
            let law = load_law(&law)?;
            print_json(stdout, &analytic::lambda_mn(n, m, &law))
        }
        Command::Mfor { n, c, law } => {
            let law = load_law(&law)?;
            print_json(stdout, &analytic::m_for_c(n, c, &law)?)
        }
        Command::Simulate {
            n,
            m,
            law,
            reps,
            seed,
            out,
            dump_edges,
        } => {
            let law = load_law(&law)?;
            if let Some(path) = dump_edges {
                let config = GraphConfig::new(n as usize, m, law.clone(), seed)?;
                sampler::dump_edges(&config, 0, create(&path)?)?;
            }
            let runner = Runner::from_env()?;
            let point = runner.run_point(n, m, &law, reps, seed)?;
            let metadata = Metadata::new(n, &law, reps, seed);
            let doc = SimulateOutput {
                metadata: &metadata,
                points: std::slice::from_ref(&point),
            };
            match out {
                Some(path) => {
                    let mut f = create(&path)?;
                    print_json(&mut f, &doc)
                }
                None => print_json(stdout, &doc),
            }
        }
        Command::Sweep {
            n,
            law,
            c,
            reps,
            seed,
            out,
            format,
        } => {
            let law = load_law(&law)?;
            let spec = SweepSpec {
                n,
                law,
                replicates: reps,
                master_seed: seed,
                mode: SweepMode::Threshold(parse_c_list(&c)?),
            };
            let runner = Runner::from_env()?;
            let points = runner.run_sweep(&spec)?;
            let file = create(&out)?;
            match format {
                Format::Csv => experiment::write_csv(&points, file)?,
                Format::Json => {
                    let metadata = Metadata::new(n, &spec.law, reps, seed);
                    experiment::write_json(&metadata, &points, file)?
                }
            }
            for (i, j) in experiment::monotonicity_violations(&points) {
                writeln!(
                    stderr,
                    "note: p_hat rises from c={} to c={} beyond 3 standard errors",
                    points[i].c, points[j].c
                )?;
            }
            Ok(())
        }
        Command::Qk { n, k, x, q } => {
            let v = analytic::qk_exact(n, k, x, q)?;
            writeln!(stdout, "{v}")?;
            Ok(())
        }
        Command::Bounds { n, x, q, kmax } => {
            let kmax = kmax.unwrap_or(n / 2);
            if kmax < 1 || 2 * kmax > n {
                return Err(Error::Domain(format!(
                    "kmax must be in [1, n/2], got {kmax} for n={n}"
                )));
            }
            let mut w = csv::Writer::from_writer(&mut *stdout);
            for k in 1..=kmax {
                let exact = analytic::qk_exact(n, k, x, q)?;
                let bound_a = analytic::qk_bound_a(n, k, x, q)?;
                let bound_b = analytic::qk_bound_b(n, k, x, q)?;
                w.serialize(BoundsRow {
                    k,
                    exact,
                    bound_a,
                    bound_b,
                    holds_a: exact <= bound_a + 1e-12,
                    holds_b: exact <= bound_b + 1e-12,
                })?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Y0 {
            n,
            m,
            law,
            reps,
            seed,
        } => {
            let law = load_law(&law)?;
            let runner = Runner::from_env()?;
            let point = runner.run_point(n, m, &law, reps, seed)?;
            let report = experiment::y0_poisson_test(&point);
            let metadata = Metadata::new(n, &law, reps, seed);
            print_json(
                stdout,
                &Y0Output {
                    metadata: &metadata,
                    point: &point,
                    report: &report,
                },
            )
        }
    }
}
