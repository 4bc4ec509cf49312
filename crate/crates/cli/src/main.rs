//! `wz`: Wyner-Ziv rate-distortion curves, correct-decoding exponents, and
//! exact small-blocklength coding simulation from the command line.
//!
//! Exit codes: 0 success, 1 failed verification property, 2 invalid input,
//! 3 enumeration guard exceeded.

use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wz_core::exponent::{exponent_f, kappa_n, ExponentGrid};
use wz_core::optim::OptimizerConfig;
use wz_core::region::{compute_curve, mu_grid};
use wz_core::sim::{g_n_exhaustive, g_n_random_binning};
use wz_core::verify::run_suite;
use wz_core::{load_source, Error, Result, SourceModel};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "wz",
    version,
    about = "Wyner-Ziv rate-distortion region, exponents, and exact simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; stdout when omitted. A relative path resolves under
    /// WZ_OUT_DIR when that variable is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Upper bound on worker threads; results are identical at any value.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the supporting hyperplanes and emit the boundary table as CSV.
    RdCurve {
        /// Source model JSON file.
        #[arg(long)]
        source: PathBuf,
        /// Number of slope points on [0, 1].
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Print the rate column in bits instead of nats.
        #[arg(long)]
        bits: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Estimate the correct-decoding exponent at one (rate, distortion).
    Exponent {
        #[arg(long)]
        source: PathBuf,
        /// Rate target in nats.
        #[arg(long, allow_negative_numbers = true)]
        rate: f64,
        /// Distortion target.
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        /// Use the full parameter grid (slower, tighter).
        #[arg(long)]
        full_grid: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Report rate and exponent in bits instead of nats.
        #[arg(long)]
        bits: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Evaluate the strong-converse radius kappa_n.
    Kappa {
        /// Variance proxy rho.
        #[arg(long, allow_negative_numbers = true)]
        rho: f64,
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        eps: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        delta: f64,
        /// Block length.
        #[arg(long)]
        n: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exact or Monte-Carlo small-blocklength simulation (one CSV row).
    Simulate {
        #[arg(long)]
        source: PathBuf,
        /// Block length.
        #[arg(long)]
        n: usize,
        /// Rate target in nats.
        #[arg(long, allow_negative_numbers = true)]
        rate: f64,
        /// Distortion target.
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        /// Exhaustive scheme enumeration (the default).
        #[arg(long, conflicts_with = "trials")]
        exhaustive: bool,
        /// Monte-Carlo random-binning trials instead of enumeration.
        #[arg(long)]
        trials: Option<u64>,
        /// Also estimate the exponent and report the bound margin.
        #[arg(long)]
        f_hat: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Print rate and exponent columns in bits instead of nats.
        #[arg(long)]
        bits: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the verification suite; nonzero exit on any failed criterion.
    Verify {
        #[arg(long)]
        source: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Guard(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn resolve_out(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(dir) = std::env::var("WZ_OUT_DIR") {
            return Path::new(&dir).join(path);
        }
    }
    path.to_path_buf()
}

fn emit(out: &OutputArgs, text: &str) -> Result<()> {
    match &out.out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) => {
            let p = resolve_out(p);
            std::fs::write(&p, text)
                .map_err(|e| Error::Io(format!("writing {}: {e}", p.display())))
        }
    }
}

fn check_output(out: &OutputArgs) -> Result<()> {
    if out.jobs == 0 {
        return Err(Error::validation("--jobs must be at least 1"));
    }
    Ok(())
}

fn in_unit(v: f64, bits: bool) -> f64 {
    if bits {
        v / LN_2
    } else {
        v
    }
}

fn unit_name(bits: bool) -> &'static str {
    if bits {
        "bits"
    } else {
        "nats"
    }
}

fn header(command: &str, seed: Option<u64>, src: Option<&SourceModel>) -> String {
    let mut line = format!("# wz {VERSION} {command}");
    if let Some(s) = seed {
        line.push_str(&format!(" seed={s}"));
    }
    if let Some(m) = src {
        line.push_str(&format!(" source={:016x}", m.fingerprint()));
    }
    line.push('\n');
    line
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::RdCurve { source, points, seed, bits, output } => {
            check_output(&output)?;
            let src = load_source(&source)?;
            let cfg = OptimizerConfig { starts: 8, max_iters: 800, seed, ..Default::default() };
            let curve = compute_curve(&src, &mu_grid(points), &cfg)?;
            let mut text = header("rd-curve", Some(seed), Some(&src));
            text.push_str(&format!("# rate unit: {}\n", unit_name(bits)));
            text.push_str("mu,r_mu,rate,dist\n");
            for p in &curve.points {
                text.push_str(&format!(
                    "{:.6},{:.9e},{:.9e},{:.9e}\n",
                    p.mu,
                    p.value,
                    in_unit(p.rate, bits),
                    p.dist
                ));
            }
            emit(&output, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Exponent { source, rate, delta, full_grid, seed, bits, output } => {
            check_output(&output)?;
            let src = load_source(&source)?;
            let grid = if full_grid { ExponentGrid::standard() } else { ExponentGrid::reduced() };
            let cfg = OptimizerConfig { starts: 3, max_iters: 150, seed, ..Default::default() };
            let res = exponent_f(&src, rate, delta, &grid, &cfg)?;
            let obj = serde_json::json!({
                "tool": "wz",
                "version": VERSION,
                "command": "exponent",
                "seed": seed,
                "source": format!("{:016x}", src.fingerprint()),
                "unit": unit_name(bits),
                "rate": in_unit(rate, bits),
                "delta": delta,
                "f": in_unit(res.f_value, bits),
                "alpha": res.alpha,
                "mu": res.mu,
                "lambda": res.lambda,
                "omega": res.omega,
                "clamped": res.clamped,
            });
            emit(&output, &format!("{obj}\n"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Kappa { rho, eps, delta, n, output } => {
            check_output(&output)?;
            let value = kappa_n(rho, eps, delta, n)?;
            let mut text = header("kappa", None, None);
            text.push_str(&format!("{value:.12}\n"));
            emit(&output, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            source,
            n,
            rate,
            delta,
            exhaustive: _,
            trials,
            f_hat,
            seed,
            bits,
            output,
        } => {
            check_output(&output)?;
            let src = load_source(&source)?;
            let (m, p_c, g_val) = match trials {
                Some(t) => {
                    let est = g_n_random_binning(&src, n, rate, delta, t, seed)?;
                    (est.m, est.mean_p_c, est.g_estimate)
                }
                None => {
                    let best = g_n_exhaustive(&src, n, rate, delta)?;
                    (best.scheme.m, best.p_c, best.g_n)
                }
            };
            let (f_col, margin_col) = if f_hat {
                let cfg =
                    OptimizerConfig { starts: 3, max_iters: 150, seed, ..Default::default() };
                let f = exponent_f(&src, rate, delta, &ExponentGrid::reduced(), &cfg)?;
                let bound = 5.0 * (-(n as f64) * f.f_value).exp() + 1e-9;
                (
                    format!("{:.9e}", in_unit(f.f_value, bits)),
                    format!("{:.9e}", bound - p_c),
                )
            } else {
                (String::new(), String::new())
            };
            let mut text = header("simulate", Some(seed), Some(&src));
            text.push_str(&format!("# rate unit: {}\n", unit_name(bits)));
            text.push_str("n,m,R,Delta,p_c,g_n,f_hat,margin\n");
            text.push_str(&format!(
                "{n},{m},{:.9e},{:.9e},{:.12e},{:.9e},{f_col},{margin_col}\n",
                in_unit(rate, bits),
                delta,
                p_c,
                in_unit(g_val, bits),
            ));
            emit(&output, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { source, seed, output } => {
            check_output(&output)?;
            let src = load_source(&source)?;
            let report = run_suite(&src, seed)?;
            let mut text = header("verify", Some(seed), Some(&src));
            text.push_str(&report.render());
            emit(&output, &text)?;
            if report.all_pass() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}
