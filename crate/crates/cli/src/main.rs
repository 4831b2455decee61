//! `irsim` — IRS-assisted mmWave downlink simulator.
//!
//! Subcommands:
//! - `run`: execute a Monte Carlo experiment from a config file, write CSV.
//! - `verify-scaling`: compare Monte Carlo mean powers against the
//!   closed-form scaling laws.
//! - `solve`: read one channel instance from a text file and print the
//!   chosen solver's precoder, phase shifts and received power.
//! - `eta`: print the quantization loss ratio for 1..B bit phase shifters.
//!
//! Exit codes: 0 on success, 1 on configuration/input errors, 2 on solver
//! failures. All randomness flows from `--seed`/the config seed; nothing is
//! seeded from the clock.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use irsim::channel::{dominant_rank_one, ChannelSet};
use irsim::harness::{self, ExperimentConfig, SolverChoice, SolverSelection};
use irsim::precoding::{self, BeamformingSolution};
use irsim::{analysis, derive_stream};

#[derive(Parser)]
#[command(
    name = "irsim",
    version,
    about = "Joint active/passive beamforming simulator for IRS-assisted mmWave downlinks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment described by a config file.
    Run(RunArgs),
    /// Verify the power scaling laws against Monte Carlo means.
    VerifyScaling(VerifyScalingArgs),
    /// Solve one channel instance and print the resulting design.
    Solve(SolveArgs),
    /// Print the quantization loss ratio eta(b) for b = 1..=B.
    Eta(EtaArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (flat key = value format).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config key, e.g. --override trials=100 (repeatable,
    /// applied before validation).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Replace the solver list, e.g. "no-irs,analytical:b=2".
    #[arg(long)]
    solvers: Option<String>,
    /// Quantize every phase-design solver to this many bits.
    #[arg(long)]
    bits: Option<u32>,
    /// Replace the trial count.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct VerifyScalingArgs {
    /// Experiment config file (statistical model, element sweep).
    #[arg(long)]
    config: PathBuf,
    /// Output path for the report; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    /// Channel instance file: `N M K`, then h_d as N re/im pairs, then per
    /// IRS the M x N matrix G_k (row-major re/im pairs) and h_r_k as M
    /// pairs. `#` starts a comment.
    #[arg(long)]
    input: PathBuf,
    /// Solver: single, analytical, sdr or no-irs.
    #[arg(long, default_value = "analytical")]
    solver: String,
    /// Transmit power in dBm.
    #[arg(long, default_value_t = 30.0)]
    power_dbm: f64,
    /// Quantize the phase shifts to this many bits.
    #[arg(long)]
    bits: Option<u32>,
    /// RNG seed (used by the sdr solver's randomization).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Gaussian randomization samples for the sdr solver.
    #[arg(long, default_value_t = 1000)]
    randomizations: usize,
}

#[derive(Args)]
struct EtaArgs {
    /// Largest phase resolution to print.
    #[arg(long, default_value_t = 3)]
    max_bits: u32,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::VerifyScaling(args) => cmd_verify_scaling(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Eta(args) => cmd_eta(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// 1 for configuration/input problems, 2 for solver failures.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<irsim::Error>() {
        Some(irsim::Error::SolverFailure(_))
        | Some(irsim::Error::DegenerateChannel(_))
        | Some(irsim::Error::TooLarge(_)) => 2,
        _ => 1,
    }
}

fn load_config(
    path: &Path,
    overrides: &[String],
    seed: Option<u64>,
    trials: Option<usize>,
) -> anyhow::Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config `{}`: {e}", path.display()))?;
    let mut cfg = ExperimentConfig::from_str(&text)?;
    for kv in overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(trials) = trials {
        cfg.trials = trials;
    }
    Ok(cfg)
}

fn write_out(out: &Option<PathBuf>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| anyhow::anyhow!("cannot write `{}`: {e}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config, &args.overrides, args.seed, args.trials)?;
    if let Some(list) = &args.solvers {
        cfg.solvers = list
            .split(',')
            .map(|t| SolverChoice::parse(t.trim()))
            .collect::<irsim::Result<_>>()?;
    }
    if let Some(bits) = args.bits {
        for choice in &mut cfg.solvers {
            let quantizable = !matches!(
                choice.selection,
                SolverSelection::NoIrs | SolverSelection::SdrBound
            );
            if quantizable && choice.bits.is_none() {
                choice.tag = format!("{}:b={bits}", choice.tag);
                choice.bits = Some(bits);
            }
        }
    }
    let rows = harness::run_experiment(&cfg)?;
    write_out(&args.out, &harness::to_csv(&rows))?;
    eprintln!("{} rows", rows.len());
    Ok(())
}

fn cmd_verify_scaling(args: VerifyScalingArgs) -> anyhow::Result<()> {
    let cfg = load_config(&args.config, &args.overrides, args.seed, args.trials)?;
    let report = harness::verify_scaling(&cfg)?;
    write_out(&args.out, &report.to_string())?;
    let flagged = report.rows.iter().filter(|r| r.flagged).count();
    eprintln!("{} rows, {flagged} flagged", report.rows.len());
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| anyhow::anyhow!("cannot read instance `{}`: {e}", args.input.display()))?;
    let ch = parse_instance(&text)?;
    let p = harness::dbm_to_watts(args.power_dbm);
    let links: Vec<_> = ch
        .bs_irs
        .iter()
        .map(dominant_rank_one)
        .collect::<irsim::Result<_>>()?;

    let sol = match args.solver.as_str() {
        "no-irs" => precoding::mrt_no_irs(&ch.bs_user, p)?,
        "single" => {
            anyhow::ensure!(ch.num_irs() == 1, "the single solver needs exactly one IRS");
            precoding::solve_single_irs(&ch, &links[0], p)?
        }
        "analytical" => precoding::solve_multi_irs_analytical(&ch, &links, p)?,
        "sdr" => {
            let mut rng = derive_stream(args.seed, &[0x51]);
            precoding::solve_multi_irs_sdr(&ch, &links, p, args.randomizations, &mut rng)?
        }
        other => anyhow::bail!("unknown solver `{other}` (single, analytical, sdr, no-irs)"),
    };
    let sol = match args.bits {
        Some(bits) if sol.phase_config.num_irs() > 0 => {
            precoding::quantize_solution(&ch, &links, &sol, bits)?
        }
        _ => sol,
    };
    print_solution(&ch, &sol, p);
    Ok(())
}

fn print_solution(ch: &ChannelSet, sol: &BeamformingSolution, p: f64) {
    // Power on the rank-one model the solver saw, and on the full channels.
    let full = precoding::received_power(&sol.precoder, &sol.phase_config, ch)
        .unwrap_or(f64::NAN);
    println!("solver: {}", sol.solver);
    println!("transmit_power_w: {:.16e}", p);
    println!("received_power_rank_one_w: {:.16e}", sol.received_power);
    println!("received_power_full_w: {full:.16e}");
    println!("precoder:");
    for w in sol.precoder.iter() {
        println!("  {:.16e} {:.16e}", w.re, w.im);
    }
    for (k, phases) in sol.phase_config.phases().iter().enumerate() {
        let joined = phases
            .iter()
            .map(|t| format!("{t:.16e}"))
            .collect::<Vec<_>>()
            .join(" ");
        println!("phases[{k}]: {joined}");
    }
}

/// Parses the `solve` instance format: whitespace-separated tokens, `#`
/// comments. Header `N M K`, then `h_d` (N re/im pairs), then per IRS the
/// row-major `G_k` (M*N pairs) followed by `h_r_k` (M pairs).
fn parse_instance(text: &str) -> anyhow::Result<ChannelSet> {
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64;

    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
        .map(str::to_owned)
        .collect::<Vec<_>>()
        .into_iter();
    let mut dim = |name: &str| -> anyhow::Result<usize> {
        tokens
            .next()
            .ok_or_else(|| anyhow::anyhow!("missing dimension `{name}`"))?
            .parse()
            .map_err(|e| anyhow::anyhow!("bad dimension `{name}`: {e}"))
    };
    let n = dim("N")?;
    let m = dim("M")?;
    let k = dim("K")?;
    anyhow::ensure!(n > 0 && m > 0, "N and M must be positive");

    let mut floats = Vec::new();
    for tok in tokens {
        floats.push(
            tok.parse::<f64>()
                .map_err(|e| anyhow::anyhow!("bad number `{tok}`: {e}"))?,
        );
    }
    let expected = 2 * n + k * (2 * m * n + 2 * m);
    anyhow::ensure!(
        floats.len() == expected,
        "expected {expected} numbers for N={n} M={m} K={k}, found {}",
        floats.len()
    );
    let mut it = floats.into_iter();
    let mut next_c = || Complex64::new(it.next().unwrap(), it.next().unwrap());

    let h_d = DVector::from_iterator(n, (0..n).map(|_| next_c()));
    let mut bs_irs = Vec::with_capacity(k);
    let mut irs_user = Vec::with_capacity(k);
    for _ in 0..k {
        // Row-major on the wire; nalgebra stores column-major.
        let mut g = DMatrix::zeros(m, n);
        for r in 0..m {
            for c in 0..n {
                g[(r, c)] = next_c();
            }
        }
        bs_irs.push(g);
        irs_user.push(DVector::from_iterator(m, (0..m).map(|_| next_c())));
    }
    Ok(ChannelSet::new(h_d, bs_irs, irs_user, None)?)
}

fn cmd_eta(args: EtaArgs) -> anyhow::Result<()> {
    anyhow::ensure!(args.max_bits >= 1, "--max-bits must be at least 1");
    println!("{:>4} {:>8} {:>10}", "bits", "eta", "eta_db");
    for b in 1..=args.max_bits {
        let eta = analysis::quantization_ratio(b)?;
        println!("{b:>4} {eta:>8.4} {:>10.4}", 10.0 * eta.log10());
    }
    Ok(())
}
