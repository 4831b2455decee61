//! Reproducible Monte Carlo experiment runner.
//!
//! Experiments sweep one variable (BS-user distance, IRS panel size, or
//! link blockage probability), draw channel realizations per sweep point,
//! run the configured beamforming solvers on the rank-one links, evaluate
//! the resulting designs against the full channels, and aggregate receive
//! SNR, throughput and outage into CSV rows.
//!
//! Reproducibility contract: every random draw comes from a stream derived
//! as `hash(seed, purpose, sweep index, trial index)`, and aggregation runs
//! in fixed trial order over the collected results, so the output is
//! byte-identical for a given `(config, seed)` regardless of how many
//! worker threads execute the trials.

mod config;

pub use config::{
    dbm_to_watts, ChannelModel, ExperimentConfig, Scenario, SolverChoice, SolverSelection,
};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;
use std::fmt;

use crate::channel::{
    self, ChannelSet, MultiIrsGeometry, RankOneLink, SingleIrsGeometry, UlaGeometry, UraGeometry,
    AZIMUTH_SECTOR, ELEVATION_SECTOR, MIN_PATHLOSS_DISTANCE_M,
};
use crate::error::{Error, Result};
use crate::precoding::{self, BeamformingSolution};
use crate::{analysis, derive_stream, RandomStream};

/// Stream-derivation salts; distinct purposes never share a stream, so a
/// blockage probability of zero reproduces the unblocked experiment
/// channel-for-channel.
const SALT_CHANNEL: u64 = 0x11;
const SALT_BLOCKAGE: u64 = 0x22;
const SALT_SOLVER: u64 = 0x33;

/// Fraction of trials a solver may skip (degenerate channels) before the
/// run is considered failed.
const MAX_SKIP_RATE: f64 = 0.01;

/// One aggregated output row: a sweep point and solver with its mean
/// receive SNR (the mean of per-trial dB values), mean throughput, and
/// outage fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub sweep_value: f64,
    pub solver: String,
    /// Mean of `10 log10(power/noise)` over trials with nonzero power;
    /// NaN when every counted trial received nothing.
    pub mean_snr_db: f64,
    pub mean_throughput: f64,
    pub outage: f64,
    pub trials_used: usize,
    pub trials_skipped: usize,
}

/// Formats a float with 17 significant digits, enough to round-trip f64.
fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders aggregated rows as CSV (UTF-8, LF line endings, `.` decimal
/// separator, 17 significant digits).
pub fn to_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "sweep_value,solver,mean_snr_db,mean_throughput,outage,trials_used,trials_skipped\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt17(r.sweep_value),
            r.solver,
            fmt17(r.mean_snr_db),
            fmt17(r.mean_throughput),
            fmt17(r.outage),
            r.trials_used,
            r.trials_skipped,
        ));
    }
    out
}

/// Per-trial, per-solver outcome.
#[derive(Debug, Clone)]
enum TrialOutcome {
    Sample { power: f64, throughput: f64 },
    Skipped,
}

/// Everything fixed at one sweep point.
struct SweepInstance {
    sweep_value: f64,
    sweep_index: u64,
    label_suffix: String,
    ula: UlaGeometry,
    ura: UraGeometry,
    num_irs: usize,
    /// Per-IRS (BS-IRS, IRS-user) ranges, used in geometric mode.
    irs_distances: Vec<(f64, f64)>,
    user_distance: f64,
    blockage_prob: f64,
}

fn instances_for(cfg: &ExperimentConfig) -> Result<Vec<SweepInstance>> {
    let ula = UlaGeometry {
        num_elements: cfg.num_bs_antennas,
        element_spacing: cfg.element_spacing,
    };
    let mut out = Vec::new();
    for (idx, &value) in cfg.sweep_values.iter().enumerate() {
        let (user_distance, rows) = match cfg.scenario {
            Scenario::SingleIrsSweepDistance | Scenario::MultiIrsSweepDistance => {
                (value, cfg.ura_rows)
            }
            Scenario::SingleIrsSweepM | Scenario::MultiIrsSweepM => {
                (cfg.bs_user_horizontal_m, value as usize)
            }
            Scenario::BlockageSweep => (cfg.bs_user_horizontal_m, cfg.ura_rows),
        };
        let ura = UraGeometry {
            rows,
            cols: cfg.ura_cols,
            element_spacing: cfg.element_spacing,
        };
        // Blockage sweeps report every IRS count from 1 to K; the other
        // scenarios use the configured K as is.
        let counts: Vec<usize> = if cfg.scenario == Scenario::BlockageSweep {
            (1..=cfg.num_irs).collect()
        } else {
            vec![cfg.num_irs]
        };
        for k in counts {
            let irs_distances = if k == 1 {
                let g = SingleIrsGeometry {
                    bs_irs_horizontal_m: cfg.bs_irs_horizontal_m,
                    vertical_offset_m: cfg.vertical_offset_m,
                    bs_user_horizontal_m: user_distance,
                };
                g.validate()?;
                vec![g.link_distances()]
            } else {
                let g = MultiIrsGeometry {
                    num_irs: k,
                    bs_first_irs_horizontal_m: cfg.bs_irs_horizontal_m,
                    irs_span_m: cfg.irs_span_m,
                    vertical_offset_m: cfg.vertical_offset_m,
                    bs_user_horizontal_m: user_distance,
                };
                g.validate()?;
                g.link_distances()
            };
            let display = match cfg.scenario {
                Scenario::SingleIrsSweepM | Scenario::MultiIrsSweepM => {
                    (rows * cfg.ura_cols) as f64
                }
                _ => value,
            };
            out.push(SweepInstance {
                sweep_value: display,
                sweep_index: idx as u64,
                label_suffix: if cfg.scenario == Scenario::BlockageSweep {
                    format!(":k={k}")
                } else {
                    String::new()
                },
                ula,
                ura,
                num_irs: k,
                irs_distances,
                user_distance,
                blockage_prob: if cfg.scenario == Scenario::BlockageSweep {
                    value
                } else {
                    cfg.blockage_prob
                },
            });
        }
    }
    Ok(out)
}

/// Draws the full channel set plus rank-one links for one trial.
fn sample_channels(
    cfg: &ExperimentConfig,
    inst: &SweepInstance,
    rng: &mut RandomStream,
) -> Result<ChannelSet> {
    match cfg.channel_model {
        ChannelModel::Geometric => {
            let h_d = channel::gen_bs_user_channel(
                &inst.ula,
                &cfg.channel_stats,
                inst.user_distance,
                rng,
            )?;
            let mut bs_irs = Vec::with_capacity(inst.num_irs);
            let mut irs_user = Vec::with_capacity(inst.num_irs);
            let mut links = Vec::with_capacity(inst.num_irs);
            for &(d2, d3) in &inst.irs_distances {
                let (g, link) =
                    channel::gen_bs_irs_channel(&inst.ula, &inst.ura, &cfg.channel_stats, d2, rng)?;
                let h_r = channel::gen_irs_user_channel(
                    &inst.ura,
                    &cfg.channel_stats,
                    d3.max(MIN_PATHLOSS_DISTANCE_M),
                    rng,
                )?;
                bs_irs.push(g);
                irs_user.push(h_r);
                links.push(link);
            }
            ChannelSet::new(h_d, bs_irs, irs_user, Some(links))
        }
        ChannelModel::Statistical => {
            let n = inst.ula.num_elements;
            let m = inst.ura.num_elements();
            let h_d = channel::iid_cn_vector(n, cfg.stat_sigma_d.powi(2), rng);
            let mut bs_irs = Vec::with_capacity(inst.num_irs);
            let mut irs_user = Vec::with_capacity(inst.num_irs);
            let mut links = Vec::with_capacity(inst.num_irs);
            for k in 0..inst.num_irs {
                let az = rng.random_range(AZIMUTH_SECTOR.0..AZIMUTH_SECTOR.1);
                let el = rng.random_range(ELEVATION_SECTOR.0..ELEVATION_SECTOR.1);
                let a = channel::ura_response(az, el, &inst.ura);
                let phi = rng.random_range(AZIMUTH_SECTOR.0..AZIMUTH_SECTOR.1);
                let b = channel::ula_response(phi, &inst.ula).conjugate();
                let phase = rng.random_range(0.0..TAU);
                let gain =
                    Complex64::from_polar(((n * m) as f64).sqrt() * cfg.stat_rho_abs[k], phase);
                let link = RankOneLink::new(gain, a, b)?;
                let h_r = channel::iid_cn_vector(m, cfg.stat_sigma_r[k].powi(2), rng);
                bs_irs.push(link.reconstruct());
                irs_user.push(h_r);
                links.push(link);
            }
            ChannelSet::new(h_d, bs_irs, irs_user, Some(links))
        }
    }
}

/// Removes blocked links: a blocked direct link zeroes `h_d`, a blocked
/// IRS-user link removes that IRS entirely. BS-IRS links are never blocked.
fn apply_blockage(full: &ChannelSet, blocked_direct: bool, blocked_irs: &[bool]) -> ChannelSet {
    let bs_user = if blocked_direct {
        DVector::zeros(full.bs_user.len())
    } else {
        full.bs_user.clone()
    };
    let keep: Vec<usize> = (0..full.num_irs()).filter(|&k| !blocked_irs[k]).collect();
    ChannelSet {
        bs_user,
        bs_irs: keep.iter().map(|&k| full.bs_irs[k].clone()).collect(),
        irs_user: keep.iter().map(|&k| full.irs_user[k].clone()).collect(),
        rank_one: full
            .rank_one
            .as_ref()
            .map(|links| keep.iter().map(|&k| links[k].clone()).collect()),
    }
}

/// Runs one solver on the surviving channels and evaluates the design
/// against them. Degenerate-channel failures become skipped trials;
/// all-links-blocked trials count as zero received power.
fn evaluate_solver(
    choice: &SolverChoice,
    ch: &ChannelSet,
    p: f64,
    noise: f64,
    num_randomizations: usize,
    rng: &mut RandomStream,
) -> Result<TrialOutcome> {
    let k = ch.num_irs();
    let direct_blocked = ch.bs_user.norm_squared() == 0.0;

    let power: Result<f64> = if choice.selection == SolverSelection::SdrBound {
        if direct_blocked && k == 0 {
            Ok(0.0)
        } else if k == 0 {
            // Without IRSs the MRT value is the exact optimum.
            Ok(p * ch.bs_user.norm_squared())
        } else {
            ch.rank_one_links()
                .and_then(|links| precoding::sdr_upper_bound(ch, links, p))
        }
    } else {
        let solution: Result<Option<BeamformingSolution>> = (|| {
            if direct_blocked && k == 0 {
                return Ok(None);
            }
            if choice.selection == SolverSelection::NoIrs {
                if direct_blocked {
                    return Ok(None);
                }
                return Ok(Some(precoding::mrt_no_irs(&ch.bs_user, p)?));
            }
            if k == 0 {
                // All IRSs blocked: fall back to direct-link MRT.
                return Ok(Some(precoding::mrt_no_irs(&ch.bs_user, p)?));
            }
            let links = ch.rank_one_links()?;
            let sol = match choice.selection {
                SolverSelection::SingleClosedForm => {
                    precoding::solve_single_irs(ch, &links[0], p)?
                }
                SolverSelection::Analytical => {
                    precoding::solve_multi_irs_analytical(ch, links, p)?
                }
                SolverSelection::Sdr => {
                    precoding::solve_multi_irs_sdr(ch, links, p, num_randomizations, rng)?
                }
                _ => unreachable!("bound and no-irs handled above"),
            };
            match choice.bits {
                Some(bits) => Ok(Some(precoding::quantize_solution(ch, links, &sol, bits)?)),
                None => Ok(Some(sol)),
            }
        })();
        solution.and_then(|opt| match opt {
            None => Ok(0.0),
            // The no-IRS baseline models a deployment without any surface,
            // so it is scored on the direct link alone.
            Some(sol) if choice.selection == SolverSelection::NoIrs => Ok(sol.received_power),
            Some(sol) => precoding::received_power(&sol.precoder, &sol.phase_config, ch),
        })
    };

    match power {
        Ok(power) => Ok(TrialOutcome::Sample {
            power,
            throughput: analysis::throughput(power, noise)?,
        }),
        Err(Error::DegenerateChannel(_)) => Ok(TrialOutcome::Skipped),
        Err(e) => Err(e),
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    inst: &SweepInstance,
    trial: u64,
) -> Result<Vec<TrialOutcome>> {
    let mut ch_rng = derive_stream(cfg.seed, &[SALT_CHANNEL, inst.sweep_index, trial]);
    let full = sample_channels(cfg, inst, &mut ch_rng)?;

    let (blocked_direct, blocked_irs) = if inst.blockage_prob > 0.0 {
        let mut b_rng = derive_stream(cfg.seed, &[SALT_BLOCKAGE, inst.sweep_index, trial]);
        let direct = b_rng.random::<f64>() < inst.blockage_prob;
        let irs = (0..inst.num_irs)
            .map(|_| b_rng.random::<f64>() < inst.blockage_prob)
            .collect();
        (direct, irs)
    } else {
        (false, vec![false; inst.num_irs])
    };
    let surviving = apply_blockage(&full, blocked_direct, &blocked_irs);

    let p = cfg.transmit_power_watts();
    let noise = cfg.noise_power_watts();
    cfg.solvers
        .iter()
        .map(|choice| {
            let mut solver_rng = derive_stream(cfg.seed, &[SALT_SOLVER, inst.sweep_index, trial]);
            evaluate_solver(
                choice,
                &surviving,
                p,
                noise,
                cfg.sdr_randomizations,
                &mut solver_rng,
            )
        })
        .collect()
}

fn aggregate_rows(
    inst: &SweepInstance,
    cfg: &ExperimentConfig,
    outcomes: &[Vec<TrialOutcome>],
) -> Result<Vec<AggregateRow>> {
    let noise = cfg.noise_power_watts();
    let tau = cfg.outage_threshold;
    let mut rows = Vec::with_capacity(cfg.solvers.len());
    for (s, choice) in cfg.solvers.iter().enumerate() {
        let mut used = 0usize;
        let mut skipped = 0usize;
        let mut snr_sum = 0.0;
        let mut snr_count = 0usize;
        let mut thr_sum = 0.0;
        let mut outage_count = 0usize;
        for trial in outcomes {
            match &trial[s] {
                TrialOutcome::Skipped => skipped += 1,
                TrialOutcome::Sample { power, throughput } => {
                    used += 1;
                    thr_sum += throughput;
                    if *throughput < tau {
                        outage_count += 1;
                    }
                    if *power > 0.0 {
                        snr_sum += 10.0 * (power / noise).log10();
                        snr_count += 1;
                    }
                }
            }
        }
        if (skipped as f64) > MAX_SKIP_RATE * (used + skipped) as f64 {
            return Err(Error::SolverFailure(format!(
                "solver `{}` skipped {skipped} of {} trials at sweep value {}",
                choice.tag,
                used + skipped,
                inst.sweep_value
            )));
        }
        rows.push(AggregateRow {
            sweep_value: inst.sweep_value,
            solver: format!("{}{}", choice.tag, inst.label_suffix),
            mean_snr_db: if snr_count > 0 {
                snr_sum / snr_count as f64
            } else {
                f64::NAN
            },
            mean_throughput: if used > 0 {
                thr_sum / used as f64
            } else {
                f64::NAN
            },
            outage: if used > 0 {
                outage_count as f64 / used as f64
            } else {
                f64::NAN
            },
            trials_used: used,
            trials_skipped: skipped,
        });
    }
    Ok(rows)
}

/// Runs the configured experiment: one aggregated row per sweep point and
/// solver. Blockage sweeps additionally split rows by IRS count, suffixing
/// the solver tag with `:k=K`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<AggregateRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for inst in instances_for(cfg)? {
        let outcomes: Vec<Vec<TrialOutcome>> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| run_trial(cfg, &inst, t))
            .collect::<Result<_>>()?;
        rows.extend(aggregate_rows(&inst, cfg, &outcomes)?);
    }
    Ok(rows)
}

/// [`run_experiment`] restricted to the blockage scenario.
pub fn run_blockage_experiment(cfg: &ExperimentConfig) -> Result<Vec<AggregateRow>> {
    if cfg.scenario != Scenario::BlockageSweep {
        return Err(Error::config(
            "scenario",
            "run_blockage_experiment requires the blockage_sweep scenario",
        ));
    }
    run_experiment(cfg)
}

/// One row of the scaling-law verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub num_elements: usize,
    /// Phase resolution; `None` is the continuous solution.
    pub bits: Option<u32>,
    pub simulated_mean_power: f64,
    pub closed_form_power: f64,
    pub relative_error: f64,
    pub flagged: bool,
}

/// Monte Carlo means versus the closed-form power laws.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
}

impl fmt::Display for ScalingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8} {:>5} {:>24} {:>24} {:>11} {:>5}",
            "M", "bits", "simulated_mean_power", "closed_form_power", "rel_error", "flag"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>8} {:>5} {:>24.16e} {:>24.16e} {:>11.4e} {:>5}",
                r.num_elements,
                r.bits.map_or("inf".to_string(), |b| b.to_string()),
                r.simulated_mean_power,
                r.closed_form_power,
                r.relative_error,
                if r.flagged { "FLAG" } else { "ok" },
            )?;
        }
        Ok(())
    }
}

/// Closed-form mean received power of the near-optimal solution under the
/// statistical model at unit transmit power. Evaluated here independently
/// of the `analysis` module so the verification report cannot trivially
/// agree with itself; a test pins the two implementations together.
pub fn reference_mean_power(
    num_antennas: usize,
    num_elements: usize,
    sigma_r: &[f64],
    sigma_d: f64,
    rho_abs: &[f64],
    bits: Option<u32>,
) -> f64 {
    use std::f64::consts::PI;
    let n = num_antennas as f64;
    let m = num_elements as f64;
    let mut total = n * sigma_d * sigma_d;
    match bits {
        None => {
            for (sr, rho) in sigma_r.iter().zip(rho_abs) {
                let per_element = sr * sr * rho * rho;
                total += 0.25 * PI * n * m * m * per_element;
                total += 0.5 * n * m * (2.0 - 0.5 * PI) * per_element;
                total += 0.5 * PI * m * n.sqrt() * rho * sr * sigma_d;
            }
        }
        Some(b) => {
            let levels = (2f64).powi(b as i32);
            let shrink = (PI / levels).sin() * levels / PI;
            for (sr, rho) in sigma_r.iter().zip(rho_abs) {
                let per_element = sr * sr * rho * rho;
                total += n * m * per_element;
                total += 0.25 * PI * n * m * (m - 1.0) * per_element * shrink * shrink;
                total += 0.5 * PI * m * n.sqrt() * rho * sr * sigma_d * shrink;
            }
        }
    }
    total
}

/// Verifies the power scaling laws: runs the statistical-model experiment
/// across the configured panel sizes, for the continuous solution and for
/// 1-3 bit phase shifters, and compares each Monte Carlo mean power to its
/// closed-form prediction. Rows off by more than 5% are flagged.
pub fn verify_scaling(cfg: &ExperimentConfig) -> Result<ScalingReport> {
    cfg.validate()?;
    if cfg.channel_model != ChannelModel::Statistical {
        return Err(Error::config(
            "channel_model",
            "verify_scaling requires the statistical channel model",
        ));
    }
    if !cfg.scenario.sweeps_elements() {
        return Err(Error::config(
            "scenario",
            "verify_scaling requires an element-count sweep scenario",
        ));
    }
    let p = cfg.transmit_power_watts();
    let variants: [Option<u32>; 4] = [None, Some(1), Some(2), Some(3)];
    let mut rows = Vec::new();
    for inst in instances_for(cfg)? {
        let powers: Vec<[f64; 4]> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| -> Result<[f64; 4]> {
                let mut rng = derive_stream(cfg.seed, &[SALT_CHANNEL, inst.sweep_index, t]);
                let ch = sample_channels(cfg, &inst, &mut rng)?;
                let links = ch.rank_one_links()?.to_vec();
                let sol = precoding::solve_multi_irs_analytical(&ch, &links, p)?;
                let mut out = [sol.received_power; 4];
                for (i, bits) in variants.iter().enumerate().skip(1) {
                    let b = bits.expect("discrete variant");
                    out[i] = precoding::quantize_solution(&ch, &links, &sol, b)?.received_power;
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let m = inst.ura.num_elements();
        for (i, bits) in variants.iter().enumerate() {
            let sim = powers.iter().map(|s| s[i]).sum::<f64>() / cfg.trials as f64;
            let closed = p
                * reference_mean_power(
                    cfg.num_bs_antennas,
                    m,
                    &cfg.stat_sigma_r,
                    cfg.stat_sigma_d,
                    &cfg.stat_rho_abs,
                    *bits,
                );
            let rel = (sim - closed).abs() / closed;
            rows.push(ScalingRow {
                num_elements: m,
                bits: *bits,
                simulated_mean_power: sim,
                closed_form_power: closed,
                relative_error: rel,
                flagged: rel > 0.05,
            });
        }
    }
    Ok(ScalingReport { rows })
}
