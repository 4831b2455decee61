//! Joint active/passive beamforming solvers.
//!
//! All solvers maximize the received signal power
//! `|(sum_k h_rk^H Theta_k G_k + h_d^H) w|^2` over the transmit precoder
//! `w` (power budget `||w||^2 <= p`) and the per-element IRS phase shifts.
//! They consume the rank-one decompositions `G_k ~= lambda_k a_k b_k^T` of
//! the BS-IRS channels — the LOS-dominated structure that makes the problem
//! tractable — and report the power achieved on those rank-one channels.
//! Evaluating a solution against the full channels (NLOS paths included) is
//! the harness's job, via [`received_power`].
//!
//! Solver menu:
//!
//! - [`solve_single_irs`]: closed-form optimum for `K = 1`. Aligning each
//!   reflection phase with `g = lambda (h_r* o a)` collapses the IRS into a
//!   real gain `z = ||g||_1`, and the residual scalar phase rotates the
//!   cascade onto the direct link.
//! - [`solve_multi_irs_analytical`]: per-IRS alignment plus a phase vector
//!   chosen against the direct link; near-optimal because distinct BS
//!   steering vectors are near-orthogonal for large arrays.
//! - [`solve_multi_irs_sdr`] / [`sdr_upper_bound`]: semidefinite relaxation
//!   of the per-IRS phase problem with Gaussian randomization; the relaxed
//!   objective (plus its certified duality gap) upper-bounds every feasible
//!   design under the same rank-one links.
//! - [`mrt_no_irs`]: maximum ratio transmission on the direct link only.
//! - [`brute_force_phases`] / [`brute_force_alpha`]: grid-search oracles
//!   with an optional coordinate-descent polish, used to verify optimality.
//! - [`quantize_phases`]: rounds phases to a `b`-bit uniform grid.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::TAU;

use crate::channel::{ChannelSet, RankOneLink};
use crate::error::{Error, Result};
use crate::sdp::{self, UnitDiagSdp};
use crate::RandomStream;

/// Budget slack tolerated by [`BeamformingSolution::validate`].
const BUDGET_TOL: f64 = 1e-9;

/// Combinatorial guards for the brute-force oracles.
const MAX_ORACLE_ELEMENTS: usize = 8;
const MAX_ORACLE_ALPHAS: usize = 4;
const MAX_ORACLE_CANDIDATES_LOG2: u32 = 24;

/// Polish parameters: cyclic coordinate descent with golden-section line
/// search.
const POLISH_PHASE_TOL: f64 = 1e-10;
const POLISH_MAX_SWEEPS: usize = 100;

/// Identifies which solver produced a [`BeamformingSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    SingleIrsClosedForm,
    MultiIrsAnalytical,
    MultiIrsSdr,
    MrtNoIrs,
    BruteForce,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SolverKind::SingleIrsClosedForm => "single-irs-closed-form",
            SolverKind::MultiIrsAnalytical => "multi-irs-analytical",
            SolverKind::MultiIrsSdr => "multi-irs-sdr",
            SolverKind::MrtNoIrs => "mrt-no-irs",
            SolverKind::BruteForce => "brute-force",
        };
        f.write_str(name)
    }
}

/// Per-IRS phase shifts in radians, each in `[0, 2pi)`. When
/// `resolution_bits` is set, every phase lies on the `2^b`-point uniform
/// grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShiftConfig {
    phases: Vec<Vec<f64>>,
    resolution_bits: Option<u32>,
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let mut t = theta % TAU;
    if t < 0.0 {
        t += TAU;
    }
    if t >= TAU {
        t = 0.0;
    }
    t
}

impl PhaseShiftConfig {
    pub fn new(phases: Vec<Vec<f64>>, resolution_bits: Option<u32>) -> Result<Self> {
        let cfg = PhaseShiftConfig {
            phases,
            resolution_bits,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration for a system without IRSs.
    pub fn empty() -> Self {
        PhaseShiftConfig {
            phases: Vec::new(),
            resolution_bits: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.resolution_bits {
            if b == 0 {
                return Err(Error::invalid("phase resolution must be at least 1 bit"));
            }
        }
        for (k, irs) in self.phases.iter().enumerate() {
            for (m, &theta) in irs.iter().enumerate() {
                if !(0.0..TAU).contains(&theta) {
                    return Err(Error::invalid(format!(
                        "phase ({k},{m}) = {theta} outside [0, 2pi)"
                    )));
                }
                if let Some(b) = self.resolution_bits {
                    let levels = (1u64 << b) as f64;
                    let idx = (theta * levels / TAU).round();
                    if (theta - TAU * idx / levels).abs() > 1e-12 {
                        return Err(Error::invalid(format!(
                            "phase ({k},{m}) = {theta} is off the {b}-bit grid"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_irs(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[Vec<f64>] {
        &self.phases
    }

    pub fn resolution_bits(&self) -> Option<u32> {
        self.resolution_bits
    }

    /// Unit-modulus reflection coefficients `e^{j theta}` of one IRS.
    pub fn reflection_coefficients(&self, k: usize) -> Vec<Complex64> {
        self.phases[k]
            .iter()
            .map(|&t| Complex64::from_polar(1.0, t))
            .collect()
    }
}

/// A precoder/phase design and the received power it attains on the
/// channels it was solved for.
#[derive(Debug, Clone)]
pub struct BeamformingSolution {
    pub precoder: DVector<Complex64>,
    pub phase_config: PhaseShiftConfig,
    /// Received signal power (linear) on the solver's channel model.
    pub received_power: f64,
    pub solver: SolverKind,
}

impl BeamformingSolution {
    /// Checks the power budget and that `received_power` matches a
    /// recomputation against the given channels.
    pub fn validate(&self, ch: &ChannelSet, budget: f64) -> Result<()> {
        let used = self.precoder.norm_squared();
        if used > budget + BUDGET_TOL {
            return Err(Error::invalid(format!(
                "precoder power {used} exceeds budget {budget}"
            )));
        }
        let recomputed = received_power(&self.precoder, &self.phase_config, ch)?;
        let scale = recomputed.max(self.received_power).max(f64::MIN_POSITIVE);
        if (recomputed - self.received_power).abs() > 1e-9 * scale {
            return Err(Error::invalid(format!(
                "stored received power {} does not match recomputation {}",
                self.received_power, recomputed
            )));
        }
        Ok(())
    }
}

/// Effective channel column `r` such that the received signal is `r^H w`:
/// `r = h_d + sum_k G_k^H Theta_k^H h_rk`.
fn effective_channel(phases: &PhaseShiftConfig, ch: &ChannelSet) -> Result<DVector<Complex64>> {
    if phases.num_irs() != ch.num_irs() {
        return Err(Error::invalid(format!(
            "phase config covers {} IRSs, channel set has {}",
            phases.num_irs(),
            ch.num_irs()
        )));
    }
    let mut r = ch.bs_user.clone();
    for (k, (g, hr)) in ch.bs_irs.iter().zip(&ch.irs_user).enumerate() {
        let theta = &phases.phases()[k];
        if theta.len() != hr.len() {
            return Err(Error::invalid(format!(
                "IRS {k} has {} phases for {} elements",
                theta.len(),
                hr.len()
            )));
        }
        // Theta^H h_r, entry m = e^{-j theta_m} h_r[m].
        let reflected = DVector::from_iterator(
            hr.len(),
            hr.iter()
                .zip(theta)
                .map(|(h, &t)| Complex64::from_polar(1.0, -t) * h),
        );
        r += g.adjoint() * reflected;
    }
    Ok(r)
}

/// Received signal power `|(sum_k h_rk^H Theta_k G_k + h_d^H) w|^2`.
pub fn received_power(
    w: &DVector<Complex64>,
    phases: &PhaseShiftConfig,
    ch: &ChannelSet,
) -> Result<f64> {
    if w.len() != ch.num_bs_antennas() {
        return Err(Error::invalid(format!(
            "precoder has {} entries, channel expects {}",
            w.len(),
            ch.num_bs_antennas()
        )));
    }
    let r = effective_channel(phases, ch)?;
    Ok(r.dotc(w).norm_sqr())
}

/// `g = lambda (h_r* o a)`, the vector whose phase alignment maximizes the
/// IRS cascade gain.
fn cascade_vector(link: &RankOneLink, h_r: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    if h_r.len() != link.num_irs_elements() {
        return Err(Error::invalid(
            "IRS-user channel length does not match the rank-one link",
        ));
    }
    Ok(DVector::from_iterator(
        h_r.len(),
        h_r.iter()
            .zip(link.irs_steering.iter())
            .map(|(h, a)| link.gain * h.conj() * a),
    ))
}

/// Per-IRS alignment: phases `theta_bar = -arg(g)` and the cascade gain
/// `z = ||g||_1` they attain.
struct AlignedIrs {
    theta_bar: Vec<f64>,
    z: f64,
}

fn align_irs(link: &RankOneLink, h_r: &DVector<Complex64>) -> Result<AlignedIrs> {
    let g = cascade_vector(link, h_r)?;
    let theta_bar = g.iter().map(|gm| wrap_phase(-gm.arg())).collect();
    Ok(AlignedIrs {
        theta_bar,
        z: g.iter().map(|gm| gm.norm()).sum(),
    })
}

/// Effective channel on the rank-one links for a full phase configuration:
/// `r = h_d + sum_k conj(c_k) b_k*` with `c_k = sum_m g_km e^{j theta_km}`.
fn effective_channel_rank_one(
    links: &[RankOneLink],
    irs_user: &[DVector<Complex64>],
    h_d: &DVector<Complex64>,
    phases: &PhaseShiftConfig,
) -> Result<DVector<Complex64>> {
    let mut r = h_d.clone();
    for (k, (link, h_r)) in links.iter().zip(irs_user).enumerate() {
        let g = cascade_vector(link, h_r)?;
        let theta = &phases.phases()[k];
        if theta.len() != g.len() {
            return Err(Error::invalid("phase vector length mismatch"));
        }
        let c: Complex64 = g
            .iter()
            .zip(theta)
            .map(|(gm, &t)| gm * Complex64::from_polar(1.0, t))
            .sum();
        r.axpy(c.conj(), &link.bs_steering.conjugate(), Complex64::ONE);
    }
    Ok(r)
}

fn validate_links(ch: &ChannelSet, links: &[RankOneLink]) -> Result<()> {
    if links.len() != ch.num_irs() {
        return Err(Error::invalid(format!(
            "{} rank-one links for {} IRSs",
            links.len(),
            ch.num_irs()
        )));
    }
    for (k, (link, hr)) in links.iter().zip(&ch.irs_user).enumerate() {
        if link.num_irs_elements() != hr.len() || link.num_bs_antennas() != ch.num_bs_antennas() {
            return Err(Error::invalid(format!("rank-one link {k} dimension mismatch")));
        }
    }
    Ok(())
}

fn check_power_budget(p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::invalid(format!("transmit power must be positive, got {p}")));
    }
    Ok(())
}

/// MRT completion: `w = sqrt(p) r / ||r||` and the attained power
/// `|r^H w|^2`. Errors if the effective channel is zero.
fn mrt_completion(
    r: &DVector<Complex64>,
    p: f64,
    phases: PhaseShiftConfig,
    solver: SolverKind,
) -> Result<BeamformingSolution> {
    let norm = r.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateChannel(
            "combined effective channel is zero; any precoder receives nothing".into(),
        ));
    }
    let w = r.map(|x| x * Complex64::from(p.sqrt() / norm));
    let received_power = r.dotc(&w).norm_sqr();
    Ok(BeamformingSolution {
        precoder: w,
        phase_config: phases,
        received_power,
        solver,
    })
}

/// Maximum ratio transmission on the direct link, for a system without
/// IRSs: `w = sqrt(p) h_d / ||h_d||`, power `p ||h_d||^2`.
pub fn mrt_no_irs(h_d: &DVector<Complex64>, p: f64) -> Result<BeamformingSolution> {
    check_power_budget(p)?;
    if h_d.len() == 0 {
        return Err(Error::invalid("direct channel must be nonempty"));
    }
    mrt_completion(h_d, p, PhaseShiftConfig::empty(), SolverKind::MrtNoIrs)
}

/// Closed-form optimal solution for a single IRS with a rank-one BS-IRS
/// channel.
///
/// Element phases: `theta_bar_m = -arg(g_m)` with `g = lambda (h_r* o a)`;
/// common rotation: `alpha = -arg(b^T h_d)`; precoder: MRT toward the
/// resulting effective channel. On the rank-one channel the attained power
/// is `p (z^2 + 2 z |b^T h_d| + ||h_d||^2)` with `z = ||g||_1`.
pub fn solve_single_irs(
    ch: &ChannelSet,
    link: &RankOneLink,
    p: f64,
) -> Result<BeamformingSolution> {
    check_power_budget(p)?;
    if ch.num_irs() != 1 {
        return Err(Error::invalid(format!(
            "single-IRS solver called with {} IRSs",
            ch.num_irs()
        )));
    }
    validate_links(ch, std::slice::from_ref(link))?;
    let aligned = align_irs(link, &ch.irs_user[0])?;
    let alpha = wrap_phase(-link.bs_steering.dot(&ch.bs_user).arg());
    let phases = PhaseShiftConfig::new(
        vec![aligned
            .theta_bar
            .iter()
            .map(|&t| wrap_phase(t + alpha))
            .collect()],
        None,
    )?;
    let r = effective_channel_rank_one(
        std::slice::from_ref(link),
        &ch.irs_user,
        &ch.bs_user,
        &phases,
    )?;
    mrt_completion(&r, p, phases, SolverKind::SingleIrsClosedForm)
}

/// Near-optimal analytical solution for multiple IRSs.
///
/// Each IRS is phase-aligned independently (`theta_bar_k = -arg(g_k)`,
/// cascade gain `z_k = ||g_k||_1`); the per-IRS rotations come from
/// `u = Phi h_d` with `Phi = diag(z) B`, as `alpha_k = -arg(u_k)`; the
/// precoder is the MRT completion. Exact for `K = 1`; for `K > 1` the
/// neglected cross terms vanish as the BS steering vectors become
/// orthogonal.
pub fn solve_multi_irs_analytical(
    ch: &ChannelSet,
    links: &[RankOneLink],
    p: f64,
) -> Result<BeamformingSolution> {
    check_power_budget(p)?;
    if ch.num_irs() == 0 {
        return Err(Error::invalid("need at least one IRS"));
    }
    validate_links(ch, links)?;
    let mut phases = Vec::with_capacity(links.len());
    for (k, link) in links.iter().enumerate() {
        let aligned = align_irs(link, &ch.irs_user[k])?;
        let u_k = Complex64::from(aligned.z) * link.bs_steering.dot(&ch.bs_user);
        let alpha = wrap_phase(-u_k.arg());
        phases.push(
            aligned
                .theta_bar
                .iter()
                .map(|&t| wrap_phase(t + alpha))
                .collect::<Vec<_>>(),
        );
    }
    let phases = PhaseShiftConfig::new(phases, None)?;
    let r = effective_channel_rank_one(links, &ch.irs_user, &ch.bs_user, &phases)?;
    mrt_completion(&r, p, phases, SolverKind::MultiIrsAnalytical)
}

/// The homogenized SDR objective
/// `R = [[Phi Phi^H, Phi h_d], [h_d^H Phi^H, 0]]` over unit-modulus
/// `(v, t)`, scaled to unit magnitude for the solver. Returns the problem,
/// the scale, and the per-IRS alignment.
fn build_sdr_problem(
    ch: &ChannelSet,
    links: &[RankOneLink],
) -> Result<(UnitDiagSdp, f64, Vec<AlignedIrs>)> {
    let k = links.len();
    let mut aligned = Vec::with_capacity(k);
    for (link, h_r) in links.iter().zip(&ch.irs_user) {
        aligned.push(align_irs(link, h_r)?);
    }
    let mut r = nalgebra::DMatrix::<Complex64>::zeros(k + 1, k + 1);
    for i in 0..k {
        let bi = &links[i].bs_steering;
        for j in 0..k {
            // (Phi Phi^H)_{ij} = z_i z_j sum_n b_i[n] conj(b_j[n]).
            let ip = links[j].bs_steering.dotc(bi);
            r[(i, j)] = Complex64::from(aligned[i].z * aligned[j].z) * ip;
        }
        r[(i, k)] = Complex64::from(aligned[i].z) * bi.dot(&ch.bs_user);
        r[(k, i)] = r[(i, k)].conj();
    }
    let scale = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale > 0.0 {
        r /= Complex64::from(scale);
    }
    Ok((UnitDiagSdp::new(r)?, scale.max(f64::MIN_POSITIVE), aligned))
}

/// Certified upper bound on the received power of any feasible design under
/// the given rank-one links: `p ((sdp optimum + gap) + ||h_d||^2)`.
pub fn sdr_upper_bound(ch: &ChannelSet, links: &[RankOneLink], p: f64) -> Result<f64> {
    check_power_budget(p)?;
    if ch.num_irs() == 0 {
        return Err(Error::invalid("need at least one IRS"));
    }
    validate_links(ch, links)?;
    let (prob, scale, _) = build_sdr_problem(ch, links)?;
    let sol = sdp::solve_unit_diag_sdp(&prob, sdp::DEFAULT_TOL)?;
    Ok(p * ((sol.objective_value + sol.duality_gap) * scale + ch.bs_user.norm_squared()))
}

/// SDR baseline: solves the relaxed SDP, extracts a unit-modulus phase
/// vector by Gaussian randomization (best of `num_randomizations` samples),
/// de-homogenizes it and completes with MRT.
pub fn solve_multi_irs_sdr(
    ch: &ChannelSet,
    links: &[RankOneLink],
    p: f64,
    num_randomizations: usize,
    rng: &mut RandomStream,
) -> Result<BeamformingSolution> {
    check_power_budget(p)?;
    if ch.num_irs() == 0 {
        return Err(Error::invalid("need at least one IRS"));
    }
    validate_links(ch, links)?;
    let (prob, _, aligned) = build_sdr_problem(ch, links)?;
    let sol = sdp::solve_unit_diag_sdp(&prob, sdp::DEFAULT_TOL)?;
    let vbar = sdp::extract_rank_one(&sol, &prob, num_randomizations, rng)?;
    let k = links.len();
    // De-homogenize: v = vbar[0..K] / vbar[K]; alpha_k = -arg(v_k).
    let t = vbar[k];
    let mut phases = Vec::with_capacity(k);
    for (i, a) in aligned.iter().enumerate() {
        let v_i = vbar[i] * t.conj();
        let alpha = wrap_phase(-v_i.arg());
        phases.push(
            a.theta_bar
                .iter()
                .map(|&tb| wrap_phase(tb + alpha))
                .collect::<Vec<_>>(),
        );
    }
    let phases = PhaseShiftConfig::new(phases, None)?;
    let r = effective_channel_rank_one(links, &ch.irs_user, &ch.bs_user, &phases)?;
    mrt_completion(&r, p, phases, SolverKind::MultiIrsSdr)
}

/// Rounds every phase to the nearest point of the `b`-bit uniform grid
/// `{2 pi i / 2^b}` (circular distance; exact midpoints round down).
pub fn quantize_phases(cfg: &PhaseShiftConfig, bits: u32) -> Result<PhaseShiftConfig> {
    if bits == 0 {
        return Err(Error::invalid("phase resolution must be at least 1 bit"));
    }
    let levels = 1u64 << bits;
    let quantized = cfg
        .phases()
        .iter()
        .map(|irs| {
            irs.iter()
                .map(|&theta| {
                    let x = theta * levels as f64 / TAU;
                    let idx = (x - 0.5).ceil() as u64 % levels;
                    TAU * idx as f64 / levels as f64
                })
                .collect()
        })
        .collect();
    PhaseShiftConfig::new(quantized, Some(bits))
}

/// Quantizes a solution's phases to `bits` resolution and re-runs the MRT
/// completion on the rank-one links, so the reported power is
/// `p ||h_eff(quantized phases)||^2`. The budget and solver tag carry over.
pub fn quantize_solution(
    ch: &ChannelSet,
    links: &[RankOneLink],
    sol: &BeamformingSolution,
    bits: u32,
) -> Result<BeamformingSolution> {
    validate_links(ch, links)?;
    let phases = quantize_phases(&sol.phase_config, bits)?;
    let budget = sol.precoder.norm_squared();
    let r = effective_channel_rank_one(links, &ch.irs_user, &ch.bs_user, &phases)?;
    mrt_completion(&r, budget, phases, sol.solver)
}

/// A maximization of `||base + sum_e e^{-j theta_e} term_e||^2` over the
/// phases `theta`, shared by the brute-force oracles.
struct PhaseObjective {
    base: DVector<Complex64>,
    terms: Vec<DVector<Complex64>>,
}

impl PhaseObjective {
    fn evaluate(&self, thetas: &[f64]) -> f64 {
        let mut r = self.base.clone();
        for (term, &t) in self.terms.iter().zip(thetas) {
            r.axpy(Complex64::from_polar(1.0, -t), term, Complex64::ONE);
        }
        r.norm_squared()
    }

    /// Exhaustive search over the product grid with `2^grid_bits` points per
    /// phase. The maximum is exact with a lowest-index tie-break, so the
    /// parallel reduction is order-independent.
    fn grid_search(&self, grid_bits: u32) -> Result<Vec<f64>> {
        let dims = self.terms.len() as u32;
        if grid_bits == 0 {
            return Err(Error::invalid("grid must have at least one bit"));
        }
        let total_bits = grid_bits * dims;
        if total_bits > MAX_ORACLE_CANDIDATES_LOG2 {
            return Err(Error::TooLarge(format!(
                "grid of 2^{total_bits} candidates exceeds the 2^{MAX_ORACLE_CANDIDATES_LOG2} cap"
            )));
        }
        let candidates: u64 = 1 << total_bits;
        let mask: u64 = (1 << grid_bits) - 1;
        let step = TAU / (1u64 << grid_bits) as f64;
        let decode = |c: u64| -> Vec<f64> {
            (0..dims)
                .map(|e| ((c >> (e * grid_bits)) & mask) as f64 * step)
                .collect()
        };
        let (_, best_idx) = (0..candidates)
            .into_par_iter()
            .map(|c| (self.evaluate(&decode(c)), c))
            .reduce(
                || (f64::NEG_INFINITY, u64::MAX),
                |a, b| {
                    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                        b
                    } else {
                        a
                    }
                },
            );
        Ok(decode(best_idx))
    }

    /// Cyclic coordinate ascent. Each coordinate is bracketed by a coarse
    /// circular scan and refined by golden-section search to
    /// [`POLISH_PHASE_TOL`].
    fn polish(&self, thetas: &mut [f64]) {
        const SCAN: usize = 16;
        let golden: f64 = (5f64.sqrt() - 1.0) / 2.0;
        let mut current = self.evaluate(thetas);
        for _ in 0..POLISH_MAX_SWEEPS {
            let before = current;
            for e in 0..thetas.len() {
                let eval1 = |t: f64| {
                    let saved = thetas[e];
                    // Safe: single-threaded mutation, restored immediately.
                    let mut probe = thetas.to_vec();
                    probe[e] = wrap_phase(t);
                    let _ = saved;
                    self.evaluate(&probe)
                };
                // Coarse scan to bracket the per-coordinate maximum.
                let mut best_i = 0;
                let mut best_v = f64::NEG_INFINITY;
                for i in 0..SCAN {
                    let v = eval1(i as f64 * TAU / SCAN as f64);
                    if v > best_v {
                        best_v = v;
                        best_i = i;
                    }
                }
                let center = best_i as f64 * TAU / SCAN as f64;
                let mut lo = center - TAU / SCAN as f64;
                let mut hi = center + TAU / SCAN as f64;
                // Golden-section: the objective is a single harmonic in each
                // coordinate, hence unimodal on this bracket.
                let mut x1 = hi - golden * (hi - lo);
                let mut x2 = lo + golden * (hi - lo);
                let mut f1 = eval1(x1);
                let mut f2 = eval1(x2);
                while hi - lo > POLISH_PHASE_TOL {
                    if f1 < f2 {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + golden * (hi - lo);
                        f2 = eval1(x2);
                    } else {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - golden * (hi - lo);
                        f1 = eval1(x1);
                    }
                }
                let candidate = wrap_phase(0.5 * (lo + hi));
                let value = eval1(candidate);
                if value > current {
                    thetas[e] = candidate;
                    current = value;
                }
            }
            if current - before <= POLISH_PHASE_TOL * current.abs().max(1.0) * 1e-2 {
                break;
            }
        }
    }
}

/// Exhaustive oracle over all per-element phases on a `2^grid_bits` grid
/// (optionally polished), with MRT completion. Evaluates against the
/// channel matrices exactly as given. Guarded to at most
/// [`MAX_ORACLE_ELEMENTS`] total elements and 2^24 grid candidates.
pub fn brute_force_phases(
    ch: &ChannelSet,
    p: f64,
    grid_bits: u32,
    polish: bool,
) -> Result<BeamformingSolution> {
    check_power_budget(p)?;
    let total_elements: usize = ch.irs_user.iter().map(|h| h.len()).sum();
    if total_elements > MAX_ORACLE_ELEMENTS {
        return Err(Error::TooLarge(format!(
            "{total_elements} phase variables exceed the oracle guard of {MAX_ORACLE_ELEMENTS}"
        )));
    }
    if total_elements == 0 {
        return Err(Error::invalid("brute-force oracle needs at least one IRS element"));
    }
    // r(theta) = h_d + sum_{k,m} e^{-j theta_km} t_km with
    // t_km = h_rk[m] conj(G_k[m, :]).
    let mut terms = Vec::with_capacity(total_elements);
    for (g, hr) in ch.bs_irs.iter().zip(&ch.irs_user) {
        for m in 0..hr.len() {
            let row = g.row(m);
            terms.push(DVector::from_iterator(
                g.ncols(),
                row.iter().map(|x| hr[m] * x.conj()),
            ));
        }
    }
    let objective = PhaseObjective {
        base: ch.bs_user.clone(),
        terms,
    };
    let mut best = objective.grid_search(grid_bits)?;
    if polish {
        objective.polish(&mut best);
    }
    // Unpack flat element phases back into per-IRS vectors.
    let mut phases = Vec::with_capacity(ch.num_irs());
    let mut offset = 0;
    for hr in &ch.irs_user {
        phases.push(best[offset..offset + hr.len()].to_vec());
        offset += hr.len();
    }
    let phases = PhaseShiftConfig::new(phases, None)?;
    let r = effective_channel(&phases, ch)?;
    mrt_completion(&r, p, phases, SolverKind::BruteForce)
}

/// Grid oracle over the per-IRS rotations `alpha_k` with the element phases
/// fixed at their aligned values, evaluated on the rank-one links. Guarded
/// to `K <= 4`.
pub fn brute_force_alpha(
    ch: &ChannelSet,
    links: &[RankOneLink],
    p: f64,
    grid_bits: u32,
    polish: bool,
) -> Result<BeamformingSolution> {
    check_power_budget(p)?;
    if ch.num_irs() == 0 {
        return Err(Error::invalid("need at least one IRS"));
    }
    if ch.num_irs() > MAX_ORACLE_ALPHAS {
        return Err(Error::TooLarge(format!(
            "{} IRSs exceed the alpha-oracle guard of {MAX_ORACLE_ALPHAS}",
            ch.num_irs()
        )));
    }
    validate_links(ch, links)?;
    let mut aligned = Vec::with_capacity(links.len());
    for (link, h_r) in links.iter().zip(&ch.irs_user) {
        aligned.push(align_irs(link, h_r)?);
    }
    // The effective channel is r(alpha) = h_d + sum_k e^{-j alpha_k} t_k
    // with t_k = z_k b_k*, which is the shared objective with the searched
    // phase equal to alpha_k itself.
    let terms = links
        .iter()
        .zip(&aligned)
        .map(|(link, a)| link.bs_steering.conjugate().map(|x| x * Complex64::from(a.z)))
        .collect();
    let objective = PhaseObjective {
        base: ch.bs_user.clone(),
        terms,
    };
    let mut best = objective.grid_search(grid_bits)?;
    if polish {
        objective.polish(&mut best);
    }
    let alphas: Vec<f64> = best;
    let phases = PhaseShiftConfig::new(
        aligned
            .iter()
            .zip(&alphas)
            .map(|(a, &alpha)| {
                a.theta_bar
                    .iter()
                    .map(|&tb| wrap_phase(tb + alpha))
                    .collect()
            })
            .collect(),
        None,
    )?;
    let r = effective_channel_rank_one(links, &ch.irs_user, &ch.bs_user, &phases)?;
    mrt_completion(&r, p, phases, SolverKind::BruteForce)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ula_response, ura_response, UlaGeometry, UraGeometry};
    use crate::{derive_stream, RandomStream};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Random exactly-rank-one K-IRS instance built from steering vectors.
    fn random_rank_one_instance(
        n: usize,
        m_rows: usize,
        m_cols: usize,
        k: usize,
        rng: &mut RandomStream,
    ) -> ChannelSet {
        let tx = UlaGeometry::half_wavelength(n);
        let rx = UraGeometry::half_wavelength(m_rows, m_cols);
        let m = m_rows * m_cols;
        let mut links = Vec::new();
        let mut irs_user = Vec::new();
        let mut bs_irs = Vec::new();
        for _ in 0..k {
            let a = ura_response(
                rng.random_range(-1.5..1.5),
                rng.random_range(-0.7..0.7),
                &rx,
            );
            let b = ula_response(rng.random_range(-1.5..1.5), &tx).conjugate();
            let gain = Complex64::from_polar(
                rng.random_range(0.1..2.0),
                rng.random_range(0.0..TAU),
            );
            let link = RankOneLink::new(gain, a, b).unwrap();
            bs_irs.push(link.reconstruct());
            irs_user.push(crate::channel::iid_cn_vector(m, 1.0, rng));
            links.push(link);
        }
        let bs_user = crate::channel::iid_cn_vector(n, 1.0, rng);
        ChannelSet::new(bs_user, bs_irs, irs_user, Some(links)).unwrap()
    }

    fn scalar_instance() -> ChannelSet {
        let link = RankOneLink::new(
            c(1.0, 0.0),
            DVector::from_element(1, c(1.0, 0.0)),
            DVector::from_element(1, c(1.0, 0.0)),
        )
        .unwrap();
        ChannelSet::new(
            DVector::from_element(1, c(1.0, 0.0)),
            vec![link.reconstruct()],
            vec![DVector::from_element(1, c(1.0, 0.0))],
            Some(vec![link]),
        )
        .unwrap()
    }

    #[test]
    fn received_power_is_zero_for_zero_precoder() {
        let ch = scalar_instance();
        let phases = PhaseShiftConfig::new(vec![vec![0.0]], None).unwrap();
        let w = DVector::from_element(1, c(0.0, 0.0));
        assert_eq!(received_power(&w, &phases, &ch).unwrap(), 0.0);
    }

    #[test]
    fn received_power_without_irs_is_direct_link_only() {
        let h_d = DVector::from_vec(vec![c(1.0, 0.5), c(-0.3, 0.2)]);
        let ch = ChannelSet::new(h_d.clone(), vec![], vec![], None).unwrap();
        let w = DVector::from_vec(vec![c(0.7, 0.0), c(0.1, -0.4)]);
        let got = received_power(&w, &PhaseShiftConfig::empty(), &ch).unwrap();
        assert_relative_eq!(got, h_d.dotc(&w).norm_sqr(), max_relative = 1e-15);
    }

    #[test]
    fn received_power_scalar_all_ones_is_four() {
        let ch = scalar_instance();
        let phases = PhaseShiftConfig::new(vec![vec![0.0]], None).unwrap();
        let w = DVector::from_element(1, c(1.0, 0.0));
        assert_relative_eq!(
            received_power(&w, &phases, &ch).unwrap(),
            4.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn received_power_rejects_dimension_mismatch() {
        let ch = scalar_instance();
        let phases = PhaseShiftConfig::new(vec![vec![0.0]], None).unwrap();
        let w = DVector::from_element(2, c(1.0, 0.0));
        assert!(received_power(&w, &phases, &ch).is_err());
        let short = PhaseShiftConfig::empty();
        let w1 = DVector::from_element(1, c(1.0, 0.0));
        assert!(received_power(&w1, &short, &ch).is_err());
    }

    #[test]
    fn hadamard_identity_holds() {
        // h_r^H Theta a = theta^T (h_r* o a) for the reflection vector theta.
        let mut rng = derive_stream(61, &[]);
        for _ in 0..50 {
            let m = rng.random_range(1..12);
            let h_r = crate::channel::iid_cn_vector(m, 1.0, &mut rng);
            let a = crate::channel::iid_cn_vector(m, 1.0, &mut rng);
            let thetas: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..TAU)).collect();
            let lhs: Complex64 = (0..m)
                .map(|i| h_r[i].conj() * Complex64::from_polar(1.0, thetas[i]) * a[i])
                .sum();
            let rhs: Complex64 = (0..m)
                .map(|i| Complex64::from_polar(1.0, thetas[i]) * (h_r[i].conj() * a[i]))
                .sum();
            assert_relative_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn scalar_case_solves_to_power_four() {
        let ch = scalar_instance();
        let links = ch.rank_one_links().unwrap().to_vec();
        let sol = solve_single_irs(&ch, &links[0], 1.0).unwrap();
        assert_relative_eq!(sol.received_power, 4.0, epsilon = 1e-12);
        assert_relative_eq!(sol.precoder[0].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.phase_config.phases()[0][0], 0.0, epsilon = 1e-12);
        sol.validate(&ch, 1.0).unwrap();
    }

    #[test]
    fn appendix_identity_on_rank_one_channels() {
        // Achieved power equals p (z^2 + 2 z |b^T h_d| + ||h_d||^2).
        let mut rng = derive_stream(67, &[]);
        for _ in 0..40 {
            let ch = random_rank_one_instance(5, 2, 2, 1, &mut rng);
            let link = &ch.rank_one_links().unwrap()[0];
            let p = rng.random_range(0.2..3.0);
            let sol = solve_single_irs(&ch, link, p).unwrap();
            let g = cascade_vector(link, &ch.irs_user[0]).unwrap();
            let z: f64 = g.iter().map(|x| x.norm()).sum();
            let expected = p
                * (z * z
                    + 2.0 * z * link.bs_steering.dot(&ch.bs_user).norm()
                    + ch.bs_user.norm_squared());
            assert_relative_eq!(sol.received_power, expected, max_relative = 1e-9);
        }
    }

    #[test]
    fn budget_is_met_exactly_and_solution_revalidates() {
        let mut rng = derive_stream(71, &[]);
        for k in 1..=3usize {
            let ch = random_rank_one_instance(6, 2, 2, k, &mut rng);
            let links = ch.rank_one_links().unwrap().to_vec();
            let p = 2.5;
            let sol = solve_multi_irs_analytical(&ch, &links, p).unwrap();
            assert_relative_eq!(sol.precoder.norm_squared(), p, max_relative = 1e-12);
            // Recompute against the rank-one reconstruction.
            sol.validate(&ch.rank_one_reconstruction().unwrap(), p).unwrap();
        }
    }

    #[test]
    fn multi_with_one_irs_matches_single_closed_form() {
        let mut rng = derive_stream(73, &[]);
        for _ in 0..30 {
            let ch = random_rank_one_instance(4, 2, 2, 1, &mut rng);
            let links = ch.rank_one_links().unwrap().to_vec();
            let single = solve_single_irs(&ch, &links[0], 1.0).unwrap();
            let multi = solve_multi_irs_analytical(&ch, &links, 1.0).unwrap();
            assert_relative_eq!(
                single.received_power,
                multi.received_power,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn mrt_no_irs_reference_cases() {
        let mut e1 = DVector::zeros(4);
        e1[0] = c(1.0, 0.0);
        let sol = mrt_no_irs(&e1, 1.0).unwrap();
        assert_relative_eq!(sol.received_power, 1.0, epsilon = 1e-15);
        assert_relative_eq!(sol.precoder[0].re, 1.0, epsilon = 1e-15);

        let mut rng = derive_stream(79, &[]);
        let h = crate::channel::iid_cn_vector(6, 1.0, &mut rng);
        let p = 3.7;
        let sol = mrt_no_irs(&h, p).unwrap();
        assert_relative_eq!(sol.precoder.norm_squared(), p, max_relative = 1e-12);
        // Cauchy-Schwarz: no unit-budget precoder beats MRT.
        for _ in 0..1000 {
            let mut w = crate::channel::iid_cn_vector(6, 1.0, &mut rng);
            w *= Complex64::from(p.sqrt() / w.norm());
            assert!(h.dotc(&w).norm_sqr() <= sol.received_power + 1e-9);
        }
        assert!(mrt_no_irs(&DVector::zeros(3), 1.0).is_err());
    }

    #[test]
    fn quantize_reference_cases() {
        let cfg = PhaseShiftConfig::new(vec![vec![0.9 * std::f64::consts::PI]], None).unwrap();
        let q = quantize_phases(&cfg, 1).unwrap();
        assert_relative_eq!(q.phases()[0][0], std::f64::consts::PI, epsilon = 1e-15);

        let cfg = PhaseShiftConfig::new(vec![vec![std::f64::consts::PI / 3.0]], None).unwrap();
        let q = quantize_phases(&cfg, 2).unwrap();
        assert_relative_eq!(q.phases()[0][0], std::f64::consts::PI / 2.0, epsilon = 1e-15);
        assert_eq!(q.resolution_bits(), Some(2));

        // Wrap-around: phases near 2pi snap to 0.
        let cfg = PhaseShiftConfig::new(vec![vec![TAU - 1e-3]], None).unwrap();
        let q = quantize_phases(&cfg, 4).unwrap();
        assert_relative_eq!(q.phases()[0][0], 0.0, epsilon = 1e-15);

        // Exact midpoint resolves to the smaller phase.
        let cfg = PhaseShiftConfig::new(vec![vec![std::f64::consts::PI / 2.0]], None).unwrap();
        let q = quantize_phases(&cfg, 1).unwrap();
        assert_relative_eq!(q.phases()[0][0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quantize_error_is_within_half_pitch() {
        let mut rng = derive_stream(83, &[]);
        for _ in 0..200 {
            let theta = rng.random_range(0.0..TAU);
            let cfg = PhaseShiftConfig::new(vec![vec![theta]], None).unwrap();
            for bits in [1u32, 3, 16] {
                let q = quantize_phases(&cfg, bits).unwrap();
                let diff = (q.phases()[0][0] - theta).abs();
                let circ = diff.min(TAU - diff);
                assert!(
                    circ <= std::f64::consts::PI / (1u64 << bits) as f64 + 1e-12,
                    "bits {bits} theta {theta} -> {}",
                    q.phases()[0][0]
                );
            }
        }
    }

    #[test]
    fn phase_config_rejects_out_of_range_and_off_grid() {
        assert!(PhaseShiftConfig::new(vec![vec![-0.1]], None).is_err());
        assert!(PhaseShiftConfig::new(vec![vec![TAU]], None).is_err());
        assert!(PhaseShiftConfig::new(vec![vec![0.3]], Some(2)).is_err());
        assert!(PhaseShiftConfig::new(vec![vec![std::f64::consts::PI]], Some(1)).is_ok());
    }

    #[test]
    fn grid_oracle_never_beats_closed_form_and_nested_grids_improve() {
        let mut rng = derive_stream(89, &[]);
        let ch = random_rank_one_instance(3, 1, 2, 1, &mut rng);
        let link = &ch.rank_one_links().unwrap()[0];
        let closed = solve_single_irs(&ch, link, 1.0).unwrap();
        let coarse = brute_force_phases(&ch, 1.0, 1, false).unwrap();
        let fine = brute_force_phases(&ch, 1.0, 4, false).unwrap();
        assert!(coarse.received_power <= fine.received_power + 1e-12);
        assert!(fine.received_power <= closed.received_power + 1e-12 * closed.received_power);
    }

    #[test]
    fn single_element_grid_matches_closed_form_within_grid_tolerance() {
        let mut rng = derive_stream(97, &[]);
        let ch = random_rank_one_instance(4, 1, 1, 1, &mut rng);
        let link = &ch.rank_one_links().unwrap()[0];
        let closed = solve_single_irs(&ch, link, 1.0).unwrap();
        let oracle = brute_force_phases(&ch, 1.0, 10, false).unwrap();
        let slack = (1.0 - (std::f64::consts::PI / 1024.0).cos()) * closed.received_power;
        assert!(oracle.received_power <= closed.received_power + 1e-12);
        assert!(
            closed.received_power - oracle.received_power <= slack + 1e-12,
            "gap {} > slack {}",
            closed.received_power - oracle.received_power,
            slack
        );
    }

    #[test]
    fn polished_oracle_matches_closed_form_tightly() {
        let mut rng = derive_stream(101, &[]);
        for _ in 0..5 {
            let ch = random_rank_one_instance(4, 2, 2, 1, &mut rng);
            let link = &ch.rank_one_links().unwrap()[0];
            let closed = solve_single_irs(&ch, link, 1.0).unwrap();
            let oracle = brute_force_phases(&ch, 1.0, 4, true).unwrap();
            assert!(oracle.received_power <= closed.received_power * (1.0 + 1e-9));
            assert_relative_eq!(
                oracle.received_power,
                closed.received_power,
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn oracle_guards_reject_oversized_problems() {
        let mut rng = derive_stream(103, &[]);
        let ch = random_rank_one_instance(2, 3, 3, 1, &mut rng);
        assert!(matches!(
            brute_force_phases(&ch, 1.0, 2, false),
            Err(Error::TooLarge(_))
        ));
        let ch2 = random_rank_one_instance(2, 1, 2, 1, &mut rng);
        assert!(matches!(
            brute_force_phases(&ch2, 1.0, 20, false),
            Err(Error::TooLarge(_))
        ));
        let ch5 = random_rank_one_instance(2, 1, 1, 5, &mut rng);
        let links = ch5.rank_one_links().unwrap().to_vec();
        assert!(matches!(
            brute_force_alpha(&ch5, &links, 1.0, 2, false),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn alpha_oracle_agrees_with_analytical_for_orthogonal_steering() {
        // Two IRSs whose BS steering vectors are exactly orthogonal: the
        // near-orthogonality approximation is exact, so the analytical
        // solution must match the alpha oracle.
        let mut rng = derive_stream(107, &[]);
        let n = 4;
        let tx = UlaGeometry::half_wavelength(n);
        // sin spaced by multiples of 2/N makes ULA responses orthogonal.
        let b1 = ula_response(0.0, &tx).conjugate();
        let b2 = ula_response((2.0 / n as f64).asin(), &tx).conjugate();
        assert!(b1.dotc(&b2).norm() < 1e-12);
        let m = 2;
        let mut links = Vec::new();
        let mut bs_irs = Vec::new();
        let mut irs_user = Vec::new();
        for b in [b1, b2] {
            let a = ura_response(rng.random_range(-1.0..1.0), 0.2, &UraGeometry::half_wavelength(1, m));
            let gain = Complex64::from_polar(rng.random_range(0.5..1.5), rng.random_range(0.0..TAU));
            let link = RankOneLink::new(gain, a, b).unwrap();
            bs_irs.push(link.reconstruct());
            irs_user.push(crate::channel::iid_cn_vector(m, 1.0, &mut rng));
            links.push(link);
        }
        let ch = ChannelSet::new(
            crate::channel::iid_cn_vector(n, 1.0, &mut rng),
            bs_irs,
            irs_user,
            Some(links.clone()),
        )
        .unwrap();
        let analytical = solve_multi_irs_analytical(&ch, &links, 1.0).unwrap();
        let oracle = brute_force_alpha(&ch, &links, 1.0, 8, true).unwrap();
        assert_relative_eq!(
            analytical.received_power,
            oracle.received_power,
            max_relative = 1e-6
        );
    }

    #[test]
    fn dominance_chain_holds_per_realization() {
        let mut rng = derive_stream(109, &[]);
        for _ in 0..10 {
            let k = rng.random_range(1..4);
            let ch = random_rank_one_instance(8, 2, 2, k, &mut rng);
            let links = ch.rank_one_links().unwrap().to_vec();
            let p = 1.0;
            let no_irs = mrt_no_irs(&ch.bs_user, p).unwrap();
            let analytical = solve_multi_irs_analytical(&ch, &links, p).unwrap();
            let bound = sdr_upper_bound(&ch, &links, p).unwrap();
            assert!(no_irs.received_power <= analytical.received_power + 1e-9);
            assert!(
                analytical.received_power <= bound * (1.0 + 1e-9),
                "analytical {} > bound {}",
                analytical.received_power,
                bound
            );
        }
    }

    #[test]
    fn sdr_matches_closed_form_for_single_irs() {
        let mut rng = derive_stream(113, &[]);
        for _ in 0..5 {
            let ch = random_rank_one_instance(4, 2, 2, 1, &mut rng);
            let links = ch.rank_one_links().unwrap().to_vec();
            let closed = solve_single_irs(&ch, &links[0], 1.0).unwrap();
            let mut srng = derive_stream(7, &[1]);
            let sdr = solve_multi_irs_sdr(&ch, &links, 1.0, 64, &mut srng).unwrap();
            assert_relative_eq!(sdr.received_power, closed.received_power, max_relative = 1e-4);
            let bound = sdr_upper_bound(&ch, &links, 1.0).unwrap();
            assert_relative_eq!(bound, closed.received_power, max_relative = 1e-4);
            assert!(sdr.received_power <= bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn solvers_reject_degenerate_channels() {
        let link = RankOneLink::new(
            c(0.0, 0.0),
            DVector::from_element(1, c(1.0, 0.0)),
            DVector::from_element(1, c(1.0, 0.0)),
        )
        .unwrap();
        let ch = ChannelSet::new(
            DVector::from_element(1, c(0.0, 0.0)),
            vec![link.reconstruct()],
            vec![DVector::from_element(1, c(1.0, 0.0))],
            Some(vec![link.clone()]),
        )
        .unwrap();
        assert!(matches!(
            solve_single_irs(&ch, &link, 1.0),
            Err(Error::DegenerateChannel(_))
        ));
    }

    #[test]
    fn solvers_reject_invalid_power() {
        let ch = scalar_instance();
        let link = ch.rank_one_links().unwrap()[0].clone();
        assert!(solve_single_irs(&ch, &link, 0.0).is_err());
        assert!(solve_single_irs(&ch, &link, -1.0).is_err());
        assert!(solve_single_irs(&ch, &link, f64::NAN).is_err());
    }
}
