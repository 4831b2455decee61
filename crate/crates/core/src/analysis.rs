//! Closed-form average received power, quantization loss, and link metrics.
//!
//! The power formulas give the mean received signal power (at unit transmit
//! power) attained by the optimal/near-optimal beamforming solutions under
//! the statistical link model: Rayleigh BS-user and IRS-user channels,
//! rank-one BS-IRS channels `G_k = sqrt(N M) rho_k a_k b_k^T` with
//! constant-modulus steering entries. They are the theory side that the
//! Monte Carlo harness validates against.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Parameters of the statistical link model behind the power formulas.
///
/// Gain moments are supplied by the caller rather than derived from a
/// distribution, so both fixed-gain and shadowed regimes are expressible.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingLawParams {
    /// BS antennas `N`.
    pub num_antennas: usize,
    /// Reflecting elements per IRS, `M`.
    pub num_elements: usize,
    /// Number of IRSs `K`.
    pub num_irs: usize,
    /// Per-entry standard deviation of each IRS-user channel (length `K`).
    pub irs_user_sigma: Vec<f64>,
    /// Per-entry standard deviation of the BS-user channel.
    pub bs_user_sigma: f64,
    /// `E|rho_k|` of the BS-IRS LOS gains (length `K`).
    pub los_gain_mean_abs: Vec<f64>,
    /// `E|rho_k|^2` of the BS-IRS LOS gains (length `K`).
    pub los_gain_mean_sq: Vec<f64>,
}

impl ScalingLawParams {
    pub fn new(
        num_antennas: usize,
        num_elements: usize,
        num_irs: usize,
        irs_user_sigma: Vec<f64>,
        bs_user_sigma: f64,
        los_gain_mean_abs: Vec<f64>,
        los_gain_mean_sq: Vec<f64>,
    ) -> Result<Self> {
        let p = ScalingLawParams {
            num_antennas,
            num_elements,
            num_irs,
            irs_user_sigma,
            bs_user_sigma,
            los_gain_mean_abs,
            los_gain_mean_sq,
        };
        p.validate()?;
        Ok(p)
    }

    /// Single-IRS shorthand with a fixed-modulus LOS gain (`E|rho| = r`,
    /// `E|rho|^2 = r^2`).
    pub fn single(
        num_antennas: usize,
        num_elements: usize,
        sigma_r: f64,
        sigma_d: f64,
        rho_abs: f64,
    ) -> Result<Self> {
        Self::new(
            num_antennas,
            num_elements,
            1,
            vec![sigma_r],
            sigma_d,
            vec![rho_abs],
            vec![rho_abs * rho_abs],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 || self.num_elements == 0 || self.num_irs == 0 {
            return Err(Error::invalid("N, M and K must all be positive"));
        }
        if self.irs_user_sigma.len() != self.num_irs
            || self.los_gain_mean_abs.len() != self.num_irs
            || self.los_gain_mean_sq.len() != self.num_irs
        {
            return Err(Error::invalid("per-IRS parameter lists must have length K"));
        }
        if !(self.bs_user_sigma > 0.0) || self.irs_user_sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("channel sigmas must be positive"));
        }
        for (ea, es) in self.los_gain_mean_abs.iter().zip(&self.los_gain_mean_sq) {
            if *ea < 0.0 || *es < 0.0 {
                return Err(Error::invalid("gain moments must be nonnegative"));
            }
            // Jensen: E|rho|^2 >= (E|rho|)^2.
            if *es < ea * ea * (1.0 - 1e-12) {
                return Err(Error::invalid(format!(
                    "gain moments violate Jensen's inequality: E|rho|^2 = {es} < (E|rho|)^2 = {}",
                    ea * ea
                )));
            }
        }
        Ok(())
    }
}

/// Mean received power of the single-IRS closed-form solution at unit
/// transmit power:
///
/// `N M^2 (pi s_r^2 / 4) E|rho|^2 + 2 M sqrt(N) E|rho| (pi s_r s_d / 4)
///  + N M (2 - pi/2) E|rho|^2 s_r^2 / 2 + N s_d^2`.
pub fn expected_power_single(p: &ScalingLawParams) -> Result<f64> {
    p.validate()?;
    if p.num_irs != 1 {
        return Err(Error::invalid("expected_power_single requires K = 1"));
    }
    Ok(expected_power_multi(p)?)
}

/// Mean received power of the multi-IRS near-optimal solution at unit
/// transmit power; reduces to [`expected_power_single`] for `K = 1`.
pub fn expected_power_multi(p: &ScalingLawParams) -> Result<f64> {
    p.validate()?;
    let n = p.num_antennas as f64;
    let m = p.num_elements as f64;
    let sd = p.bs_user_sigma;
    let mut power = n * sd * sd;
    for k in 0..p.num_irs {
        let sr = p.irs_user_sigma[k];
        let ea = p.los_gain_mean_abs[k];
        let es = p.los_gain_mean_sq[k];
        power += n * m * m * (PI * sr * sr / 4.0) * es;
        power += 2.0 * m * n.sqrt() * ea * (PI * sr * sd / 4.0);
        power += n * m * (2.0 - PI / 2.0) * es * sr * sr / 2.0;
    }
    Ok(power)
}

/// Asymptotic (large `M`) ratio of the mean received power with `b`-bit
/// phase shifters to the infinite-resolution power:
/// `eta(b) = ((2^b / pi) sin(pi / 2^b))^2`.
pub fn quantization_ratio(bits: u32) -> Result<f64> {
    if bits == 0 {
        return Err(Error::invalid("phase resolution must be at least 1 bit"));
    }
    Ok(quantization_amplitude(bits).powi(2))
}

/// First-moment shrinkage `(2^b / pi) sin(pi / 2^b)` of a phase error
/// uniform on `[-pi/2^b, pi/2^b]`.
fn quantization_amplitude(bits: u32) -> f64 {
    let levels = (2f64).powi(bits as i32);
    levels / PI * (PI / levels).sin()
}

/// Mean received power of the near-optimal solution with `b`-bit phase
/// shifters, at unit transmit power:
///
/// `N M sum_k s_rk^2 E|rho_k|^2
///  + N M (M - 1) eta1^2 sum_k (pi s_rk^2 / 4) E|rho_k|^2
///  + 2 eta1 M sqrt(N) sum_k (pi s_d s_rk / 4) E|rho_k| + N s_d^2`
///
/// with `eta1 = (2^b/pi) sin(pi/2^b)`. Converges to
/// [`expected_power_multi`] as `b` grows.
pub fn expected_power_discrete(p: &ScalingLawParams, bits: u32) -> Result<f64> {
    p.validate()?;
    if bits == 0 {
        return Err(Error::invalid("phase resolution must be at least 1 bit"));
    }
    let eta1 = quantization_amplitude(bits);
    let n = p.num_antennas as f64;
    let m = p.num_elements as f64;
    let sd = p.bs_user_sigma;
    let mut power = n * sd * sd;
    for k in 0..p.num_irs {
        let sr = p.irs_user_sigma[k];
        let ea = p.los_gain_mean_abs[k];
        let es = p.los_gain_mean_sq[k];
        power += n * m * sr * sr * es;
        power += n * m * (m - 1.0) * es * (PI * sr * sr / 4.0) * eta1 * eta1;
        power += 2.0 * eta1 * m * n.sqrt() * (PI * sd * sr / 4.0) * ea;
    }
    Ok(power)
}

/// Spectral efficiency `log2(1 + power/noise)` in bits/s/Hz.
pub fn throughput(power: f64, noise: f64) -> Result<f64> {
    if !(noise > 0.0) {
        return Err(Error::invalid("noise power must be positive"));
    }
    if !(power >= 0.0) {
        return Err(Error::invalid("received power must be nonnegative"));
    }
    Ok((1.0 + power / noise).log2())
}

/// Fraction of throughput samples strictly below the threshold `tau`.
pub fn outage_probability(samples: &[f64], tau: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("outage probability needs at least one sample"));
    }
    let below = samples.iter().filter(|&&s| s < tau).count();
    Ok(below as f64 / samples.len() as f64)
}

/// Per-realization link metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMetrics {
    /// Received signal power, linear.
    pub received_power: f64,
    /// Noise power, linear.
    pub noise_power: f64,
    /// `log2(1 + received_power / noise_power)`.
    pub throughput_bps_hz: f64,
    /// Whether every contributing link was blocked this realization.
    pub blocked: bool,
}

impl LinkMetrics {
    pub fn new(received_power: f64, noise_power: f64, blocked: bool) -> Result<Self> {
        Ok(LinkMetrics {
            received_power,
            noise_power,
            throughput_bps_hz: throughput(received_power, noise_power)?,
            blocked,
        })
    }

    /// Receive SNR in dB; `-inf` for zero received power.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.received_power / self.noise_power).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_params(n: usize, m: usize) -> ScalingLawParams {
        ScalingLawParams::single(n, m, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn unit_scale_single_irs_power() {
        // N = M = 1, all sigmas and moments 1: pi/4 + pi/2 + (2 - pi/2)/2 + 1
        // = pi/2 + 2.
        let p = unit_params(1, 1);
        let got = expected_power_single(&p).unwrap();
        assert_relative_eq!(got, PI / 2.0 + 2.0, epsilon = 1e-12);
        assert_relative_eq!(got, 3.5708, epsilon = 1e-4);
    }

    #[test]
    fn leading_term_scales_quadratically_in_m() {
        let n = 16;
        let p1 = unit_params(n, 1000);
        let p2 = unit_params(n, 2000);
        let offset = n as f64; // N * sigma_d^2
        let r = (expected_power_single(&p2).unwrap() - offset)
            / (expected_power_single(&p1).unwrap() - offset);
        assert!(r > 3.9 && r <= 4.0, "ratio {r}");
    }

    #[test]
    fn multi_reduces_to_single_for_one_irs() {
        let p = ScalingLawParams::single(8, 32, 0.3, 0.05, 0.7).unwrap();
        assert_relative_eq!(
            expected_power_single(&p).unwrap(),
            expected_power_multi(&p).unwrap(),
            epsilon = 0.0
        );
    }

    #[test]
    fn quadratic_term_is_linear_in_sigma_sq() {
        // Doubling every sigma_rk^2 doubles the M^2 term coefficient.
        let base = ScalingLawParams::new(
            4,
            100,
            2,
            vec![0.2, 0.4],
            0.1,
            vec![0.5, 0.6],
            vec![0.3, 0.5],
        )
        .unwrap();
        let scaled = ScalingLawParams {
            irs_user_sigma: base.irs_user_sigma.iter().map(|s| s * 2f64.sqrt()).collect(),
            ..base.clone()
        };
        let n = 4.0;
        let m = 100.0;
        let m2_term = |p: &ScalingLawParams| {
            p.irs_user_sigma
                .iter()
                .zip(&p.los_gain_mean_sq)
                .map(|(sr, es)| n * m * m * PI * sr * sr / 4.0 * es)
                .sum::<f64>()
        };
        assert_relative_eq!(m2_term(&scaled), 2.0 * m2_term(&base), max_relative = 1e-12);
        // And the full formula moves by exactly the term differences.
        let diff = expected_power_multi(&scaled).unwrap() - expected_power_multi(&base).unwrap();
        let expected_diff = m2_term(&base)
            + base
                .irs_user_sigma
                .iter()
                .zip(&base.los_gain_mean_sq)
                .map(|(sr, es)| n * m * (2.0 - PI / 2.0) * es * sr * sr / 2.0)
                .sum::<f64>()
            + base
                .irs_user_sigma
                .iter()
                .zip(&base.los_gain_mean_abs)
                .map(|(sr, ea)| {
                    2.0 * m * n.sqrt() * ea * PI * sr * 0.1 / 4.0 * (2f64.sqrt() - 1.0)
                })
                .sum::<f64>();
        assert_relative_eq!(diff, expected_diff, max_relative = 1e-9);
    }

    #[test]
    fn quantization_ratio_reference_values() {
        assert_relative_eq!(quantization_ratio(1).unwrap(), 0.4053, epsilon = 5e-5);
        assert_relative_eq!(quantization_ratio(2).unwrap(), 0.8106, epsilon = 5e-5);
        assert_relative_eq!(quantization_ratio(3).unwrap(), 0.9496, epsilon = 5e-5);
        assert!((quantization_ratio(20).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quantization_ratio_reference_values_in_db() {
        let db = |b| 10.0 * quantization_ratio(b).unwrap().log10();
        assert_relative_eq!(db(1), -3.9224, epsilon = 5e-4);
        assert_relative_eq!(db(2), -0.9121, epsilon = 5e-4);
    }

    #[test]
    fn quantization_ratio_is_increasing_to_one() {
        let mut prev = 0.0;
        for b in 1..=24 {
            let eta = quantization_ratio(b).unwrap();
            assert!(eta > prev && eta <= 1.0, "eta({b}) = {eta}");
            prev = eta;
        }
    }

    #[test]
    fn discrete_power_converges_to_continuous() {
        let p = ScalingLawParams::single(16, 128, 0.4, 0.02, 0.3).unwrap();
        let cont = expected_power_multi(&p).unwrap();
        let disc = expected_power_discrete(&p, 30).unwrap();
        assert_relative_eq!(disc, cont, max_relative = 1e-6);
    }

    #[test]
    fn discrete_to_continuous_ratio_tends_to_eta() {
        let p = ScalingLawParams::single(16, 10_000, 0.4, 1e-6, 0.3).unwrap();
        for b in [1u32, 2, 3] {
            let ratio =
                expected_power_discrete(&p, b).unwrap() / expected_power_multi(&p).unwrap();
            assert_relative_eq!(ratio, quantization_ratio(b).unwrap(), epsilon = 1e-3);
        }
    }

    #[test]
    fn expected_power_is_increasing_in_each_parameter() {
        let base = ScalingLawParams::single(8, 64, 0.3, 0.1, 0.5).unwrap();
        let p0 = expected_power_multi(&base).unwrap();
        let bump = [
            ScalingLawParams { num_antennas: 9, ..base.clone() },
            ScalingLawParams { num_elements: 65, ..base.clone() },
            ScalingLawParams { irs_user_sigma: vec![0.31], ..base.clone() },
            ScalingLawParams { bs_user_sigma: 0.11, ..base.clone() },
            ScalingLawParams {
                los_gain_mean_abs: vec![0.51],
                los_gain_mean_sq: vec![0.51 * 0.51],
                ..base.clone()
            },
        ];
        for p in &bump {
            assert!(expected_power_multi(p).unwrap() > p0);
        }
    }

    #[test]
    fn six_db_step_between_m300_and_m600_at_paper_scale() {
        // Path-loss scale sigmas from the element-sweep deployment: user
        // under the IRS at 119 m, vertical offset 0.6 m.
        let sigma_r = PathScale::IRS_USER;
        let sigma_d = PathScale::BS_USER;
        let rho = PathScale::BS_IRS;
        let pow = |m| {
            expected_power_multi(&ScalingLawParams::single(64, m, sigma_r, sigma_d, rho).unwrap())
                .unwrap()
        };
        let gap_db = 10.0 * (pow(600) / pow(300)).log10();
        assert!((5.5..=6.5).contains(&gap_db), "gap {gap_db} dB");
    }

    struct PathScale;

    impl PathScale {
        // sqrt(10^(-kappa/10)) at d3 = 0.6 m (LOS), d2 ~ 119 m (LOS) and
        // d = 119 m (NLOS), shadowing at its mean.
        const IRS_USER: f64 = 1.417e-3;
        const BS_IRS: f64 = 7.159e-6;
        const BS_USER: f64 = 2.34e-7;
    }

    #[test]
    fn jensen_violation_is_rejected() {
        let r = ScalingLawParams::new(4, 8, 1, vec![1.0], 1.0, vec![0.9], vec![0.5]);
        assert!(r.is_err());
    }

    #[test]
    fn throughput_reference_points() {
        assert_relative_eq!(throughput(1.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(throughput(0.0, 1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(throughput(3.0, 1.0).unwrap(), 2.0, epsilon = 1e-15);
        assert!(throughput(1.0, 0.0).is_err());
        assert!(throughput(-1.0, 1.0).is_err());
    }

    #[test]
    fn outage_counts_strictly_below_threshold() {
        assert_relative_eq!(
            outage_probability(&[0.6, 0.8], 0.5).unwrap(),
            0.0,
            epsilon = 0.0
        );
        assert_relative_eq!(
            outage_probability(&[0.1, 0.2], 0.5).unwrap(),
            1.0,
            epsilon = 0.0
        );
        assert_relative_eq!(
            outage_probability(&[0.2, 0.8], 0.5).unwrap(),
            0.5,
            epsilon = 0.0
        );
        // Samples exactly at the threshold are not in outage.
        assert_relative_eq!(
            outage_probability(&[0.5, 0.5], 0.5).unwrap(),
            0.0,
            epsilon = 0.0
        );
        assert!(outage_probability(&[], 0.5).is_err());
    }

    #[test]
    fn link_metrics_snr_is_consistent() {
        let m = LinkMetrics::new(2e-9, 1e-12, false).unwrap();
        assert_relative_eq!(m.throughput_bps_hz, (1.0 + 2000.0f64).log2(), epsilon = 1e-12);
        assert_relative_eq!(m.snr_db(), 10.0 * 2000.0f64.log10(), epsilon = 1e-9);
    }
}
