//! Monte-Carlo evaluation of the received-signal model.
//!
//! Each trial draws one channel realization (fading, direct links and phase
//! noise) from its own stream `RngStream::new(seed, trial)`, so the estimate
//! does not depend on how trials are scheduled across threads. Per-user sums
//! are reduced in trial order with [`pairwise_sum`].

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_realization, ChannelRealization, StatisticalCsi};
use crate::closedform::{effective_eta, PowerAllocation, RateMethod, RateReport, RisMode, RisState};
use crate::error::{Error, Result};
use crate::numerics::{pairwise_sum, RngStream};

const TAG_AMP_NOISE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self { trials, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            trials: 20_000,
            seed: 0,
        }
    }
}

/// Monte-Carlo rate estimate with per-user standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub rates: RateReport,
    pub std_err: Vec<f64>,
    /// Standard error of the sum rate.
    pub sum_std_err: f64,
    pub trials: usize,
}

/// Effective reflection coefficient `e^{j(theta_n + noise_n)}` per element.
fn reflection(ris: &RisState, real: &ChannelRealization) -> Vec<Complex64> {
    ris.theta
        .iter()
        .zip(&real.phase_noise)
        .map(|(t, e)| Complex64::from_polar(1.0, t + e))
        .collect()
}

/// SINRs of all receivers for one realization, given the amplification `eta`.
fn sinr_all(real: &ChannelRealization, csi: &StatisticalCsi, ris: &RisState, p: &[f64], eta: f64) -> Vec<f64> {
    let k = csi.n_pairs();
    let with_ris = ris.mode != RisMode::Absent;
    let refl = if with_ris { reflection(ris, real) } else { Vec::new() };
    let noise_floor = ris.effective_noise_floor();
    (0..k)
        .map(|j| {
            // g_B,j^T Lambda Theta Phi, elementwise
            let row: Vec<Complex64> = if with_ris {
                real.g_b[j].iter().zip(&refl).map(|(g, r)| g * r * eta).collect()
            } else {
                Vec::new()
            };
            let gain = |i: usize| -> f64 {
                let cascade: Complex64 = row.iter().zip(&real.g_a[i]).map(|(r, g)| r * g).sum();
                (cascade + real.h[(i, j)]).norm_sqr()
            };
            let signal = p[j] * gain(j);
            let interference: f64 = (0..k).filter(|&i| i != j).map(|i| p[i] * gain(i)).sum();
            let dynamic: f64 = row.iter().map(|r| r.norm_sqr()).sum::<f64>() * noise_floor;
            signal / (interference + dynamic + csi.noise[j])
        })
        .collect()
}

/// Instantaneous SINR of receiver `j`. `eta` is ignored unless the surface
/// is active (a passive surface uses `Lambda = I`).
pub fn instantaneous_sinr(
    real: &ChannelRealization,
    csi: &StatisticalCsi,
    alloc: &PowerAllocation,
    ris: &RisState,
    eta: f64,
    j: usize,
) -> f64 {
    let eta = match ris.mode {
        RisMode::Active => eta,
        _ => 1.0,
    };
    sinr_all(real, csi, ris, &alloc.p, eta)[j]
}

fn mode_eta(alloc: &PowerAllocation, csi: &StatisticalCsi, ris: &RisState) -> Result<f64> {
    match ris.mode {
        RisMode::Active => effective_eta(alloc, csi, ris),
        _ => Ok(1.0),
    }
}

/// Per-trial rates `log2(1 + gamma_j)`, indexed `[trial][user]`.
pub fn sample_rates(
    csi: &StatisticalCsi,
    alloc: &PowerAllocation,
    ris: &RisState,
    cfg: &McConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    alloc.validate(csi.n_pairs())?;
    ris.validate(csi.n_elements())?;
    let eta = mode_eta(alloc, csi, ris)?;
    let kappa_pn = if ris.mode == RisMode::Absent { f64::INFINITY } else { ris.kappa_pn };
    Ok((0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let rng = RngStream::new(cfg.seed, t);
            let real = sample_realization(csi, &rng, kappa_pn);
            sinr_all(&real, csi, ris, &alloc.p, eta)
                .into_iter()
                .map(|g| (1.0 + g).log2())
                .collect()
        })
        .collect())
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample mean of `log2(1 + gamma_j)` over `cfg.trials` realizations.
pub fn ergodic_rate_mc(
    csi: &StatisticalCsi,
    alloc: &PowerAllocation,
    ris: &RisState,
    cfg: &McConfig,
) -> Result<McReport> {
    let samples = sample_rates(csi, alloc, ris, cfg)?;
    let k = csi.n_pairs();
    let mut per_user = Vec::with_capacity(k);
    let mut std_err = Vec::with_capacity(k);
    let mut column = vec![0.0; samples.len()];
    for j in 0..k {
        for (c, s) in column.iter_mut().zip(&samples) {
            *c = s[j];
        }
        let (m, e) = mean_and_stderr(&column);
        per_user.push(m);
        std_err.push(e);
    }
    let sums: Vec<f64> = samples.iter().map(|s| s.iter().sum()).collect();
    let (_, sum_std_err) = mean_and_stderr(&sums);
    Ok(McReport {
        rates: RateReport::new(per_user, ris.mode, RateMethod::MonteCarlo),
        std_err,
        sum_std_err,
        trials: cfg.trials,
    })
}

/// Monte-Carlo estimate of the power drawn by the RIS amplifier,
/// `sum_i P_i E||Lambda Theta Phi g_A,i||^2 + E||Lambda Theta Phi n_F||^2`.
pub fn estimate_amp_power(
    csi: &StatisticalCsi,
    alloc: &PowerAllocation,
    ris: &RisState,
    cfg: &McConfig,
) -> Result<f64> {
    if ris.mode != RisMode::Active {
        return Err(Error::ModeMismatch {
            expected: "active".into(),
            got: ris.mode.to_string(),
        });
    }
    cfg.validate()?;
    alloc.validate(csi.n_pairs())?;
    ris.validate(csi.n_elements())?;
    let eta = effective_eta(alloc, csi, ris)?;
    let n = csi.n_elements();
    let sf = ris.noise_floor.sqrt();
    let draws: Vec<f64> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let rng = RngStream::new(cfg.seed, t);
            let real = sample_realization(csi, &rng, ris.kappa_pn);
            let refl = reflection(ris, &real);
            let mut noise_rng = rng.substream(TAG_AMP_NOISE);
            let norm2 = |v: &mut dyn Iterator<Item = Complex64>| -> f64 {
                v.zip(&refl).map(|(x, r)| (x * r * eta).norm_sqr()).sum()
            };
            let signal: f64 = alloc
                .p
                .iter()
                .zip(&real.g_a)
                .map(|(p, g)| p * norm2(&mut g.iter().copied()))
                .sum();
            let noise = norm2(&mut (0..n).map(|_| noise_rng.complex_normal() * sf));
            signal + noise
        })
        .collect();
    Ok(pairwise_sum(&draws) / cfg.trials as f64)
}

/// Relative residual `|LHS - P_R| / P_R` of the amplifier power constraint.
pub fn verify_amp_power(
    csi: &StatisticalCsi,
    alloc: &PowerAllocation,
    ris: &RisState,
    cfg: &McConfig,
) -> Result<f64> {
    if !(alloc.amp_power > 0.0) {
        return Err(Error::Amplification("P_R must be positive".into()));
    }
    let lhs = estimate_amp_power(csi, alloc, ris, cfg)?;
    Ok((lhs - alloc.amp_power).abs() / alloc.amp_power)
}

/// Total power consumption of the system in `mode`.
pub fn total_power(alloc: &PowerAllocation, ris: &RisState, mode: RisMode) -> f64 {
    let n = ris.theta.len() as f64;
    let transmit = alloc.transmit_sum();
    match mode {
        RisMode::Active => transmit + alloc.amp_power / ris.amp_eff + n * (ris.p_dc + ris.p_sw),
        RisMode::Passive => transmit + n * ris.p_sw,
        RisMode::Absent => transmit,
    }
}
