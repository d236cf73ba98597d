//! Closed-form ergodic rates from statistical CSI.
//!
//! The approximate rate of receiver `j` replaces the expectation of the log
//! by the log of the ratio of expectations:
//!
//! ```text
//! R_j = log2(1 + P_j E|g_jj|^2 / (sum_{i != j} P_i E|g_ij|^2 + eta^2 N beta_j sF^2 + s_j^2))
//! E|g_ij|^2 = eta^2 Omega_ij + 2 eta c_ij Upsilon_ij + sigma_ij^2
//! ```
//!
//! where `Omega_ij` is the second moment of the cascaded RIS channel per unit
//! amplification, `c_ij Upsilon_ij` is the coherent cross term between the
//! cascaded and direct LoS components, and `sF^2` is the amplifier noise
//! floor. The individual terms are exposed so they can be checked against
//! Monte-Carlo expectations one by one.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{los_fraction, nlos_fraction, steering_phases, StatisticalCsi};
use crate::error::{Error, Result};
use crate::numerics::{bessel_ratio, dbm_to_watt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RisMode {
    Active,
    Passive,
    Absent,
}

impl RisMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RisMode::Active => "active",
            RisMode::Passive => "passive",
            RisMode::Absent => "absent",
        }
    }
}

impl std::fmt::Display for RisMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RisMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(RisMode::Active),
            "passive" => Ok(RisMode::Passive),
            "absent" | "none" | "noris" => Ok(RisMode::Absent),
            other => Err(Error::InvalidArgument(format!("unknown RIS mode `{other}`"))),
        }
    }
}

/// Configuration and hardware description of the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisState {
    pub mode: RisMode,
    /// Applied phase shifts, radians.
    pub theta: Vec<f64>,
    /// Phase-control resolution in bits.
    pub bits: u32,
    /// Von Mises concentration of the phase noise; `inf` means ideal hardware.
    pub kappa_pn: f64,
    /// Amplifier noise power `sF^2`, watts.
    pub noise_floor: f64,
    /// Per-element DC biasing power, watts.
    pub p_dc: f64,
    /// Per-element switch and control power, watts.
    pub p_sw: f64,
    /// Amplifier efficiency.
    pub amp_eff: f64,
    /// Forces the amplification factor instead of deriving it from the
    /// power constraint. Only meaningful in active mode.
    pub eta_override: Option<f64>,
}

impl RisState {
    /// Zero phases and the reference hardware: 3-bit control, phase-noise
    /// concentration 4, -70 dBm amplifier noise, -5 dBm DC and -10 dBm
    /// switching power per element, efficiency 0.8.
    pub fn new(mode: RisMode, n_elements: usize) -> Self {
        Self {
            mode,
            theta: vec![0.0; n_elements],
            bits: 3,
            kappa_pn: 4.0,
            noise_floor: dbm_to_watt(-70.0),
            p_dc: dbm_to_watt(-5.0),
            p_sw: dbm_to_watt(-10.0),
            amp_eff: 0.8,
            eta_override: None,
        }
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_kappa_pn(mut self, kappa_pn: f64) -> Self {
        self.kappa_pn = kappa_pn;
        self
    }

    /// `kappa = I1(kappa_pn) / I0(kappa_pn)`.
    pub fn phase_noise_gain(&self) -> f64 {
        bessel_ratio(self.kappa_pn).expect("kappa_pn validated as >= 0")
    }

    /// Amplifier noise power actually present in the received signal.
    pub fn effective_noise_floor(&self) -> f64 {
        match self.mode {
            RisMode::Active => self.noise_floor,
            _ => 0.0,
        }
    }

    pub fn validate(&self, n_elements: usize) -> Result<()> {
        if self.theta.len() != n_elements {
            return Err(Error::InvalidArgument(format!(
                "{} phases for {n_elements} elements",
                self.theta.len()
            )));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("phases must be finite".into()));
        }
        if !(self.kappa_pn >= 0.0) {
            return Err(Error::InvalidArgument(format!("kappa_pn = {}", self.kappa_pn)));
        }
        for (name, v) in [("noise_floor", self.noise_floor), ("p_dc", self.p_dc), ("p_sw", self.p_sw)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.amp_eff > 0.0 && self.amp_eff <= 1.0) {
            return Err(Error::InvalidArgument(format!("amp_eff must be in (0, 1], got {}", self.amp_eff)));
        }
        Ok(())
    }
}

/// The `2^bits` allowed phase values `0, 2 pi / 2^B, ...`.
pub fn phase_grid(bits: u32) -> Vec<f64> {
    let levels = 1usize << bits;
    (0..levels).map(|l| 2.0 * PI * l as f64 / levels as f64).collect()
}

/// How the overall budget `P` divides between the transmitters and the
/// RIS amplifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSplit {
    /// Budget for `sum_i p_i`.
    pub transmit: f64,
    /// RIS amplification power `P_R` (zero unless active).
    pub amp_power: f64,
}

/// Splits `total` so that the mode's power accounting holds with equality.
///
/// * active: `transmit = rho (P - N(P_DC + P_SW))`,
///   `P_R = eps (1 - rho)(P - N(P_DC + P_SW))`;
/// * passive: `transmit = P - N P_SW`;
/// * absent: `transmit = P`.
///
/// Returns `None` when the budget does not cover the RIS hardware.
pub fn budget_split(mode: RisMode, total: f64, n_elements: usize, ris: &RisState, rho: f64) -> Option<BudgetSplit> {
    let n = n_elements as f64;
    match mode {
        RisMode::Active => {
            let avail = total - n * (ris.p_dc + ris.p_sw);
            (avail > 0.0).then(|| BudgetSplit {
                transmit: rho * avail,
                amp_power: ris.amp_eff * (1.0 - rho) * avail,
            })
        }
        RisMode::Passive => {
            let avail = total - n * ris.p_sw;
            (avail > 0.0).then_some(BudgetSplit {
                transmit: avail,
                amp_power: 0.0,
            })
        }
        RisMode::Absent => (total > 0.0).then_some(BudgetSplit {
            transmit: total,
            amp_power: 0.0,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    /// Per-pair transmit powers, watts.
    pub p: Vec<f64>,
    /// RIS amplification power `P_R`, watts.
    pub amp_power: f64,
    /// Overall budget `P`, watts.
    pub total_budget: f64,
    /// Per-user cap.
    pub p_max: f64,
}

impl PowerAllocation {
    /// Equal transmit powers that exhaust the split's transmit budget.
    pub fn equal(k: usize, split: BudgetSplit, total_budget: f64) -> Self {
        Self {
            p: vec![split.transmit / k as f64; k],
            amp_power: split.amp_power,
            total_budget,
            p_max: split.transmit,
        }
    }

    pub fn transmit_sum(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.p.len() != k {
            return Err(Error::InvalidArgument(format!("{} powers for {k} pairs", self.p.len())));
        }
        if self.p.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidArgument("transmit powers must be finite and >= 0".into()));
        }
        if !(self.amp_power >= 0.0) {
            return Err(Error::InvalidArgument("amplification power must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    ClosedForm,
    MonteCarlo,
    AsymptoticRician,
    AsymptoticPower,
}

/// Per-user and sum rates in bits/s/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_user: Vec<f64>,
    pub sum: f64,
    pub mode: RisMode,
    pub method: RateMethod,
}

impl RateReport {
    pub fn new(per_user: Vec<f64>, mode: RisMode, method: RateMethod) -> Self {
        let sum = per_user.iter().sum();
        Self {
            per_user,
            sum,
            mode,
            method,
        }
    }

    pub fn zero(k: usize, mode: RisMode, method: RateMethod) -> Self {
        Self::new(vec![0.0; k], mode, method)
    }
}

/// Lemma-style amplification factor that meets the RIS power constraint in
/// expectation: `eta = sqrt(P_R / (N (sum_i P_i alpha_i + sF^2)))`.
pub fn amplification_factor(alloc: &PowerAllocation, csi: &StatisticalCsi, ris: &RisState) -> Result<f64> {
    if ris.mode != RisMode::Active {
        return Err(Error::ModeMismatch {
            expected: "active".into(),
            got: ris.mode.to_string(),
        });
    }
    if !(alloc.amp_power > 0.0) {
        return Err(Error::Amplification("P_R must be positive in active mode".into()));
    }
    let incident: f64 = alloc
        .p
        .iter()
        .zip(&csi.pairs)
        .map(|(p, s)| p * s.alpha)
        .sum::<f64>()
        + ris.noise_floor;
    if !(incident > 0.0) {
        return Err(Error::Amplification("no incident power (all P_i alpha_i and sF^2 are zero)".into()));
    }
    Ok((alloc.amp_power / (csi.n_elements() as f64 * incident)).sqrt())
}

/// Amplification actually applied: the override if set, the constraint
/// value in active mode, 1 otherwise.
pub fn effective_eta(alloc: &PowerAllocation, csi: &StatisticalCsi, ris: &RisState) -> Result<f64> {
    match ris.mode {
        RisMode::Active => match ris.eta_override {
            Some(eta) => Ok(eta),
            None => amplification_factor(alloc, csi, ris),
        },
        RisMode::Passive => Ok(1.0),
        RisMode::Absent => Ok(0.0),
    }
}

/// `sum_n exp(j(theta_n + aoa_i^n + aod_j^n))`, the coherent LoS cascade sum.
fn los_cascade_sum(theta: &[f64], aoa: &[f64], aod: &[f64]) -> Complex64 {
    theta
        .iter()
        .zip(aoa)
        .zip(aod)
        .map(|((t, a), b)| Complex64::from_polar(1.0, t + a + b))
        .sum()
}

/// `2 k^2 sum_{q<p} w_pq cos(psi_p - psi_q)`.
fn weighted_pair_sum(psi: &[f64], weight: impl Fn(usize, usize) -> f64, kappa: f64) -> f64 {
    let u: Vec<Complex64> = psi.iter().map(|&x| Complex64::from_polar(1.0, x)).collect();
    let mut acc = 0.0;
    for p in 1..u.len() {
        let mut row = 0.0;
        for q in 0..p {
            let w = weight(p, q);
            if w != 0.0 {
                // Re(u_p conj(u_q)) = cos(psi_p - psi_q)
                row += w * (u[p].re * u[q].re + u[p].im * u[q].im);
            }
        }
        acc += row;
    }
    2.0 * kappa * kappa * acc
}

/// `Gamma_ij = 2 k^2 sum_{q<p} cos(theta_p - theta_q + dphi_pq)` where
/// `dphi` is the LoS phase difference of the `i -> RIS -> j` cascade.
///
/// Evaluated through `2 sum_{q<p} cos(x_p - x_q) = |sum_n e^{j x_n}|^2 - N`.
pub fn gamma_term(ris: &RisState, csi: &StatisticalCsi, i: usize, j: usize) -> f64 {
    let kappa = ris.phase_noise_gain();
    let s = los_cascade_sum(&ris.theta, csi.aoa_phase(i), csi.aod_phase(j));
    kappa * kappa * (s.norm_sqr() - csi.n_elements() as f64)
}

/// `L_{x,y} = 2 k^2 sum_{q<p} r_pq cos(theta_p - theta_q + dphi_pq(x, y))`
/// for a single UPA direction `(x, y) = (azimuth, elevation)`.
pub fn l_term(ris: &RisState, csi: &StatisticalCsi, az: f64, el: f64) -> f64 {
    let steer = steering_phases(&csi.geometry, az, el);
    l_term_from_phases(ris, csi, &steer)
}

fn l_term_from_phases(ris: &RisState, csi: &StatisticalCsi, steer: &[f64]) -> f64 {
    if csi.is_uncorrelated() {
        return 0.0;
    }
    let psi: Vec<f64> = ris.theta.iter().zip(steer).map(|(t, s)| t + s).collect();
    weighted_pair_sum(&psi, |p, q| csi.corr[(p, q)], ris.phase_noise_gain())
}

/// `L_0 = 2 k^2 sum_{q<p} r_pq^2 cos(theta_p - theta_q)`.
pub fn l0_term(ris: &RisState, csi: &StatisticalCsi) -> f64 {
    if csi.is_uncorrelated() {
        return 0.0;
    }
    weighted_pair_sum(&ris.theta, |p, q| csi.corr[(p, q)].powi(2), ris.phase_noise_gain())
}

/// `Upsilon_ij = sum_n cos(theta_n + aoa_i^n + aod_j^n)`.
pub fn upsilon_term(ris: &RisState, csi: &StatisticalCsi, i: usize, j: usize) -> f64 {
    los_cascade_sum(&ris.theta, csi.aoa_phase(i), csi.aod_phase(j)).re
}

/// Cross-term weight `c_ij = k sigma_ij sqrt(tau_ij gA_i gB_j g_ij / (1 + g_ij))`.
pub fn c_term(ris: &RisState, csi: &StatisticalCsi, i: usize, j: usize) -> f64 {
    if !csi.has_direct_links() {
        return 0.0;
    }
    let (a, b) = (&csi.pairs[i], &csi.pairs[j]);
    let tau_gg = a.alpha * b.beta * los_fraction(a.gamma_a) * los_fraction(b.gamma_b);
    ris.phase_noise_gain() * csi.direct.sigma[(i, j)] * (tau_gg * los_fraction(csi.direct.rician[(i, j)])).sqrt()
}

fn omega_from_parts(csi: &StatisticalCsi, i: usize, j: usize, gamma: f64, l_aoa: f64, l_aod: f64, l0: f64) -> f64 {
    let (a, b) = (&csi.pairs[i], &csi.pairs[j]);
    let ab = a.alpha * b.beta;
    let (la, na) = (los_fraction(a.gamma_a), nlos_fraction(a.gamma_a));
    let (lb, nb) = (los_fraction(b.gamma_b), nlos_fraction(b.gamma_b));
    // tau * gA * gB = ab la lb, tau * gB = ab na lb, tau * gA = ab la nb, tau = ab na nb
    ab * csi.n_elements() as f64 + ab * (la * lb * gamma + na * lb * l_aod + la * nb * l_aoa + na * nb * l0)
}

/// `Omega_ij = E|g_B,j^T Theta Phi g_A,i|^2` per unit amplification.
///
/// The scattered-A / LoS-B term uses the receiver-`j` departure angles.
pub fn omega_term(ris: &RisState, csi: &StatisticalCsi, i: usize, j: usize) -> f64 {
    let gamma = gamma_term(ris, csi, i, j);
    let l_aoa = l_term_from_phases(ris, csi, csi.aoa_phase(i));
    let l_aod = l_term_from_phases(ris, csi, csi.aod_phase(j));
    let l0 = l0_term(ris, csi);
    omega_from_parts(csi, i, j, gamma, l_aoa, l_aod, l0)
}

/// All `K x K` second-moment ingredients for one RIS configuration.
#[derive(Debug, Clone)]
pub struct SecondMoments {
    /// `omega[(i, j)]`.
    pub omega: DMatrix<f64>,
    pub upsilon: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

impl SecondMoments {
    pub fn compute(csi: &StatisticalCsi, ris: &RisState) -> Self {
        let k = csi.n_pairs();
        let kappa = ris.phase_noise_gain();
        let n = csi.n_elements() as f64;
        let l0 = l0_term(ris, csi);
        let l_aoa: Vec<f64> = (0..k).map(|i| l_term_from_phases(ris, csi, csi.aoa_phase(i))).collect();
        let l_aod: Vec<f64> = (0..k).map(|j| l_term_from_phases(ris, csi, csi.aod_phase(j))).collect();
        let mut omega = DMatrix::zeros(k, k);
        let mut upsilon = DMatrix::zeros(k, k);
        let mut gamma = DMatrix::zeros(k, k);
        let mut c = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let s = los_cascade_sum(&ris.theta, csi.aoa_phase(i), csi.aod_phase(j));
                let g = kappa * kappa * (s.norm_sqr() - n);
                gamma[(i, j)] = g;
                upsilon[(i, j)] = s.re;
                omega[(i, j)] = omega_from_parts(csi, i, j, g, l_aoa[i], l_aod[j], l0);
                c[(i, j)] = c_term(ris, csi, i, j);
            }
        }
        Self {
            omega,
            upsilon,
            c,
            gamma,
        }
    }

    /// Moments of the strong-LoS limit: `Omega -> alpha beta (N + Gamma)`,
    /// `c -> k sigma sqrt(alpha beta)`.
    pub fn rician_limit(csi: &StatisticalCsi, ris: &RisState) -> Self {
        let k = csi.n_pairs();
        let kappa = ris.phase_noise_gain();
        let n = csi.n_elements() as f64;
        let mut m = Self {
            omega: DMatrix::zeros(k, k),
            upsilon: DMatrix::zeros(k, k),
            c: DMatrix::zeros(k, k),
            gamma: DMatrix::zeros(k, k),
        };
        for i in 0..k {
            for j in 0..k {
                let s = los_cascade_sum(&ris.theta, csi.aoa_phase(i), csi.aod_phase(j));
                let g = kappa * kappa * (s.norm_sqr() - n);
                let ab = csi.pairs[i].alpha * csi.pairs[j].beta;
                m.gamma[(i, j)] = g;
                m.upsilon[(i, j)] = s.re;
                m.omega[(i, j)] = ab * (n + g);
                if csi.has_direct_links() {
                    m.c[(i, j)] = kappa * csi.direct.sigma[(i, j)] * ab.sqrt();
                }
            }
        }
        m
    }

    fn zeros(k: usize) -> Self {
        Self {
            omega: DMatrix::zeros(k, k),
            upsilon: DMatrix::zeros(k, k),
            c: DMatrix::zeros(k, k),
            gamma: DMatrix::zeros(k, k),
        }
    }

    /// `E|g_ij|^2 = eta^2 Omega_ij + 2 eta c_ij Upsilon_ij + sigma_ij^2`.
    pub fn link_power(&self, csi: &StatisticalCsi, eta: f64, i: usize, j: usize) -> f64 {
        let sigma2 = csi.direct.sigma[(i, j)].powi(2);
        eta * eta * self.omega[(i, j)] + 2.0 * eta * self.c[(i, j)] * self.upsilon[(i, j)] + sigma2
    }
}

/// Ratio-of-expectations rate for every receiver.
fn rates_from_moments(m: &SecondMoments, csi: &StatisticalCsi, p: &[f64], eta: f64, noise_floor: f64) -> Vec<f64> {
    let k = csi.n_pairs();
    let n = csi.n_elements() as f64;
    (0..k)
        .map(|j| {
            let signal = p[j] * m.link_power(csi, eta, j, j);
            let interference: f64 = (0..k)
                .filter(|&i| i != j)
                .map(|i| p[i] * m.link_power(csi, eta, i, j))
                .sum();
            let dynamic = eta * eta * n * csi.pairs[j].beta * noise_floor;
            let denom = interference + dynamic + csi.noise[j];
            if signal <= 0.0 {
                0.0
            } else {
                (1.0 + signal / denom).log2()
            }
        })
        .collect()
}

fn check_inputs(alloc: &PowerAllocation, csi: &StatisticalCsi, ris: &RisState) -> Result<()> {
    alloc.validate(csi.n_pairs())?;
    ris.validate(csi.n_elements())
}

fn expect_mode(ris: &RisState, mode: RisMode) -> Result<()> {
    if ris.mode != mode {
        return Err(Error::ModeMismatch {
            expected: mode.to_string(),
            got: ris.mode.to_string(),
        });
    }
    Ok(())
}

/// Approximate ergodic rates with an active RIS.
pub fn ergodic_rate_active(alloc: &PowerAllocation, csi: &StatisticalCsi, ris: &RisState) -> Result<RateReport> {
    expect_mode(ris, RisMode::Active)?;
    check_inputs(alloc, csi, ris)?;
    let eta = effective_eta(alloc, csi, ris)?;
    let m = SecondMoments::compute(csi, ris);
    let rates = rates_from_moments(&m, csi, &alloc.p, eta, ris.noise_floor);
    Ok(RateReport::new(rates, RisMode::Active, RateMethod::ClosedForm))
}

/// Approximate ergodic rates with a passive RIS (`eta = 1`, no amplifier noise).
pub fn ergodic_rate_passive(alloc: &PowerAllocation, csi: &StatisticalCsi, ris: &RisState) -> Result<RateReport> {
    expect_mode(ris, RisMode::Passive)?;
    check_inputs(alloc, csi, ris)?;
    let m = SecondMoments::compute(csi, ris);
    let rates = rates_from_moments(&m, csi, &alloc.p, 1.0, 0.0);
    Ok(RateReport::new(rates, RisMode::Passive, RateMethod::ClosedForm))
}

/// Ergodic rates without a surface: direct links only.
pub fn ergodic_rate_noris(alloc: &PowerAllocation, csi: &StatisticalCsi) -> Result<RateReport> {
    alloc.validate(csi.n_pairs())?;
    let m = SecondMoments::zeros(csi.n_pairs());
    let rates = rates_from_moments(&m, csi, &alloc.p, 0.0, 0.0);
    Ok(RateReport::new(rates, RisMode::Absent, RateMethod::ClosedForm))
}

/// Dispatches on `ris.mode`.
pub fn ergodic_rate(alloc: &PowerAllocation, csi: &StatisticalCsi, ris: &RisState) -> Result<RateReport> {
    match ris.mode {
        RisMode::Active => ergodic_rate_active(alloc, csi, ris),
        RisMode::Passive => ergodic_rate_passive(alloc, csi, ris),
        RisMode::Absent => ergodic_rate_noris(alloc, csi),
    }
}

/// Rates in the limit where every Rician factor grows without bound.
/// Phase dependence through `Gamma` and `Upsilon` is kept.
pub fn asymptotic_rate_rician(alloc: &PowerAllocation, csi: &StatisticalCsi, ris: &RisState) -> Result<RateReport> {
    check_inputs(alloc, csi, ris)?;
    let m = SecondMoments::rician_limit(csi, ris);
    let rates = match ris.mode {
        RisMode::Active => {
            let eta = effective_eta(alloc, csi, ris)?;
            rates_from_moments(&m, csi, &alloc.p, eta, ris.noise_floor)
        }
        RisMode::Passive => rates_from_moments(&m, csi, &alloc.p, 1.0, 0.0),
        RisMode::Absent => return ergodic_rate_noris(alloc, csi),
    };
    Ok(RateReport::new(rates, ris.mode, RateMethod::AsymptoticRician))
}

/// High-power limit without direct links:
/// `log2(1 + Omega_jj / sum_{i != j} Omega_ij)`, independent of powers and
/// of the amplification.
pub fn high_power_limit(csi: &StatisticalCsi, ris: &RisState) -> Result<RateReport> {
    let k = csi.n_pairs();
    if k < 2 {
        return Err(Error::UnboundedRate(k));
    }
    if csi.has_direct_links() {
        return Err(Error::DirectLinksPresent);
    }
    ris.validate(csi.n_elements())?;
    let m = SecondMoments::compute(csi, ris);
    let rates = (0..k)
        .map(|j| {
            let interference: f64 = (0..k).filter(|&i| i != j).map(|i| m.omega[(i, j)]).sum();
            (1.0 + m.omega[(j, j)] / interference).log2()
        })
        .collect();
    Ok(RateReport::new(rates, ris.mode, RateMethod::AsymptoticPower))
}

fn check_single_pair(csi: &StatisticalCsi) -> Result<()> {
    if csi.n_pairs() != 1 {
        return Err(Error::ScalingPrecondition(format!("K = 1 (got {})", csi.n_pairs())));
    }
    if !csi.is_uncorrelated() {
        return Err(Error::ScalingPrecondition("an uncorrelated surface (R = I)".into()));
    }
    if csi.has_direct_links() {
        return Err(Error::DirectLinksPresent);
    }
    Ok(())
}

/// Single-pair rate with blocked direct link and uncorrelated surface:
/// `log2(1 + p P_R W / (N P_R beta sF^2 + N (p alpha + sF^2) s^2))`,
/// `W = alpha beta N + tau gA gB Gamma`.
pub fn single_pair_rate(p: f64, amp_power: f64, ris: &RisState, csi: &StatisticalCsi) -> Result<f64> {
    check_single_pair(csi)?;
    ris.validate(csi.n_elements())?;
    let s = &csi.pairs[0];
    let n = csi.n_elements() as f64;
    let tau_gg = s.alpha * s.beta * los_fraction(s.gamma_a) * los_fraction(s.gamma_b);
    let omega = s.alpha * s.beta * n + tau_gg * gamma_term(ris, csi, 0, 0);
    let sf2 = ris.noise_floor;
    let noise = csi.noise[0];
    let snr = p * amp_power * omega / (n * amp_power * s.beta * sf2 + n * (p * s.alpha + sf2) * noise);
    Ok((1.0 + snr).log2())
}

/// Limit of [`single_pair_rate`] with `p = e_u / N`, optimal phases and
/// ideal hardware as `N` grows:
/// `log2(1 + e_u P_R tau gA gB / (P_R beta sF^2 + sF^2 s^2))`.
pub fn power_scaling_limit(e_u: f64, amp_power: f64, ris: &RisState, csi: &StatisticalCsi) -> Result<f64> {
    check_single_pair(csi)?;
    if ris.phase_noise_gain() != 1.0 {
        return Err(Error::ScalingPrecondition("ideal phase control (kappa = 1)".into()));
    }
    let s = &csi.pairs[0];
    let tau_gg = s.alpha * s.beta * los_fraction(s.gamma_a) * los_fraction(s.gamma_b);
    let sf2 = ris.noise_floor;
    let snr = e_u * amp_power * tau_gg / (amp_power * s.beta * sf2 + sf2 * csi.noise[0]);
    Ok((1.0 + snr).log2())
}

/// Phases that co-phase the LoS cascade of pair `pair`:
/// `theta_n = -(aoa_n + aod_n)`, with the free constant set to zero.
pub fn optimal_phase_single_pair(csi: &StatisticalCsi, pair: usize) -> Vec<f64> {
    csi.aoa_phase(pair)
        .iter()
        .zip(csi.aod_phase(pair))
        .map(|(a, b)| -(a + b))
        .collect()
}
