//! Statistical channel description and channel realizations.
//!
//! The RIS is a uniform planar array of `n_h x n_v` elements. Element `n`
//! (zero based) sits at horizontal index `n % n_h` and vertical index
//! `n / n_h`. Both reflecting hops are correlated Rician channels whose
//! scattered part has the isotropic sinc correlation across elements; direct
//! transmitter-receiver links are scalar Rician.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{db_to_linear, psd_sqrt, sample_von_mises, sinc, PsdSqrt, RngStream};

pub type Point3 = [f64; 3];

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemGeometry {
    pub n_h: usize,
    pub n_v: usize,
    pub d_h: f64,
    pub d_v: f64,
    pub wavelength: f64,
    pub ris_position: Point3,
    pub tx_positions: Vec<Point3>,
    pub rx_positions: Vec<Point3>,
}

impl SystemGeometry {
    /// Geometry with quarter-wavelength spacing in both directions.
    pub fn quarter_wave(
        n_h: usize,
        n_v: usize,
        wavelength: f64,
        ris_position: Point3,
        tx_positions: Vec<Point3>,
        rx_positions: Vec<Point3>,
    ) -> Self {
        Self {
            n_h,
            n_v,
            d_h: wavelength / 4.0,
            d_v: wavelength / 4.0,
            wavelength,
            ris_position,
            tx_positions,
            rx_positions,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn n_pairs(&self) -> usize {
        self.tx_positions.len()
    }

    /// Horizontal and vertical grid index of element `n` (zero based).
    pub fn element_index(&self, n: usize) -> (usize, usize) {
        (n % self.n_h, n / self.n_h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_h == 0 || self.n_v == 0 {
            return Err(Error::InvalidArgument("RIS grid must be at least 1x1".into()));
        }
        for (name, v) in [("d_h", self.d_h), ("d_v", self.d_v), ("wavelength", self.wavelength)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tx_positions.is_empty() || self.tx_positions.len() != self.rx_positions.len() {
            return Err(Error::InvalidArgument(format!(
                "need K >= 1 transmitters and as many receivers (got {} and {})",
                self.tx_positions.len(),
                self.rx_positions.len()
            )));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle at fixed height in which users are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementArea {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub height: f64,
}

impl Default for PlacementArea {
    fn default() -> Self {
        Self {
            x: [0.0, 60.0],
            y: [0.0, 25.0],
            height: 1.6,
        }
    }
}

/// Drops `k` transmitters and `k` receivers independently and uniformly in
/// the area. Returns `(tx, rx)`.
pub fn place_pairs_uniform(k: usize, area: &PlacementArea, seed: u64) -> (Vec<Point3>, Vec<Point3>) {
    let mut rng = RngStream::new(seed, 0x706c_6163_6500);
    let point = |rng: &mut RngStream| {
        [
            rng.uniform_range(area.x[0], area.x[1]),
            rng.uniform_range(area.y[0], area.y[1]),
            area.height,
        ]
    };
    let mut tx = Vec::with_capacity(k);
    let mut rx = Vec::with_capacity(k);
    for _ in 0..k {
        tx.push(point(&mut rng));
        rx.push(point(&mut rng));
    }
    (tx, rx)
}

/// Isotropic-scattering correlation across RIS elements:
/// `r_pq = sinc(2 |pos_p - pos_q| / lambda)`.
pub fn correlation_matrix(geometry: &SystemGeometry) -> DMatrix<f64> {
    let n = geometry.n_elements();
    DMatrix::from_fn(n, n, |p, q| {
        if p == q {
            return 1.0;
        }
        let (hp, vp) = geometry.element_index(p);
        let (hq, vq) = geometry.element_index(q);
        let dh = (hp as f64 - hq as f64) * geometry.d_h;
        let dv = (vp as f64 - vq as f64) * geometry.d_v;
        sinc(2.0 * (dh * dh + dv * dv).sqrt() / geometry.wavelength)
    })
}

/// Per-element phase of the UPA response toward `(az, el)`.
pub fn steering_phases(geometry: &SystemGeometry, az: f64, el: f64) -> Vec<f64> {
    let k = 2.0 * PI / geometry.wavelength;
    let horiz = geometry.d_h * az.sin() * el.cos();
    let vert = geometry.d_v * el.sin();
    (0..geometry.n_elements())
        .map(|n| {
            let (h, v) = geometry.element_index(n);
            k * (h as f64 * horiz + v as f64 * vert)
        })
        .collect()
}

pub fn steering_vector(geometry: &SystemGeometry, az: f64, el: f64) -> Vec<Complex64> {
    steering_phases(geometry, az, el)
        .into_iter()
        .map(|p| Complex64::from_polar(1.0, p))
        .collect()
}

/// Linear gain of `PL = -30 - 10 * exponent * log10(d)` dB.
pub fn path_loss(distance_m: f64, exponent: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::NonPositiveDistance(distance_m));
    }
    let db = -30.0 - 10.0 * exponent * distance_m.log10();
    Ok(10f64.powf(db / 10.0))
}

/// Large-scale statistics of the reflecting hops of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    /// `U_A,i -> RIS` large-scale gain.
    pub alpha: f64,
    /// `RIS -> U_B,i` large-scale gain.
    pub beta: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub aoa_az: f64,
    pub aoa_el: f64,
    pub aod_az: f64,
    pub aod_el: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairAngles {
    pub aoa_az: f64,
    pub aoa_el: f64,
    pub aod_az: f64,
    pub aod_el: f64,
}

/// Direct-link statistics; entry `(i, j)` is the link `U_A,i -> U_B,j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectLinkStats {
    /// Amplitude `sigma_ij`; the large-scale power gain is `sigma_ij^2`.
    pub sigma: DMatrix<f64>,
    pub rician: DMatrix<f64>,
}

impl DirectLinkStats {
    pub fn blocked(k: usize) -> Self {
        Self {
            sigma: DMatrix::zeros(k, k),
            rician: DMatrix::zeros(k, k),
        }
    }

    /// LoS part `sigma sqrt(gamma / (1 + gamma))`; real by construction.
    pub fn los(&self, i: usize, j: usize) -> f64 {
        let g = self.rician[(i, j)];
        self.sigma[(i, j)] * los_fraction(g).sqrt()
    }

    /// Variance of the scattered part, `sigma^2 / (1 + gamma)`.
    pub fn nlos_variance(&self, i: usize, j: usize) -> f64 {
        self.sigma[(i, j)].powi(2) * nlos_fraction(self.rician[(i, j)])
    }
}

/// `gamma / (1 + gamma)`, exact for infinite `gamma`.
pub fn los_fraction(gamma: f64) -> f64 {
    if gamma.is_infinite() {
        1.0
    } else {
        gamma / (1.0 + gamma)
    }
}

/// `1 / (1 + gamma)`.
pub fn nlos_fraction(gamma: f64) -> f64 {
    1.0 / (1.0 + gamma)
}

/// Rician factors (linear) of the three link types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicianFactors {
    pub tx_ris: f64,
    pub ris_rx: f64,
    pub direct: f64,
}

impl RicianFactors {
    pub fn uniform(linear: f64) -> Self {
        Self {
            tx_ris: linear,
            ris_rx: linear,
            direct: linear,
        }
    }

    pub fn uniform_db(db: f64) -> Self {
        Self::uniform(db_to_linear(db))
    }
}

/// How AoA/AoD angles are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum AngleSource {
    Supplied(Vec<PairAngles>),
    /// All four angles of every pair uniform on `[0, 2 pi)`.
    Random { seed: u64 },
}

impl AngleSource {
    pub fn resolve(&self, k: usize) -> Result<Vec<PairAngles>> {
        match self {
            AngleSource::Supplied(a) => {
                if a.len() != k {
                    return Err(Error::InvalidArgument(format!(
                        "{} angle sets supplied for {k} pairs",
                        a.len()
                    )));
                }
                Ok(a.clone())
            }
            AngleSource::Random { seed } => {
                let mut rng = RngStream::new(*seed, 0x616e_676c_6500);
                Ok((0..k)
                    .map(|_| {
                        let mut draw = || rng.uniform_range(0.0, 2.0 * PI);
                        PairAngles {
                            aoa_az: draw(),
                            aoa_el: draw(),
                            aod_az: draw(),
                            aod_el: draw(),
                        }
                    })
                    .collect())
            }
        }
    }
}

/// Propagation and receiver parameters used to build [`StatisticalCsi`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub reflect_exponent: f64,
    pub direct_exponent: f64,
    pub rician: RicianFactors,
    /// Whether the direct `U_A,i -> U_B,j` links exist (false = blocked).
    pub direct_links: bool,
    /// Receiver noise power `sigma_j^2` in watts, same for all receivers.
    pub rx_noise: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            reflect_exponent: 2.2,
            direct_exponent: 3.8,
            rician: RicianFactors::uniform_db(10.0),
            direct_links: true,
            rx_noise: 1e-11,
        }
    }
}

/// Everything the optimizer knows about the channels.
#[derive(Debug, Clone)]
pub struct StatisticalCsi {
    pub geometry: SystemGeometry,
    pub pairs: Vec<PairStats>,
    pub direct: DirectLinkStats,
    pub corr: DMatrix<f64>,
    pub corr_sqrt: PsdSqrt,
    /// Receiver noise powers `sigma_j^2`.
    pub noise: Vec<f64>,
    direct_links: bool,
    uncorrelated: bool,
    aoa_phase: Vec<Vec<f64>>,
    aod_phase: Vec<Vec<f64>>,
}

impl StatisticalCsi {
    /// Assembles a CSI record from explicit statistics. Pass `None` for
    /// `direct` when the direct links are blocked.
    pub fn from_parts(
        geometry: SystemGeometry,
        pairs: Vec<PairStats>,
        direct: Option<DirectLinkStats>,
        noise: Vec<f64>,
    ) -> Result<Self> {
        geometry.validate()?;
        let k = geometry.n_pairs();
        if pairs.len() != k || noise.len() != k {
            return Err(Error::InvalidArgument(format!(
                "K = {k} but {} pair stats and {} noise entries",
                pairs.len(),
                noise.len()
            )));
        }
        for p in &pairs {
            let ok = p.alpha >= 0.0 && p.beta >= 0.0 && p.gamma_a >= 0.0 && p.gamma_b >= 0.0;
            let finite = [p.aoa_az, p.aoa_el, p.aod_az, p.aod_el].iter().all(|a| a.is_finite());
            if !ok || !finite {
                return Err(Error::InvalidArgument(format!("invalid pair stats {p:?}")));
            }
        }
        let direct_links = direct.is_some();
        let direct = direct.unwrap_or_else(|| DirectLinkStats::blocked(k));
        if direct.sigma.shape() != (k, k) || direct.rician.shape() != (k, k) {
            return Err(Error::InvalidArgument("direct-link stats must be K x K".into()));
        }
        if direct.sigma.iter().chain(direct.rician.iter()).any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidArgument("direct-link stats must be >= 0".into()));
        }
        let corr = correlation_matrix(&geometry);
        let corr_sqrt = psd_sqrt(&corr)?;
        let aoa_phase = pairs
            .iter()
            .map(|p| steering_phases(&geometry, p.aoa_az, p.aoa_el))
            .collect();
        let aod_phase = pairs
            .iter()
            .map(|p| steering_phases(&geometry, p.aod_az, p.aod_el))
            .collect();
        Ok(Self {
            geometry,
            pairs,
            direct,
            corr,
            corr_sqrt,
            noise,
            direct_links,
            uncorrelated: false,
            aoa_phase,
            aod_phase,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_elements(&self) -> usize {
        self.geometry.n_elements()
    }

    pub fn has_direct_links(&self) -> bool {
        self.direct_links
    }

    pub fn is_uncorrelated(&self) -> bool {
        self.uncorrelated
    }

    /// Replaces the scattering correlation by the identity.
    pub fn uncorrelated(mut self) -> Self {
        let n = self.n_elements();
        self.corr = DMatrix::identity(n, n);
        self.corr_sqrt = psd_sqrt(&self.corr).expect("identity is PSD");
        self.uncorrelated = true;
        self
    }

    /// Blocks every direct link.
    pub fn without_direct_links(mut self) -> Self {
        self.direct = DirectLinkStats::blocked(self.n_pairs());
        self.direct_links = false;
        self
    }

    /// Overrides all Rician factors (reflecting and direct).
    pub fn with_rician(mut self, rician: RicianFactors) -> Self {
        for p in &mut self.pairs {
            p.gamma_a = rician.tx_ris;
            p.gamma_b = rician.ris_rx;
        }
        self.direct.rician.fill(rician.direct);
        self
    }

    /// Phase of `[g_bar_A,i]_n`.
    pub fn aoa_phase(&self, i: usize) -> &[f64] {
        &self.aoa_phase[i]
    }

    /// Phase of `[g_bar_B,j]_n`.
    pub fn aod_phase(&self, j: usize) -> &[f64] {
        &self.aod_phase[j]
    }

    pub fn los_a(&self, i: usize) -> Vec<Complex64> {
        self.aoa_phase[i].iter().map(|&p| Complex64::from_polar(1.0, p)).collect()
    }

    pub fn los_b(&self, j: usize) -> Vec<Complex64> {
        self.aod_phase[j].iter().map(|&p| Complex64::from_polar(1.0, p)).collect()
    }
}

/// Builds the statistical CSI from geometry: large-scale gains from the
/// path-loss model over 3-D distances, angles from `angles`, correlation from
/// the array layout.
pub fn build_statistical_csi(
    geometry: &SystemGeometry,
    params: &ChannelParams,
    angles: &AngleSource,
) -> Result<StatisticalCsi> {
    geometry.validate()?;
    let k = geometry.n_pairs();
    let angles = angles.resolve(k)?;
    let ris = &geometry.ris_position;
    let mut pairs = Vec::with_capacity(k);
    for (i, a) in angles.iter().enumerate() {
        pairs.push(PairStats {
            alpha: path_loss(distance(&geometry.tx_positions[i], ris), params.reflect_exponent)?,
            beta: path_loss(distance(ris, &geometry.rx_positions[i]), params.reflect_exponent)?,
            gamma_a: params.rician.tx_ris,
            gamma_b: params.rician.ris_rx,
            aoa_az: a.aoa_az,
            aoa_el: a.aoa_el,
            aod_az: a.aod_az,
            aod_el: a.aod_el,
        });
    }
    let direct = if params.direct_links {
        let mut sigma = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let d = distance(&geometry.tx_positions[i], &geometry.rx_positions[j]);
                sigma[(i, j)] = path_loss(d, params.direct_exponent)?.sqrt();
            }
        }
        Some(DirectLinkStats {
            sigma,
            rician: DMatrix::from_element(k, k, params.rician.direct),
        })
    } else {
        None
    };
    StatisticalCsi::from_parts(geometry.clone(), pairs, direct, vec![params.rx_noise; k])
}

/// One draw of all small-scale quantities.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub g_a: Vec<Vec<Complex64>>,
    pub g_b: Vec<Vec<Complex64>>,
    /// `h[(i, j)]` is the direct link `U_A,i -> U_B,j`.
    pub h: DMatrix<Complex64>,
    pub phase_noise: Vec<f64>,
}

const TAG_G_A: u64 = 1;
const TAG_G_B: u64 = 2;
const TAG_DIRECT: u64 = 3;
const TAG_PHASE_NOISE: u64 = 4;

fn rician_vector(
    gain: f64,
    gamma: f64,
    los_phase: &[f64],
    corr_sqrt: &PsdSqrt,
    rng: &mut RngStream,
    w: &mut [Complex64],
) -> Vec<Complex64> {
    let n = los_phase.len();
    for x in w.iter_mut() {
        *x = rng.complex_normal();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    corr_sqrt.apply(w, &mut out);
    let los = (gain * los_fraction(gamma)).sqrt();
    let nlos = (gain * nlos_fraction(gamma)).sqrt();
    for (o, &p) in out.iter_mut().zip(los_phase) {
        *o = Complex64::from_polar(los, p) + *o * nlos;
    }
    out
}

/// Draws one realization. Each channel uses its own substream of `rng`
/// (tagged by channel kind and index), so the draw is independent of call
/// order.
pub fn sample_realization(csi: &StatisticalCsi, rng: &RngStream, kappa_pn: f64) -> ChannelRealization {
    let k = csi.n_pairs();
    let n = csi.n_elements();
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut g_a = Vec::with_capacity(k);
    let mut g_b = Vec::with_capacity(k);
    for (i, p) in csi.pairs.iter().enumerate() {
        let mut s = rng.substream_path(&[TAG_G_A, i as u64]);
        g_a.push(rician_vector(p.alpha, p.gamma_a, csi.aoa_phase(i), &csi.corr_sqrt, &mut s, &mut w));
        let mut s = rng.substream_path(&[TAG_G_B, i as u64]);
        g_b.push(rician_vector(p.beta, p.gamma_b, csi.aod_phase(i), &csi.corr_sqrt, &mut s, &mut w));
    }
    let mut s = rng.substream(TAG_DIRECT);
    let h = DMatrix::from_fn(k, k, |i, j| {
        let z = s.complex_normal();
        if csi.has_direct_links() {
            Complex64::new(csi.direct.los(i, j), 0.0) + z * csi.direct.nlos_variance(i, j).sqrt()
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let mut s = rng.substream(TAG_PHASE_NOISE);
    let phase_noise = (0..n).map(|_| sample_von_mises(&mut s, kappa_pn)).collect();
    ChannelRealization {
        g_a,
        g_b,
        h,
        phase_noise,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_geometry(n_h: usize, spacing: f64) -> SystemGeometry {
        SystemGeometry {
            n_h,
            n_v: 1,
            d_h: spacing,
            d_v: spacing,
            wavelength: 1.0,
            ris_position: [0.0, 0.0, 0.0],
            tx_positions: vec![[1.0, 0.0, 0.0]],
            rx_positions: vec![[0.0, 1.0, 0.0]],
        }
    }

    fn simple_csi(n_h: usize, n_v: usize, gamma: f64) -> StatisticalCsi {
        let geometry = SystemGeometry::quarter_wave(
            n_h,
            n_v,
            0.125,
            [0.0, 0.0, 0.0],
            vec![[1.0, 0.0, 0.0]],
            vec![[0.0, 1.0, 0.0]],
        );
        let pairs = vec![PairStats {
            alpha: 2.0,
            beta: 0.5,
            gamma_a: gamma,
            gamma_b: gamma,
            aoa_az: 0.7,
            aoa_el: 1.9,
            aod_az: 4.1,
            aod_el: 0.3,
        }];
        let direct = DirectLinkStats {
            sigma: DMatrix::from_element(1, 1, 0.8),
            rician: DMatrix::from_element(1, 1, gamma),
        };
        StatisticalCsi::from_parts(geometry, pairs, Some(direct), vec![1e-3]).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let g = line_geometry(1, 0.25);
        assert_eq!(correlation_matrix(&g), DMatrix::from_element(1, 1, 1.0));

        let r = correlation_matrix(&line_geometry(2, 0.25));
        assert_relative_eq!(r[(0, 1)], 2.0 / PI, epsilon = 1e-15);
        assert_relative_eq!(r[(0, 1)], 0.63662, epsilon = 1e-5);
        assert_eq!(r[(0, 1)], r[(1, 0)]);

        let r = correlation_matrix(&line_geometry(2, 0.5));
        assert!(r[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn correlation_is_psd_up_to_256() {
        for (n_h, n_v) in [(4, 4), (8, 4), (16, 16), (3, 7)] {
            let g = SystemGeometry::quarter_wave(n_h, n_v, 0.125, [0.0; 3], vec![[1.0; 3]], vec![[2.0; 3]]);
            let r = correlation_matrix(&g);
            for p in 0..r.nrows() {
                assert_eq!(r[(p, p)], 1.0);
                for q in 0..r.ncols() {
                    assert_eq!(r[(p, q)], r[(q, p)]);
                    assert!(r[(p, q)].abs() <= 1.0);
                }
            }
            let eig = nalgebra::SymmetricEigen::new(r.clone()).eigenvalues;
            assert!(eig.min() >= -1e-6, "{n_h}x{n_v}: {}", eig.min());
            if n_h * n_v == 16 {
                let f = psd_sqrt(&r).unwrap();
                assert!((f.reconstruct() - &r).amax() <= 1e-8);
            }
        }
    }

    #[test]
    fn steering_examples() {
        let g = SystemGeometry::quarter_wave(4, 2, 0.125, [0.0; 3], vec![[1.0; 3]], vec![[2.0; 3]]);
        for v in steering_vector(&g, 0.0, 0.0) {
            assert_eq!(v, Complex64::new(1.0, 0.0));
        }
        for (az, el) in [(0.3, 1.2), (5.0, -2.0), (PI, PI / 3.0)] {
            let s = steering_vector(&g, az, el);
            assert_eq!(s[0], Complex64::new(1.0, 0.0));
            for v in &s {
                assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-14);
            }
            // negating both angles negates every phase
            let neg = steering_phases(&g, -az, -el);
            for (a, b) in steering_phases(&g, az, el).iter().zip(&neg) {
                assert_relative_eq!(*a, -*b, epsilon = 1e-12);
            }
        }
        let g = line_geometry(2, 0.25);
        let s = steering_vector(&g, PI / 2.0, 0.0);
        assert!((s[1] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn path_loss_examples() {
        assert_relative_eq!(path_loss(1.0, 2.2).unwrap(), 1e-3, max_relative = 1e-14);
        assert_relative_eq!(path_loss(1.0, 3.8).unwrap(), 1e-3, max_relative = 1e-14);
        assert_relative_eq!(path_loss(10.0, 2.2).unwrap(), 6.309_573_444_801_93e-6, max_relative = 1e-12);
        assert_relative_eq!(path_loss(10.0, 3.8).unwrap(), 1.584_893_192_461_11e-7, max_relative = 1e-12);
        assert!(matches!(path_loss(0.0, 2.0), Err(Error::NonPositiveDistance(_))));
        assert!(path_loss(-1.0, 2.0).is_err());
    }

    #[test]
    fn csi_from_geometry() {
        // equilateral triangle: every distance is 1 m
        let g = SystemGeometry::quarter_wave(
            2,
            2,
            0.125,
            [0.0, 0.0, 0.0],
            vec![[1.0, 0.0, 0.0]],
            vec![[0.5, 3f64.sqrt() / 2.0, 0.0]],
        );
        let csi = build_statistical_csi(&g, &ChannelParams::default(), &AngleSource::Random { seed: 1 }).unwrap();
        assert_relative_eq!(csi.pairs[0].alpha, 1e-3, max_relative = 1e-12);
        assert_relative_eq!(csi.pairs[0].beta, 1e-3, max_relative = 1e-12);
        assert_relative_eq!(csi.direct.sigma[(0, 0)].powi(2), 1e-3, max_relative = 1e-12);
        assert_relative_eq!(csi.pairs[0].gamma_a, 10.0, max_relative = 1e-12);
        let again = build_statistical_csi(&g, &ChannelParams::default(), &AngleSource::Random { seed: 1 }).unwrap();
        assert_eq!(csi.pairs, again.pairs);
        for p in &csi.pairs {
            for a in [p.aoa_az, p.aoa_el, p.aod_az, p.aod_el] {
                assert!((0.0..2.0 * PI).contains(&a));
            }
        }
    }

    #[test]
    fn exponents_by_link_type() {
        let (tx, rx) = place_pairs_uniform(6, &PlacementArea::default(), 9);
        let g = SystemGeometry::quarter_wave(8, 4, 0.125, [30.0, 0.0, 8.0], tx, rx);
        let csi = build_statistical_csi(&g, &ChannelParams::default(), &AngleSource::Random { seed: 2 }).unwrap();
        for i in 0..6 {
            let d = distance(&g.tx_positions[i], &g.ris_position);
            assert_relative_eq!(csi.pairs[i].alpha, path_loss(d, 2.2).unwrap());
            let d = distance(&g.rx_positions[i], &g.ris_position);
            assert_relative_eq!(csi.pairs[i].beta, path_loss(d, 2.2).unwrap());
            for j in 0..6 {
                let d = distance(&g.tx_positions[i], &g.rx_positions[j]);
                assert_relative_eq!(csi.direct.sigma[(i, j)].powi(2), path_loss(d, 3.8).unwrap(), max_relative = 1e-12);
            }
        }
        for p in g.tx_positions.iter().chain(&g.rx_positions) {
            assert!((0.0..=60.0).contains(&p[0]) && (0.0..=25.0).contains(&p[1]));
            assert_eq!(p[2], 1.6);
        }
    }

    #[test]
    fn pure_los_limit() {
        let csi = simple_csi(2, 2, 1e12);
        let real = sample_realization(&csi, &RngStream::new(1, 0), 0.0);
        let los = csi.los_a(0);
        for (g, l) in real.g_a[0].iter().zip(&los) {
            let nlos = *g - l * csi.pairs[0].alpha.sqrt();
            assert!(nlos.norm_sqr() / csi.pairs[0].alpha < 1e-10);
        }
    }

    #[test]
    fn realization_moments() {
        let csi = simple_csi(2, 2, 1.5);
        let n = csi.n_elements();
        let trials = 20_000;
        let p = csi.pairs[0];
        let los_a = csi.los_a(0);
        let los_b = csi.los_b(0);
        let mean_scale_a = (p.alpha * p.gamma_a / (1.0 + p.gamma_a)).sqrt();
        let mean_scale_b = (p.beta * p.gamma_b / (1.0 + p.gamma_b)).sqrt();

        let mut energy = 0.0;
        let mut mean_a = vec![Complex64::new(0.0, 0.0); n];
        let mut cov_b = DMatrix::<Complex64>::zeros(n, n);
        let mut h2 = 0.0;
        for t in 0..trials {
            let r = sample_realization(&csi, &RngStream::new(17, t), 4.0);
            energy += r.g_a[0].iter().map(|z| z.norm_sqr()).sum::<f64>();
            for (m, g) in mean_a.iter_mut().zip(&r.g_a[0]) {
                *m += g;
            }
            let nl: Vec<Complex64> = r.g_b[0].iter().zip(&los_b).map(|(g, l)| g - l * mean_scale_b).collect();
            for a in 0..n {
                for b in 0..n {
                    cov_b[(a, b)] += nl[a] * nl[b].conj();
                }
            }
            h2 += r.h[(0, 0)].norm_sqr();
        }
        let tf = trials as f64;
        assert!((energy / tf / n as f64 / p.alpha - 1.0).abs() < 0.02);
        for (m, l) in mean_a.iter().zip(&los_a) {
            let target = l * mean_scale_a;
            assert!((m / tf - target).norm() < 0.03 * target.norm());
        }
        let scale = p.beta / (1.0 + p.gamma_b);
        for a in 0..n {
            for b in 0..n {
                let want = scale * csi.corr[(a, b)];
                let got = cov_b[(a, b)] / tf;
                assert!((got.re - want).abs() <= 0.05 * scale, "({a},{b}) {got} vs {want}");
                assert!(got.im.abs() <= 0.05 * scale);
            }
        }
        let sigma2 = csi.direct.sigma[(0, 0)].powi(2);
        assert!((h2 / tf / sigma2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn realization_is_deterministic() {
        let csi = simple_csi(4, 2, 10.0);
        let a = sample_realization(&csi, &RngStream::new(3, 77), 4.0);
        let b = sample_realization(&csi, &RngStream::new(3, 77), 4.0);
        assert_eq!(a.g_a, b.g_a);
        assert_eq!(a.g_b, b.g_b);
        assert_eq!(a.h, b.h);
        assert_eq!(a.phase_noise, b.phase_noise);
    }

    #[test]
    fn blocked_direct_links_are_zero() {
        let csi = simple_csi(2, 1, 10.0).without_direct_links();
        let r = sample_realization(&csi, &RngStream::new(1, 1), 4.0);
        assert_eq!(r.h[(0, 0)], Complex64::new(0.0, 0.0));
        assert!(!csi.has_direct_links());
    }
}
