//! Numerical kernels shared by the channel model, the closed-form rates and
//! the Monte-Carlo oracle.
//!
//! Everything here is deterministic. The only stateful piece is
//! [`RngStream`], a counter-based ChaCha stream addressed by a
//! `(seed, stream_id)` pair so that any trial of a simulation can be
//! replayed in isolation, on any thread, in any order.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as exact zeros by [`psd_sqrt`].
pub const EIGEN_CLIP: f64 = 1e-10;
/// Eigenvalues below this mean the input is not a correlation matrix.
pub const EIGEN_REJECT: f64 = -1e-6;

/// Arguments above this switch the Bessel evaluation from the ascending
/// series to the large-argument expansion.
const BESSEL_SERIES_LIMIT: f64 = 15.0;

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let px = PI * x;
    px.sin() / px
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(watt: f64) -> f64 {
    10.0 * watt.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Ascending series for `I_order(x)`, valid for moderate `x`.
fn bessel_series(order: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    // first term (x/2)^order / order!
    let mut term = (1..=order).fold(1.0, |acc, k| acc * half / k as f64);
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + order as f64));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Large-argument expansion of `e^{-x} sqrt(2 pi x) I_order(x)`.
fn bessel_asymptotic_scaled(order: u32, x: f64) -> f64 {
    let mu = 4.0 * (order as f64).powi(2);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (k as f64 * 8.0 * x);
        // asymptotic series: stop at the smallest term
        if term.abs() >= prev {
            break;
        }
        sum += term;
        prev = term.abs();
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Modified Bessel function of the first kind, order 0.
pub fn bessel_i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= BESSEL_SERIES_LIMIT {
        bessel_series(0, ax)
    } else {
        ax.exp() / (2.0 * PI * ax).sqrt() * bessel_asymptotic_scaled(0, ax)
    }
}

/// Modified Bessel function of the first kind, order 1.
pub fn bessel_i1(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= BESSEL_SERIES_LIMIT {
        bessel_series(1, ax)
    } else {
        ax.exp() / (2.0 * PI * ax).sqrt() * bessel_asymptotic_scaled(1, ax)
    };
    v.copysign(x)
}

/// Mean resultant length of a zero-mean von Mises angle with the given
/// concentration: `E{e^{j theta}} = I1(k) / I0(k)`.
///
/// An infinite concentration (ideal hardware) maps to exactly 1.
pub fn bessel_ratio(kappa_pn: f64) -> Result<f64> {
    if kappa_pn.is_nan() || kappa_pn < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "phase-noise concentration must be >= 0, got {kappa_pn}"
        )));
    }
    if kappa_pn.is_infinite() {
        return Ok(1.0);
    }
    if kappa_pn <= BESSEL_SERIES_LIMIT {
        Ok(bessel_series(1, kappa_pn) / bessel_series(0, kappa_pn))
    } else {
        // the e^x / sqrt(2 pi x) prefactor cancels
        Ok(bessel_asymptotic_scaled(1, kappa_pn) / bessel_asymptotic_scaled(0, kappa_pn))
    }
}

/// Symmetric square-root factor `F` with `F F^T = R`.
#[derive(Debug, Clone)]
pub struct PsdSqrt {
    pub dimension: usize,
    pub factor: DMatrix<f64>,
    /// Eigenvalues after clipping, ascending.
    pub eigenvalues: Vec<f64>,
}

impl PsdSqrt {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// Applies the factor to a complex vector: `F w`.
    pub fn apply(&self, w: &[Complex64], out: &mut [Complex64]) {
        let n = self.dimension;
        debug_assert_eq!(w.len(), n);
        debug_assert_eq!(out.len(), n);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, wc) in w.iter().enumerate() {
                acc += wc * self.factor[(r, c)];
            }
            *o = acc;
        }
    }
}

/// Square-root factor of a symmetric PSD matrix via eigendecomposition.
///
/// Eigenvalues in `[EIGEN_REJECT, EIGEN_CLIP)` are clipped to zero so that
/// numerically rank-deficient correlation matrices still factor.
pub fn psd_sqrt(r: &DMatrix<f64>) -> Result<PsdSqrt> {
    let n = r.nrows();
    if n == 0 || r.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "expected a non-empty square matrix, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((r[(i, j)] - r[(j, i)]).abs());
        }
    }
    if asym > 1e-12 * r.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }

    let eig = SymmetricEigen::new(r.clone());
    let min = eig.eigenvalues.min();
    if min < EIGEN_REJECT {
        return Err(Error::NotPsd(min));
    }
    let clipped: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| if l < EIGEN_CLIP { 0.0 } else { l })
        .collect();
    let mut factor = eig.eigenvectors;
    for (c, l) in clipped.iter().enumerate() {
        let s = l.sqrt();
        factor.column_mut(c).scale_mut(s);
    }
    let mut eigenvalues = clipped;
    eigenvalues.sort_by(f64::total_cmp);
    Ok(PsdSqrt {
        dimension: n,
        factor,
        eigenvalues,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a parent stream id with a child tag into a new stream id.
pub fn mix_stream(parent: u64, tag: u64) -> u64 {
    splitmix64(parent ^ splitmix64(tag.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Counter-based random stream.
///
/// A stream is fully determined by `(seed, stream_id)`. Children derived
/// with [`RngStream::substream`] are addressed by tags, never by draw
/// order, so results do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream for a child task identified by `tag`.
    pub fn substream(&self, tag: u64) -> RngStream {
        RngStream::new(self.seed, mix_stream(self.stream_id, tag))
    }

    /// Substream addressed by a path of tags, e.g. `[trial, channel, index]`.
    pub fn substream_path(&self, path: &[u64]) -> RngStream {
        let id = path
            .iter()
            .fold(self.stream_id, |acc, &t| mix_stream(acc, t));
        RngStream::new(self.seed, id)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Circularly-symmetric complex Gaussian with unit variance.
    pub fn complex_normal(&mut self) -> Complex64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Complex64::new(s * self.standard_normal(), s * self.standard_normal())
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Zero-mean von Mises (circular normal) draw on `(-pi, pi]`, using the
/// Best-Fisher wrapped-Cauchy envelope.
///
/// The envelope parameter is carried as `s - 1` so that very large
/// concentrations keep their precision instead of rounding to `s = 1`.
pub fn sample_von_mises(rng: &mut RngStream, kappa_pn: f64) -> f64 {
    debug_assert!(kappa_pn >= 0.0);
    if kappa_pn < 1e-8 {
        return PI * (1.0 - 2.0 * rng.uniform());
    }
    if kappa_pn.is_infinite() {
        return 0.0;
    }
    let k = kappa_pn;
    let (s, s_m1) = if k < 1e-5 {
        let s = 1.0 / k + k;
        (s, s - 1.0)
    } else {
        let root = (1.0 + 4.0 * k * k).sqrt();
        let tau = 1.0 + root;
        let (rho, one_minus_rho) = if k >= 1.0 {
            let omr = ((2.0 * tau).sqrt() - 1.0 - 1.0 / (root + 2.0 * k)) / (2.0 * k);
            (1.0 - omr, omr)
        } else {
            let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * k);
            (rho, 1.0 - rho)
        };
        let s_m1 = one_minus_rho * one_minus_rho / (2.0 * rho);
        (1.0 + s_m1, s_m1)
    };

    let one_minus_w = loop {
        let u1 = rng.uniform();
        let half = 0.5 * PI * u1;
        let z = (PI * u1).cos();
        let one_minus_z = 2.0 * half.sin().powi(2);
        let one_minus_w = s_m1 * one_minus_z / (s + z);
        let y = k * (s_m1 + one_minus_w);
        let u2 = rng.uniform_open0();
        if y * (2.0 - y) - u2 > 0.0 || (y / u2).ln() + 1.0 - y >= 0.0 {
            break one_minus_w;
        }
    };
    let theta = 2.0 * (0.5 * one_minus_w).sqrt().min(1.0).asin();
    if rng.uniform() < 0.5 {
        if theta >= PI {
            PI
        } else {
            -theta
        }
    } else {
        theta
    }
}

/// Fixed-order pairwise summation; the result depends only on the slice
/// contents and order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `I_nu(x) = (1/pi) * int_0^pi exp(x cos t) cos(nu t) dt`, trapezoid rule.
    /// Periodic analytic integrand, so the rule converges geometrically.
    fn bessel_quadrature(order: u32, x: f64) -> f64 {
        let m = 4000;
        let h = PI / m as f64;
        let f = |t: f64| (x * t.cos()).exp() * (order as f64 * t).cos();
        let mut s = 0.5 * (f(0.0) + f(PI));
        for i in 1..m {
            s += f(i as f64 * h);
        }
        s * h / PI
    }

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(1.0).abs() < 1e-15);
        assert_relative_eq!(sinc(0.5), 2.0 / PI, epsilon = 1e-15);
        assert_relative_eq!(sinc(0.5), 0.636_619_772_367_581_3, epsilon = 1e-12);
        for x in [0.1, 0.37, 1.5, 2.25, 7.0] {
            assert_eq!(sinc(x), sinc(-x));
        }
    }

    #[test]
    fn bessel_against_quadrature() {
        for &x in &[0.0, 0.5, 1.0, 4.0, 10.0, 14.9, 15.1, 20.0, 40.0] {
            let q0 = bessel_quadrature(0, x);
            let q1 = bessel_quadrature(1, x);
            assert_relative_eq!(bessel_i0(x), q0, max_relative = 1e-12);
            if x > 0.0 {
                assert_relative_eq!(bessel_i1(x), q1, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn bessel_ratio_examples() {
        assert_eq!(bessel_ratio(0.0).unwrap(), 0.0);
        // quadrature oracle; the true value is 0.8635226...
        let oracle4 = bessel_quadrature(1, 4.0) / bessel_quadrature(0, 4.0);
        assert_relative_eq!(oracle4, 0.86351, epsilon = 2e-5);
        assert_relative_eq!(bessel_ratio(4.0).unwrap(), oracle4, epsilon = 1e-13);

        // large argument: 1 - 1/(2k) - 1/(8k^2) - ...
        let r100 = bessel_ratio(100.0).unwrap();
        assert_relative_eq!(r100, 0.99499, epsilon = 5e-6);
        let approx = 1.0 - 1.0 / 200.0 - 1.0 / 80_000.0;
        assert!((r100 - approx).abs() < 1e-6);
        let oracle100 = bessel_quadrature(1, 100.0) / bessel_quadrature(0, 100.0);
        assert_relative_eq!(r100, oracle100, epsilon = 1e-12);

        assert_eq!(bessel_ratio(f64::INFINITY).unwrap(), 1.0);
        assert!(bessel_ratio(-1.0).is_err());
        assert!(bessel_ratio(f64::NAN).is_err());
    }

    #[test]
    fn bessel_ratio_monotone_and_bounded() {
        let mut prev = -1.0;
        let mut x = 0.0;
        while x < 200.0 {
            let r = bessel_ratio(x).unwrap();
            assert!(r > prev, "not increasing at {x}");
            assert!((0.0..1.0).contains(&r));
            prev = r;
            x += 0.01;
        }
    }

    #[test]
    fn unit_conversions() {
        assert_relative_eq!(dbm_to_watt(30.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(dbm_to_watt(-80.0), 1e-11, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watt(-5.0), 3.162_277_660_168_379e-4, max_relative = 1e-12);
        for x in [-120.0, -5.0, 0.0, 30.0, 80.0] {
            let back = watt_to_dbm(dbm_to_watt(x));
            assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
        assert_relative_eq!(db_to_linear(10.0), 10.0, epsilon = 1e-12);
        assert_relative_eq!(linear_to_db(100.0), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_sqrt_identity_and_rank_one() {
        let id = DMatrix::<f64>::identity(5, 5);
        let f = psd_sqrt(&id).unwrap();
        assert!((f.reconstruct() - &id).amax() < 1e-14);
        // eigenvectors of the identity are the identity up to sign/order
        let ff = &f.factor * f.factor.transpose();
        assert!((ff - id).amax() < 1e-14);

        let ones = DMatrix::from_element(2, 2, 1.0);
        let f = psd_sqrt(&ones).unwrap();
        assert!((f.reconstruct() - &ones).amax() < 1e-12);
        assert_eq!(f.eigenvalues[0], 0.0);
    }

    #[test]
    fn psd_sqrt_rejects_bad_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(psd_sqrt(&m), Err(Error::NotPsd(_))));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.1, 1.0]);
        assert!(matches!(psd_sqrt(&m), Err(Error::NotSymmetric(_))));
        assert!(psd_sqrt(&DMatrix::<f64>::zeros(0, 0)).is_err());
    }

    #[test]
    fn psd_sqrt_random_inputs() {
        let mut rng = RngStream::new(7, 0);
        for case in 0..100 {
            let n = 1 + case % 12;
            let rank = 1 + rng.below(n);
            let a = DMatrix::from_fn(n, rank, |_, _| rng.standard_normal());
            let r = &a * a.transpose();
            let f = psd_sqrt(&r).unwrap();
            assert!(f.eigenvalues.iter().all(|&l| l >= 0.0));
            let err = (f.reconstruct() - &r).amax();
            assert!(err <= 1e-8, "case {case}: {err}");
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let mut a = RngStream::new(42, 3);
        let mut b = RngStream::new(42, 3);
        let xa: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        assert_eq!(xa, xb);

        let base = RngStream::new(42, 0);
        let mut s1 = base.substream_path(&[5, 1]);
        let mut s2 = RngStream::new(42, 0).substream_path(&[5, 1]);
        assert_eq!(s1.next_u64(), s2.next_u64());
    }

    #[test]
    fn distinct_streams_uncorrelated() {
        let n = 100_000;
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 1);
        let xa: Vec<f64> = (0..n).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..n).map(|_| b.standard_normal()).collect();
        assert_ne!(xa[..8], xb[..8]);
        let corr: f64 = xa.iter().zip(&xb).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        // 5 sigma for N(0,1) products
        assert!(corr.abs() < 5.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn von_mises_zero_concentration_is_uniform() {
        let n = 100_000;
        let mut rng = RngStream::new(11, 0);
        let mut xs: Vec<f64> = (0..n).map(|_| sample_von_mises(&mut rng, 0.0)).collect();
        assert!(xs.iter().all(|&x| x > -PI && x <= PI));
        xs.sort_by(f64::total_cmp);
        let mut d = 0.0f64;
        for (i, &x) in xs.iter().enumerate() {
            let cdf = (x + PI) / (2.0 * PI);
            d = d
                .max((cdf - i as f64 / n as f64).abs())
                .max(((i + 1) as f64 / n as f64 - cdf).abs());
        }
        // Kolmogorov-Smirnov critical value at alpha = 0.01
        assert!(d < 1.628 / (n as f64).sqrt(), "D = {d}");
    }

    #[test]
    fn von_mises_circular_mean() {
        let n = 100_000;
        for &k in &[0.5, 1.0, 4.0, 20.0] {
            let mut rng = RngStream::new(3, k as u64);
            let (mut c, mut s) = (0.0, 0.0);
            for _ in 0..n {
                let t = sample_von_mises(&mut rng, k);
                assert!(t > -PI && t <= PI);
                c += t.cos();
                s += t.sin();
            }
            c /= n as f64;
            s /= n as f64;
            let expect = bessel_ratio(k).unwrap();
            assert!((c - expect).abs() < 0.01, "k={k}: {c} vs {expect}");
            assert!(s.abs() < 0.01);
        }
    }

    #[test]
    fn von_mises_large_concentration() {
        let n = 100_000;
        let mut rng = RngStream::new(5, 0);
        let xs: Vec<f64> = (0..n).map(|_| sample_von_mises(&mut rng, 1000.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = 1.0 / 1000f64.sqrt();
        assert!((var.sqrt() / target - 1.0).abs() < 0.02, "std {}", var.sqrt());

        let mut rng = RngStream::new(5, 1);
        let xs: Vec<f64> = (0..20_000).map(|_| sample_von_mises(&mut rng, 1e12)).collect();
        let rms = (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
        assert!((rms / 1e-6 - 1.0).abs() < 0.05, "rms {rms}");
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&xs), 249_750.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
