//! Spectral representation of the covariance operator, the Gaussian
//! reference measure, and the Ornstein-Uhlenbeck operator family.
//!
//! Everything is diagonal in the eigenbasis of Q, so the operators
//! T_t = exp(-t Q^{-1}/2), S_t = (1 - T_t^2)^{1/2} and Q_t = Q S_t^2
//! reduce to per-mode scalars.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{OulabError, Result};

/// Eigenvalues of the covariance operator in a truncation of dimension n,
/// in non-increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    lambdas: Vec<f64>,
}

/// How to build a spectrum.
pub enum SpectrumKind {
    /// lambda_k = k^{-gamma}.
    PowerLaw { gamma: f64 },
    /// A caller-supplied list, which must already be non-increasing.
    Explicit(Vec<f64>),
}

/// Builds a spectrum of dimension `n`.
///
/// Explicit input that is not sorted in non-increasing order is rejected
/// rather than silently sorted.
pub fn build_spectrum(kind: SpectrumKind, n: usize) -> Result<Spectrum> {
    if n == 0 {
        return Err(OulabError::InvalidSpectrum("dimension must be >= 1".into()));
    }
    let lambdas = match kind {
        SpectrumKind::PowerLaw { gamma } => {
            if gamma <= 0.0 {
                return Err(OulabError::InvalidSpectrum(format!(
                    "power-law exponent must be positive, got {gamma}"
                )));
            }
            (1..=n).map(|k| (k as f64).powf(-gamma)).collect()
        }
        SpectrumKind::Explicit(list) => {
            if list.len() != n {
                return Err(OulabError::Shape { expected: n, got: list.len() });
            }
            list
        }
    };
    Spectrum::new(lambdas)
}

impl Spectrum {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(OulabError::InvalidSpectrum("empty eigenvalue list".into()));
        }
        for (k, &l) in lambdas.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(OulabError::InvalidSpectrum(format!(
                    "eigenvalue {l} at index {k} is not strictly positive and finite"
                )));
            }
        }
        for k in 1..lambdas.len() {
            if lambdas[k] > lambdas[k - 1] {
                return Err(OulabError::UnsortedSpectrum {
                    index: k,
                    prev: lambdas[k - 1],
                    next: lambdas[k],
                });
            }
        }
        Ok(Spectrum { lambdas })
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn trace(&self) -> f64 {
        self.lambdas.iter().sum()
    }
}

/// Per-mode actions of T_t, S_t and Q_t at a fixed time.
#[derive(Debug, Clone)]
pub struct OuOperators {
    pub t: f64,
    /// tau_k = exp(-t / (2 lambda_k)), the action of T_t.
    pub tau: Vec<f64>,
    /// sigma_k = (1 - tau_k^2)^{1/2}, the action of S_t.
    pub sigma: Vec<f64>,
    /// lambda_k sigma_k^2, the action of Q_t.
    pub qt: Vec<f64>,
    /// alpha_k = 1 / (2 lambda_k).
    pub alpha: Vec<f64>,
}

/// Evaluates the OU operator family at time `t >= 0`.
pub fn ou_operators(spec: &Spectrum, t: f64) -> Result<OuOperators> {
    if !(t >= 0.0) {
        return Err(OulabError::Domain(format!("time must be nonnegative, got {t}")));
    }
    let n = spec.n();
    let mut tau = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut qt = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    for &l in spec.lambdas() {
        let tk = (-t / (2.0 * l)).exp();
        // sigma^2 = 1 - exp(-t/lambda); expm1 avoids cancellation for small t.
        let s2 = -(-t / l).exp_m1();
        tau.push(tk);
        sigma.push(s2.sqrt());
        qt.push(l * s2);
        alpha.push(1.0 / (2.0 * l));
    }
    Ok(OuOperators { t, tau, sigma, qt, alpha })
}

/// Applies the orthogonal pair rotation (x, y) -> (T x + S y, -S x + T y).
pub fn rotate_pair(x: &[f64], y: &[f64], ops: &OuOperators) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = ops.tau.len();
    if x.len() != n {
        return Err(OulabError::Shape { expected: n, got: x.len() });
    }
    if y.len() != n {
        return Err(OulabError::Shape { expected: n, got: y.len() });
    }
    let mut xr = Vec::with_capacity(n);
    let mut yr = Vec::with_capacity(n);
    for k in 0..n {
        xr.push(ops.tau[k] * x[k] + ops.sigma[k] * y[k]);
        yr.push(-ops.sigma[k] * x[k] + ops.tau[k] * y[k]);
    }
    Ok((xr, yr))
}

/// Seeded Monte Carlo draws from the Gaussian measure N_Q.
///
/// Coordinate k of each point is centered Gaussian with variance lambda_k.
/// Generation is chunked with per-chunk derived seeds, so the batch is
/// bit-identical regardless of how many workers produced it.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    spectrum: Spectrum,
    m: usize,
    seed: u64,
    /// Row-major m x n.
    data: Vec<f64>,
}

/// Samples generated per independently seeded chunk.
const CHUNK: usize = 4096;

/// SplitMix64 step, used to derive per-chunk seeds from the batch seed.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives the RNG seed for chunk `chunk` of a batch with seed `seed`.
pub fn derive_chunk_seed(seed: u64, chunk: u64) -> u64 {
    splitmix64(seed ^ splitmix64(chunk))
}

/// Draws `m` points from N_Q, deterministically in `seed`.
pub fn sample_gaussian(spec: &Spectrum, m: usize, seed: u64) -> Result<SampleBatch> {
    if m == 0 {
        return Err(OulabError::EmptyBatch);
    }
    let n = spec.n();
    let sqrt_l: Vec<f64> = spec.lambdas().iter().map(|l| l.sqrt()).collect();
    let n_chunks = m.div_ceil(CHUNK);
    let chunks: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let rows = CHUNK.min(m - c * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_chunk_seed(seed, c as u64));
            let mut out = Vec::with_capacity(rows * n);
            for _ in 0..rows {
                for &s in &sqrt_l {
                    let z: f64 = rng.sample(StandardNormal);
                    out.push(s * z);
                }
            }
            out
        })
        .collect();
    let mut data = Vec::with_capacity(m * n);
    for c in chunks {
        data.extend_from_slice(&c);
    }
    Ok(SampleBatch { spectrum: spec.clone(), m, seed, data })
}

impl SampleBatch {
    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.spectrum.n()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn points(&self) -> impl IndexedParallelIterator<Item = &[f64]> {
        self.data.par_chunks(self.dim())
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim())
    }

    /// Empirical variance of coordinate `k`.
    pub fn coordinate_variance(&self, k: usize) -> f64 {
        let mean = self.iter_points().map(|p| p[k]).sum::<f64>() / self.m as f64;
        self.iter_points().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / (self.m as f64 - 1.0)
    }

    /// Empirical covariance between coordinates `j` and `k`.
    pub fn coordinate_covariance(&self, j: usize, k: usize) -> f64 {
        let mj = self.iter_points().map(|p| p[j]).sum::<f64>() / self.m as f64;
        let mk = self.iter_points().map(|p| p[k]).sum::<f64>() / self.m as f64;
        self.iter_points()
            .map(|p| (p[j] - mj) * (p[k] - mk))
            .sum::<f64>()
            / (self.m as f64 - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_spectrum() {
        let s = build_spectrum(SpectrumKind::PowerLaw { gamma: 2.0 }, 3).unwrap();
        assert_eq!(s.lambdas()[0], 1.0);
        assert_eq!(s.lambdas()[1], 0.25);
        assert!((s.lambdas()[2] - 1.0 / 9.0).abs() < 1e-15);
        assert!((s.trace() - (1.0 + 0.25 + 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn explicit_singleton() {
        let s = build_spectrum(SpectrumKind::Explicit(vec![1.0]), 1).unwrap();
        assert_eq!(s.lambdas(), &[1.0]);
    }

    #[test]
    fn unsorted_explicit_rejected() {
        let err = build_spectrum(SpectrumKind::Explicit(vec![0.25, 1.0]), 2).unwrap_err();
        assert!(matches!(err, OulabError::UnsortedSpectrum { index: 1, .. }));
    }

    #[test]
    fn nonpositive_eigenvalue_rejected() {
        assert!(build_spectrum(SpectrumKind::Explicit(vec![1.0, 0.0]), 2).is_err());
        assert!(build_spectrum(SpectrumKind::Explicit(vec![1.0, -0.5]), 2).is_err());
    }

    #[test]
    fn ou_operators_reference_values() {
        let s = Spectrum::new(vec![1.0]).unwrap();
        let ops = ou_operators(&s, 2.0).unwrap();
        assert!((ops.tau[0] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((ops.sigma[0] - (1.0 - (-2.0f64).exp()).sqrt()).abs() < 1e-15);
        assert!((ops.qt[0] - (1.0 - (-2.0f64).exp())).abs() < 1e-15);

        let s2 = Spectrum::new(vec![1.0, 0.25]).unwrap();
        let ops2 = ou_operators(&s2, 1.0).unwrap();
        assert!((ops2.tau[0] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((ops2.tau[1] - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn ou_operators_identity_at_zero() {
        let s = Spectrum::new(vec![2.0, 1.0, 0.1]).unwrap();
        let ops = ou_operators(&s, 0.0).unwrap();
        for k in 0..3 {
            assert_eq!(ops.tau[k], 1.0);
            assert_eq!(ops.sigma[k], 0.0);
            assert_eq!(ops.qt[k], 0.0);
        }
    }

    #[test]
    fn negative_time_rejected() {
        let s = Spectrum::new(vec![1.0]).unwrap();
        assert!(ou_operators(&s, -0.1).is_err());
    }

    #[test]
    fn rotation_is_isometric_and_trivial_cases() {
        let s = Spectrum::new(vec![1.0, 0.5]).unwrap();
        let x = vec![1.0, -2.0];
        let y = vec![0.5, 3.0];

        let ops0 = ou_operators(&s, 0.0).unwrap();
        let (xr, yr) = rotate_pair(&x, &y, &ops0).unwrap();
        assert_eq!(xr, x);
        assert_eq!(yr, y);

        let ops = ou_operators(&s, 0.7).unwrap();
        let (xr, yr) = rotate_pair(&x, &y, &ops).unwrap();
        let before: f64 = x.iter().chain(&y).map(|v| v * v).sum();
        let after: f64 = xr.iter().chain(&yr).map(|v| v * v).sum();
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn quarter_rotation_limit() {
        // tau -> 0, sigma -> 1 as t -> infinity.
        let s = Spectrum::new(vec![1.0]).unwrap();
        let ops = ou_operators(&s, 1e4).unwrap();
        let (xr, yr) = rotate_pair(&[2.0], &[3.0], &ops).unwrap();
        assert!((xr[0] - 3.0).abs() < 1e-10);
        assert!((yr[0] + 2.0).abs() < 1e-10);
    }

    #[test]
    fn rotation_shape_error() {
        let s = Spectrum::new(vec![1.0, 0.5]).unwrap();
        let ops = ou_operators(&s, 1.0).unwrap();
        assert!(rotate_pair(&[1.0], &[1.0, 2.0], &ops).is_err());
    }

    #[test]
    fn sampling_reproducible_and_calibrated() {
        let s = Spectrum::new(vec![1.0]).unwrap();
        let a = sample_gaussian(&s, 100_000, 7).unwrap();
        let b = sample_gaussian(&s, 100_000, 7).unwrap();
        assert_eq!(a.data, b.data);
        // chi-square concentration: 3 sigma band around lambda_1 = 1.
        let v = a.coordinate_variance(0);
        assert!(v > 0.985 && v < 1.015, "variance {v} outside band");
    }

    #[test]
    fn sampling_cross_covariance_small() {
        let s = Spectrum::new(vec![1.0, 0.25]).unwrap();
        let batch = sample_gaussian(&s, 100_000, 11).unwrap();
        let cov = batch.coordinate_covariance(0, 1);
        let band = 3.0 * (1.0 * 0.25 / 100_000.0f64).sqrt();
        assert!(cov.abs() < band, "covariance {cov} outside {band}");
    }

    #[test]
    fn chunk_merge_independent_of_chunking() {
        // Batch prefix must equal the shorter batch with the same seed,
        // which is what deterministic chunked seeding guarantees.
        let s = Spectrum::new(vec![1.0, 0.5]).unwrap();
        let small = sample_gaussian(&s, CHUNK, 3).unwrap();
        let large = sample_gaussian(&s, 2 * CHUNK + 17, 3).unwrap();
        assert_eq!(&large.data[..small.data.len()], &small.data[..]);
    }

    #[test]
    fn zero_samples_rejected() {
        let s = Spectrum::new(vec![1.0]).unwrap();
        assert!(matches!(sample_gaussian(&s, 0, 1), Err(OulabError::EmptyBatch)));
    }
}
