//! The Ornstein-Uhlenbeck semigroup P_eps evaluated through the Mehler
//! formula and through the transition density relative to mu, density
//! gradients, gradient estimators for D P_eps u, and the eps^{-1/2}
//! smoothing-estimate probe.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cylinder::CylinderFunction;
use crate::error::{OulabError, Result};
use crate::estimate::Estimate;
use crate::quadrature::{gauss_hermite_tensor, QuadratureSpec};
use crate::spectral::{derive_chunk_seed, ou_operators, OuOperators, Spectrum};

/// Gaussian expectation E[f(y)] for y ~ N_Q restricted to the first
/// `dims` coordinates, by the chosen quadrature.
///
/// With Gauss-Hermite, modes beyond `retained_modes` are Monte-Carlo'd
/// (hybrid); with finitely based integrands the pure tensor rule applies
/// and the standard error is zero.
pub fn expect_gaussian<F>(spec: &Spectrum, dims: usize, q: &QuadratureSpec, f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    q.validate()?;
    let dims = dims.min(spec.n());
    let sqrt_l: Vec<f64> = spec.lambdas()[..dims].iter().map(|l| l.sqrt()).collect();
    match q {
        QuadratureSpec::MonteCarlo { m, seed } => {
            let chunk = 4096usize;
            let n_chunks = m.div_ceil(chunk);
            let samples: Vec<f64> = (0..n_chunks)
                .into_par_iter()
                .flat_map_iter(|c| {
                    let rows = chunk.min(m - c * chunk);
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_chunk_seed(*seed, c as u64));
                    let mut vals = Vec::with_capacity(rows);
                    let mut y = vec![0.0; dims];
                    for _ in 0..rows {
                        for (k, s) in sqrt_l.iter().enumerate() {
                            let z: f64 = rng.sample(StandardNormal);
                            y[k] = s * z;
                        }
                        vals.push(f(&y));
                    }
                    vals
                })
                .collect();
            Ok(Estimate::from_samples(&samples))
        }
        QuadratureSpec::GaussHermite { nodes_per_mode, retained_modes } => {
            let gh_dims = dims.min(*retained_modes);
            let (pts, wts) = gauss_hermite_tensor(*nodes_per_mode, gh_dims);
            let gh_avg = |tail: &[f64]| -> f64 {
                let mut y = vec![0.0; dims];
                y[gh_dims..].copy_from_slice(tail);
                let mut acc = 0.0;
                for (i, w) in wts.iter().enumerate() {
                    for k in 0..gh_dims {
                        y[k] = sqrt_l[k] * pts[i * gh_dims + k];
                    }
                    acc += w * f(&y);
                }
                acc
            };
            if gh_dims == dims {
                Ok(Estimate::exact(gh_avg(&[])))
            } else {
                // Hybrid: Monte Carlo over the unretained coordinates.
                let m = 4096usize;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_chunk_seed(0x6f75, 1));
                let tails: Vec<Vec<f64>> = (0..m)
                    .map(|_| {
                        (gh_dims..dims)
                            .map(|k| sqrt_l[k] * rng.sample::<f64, _>(StandardNormal))
                            .collect()
                    })
                    .collect();
                let samples: Vec<f64> = tails.par_iter().map(|t| gh_avg(t)).collect();
                Ok(Estimate::from_samples(&samples))
            }
        }
    }
}

fn mehler_point(ops: &OuOperators, x: &[f64], y: &[f64], dims: usize, out: &mut [f64]) {
    for k in 0..dims {
        let xk = if k < x.len() { x[k] } else { 0.0 };
        out[k] = ops.tau[k] * xk + ops.sigma[k] * y[k];
    }
}

/// P_eps u(t, .)(x) by the Mehler formula: E_y[u(t, T x + S y)].
pub fn mehler_apply(
    u: &CylinderFunction,
    spec: &Spectrum,
    eps: f64,
    t: f64,
    x: &[f64],
    q: &QuadratureSpec,
) -> Result<Estimate> {
    if eps < 0.0 {
        return Err(OulabError::Domain(format!("eps must be >= 0, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(Estimate::exact(u.eval(t, x)));
    }
    let dims = u.base_dim;
    let ops = ou_operators(spec, eps)?;
    expect_gaussian(spec, dims, q, |y| {
        let mut z = vec![0.0; dims];
        mehler_point(&ops, x, y, dims, &mut z);
        u.eval(t, &z)
    })
}

/// log rho(eps, x, y): the transition density of P_eps relative to mu,
/// accumulated mode by mode in log space.
pub fn log_density_rho(spec: &Spectrum, eps: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if eps <= 0.0 {
        return Err(OulabError::Domain(format!(
            "density degenerate at eps <= 0, got {eps}"
        )));
    }
    let ops = ou_operators(spec, eps)?;
    let mut acc = 0.0;
    for k in 0..spec.n() {
        let tau = ops.tau[k];
        let qt = ops.qt[k];
        let xk = if k < x.len() { x[k] } else { 0.0 };
        let yk = if k < y.len() { y[k] } else { 0.0 };
        // det factor K(t) = prod (1 - tau^2)^{-1/2}
        acc += -0.5 * (1.0 - tau * tau).ln();
        acc += (-0.5 * tau * tau * xk * xk + tau * xk * yk - 0.5 * tau * tau * yk * yk) / qt;
    }
    Ok(acc)
}

/// rho(eps, x, y).
pub fn density_rho(spec: &Spectrum, eps: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(log_density_rho(spec, eps, x, y)?.exp())
}

/// P_eps u(t, .)(x) by the density form: E_{y~mu}[u(t, y) rho(eps, x, y)].
///
/// The importance weight rho involves every mode, so this is always a
/// full-dimension Monte Carlo average; it exists as an independent route
/// to cross-check the Mehler form.
pub fn density_apply(
    u: &CylinderFunction,
    spec: &Spectrum,
    eps: f64,
    t: f64,
    x: &[f64],
    m: usize,
    seed: u64,
) -> Result<Estimate> {
    if eps <= 0.0 {
        return Err(OulabError::Domain(format!("eps must be > 0, got {eps}")));
    }
    let batch = crate::spectral::sample_gaussian(spec, m, seed)?;
    let samples: Vec<f64> = batch
        .points()
        .map(|y| u.eval(t, y) * density_rho(spec, eps, x, y).unwrap())
        .collect();
    Ok(Estimate::from_samples(&samples))
}

/// D_x log rho(eps, x, y) = Q_eps^{-1} T_eps (y - T_eps x), componentwise.
pub fn density_grad_x(spec: &Spectrum, eps: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if eps <= 0.0 {
        return Err(OulabError::Domain(format!("eps must be > 0, got {eps}")));
    }
    let ops = ou_operators(spec, eps)?;
    Ok((0..spec.n())
        .map(|k| {
            let xk = if k < x.len() { x[k] } else { 0.0 };
            let yk = if k < y.len() { y[k] } else { 0.0 };
            ops.tau[k] * (yk - ops.tau[k] * xk) / ops.qt[k]
        })
        .collect())
}

/// D_y log rho(eps, x, y) = Q_eps^{-1} T_eps (x - T_eps y), componentwise.
pub fn density_grad_y(spec: &Spectrum, eps: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    density_grad_x(spec, eps, y, x)
}

/// Which estimator of D P_eps u to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradEstimator {
    /// T_eps E[Du(t, T x + S y)]; requires u in C^1.
    Smooth,
    /// E[u(t, T x + S y) Q_eps^{-1} T_eps S_eps y]; valid for bounded
    /// measurable u, variance blows up as eps -> 0.
    Weight,
}

/// Gradient of P_eps u(t, .) at x, restricted to the base coordinates
/// (the remaining components vanish identically).
#[derive(Debug, Clone)]
pub struct GradEstimate {
    pub value: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Set when the estimator's standard error exceeds 10% of the
    /// gradient magnitude.
    pub accuracy_warning: bool,
}

impl GradEstimate {
    pub fn norm(&self) -> f64 {
        self.value.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn se_norm(&self) -> f64 {
        self.std_err.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn grad_mehler(
    u: &CylinderFunction,
    spec: &Spectrum,
    eps: f64,
    t: f64,
    x: &[f64],
    q: &QuadratureSpec,
    estimator: GradEstimator,
) -> Result<GradEstimate> {
    let dims = u.base_dim;
    match estimator {
        GradEstimator::Smooth => {
            if eps < 0.0 {
                return Err(OulabError::Domain(format!("eps must be >= 0, got {eps}")));
            }
            if !u.smooth {
                return Err(OulabError::Domain(
                    "smooth gradient estimator requires a differentiable function".into(),
                ));
            }
            let ops = ou_operators(spec, eps)?;
            let mut value = vec![0.0; dims];
            let mut std_err = vec![0.0; dims];
            for k in 0..dims {
                let est = expect_gaussian(spec, dims, q, |y| {
                    let mut z = vec![0.0; dims];
                    mehler_point(&ops, x, y, dims, &mut z);
                    u.grad(t, &z)[k]
                })?;
                value[k] = ops.tau[k] * est.value;
                std_err[k] = ops.tau[k] * est.std_err;
            }
            Ok(finish_grad(value, std_err))
        }
        GradEstimator::Weight => {
            if eps <= 0.0 {
                return Err(OulabError::Domain(format!(
                    "weight estimator needs eps > 0, got {eps}"
                )));
            }
            let ops = ou_operators(spec, eps)?;
            let mut value = vec![0.0; dims];
            let mut std_err = vec![0.0; dims];
            for k in 0..dims {
                // weight_k = tau_k sigma_k y_k / qt_k
                let w = ops.tau[k] * ops.sigma[k] / ops.qt[k];
                let est = expect_gaussian(spec, dims, q, |y| {
                    let mut z = vec![0.0; dims];
                    mehler_point(&ops, x, y, dims, &mut z);
                    u.eval(t, &z) * w * y[k]
                })?;
                value[k] = est.value;
                std_err[k] = est.std_err;
            }
            Ok(finish_grad(value, std_err))
        }
    }
}

fn finish_grad(value: Vec<f64>, std_err: Vec<f64>) -> GradEstimate {
    let vnorm = value.iter().map(|v| v * v).sum::<f64>().sqrt();
    let senorm = std_err.iter().map(|v| v * v).sum::<f64>().sqrt();
    let accuracy_warning = vnorm > 1e-12 && senorm > 0.1 * vnorm;
    GradEstimate { value, std_err, accuracy_warning }
}

/// Result of the eps^{-1/2} smoothing-estimate probe.
#[derive(Debug, Clone)]
pub struct SmoothingProbe {
    /// Fitted log-log slope of sup|D P_eps u| against eps.
    pub slope: f64,
    /// Fitted constant C in sup|D P_eps u| ~ C eps^slope.
    pub constant: f64,
    pub eps_grid: Vec<f64>,
    pub sup_values: Vec<f64>,
    /// Set when the gradient is flat and the fit is degenerate.
    pub degenerate: bool,
}

/// Deterministic probe points: 256 seeded quasi-uniform points in the
/// ball of radius 3 sqrt(lambda_1) of the base subspace, plus the origin.
/// This is the documented proxy for the sup over H.
pub fn probe_points(dims: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x70726f6265);
    let mut out = vec![vec![0.0; dims]];
    for _ in 0..256 {
        let dir: Vec<f64> = (0..dims).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let r = radius * rng.gen::<f64>().powf(1.0 / dims as f64);
        out.push(dir.iter().map(|v| r * v / norm).collect());
    }
    out
}

/// Estimates sup_x |D P_eps u| over the probe set for each eps, and fits
/// the log-log decay exponent and constant.
pub fn smoothing_probe(
    u: &CylinderFunction,
    spec: &Spectrum,
    eps_grid: &[f64],
    q: &QuadratureSpec,
) -> Result<SmoothingProbe> {
    if eps_grid.len() < 5 {
        return Err(OulabError::Config(
            "smoothing probe needs >= 5 grid points".into(),
        ));
    }
    let estimator = if u.smooth { GradEstimator::Smooth } else { GradEstimator::Weight };
    let radius = 3.0 * spec.lambdas()[0].sqrt();
    let probes = probe_points(u.base_dim, radius);
    let mut sup_values = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let sup = probes
            .par_iter()
            .map(|x| {
                grad_mehler(u, spec, eps, 0.0, x, q, estimator)
                    .map(|g| g.norm())
                    .unwrap_or(0.0)
            })
            .reduce(|| 0.0, f64::max);
        sup_values.push(sup);
    }
    let degenerate = sup_values.iter().all(|&s| s < 1e-12);
    if degenerate {
        return Ok(SmoothingProbe {
            slope: 0.0,
            constant: 0.0,
            eps_grid: eps_grid.to_vec(),
            sup_values,
            degenerate,
        });
    }
    // Least-squares fit of log sup against log eps.
    let xs: Vec<f64> = eps_grid.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = sup_values.iter().map(|s| s.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let constant = (my - slope * mx).exp();
    Ok(SmoothingProbe {
        slope,
        constant,
        eps_grid: eps_grid.to_vec(),
        sup_values,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::make_function;
    use crate::quadrature::log_grid;
    use crate::spectral::Spectrum;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn gh() -> QuadratureSpec {
        QuadratureSpec::GaussHermite { nodes_per_mode: 16, retained_modes: 4 }
    }

    fn mc(m: usize, seed: u64) -> QuadratureSpec {
        QuadratureSpec::MonteCarlo { m, seed }
    }

    fn coord1() -> CylinderFunction {
        make_function("coordinate", &BTreeMap::new(), 1.0).unwrap()
    }

    #[test]
    fn mehler_linear_closed_form() {
        // P_eps x1 = tau_1 x1: lambda=1, eps=2, x1=1 -> e^{-1}.
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let est = mehler_apply(&coord1(), &spec, 2.0, 0.0, &[1.0], &gh()).unwrap();
        assert!((est.value - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn mehler_constant_fixed_point() {
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let mut p = BTreeMap::new();
        p.insert("value".to_string(), 4.2);
        let c = make_function("constant", &p, 1.0).unwrap();
        let est = mehler_apply(&c, &spec, 0.7, 0.0, &[0.3], &gh()).unwrap();
        assert!((est.value - 4.2).abs() < 1e-13);
    }

    #[test]
    fn mehler_square_second_moment() {
        // u = x1^2 at x=0: E[(sigma y1)^2] = sigma^2 lambda = 1 - e^{-2}.
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let u = CylinderFunction::new(
            1,
            1.0,
            false,
            Arc::new(|_t, x: &[f64]| x[0] * x[0]),
            Some(Arc::new(|_t, x: &[f64], out: &mut [f64]| out[0] = 2.0 * x[0])),
            Arc::new(|_t, _x| 0.0),
        );
        let est = mehler_apply(&u, &spec, 2.0, 0.0, &[0.0], &gh()).unwrap();
        assert!((est.value - (1.0 - (-2.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn mehler_eps_zero_is_identity() {
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let est = mehler_apply(&coord1(), &spec, 0.0, 0.0, &[1.37], &gh()).unwrap();
        assert_eq!(est.value, 1.37);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn density_reference_value() {
        // n=1, lambda=1, eps=2, x=y=0 -> (1 - e^{-2})^{-1/2}.
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let rho = density_rho(&spec, 2.0, &[0.0], &[0.0]).unwrap();
        assert!((rho - (1.0 - (-2.0f64).exp()).powf(-0.5)).abs() < 1e-12);
        assert!(density_rho(&spec, 0.0, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn density_normalization() {
        let spec = Spectrum::new(vec![1.0, 0.25, 1.0 / 9.0]).unwrap();
        let mut p = BTreeMap::new();
        p.insert("value".to_string(), 1.0);
        let one = make_function("constant", &p, 1.0).unwrap();
        let x = [0.4, -0.2, 0.1];
        let est = density_apply(&one, &spec, 0.5, 0.0, &x, 100_000, 21).unwrap();
        assert!(est.within(1.0, 3.0), "got {} +- {}", est.value, est.std_err);
    }

    #[test]
    fn density_vs_mehler_catalog() {
        let spec = Spectrum::new(vec![1.0, 0.25]).unwrap();
        let u = make_function("sine", &BTreeMap::new(), 1.0).unwrap();
        let x = [0.3, -0.5];
        for eps in [0.1, 1.0] {
            let a = mehler_apply(&u, &spec, eps, 0.0, &x, &gh()).unwrap();
            let b = density_apply(&u, &spec, eps, 0.0, &x, 200_000, 5).unwrap();
            let band = 3.0 * crate::estimate::combined_se(&a, &b);
            assert!(
                (a.value - b.value).abs() <= band.max(1e-9),
                "eps={eps}: {} vs {} band {band}",
                a.value,
                b.value
            );
        }
    }

    #[test]
    fn density_log_gradient_matches_finite_differences() {
        let spec = Spectrum::new(vec![1.0, 0.5]).unwrap();
        let x = [0.7, -0.4];
        let y = [-0.2, 0.9];
        let eps = 0.8;
        let g = density_grad_x(&spec, eps, &x, &y).unwrap();
        let h = 1e-5;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (log_density_rho(&spec, eps, &xp, &y).unwrap()
                - log_density_rho(&spec, eps, &xm, &y).unwrap())
                / (2.0 * h);
            assert!((g[k] - fd).abs() / fd.abs().max(1.0) < 1e-6, "{} vs {}", g[k], fd);
        }
        // antisymmetry of the formulas
        let gx = density_grad_x(&spec, eps, &x, &y).unwrap();
        let gy = density_grad_y(&spec, eps, &y, &x).unwrap();
        assert_eq!(gx, gy);
        // symmetry at x = y = 0
        let z = density_grad_x(&spec, eps, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grad_estimators_agree_on_linear() {
        // u = x1: D P_eps u = tau_1 e1 for both estimators.
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let eps = 0.9;
        let tau = (-eps / 2.0f64).exp();
        let a = grad_mehler(&coord1(), &spec, eps, 0.0, &[0.6], &gh(), GradEstimator::Smooth)
            .unwrap();
        assert!((a.value[0] - tau).abs() < 1e-12);
        let b = grad_mehler(&coord1(), &spec, eps, 0.0, &[0.6], &gh(), GradEstimator::Weight)
            .unwrap();
        assert!((b.value[0] - tau).abs() < 1e-10, "{} vs {tau}", b.value[0]);
    }

    #[test]
    fn grad_of_constant_vanishes() {
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let mut p = BTreeMap::new();
        p.insert("value".to_string(), 3.0);
        let c = make_function("constant", &p, 1.0).unwrap();
        let g = grad_mehler(&c, &spec, 0.5, 0.0, &[1.0], &gh(), GradEstimator::Smooth).unwrap();
        assert_eq!(g.value, vec![0.0]);
    }

    #[test]
    fn grad_sign_closed_form() {
        // u = sign(x1), lambda=1, x=0: d/dx P u = 2 tau / (sigma sqrt(2 pi)).
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let eps = 0.01;
        let ops = ou_operators(&spec, eps).unwrap();
        let expected = 2.0 * ops.tau[0] / (ops.sigma[0] * (2.0 * std::f64::consts::PI).sqrt());
        let sign = make_function("sign", &BTreeMap::new(), 1.0).unwrap();
        let g = grad_mehler(&sign, &spec, eps, 0.0, &[0.0], &mc(400_000, 3), GradEstimator::Weight)
            .unwrap();
        assert!(
            (g.value[0] - expected).abs() <= 4.0 * g.std_err[0],
            "{} vs {expected} (se {})",
            g.value[0],
            g.std_err[0]
        );
        assert!(!g.accuracy_warning);
        assert!((expected - 7.96).abs() < 0.01);
    }

    #[test]
    fn semigroup_composition() {
        // P_eps(P_delta u) = P_{eps+delta} u for catalog u, via GH.
        let spec = Spectrum::new(vec![1.0, 0.25]).unwrap();
        let u = make_function("gauss", &BTreeMap::new(), 1.0).unwrap();
        let (eps, delta) = (0.3, 0.5);
        let spec_inner = spec.clone();
        let ui = u.clone();
        let inner = CylinderFunction::new(
            u.base_dim,
            1.0,
            false,
            Arc::new(move |t, x: &[f64]| {
                mehler_apply(&ui, &spec_inner, delta, t, x, &gh()).unwrap().value
            }),
            None,
            Arc::new(|_t, _x| 0.0),
        );
        let x = [0.4, -0.8];
        let lhs = mehler_apply(&inner, &spec, eps, 0.0, &x, &gh()).unwrap().value;
        let rhs = mehler_apply(&u, &spec, eps + delta, 0.0, &x, &gh()).unwrap().value;
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn contraction_and_invariance() {
        let spec = Spectrum::new(vec![1.0, 0.25]).unwrap();
        let u = make_function("sine", &BTreeMap::new(), 1.0).unwrap();
        // sup-norm contraction on probes
        for x in probe_points(2, 3.0).iter().take(32) {
            let v = mehler_apply(&u, &spec, 0.4, 0.0, x, &gh()).unwrap().value;
            assert!(v.abs() <= 1.0 + 1e-9);
        }
        // invariance of mu: E_{x~mu} P_eps u(x) = E_mu u
        let batch = crate::spectral::sample_gaussian(&spec, 20_000, 8).unwrap();
        let through: Vec<f64> = batch
            .points()
            .map(|x| mehler_apply(&u, &spec, 0.4, 0.0, x, &gh()).unwrap().value)
            .collect();
        let direct: Vec<f64> = batch.points().map(|x| u.eval(0.0, x)).collect();
        let a = Estimate::from_samples(&through);
        let b = Estimate::from_samples(&direct);
        let band = 3.0 * crate::estimate::combined_se(&a, &b);
        assert!((a.value - b.value).abs() <= band, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn smoothing_probe_sign_slope() {
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let sign = make_function("sign", &BTreeMap::new(), 1.0).unwrap();
        let grid = log_grid(1e-3, 1.0, 7);
        let probe = smoothing_probe(&sign, &spec, &grid, &mc(60_000, 17)).unwrap();
        assert!(
            (probe.slope + 0.5).abs() < 0.1,
            "slope {} not in -0.5 +- 0.1",
            probe.slope
        );
    }

    #[test]
    fn smoothing_probe_smooth_function_flat() {
        let spec = Spectrum::new(vec![1.0, 0.25]).unwrap();
        let u = make_function("tanh", &BTreeMap::new(), 1.0).unwrap();
        // Small-eps range: a bounded gradient means no blow-up there.
        let grid = log_grid(1e-3, 0.1, 5);
        let probe = smoothing_probe(&u, &spec, &grid, &gh()).unwrap();
        assert!(probe.slope.abs() < 0.1, "slope {}", probe.slope);
        assert!(probe.sup_values.iter().all(|&s| s <= 1.0 + 1e-9));
    }

    #[test]
    fn smoothing_probe_scaling_linearity() {
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let sign = make_function("sign", &BTreeMap::new(), 1.0).unwrap();
        let grid = log_grid(1e-2, 1.0, 5);
        let one = smoothing_probe(&sign, &spec, &grid, &mc(20_000, 4)).unwrap();
        let two = smoothing_probe(&sign.scale(2.0), &spec, &grid, &mc(20_000, 4)).unwrap();
        assert!((two.constant / one.constant - 2.0).abs() < 0.05);
        assert!((two.slope - one.slope).abs() < 1e-9);
    }

    #[test]
    fn smoothing_probe_degenerate_flat() {
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let mut p = BTreeMap::new();
        p.insert("value".to_string(), 2.0);
        let c = make_function("constant", &p, 1.0).unwrap();
        let grid = log_grid(1e-2, 1.0, 5);
        let probe = smoothing_probe(&c, &spec, &grid, &gh()).unwrap();
        assert!(probe.degenerate);
        assert_eq!(probe.slope, 0.0);
    }
}
