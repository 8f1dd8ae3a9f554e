//! Finitely based test functions and vector fields with analytic
//! derivative closures, Gaussian Sobolev norms, the Q-divergence and the
//! conditional-expectation smoothing projection.

use std::sync::Arc;

use crate::error::{OulabError, Result};
use crate::estimate::Estimate;
use crate::quadrature::trapezoid;
use crate::spectral::{SampleBatch, Spectrum};

pub type ScalarClosure = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type VectorClosure = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// A finitely based test function u(t, x) depending on the first
/// `base_dim` coordinates, with analytic gradient and time derivative.
#[derive(Clone)]
pub struct CylinderFunction {
    pub base_dim: usize,
    pub horizon: f64,
    /// Asserts u(T, .) = 0, i.e. membership in the terminal-zero test class.
    pub terminal_zero: bool,
    /// False for entries without a gradient closure (e.g. sign).
    pub smooth: bool,
    eval: ScalarClosure,
    grad: Option<VectorClosure>,
    dt: ScalarClosure,
}

impl CylinderFunction {
    pub fn new(
        base_dim: usize,
        horizon: f64,
        terminal_zero: bool,
        eval: ScalarClosure,
        grad: Option<VectorClosure>,
        dt: ScalarClosure,
    ) -> Self {
        CylinderFunction {
            base_dim,
            horizon,
            terminal_zero,
            smooth: grad.is_some(),
            eval,
            grad,
            dt,
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        (self.eval)(t, &x[..self.base_dim.min(x.len())])
    }

    /// Gradient with respect to the base coordinates; zero beyond base_dim.
    pub fn grad(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.base_dim];
        if let Some(g) = &self.grad {
            g(t, &x[..self.base_dim.min(x.len())], &mut out);
        } else {
            panic!("gradient requested on a non-smooth cylinder function");
        }
        out
    }

    pub fn dt(&self, t: f64, x: &[f64]) -> f64 {
        (self.dt)(t, &x[..self.base_dim.min(x.len())])
    }

    pub fn scale(&self, c: f64) -> Self {
        let eval = self.eval.clone();
        let dt = self.dt.clone();
        let grad = self.grad.clone();
        CylinderFunction {
            base_dim: self.base_dim,
            horizon: self.horizon,
            terminal_zero: self.terminal_zero,
            smooth: self.smooth,
            eval: Arc::new(move |t, x| c * eval(t, x)),
            grad: grad.map(|g| -> VectorClosure {
                Arc::new(move |t: f64, x: &[f64], out: &mut [f64]| {
                    g(t, x, out);
                    for v in out.iter_mut() {
                        *v *= c;
                    }
                })
            }),
            dt: Arc::new(move |t, x| c * dt(t, x)),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.horizon, other.horizon, "mismatched horizons");
        let n = self.base_dim.max(other.base_dim);
        let (e1, e2) = (self.eval.clone(), other.eval.clone());
        let (d1, d2) = (self.dt.clone(), other.dt.clone());
        let (n1, n2) = (self.base_dim, other.base_dim);
        let grad = match (self.grad.clone(), other.grad.clone()) {
            (Some(g1), Some(g2)) => Some(Arc::new(move |t: f64, x: &[f64], out: &mut [f64]| {
                out.fill(0.0);
                let mut buf = vec![0.0; n1];
                g1(t, &x[..n1], &mut buf);
                for (o, b) in out.iter_mut().zip(&buf) {
                    *o += b;
                }
                let mut buf2 = vec![0.0; n2];
                g2(t, &x[..n2], &mut buf2);
                for (o, b) in out.iter_mut().zip(&buf2) {
                    *o += b;
                }
            }) as VectorClosure),
            _ => None,
        };
        CylinderFunction {
            base_dim: n,
            horizon: self.horizon,
            terminal_zero: self.terminal_zero && other.terminal_zero,
            smooth: grad.is_some(),
            eval: Arc::new(move |t, x| e1(t, &x[..n1]) + e2(t, &x[..n2])),
            grad,
            dt: Arc::new(move |t, x| d1(t, &x[..n1]) + d2(t, &x[..n2])),
        }
    }
}

/// A finitely based vector field F(t, x) = sum_{i < base_dim} g_i(t, x) e_i
/// with an analytic Jacobian closure.
#[derive(Clone)]
pub struct CylinderVectorField {
    pub base_dim: usize,
    /// True when the components and their derivatives are bounded.
    pub bounded: bool,
    comps: VectorClosure,
    /// Row-major base_dim x base_dim, entry (i, j) = d g_i / d x_j.
    jac: VectorClosure,
}

impl CylinderVectorField {
    pub fn new(base_dim: usize, bounded: bool, comps: VectorClosure, jac: VectorClosure) -> Self {
        CylinderVectorField { base_dim, bounded, comps, jac }
    }

    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.comps)(t, &x[..self.base_dim.min(x.len())], &mut out[..self.base_dim]);
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.base_dim];
        self.eval_into(t, x, &mut out);
        out
    }

    pub fn jacobian_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.jac)(t, &x[..self.base_dim.min(x.len())], out);
    }

    pub fn jacobian(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.base_dim * self.base_dim];
        self.jacobian_into(t, x, &mut out);
        out
    }

    pub fn trace_jacobian(&self, t: f64, x: &[f64]) -> f64 {
        let j = self.jacobian(t, x);
        (0..self.base_dim).map(|i| j[i * self.base_dim + i]).sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        let comps = self.comps.clone();
        let jac = self.jac.clone();
        CylinderVectorField {
            base_dim: self.base_dim,
            bounded: self.bounded,
            comps: Arc::new(move |t, x, out| {
                comps(t, x, out);
                for v in out.iter_mut() {
                    *v *= c;
                }
            }),
            jac: Arc::new(move |t, x, out| {
                jac(t, x, out);
                for v in out.iter_mut() {
                    *v *= c;
                }
            }),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.base_dim.max(other.base_dim);
        let (c1, c2) = (self.comps.clone(), other.comps.clone());
        let (j1, j2) = (self.jac.clone(), other.jac.clone());
        let (n1, n2) = (self.base_dim, other.base_dim);
        CylinderVectorField {
            base_dim: n,
            bounded: self.bounded && other.bounded,
            comps: Arc::new(move |t, x, out| {
                out.fill(0.0);
                let mut buf = vec![0.0; n1];
                c1(t, &x[..n1], &mut buf);
                for (o, b) in out.iter_mut().zip(&buf) {
                    *o += b;
                }
                let mut buf2 = vec![0.0; n2];
                c2(t, &x[..n2], &mut buf2);
                for (o, b) in out.iter_mut().zip(&buf2) {
                    *o += b;
                }
            }),
            jac: Arc::new(move |t, x, out| {
                out.fill(0.0);
                let mut buf = vec![0.0; n1 * n1];
                j1(t, &x[..n1], &mut buf);
                for i in 0..n1 {
                    for j in 0..n1 {
                        out[i * n + j] += buf[i * n1 + j];
                    }
                }
                let mut buf2 = vec![0.0; n2 * n2];
                j2(t, &x[..n2], &mut buf2);
                for i in 0..n2 {
                    for j in 0..n2 {
                        out[i * n + j] += buf2[i * n2 + j];
                    }
                }
            }),
        }
    }
}

/// Q-divergence: Tr[DF(t,x)] - <Q^{-1} x, F(t,x)>.
pub fn div_q(field: &CylinderVectorField, spec: &Spectrum, t: f64, x: &[f64]) -> f64 {
    let n = field.base_dim;
    let trace = field.trace_jacobian(t, x);
    let f = field.eval(t, x);
    let mut inner = 0.0;
    for k in 0..n {
        inner += x[k] * f[k] / spec.lambdas()[k];
    }
    trace - inner
}

fn hs_norm_sq(jac: &[f64]) -> f64 {
    jac.iter().map(|v| v * v).sum()
}

/// Monte Carlo Sobolev norm (integral of ||DF||_HS^s + |F|^s over dt x mu)^{1/s}.
pub fn sobolev_norm(
    field: &CylinderVectorField,
    s: f64,
    batch: &SampleBatch,
    time_grid: &[f64],
) -> Result<Estimate> {
    if time_grid.is_empty() {
        return Err(OulabError::EmptyTimeGrid);
    }
    let per_sample: Vec<f64> = batch
        .iter_points()
        .map(|x| {
            let vals: Vec<f64> = time_grid
                .iter()
                .map(|&t| {
                    let j = field.jacobian(t, x);
                    let f = field.eval(t, x);
                    let f2: f64 = f.iter().map(|v| v * v).sum();
                    hs_norm_sq(&j).powf(s / 2.0) + f2.powf(s / 2.0)
                })
                .collect();
            trapezoid(time_grid, &vals).unwrap()
        })
        .collect();
    Ok(Estimate::from_samples(&per_sample).powf(1.0 / s))
}

/// Monte Carlo norm (integral of |Q^{-1/2} F|^s over dt x mu)^{1/s}.
pub fn qhalf_inverse_norm(
    field: &CylinderVectorField,
    s: f64,
    spec: &Spectrum,
    batch: &SampleBatch,
    time_grid: &[f64],
) -> Result<Estimate> {
    if time_grid.is_empty() {
        return Err(OulabError::EmptyTimeGrid);
    }
    let lambdas = spec.lambdas();
    let per_sample: Vec<f64> = batch
        .iter_points()
        .map(|x| {
            let vals: Vec<f64> = time_grid
                .iter()
                .map(|&t| {
                    let f = field.eval(t, x);
                    let w: f64 = f.iter().zip(lambdas).map(|(v, l)| v * v / l).sum();
                    w.powf(s / 2.0)
                })
                .collect();
            trapezoid(time_grid, &vals).unwrap()
        })
        .collect();
    Ok(Estimate::from_samples(&per_sample).powf(1.0 / s))
}

/// Conditional-expectation smoothing of `field` onto the first `target_dim`
/// coordinates: the complementary coordinates are averaged out against mu
/// using the tails of `batch`, and the components are projected onto the
/// first `target_dim` basis vectors.
pub fn project_smooth(
    field: &CylinderVectorField,
    target_dim: usize,
    batch: &SampleBatch,
) -> Result<CylinderVectorField> {
    if target_dim == 0 {
        return Err(OulabError::DegenerateProjection);
    }
    let n = field.base_dim;
    if target_dim >= n {
        return Ok(field.clone());
    }
    // Tails of the complementary coordinates, frozen from the batch.
    let tails: Vec<Vec<f64>> = batch
        .iter_points()
        .map(|p| p[target_dim..n.min(p.len())].to_vec())
        .collect();
    let k = tails.len() as f64;
    let tails = Arc::new(tails);
    let comps = field.comps.clone();
    let jac = field.jac.clone();
    let tails_c = tails.clone();
    let new_comps: VectorClosure = Arc::new(move |t, x, out| {
        out.fill(0.0);
        let mut buf = vec![0.0; n];
        let mut full = vec![0.0; n];
        full[..target_dim].copy_from_slice(&x[..target_dim]);
        for tail in tails_c.iter() {
            full[target_dim..].copy_from_slice(tail);
            comps(t, &full, &mut buf);
            for i in 0..target_dim {
                out[i] += buf[i];
            }
        }
        for v in out.iter_mut() {
            *v /= k;
        }
    });
    let new_jac: VectorClosure = Arc::new(move |t, x, out| {
        out.fill(0.0);
        let mut buf = vec![0.0; n * n];
        let mut full = vec![0.0; n];
        full[..target_dim].copy_from_slice(&x[..target_dim]);
        for tail in tails.iter() {
            full[target_dim..].copy_from_slice(tail);
            jac(t, &full, &mut buf);
            for i in 0..target_dim {
                for j in 0..target_dim {
                    out[i * target_dim + j] += buf[i * n + j];
                }
            }
        }
        for v in out.iter_mut() {
            *v /= k;
        }
    });
    Ok(CylinderVectorField::new(target_dim, field.bounded, new_comps, new_jac))
}
