//! Closed-form Gaussian integral identities: exp-quadratic integrals,
//! the log-Laplace function S(eps), cumulants and central moments of
//! quadratic forms, and the L^p divergence probe. Each closed form is
//! paired with a brute-force Monte Carlo oracle in the tests.

use nalgebra::DMatrix;

use crate::cylinder::{div_q, CylinderVectorField};
use crate::error::{OulabError, Result};
use crate::estimate::Estimate;
use crate::spectral::{SampleBatch, Spectrum};

/// The quadratic form x -> <L x, x> under N_Q, together with the sandwich
/// M = Q^{1/2} L Q^{1/2} and the eigenvalues of its symmetrization.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    l: DMatrix<f64>,
    m: DMatrix<f64>,
    /// Eigenvalues of (M + M^T)/2.
    betas: Vec<f64>,
}

impl QuadraticForm {
    pub fn new(l: DMatrix<f64>, spec: &Spectrum) -> Result<Self> {
        let n = spec.n();
        if l.nrows() != n || l.ncols() != n {
            return Err(OulabError::Shape { expected: n, got: l.nrows() });
        }
        let sqrt_q = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            spec.lambdas().iter().map(|v| v.sqrt()),
        ));
        let m = &sqrt_q * &l * &sqrt_q;
        let ms = (&m + m.transpose()) * 0.5;
        let mut betas: Vec<f64> = nalgebra::SymmetricEigen::new(ms)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        betas.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(QuadraticForm { l, m, betas })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn sandwich(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn trace_m(&self) -> f64 {
        self.m.trace()
    }

    /// Tr[M_s^k] = sum beta_i^k.
    pub fn trace_power(&self, k: usize) -> f64 {
        self.betas.iter().map(|b| b.powi(k as i32)).sum()
    }

    /// <L x, x>.
    pub fn apply(&self, x: &[f64]) -> f64 {
        let n = self.l.nrows();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.l[(i, j)] * x[j];
            }
            acc += row * x[i];
        }
        acc
    }
}

fn check_eps(qf: &QuadraticForm, eps: f64) -> Result<()> {
    for &b in qf.betas() {
        if 1.0 + 2.0 * eps * b <= 0.0 {
            return Err(OulabError::DivergentIntegral { beta: b, eps });
        }
    }
    Ok(())
}

/// E[exp(-eps <L x, x>)] = det(1 + 2 eps M_s)^{-1/2}, in log space.
/// Nonsymmetric L enters through its symmetrization.
pub fn exp_quadratic_integral(qf: &QuadraticForm, eps: f64) -> Result<f64> {
    check_eps(qf, eps)?;
    let log_det: f64 = qf.betas().iter().map(|b| (1.0 + 2.0 * eps * b).ln()).sum();
    Ok((-0.5 * log_det).exp())
}

/// S(eps) = det(1 + 2 eps M_s)^{-1/2} exp(eps Tr M); S(0) = 1, S'(0) = 0.
pub fn log_laplace_s(qf: &QuadraticForm, eps: f64) -> Result<f64> {
    Ok(exp_quadratic_integral(qf, eps)? * (eps * qf.trace_m()).exp())
}

/// m-th cumulant of Z = <L x, x> - Tr M under mu:
/// kappa_m = 2^{m-1} (m-1)! Tr[M_s^m] for m >= 2; kappa_1 = 0.
pub fn quadratic_cumulant(qf: &QuadraticForm, m: usize) -> Result<f64> {
    if m < 1 {
        return Err(OulabError::MomentOrder(m));
    }
    if m == 1 {
        return Ok(0.0);
    }
    let mut factor = 1.0; // 2^{m-1} (m-1)!
    for j in 1..m {
        factor *= 2.0 * j as f64;
    }
    Ok(factor * qf.trace_power(m))
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Exact m-th central moment E[(<L x, x> - Tr M)^m] from the cumulants by
/// the moment-cumulant recursion. Orders above 12 are refused.
pub fn central_moment(qf: &QuadraticForm, m: usize) -> Result<f64> {
    if m < 1 || m > 12 {
        return Err(OulabError::MomentOrder(m));
    }
    let kappas: Vec<f64> = (0..=m)
        .map(|j| if j < 2 { 0.0 } else { quadratic_cumulant(qf, j).unwrap() })
        .collect();
    // moments[j] = j-th central moment; m_n = sum_k C(n-1, k-1) kappa_k m_{n-k}
    let mut moments = vec![0.0; m + 1];
    moments[0] = 1.0;
    for n in 1..=m {
        let mut acc = 0.0;
        for k in 2..=n {
            acc += binomial(n - 1, k - 1) * kappas[k] * moments[n - k];
        }
        moments[n] = acc;
    }
    Ok(moments[m])
}

/// Monte Carlo oracle for E[exp(-eps <L x, x>)].
pub fn mc_exp_quadratic(qf: &QuadraticForm, eps: f64, batch: &SampleBatch) -> Estimate {
    let samples: Vec<f64> = batch
        .iter_points()
        .map(|x| (-eps * qf.apply(x)).exp())
        .collect();
    Estimate::from_samples(&samples)
}

/// Monte Carlo oracle for the m-th central moment of <L x, x> - Tr M.
pub fn mc_central_moment(qf: &QuadraticForm, m: usize, batch: &SampleBatch) -> Estimate {
    let tr = qf.trace_m();
    let samples: Vec<f64> = batch
        .iter_points()
        .map(|x| (qf.apply(x) - tr).powi(m as i32))
        .collect();
    Estimate::from_samples(&samples)
}

/// Both sides of the divergence bound: lhs = E|div_Q G|^p and
/// rhsCore = E[||DG||_HS^2 + |Q^{-1/2} G|^p] (mixed exponents as stated).
pub fn divq_lp_probe(
    field: &CylinderVectorField,
    spec: &Spectrum,
    p: f64,
    batch: &SampleBatch,
) -> Result<(Estimate, Estimate)> {
    if p <= 1.0 {
        return Err(OulabError::Domain(format!("divergence bound needs p > 1, got {p}")));
    }
    let lambdas = spec.lambdas();
    let lhs: Vec<f64> = batch
        .iter_points()
        .map(|x| div_q(field, spec, 0.0, x).abs().powf(p))
        .collect();
    let rhs: Vec<f64> = batch
        .iter_points()
        .map(|x| {
            let j = field.jacobian(0.0, x);
            let hs2: f64 = j.iter().map(|v| v * v).sum();
            let f = field.eval(0.0, x);
            let qinv: f64 = f.iter().zip(lambdas).map(|(v, l)| v * v / l).sum();
            hs2 + qinv.powf(p / 2.0)
        })
        .collect();
    let lhs = Estimate::from_samples(&lhs);
    let rhs = Estimate::from_samples(&rhs);
    if !lhs.value.is_finite() || !rhs.value.is_finite() {
        return Err(OulabError::Integrability("divergence probe".into()));
    }
    Ok((lhs, rhs))
}
