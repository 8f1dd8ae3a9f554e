//! Characteristics solver for the backward transport equation, particle
//! pushforward solutions of the continuity equation, the weak-form
//! residual meter, the integral maximum principle, and the range probe
//! decomposing K_F(P_eps u_n) - f into its three error terms.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::commutator::{commutator_rep_sum, ExponentTriple};
use crate::cylinder::{project_smooth, CylinderFunction, CylinderVectorField, ScalarClosure};
use crate::error::{OulabError, Result};
use crate::estimate::Estimate;
use crate::quadrature::{trapezoid, QuadratureSpec};
use crate::semigroup::{grad_mehler, mehler_apply, GradEstimator};
use crate::spectral::{sample_gaussian, SampleBatch, Spectrum};

/// Adaptive Runge-Kutta options.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rel_tol: 1e-8, abs_tol: 1e-10, max_step: f64::INFINITY }
    }
}

impl OdeOptions {
    fn validate(&self) -> Result<()> {
        if self.rel_tol <= 0.0 || self.abs_tol <= 0.0 || self.max_step <= 0.0 {
            return Err(OulabError::Domain("ODE tolerances must be positive".into()));
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) coefficients.
const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate y' = deriv(s, y) from t0 to t1 (either direction) with an
/// adaptive embedded Dormand-Prince pair.
fn rk45<D>(deriv: D, t0: f64, t1: f64, y0: &[f64], opts: &OdeOptions) -> Result<Vec<f64>>
where
    D: Fn(f64, &[f64], &mut [f64]),
{
    opts.validate()?;
    let n = y0.len();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0.to_vec());
    }
    let dir = span.signum();
    let min_step = 1e-12 * span.abs().max(1.0);
    let mut y = y0.to_vec();
    let mut s = t0;
    let mut h = (span.abs() / 10.0).min(opts.max_step) * dir;
    let mut k = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    deriv(s, &y, &mut k[0]);
    loop {
        let remaining = t1 - s;
        if remaining.abs() <= 1e-14 * span.abs().max(1.0) {
            return Ok(y);
        }
        if h.abs() > remaining.abs() {
            h = remaining;
        }
        for stage in 0..6 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, &a) in DP_A[stage].iter().enumerate() {
                    acc += a * k[j][i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            let (head, tail) = k.split_at_mut(stage + 1);
            let _ = head;
            deriv(s + DP_C[stage] * h, &ytmp, &mut tail[0]);
        }
        let mut err = 0.0f64;
        for i in 0..n {
            let mut v5 = 0.0;
            let mut v4 = 0.0;
            for j in 0..7 {
                v5 += DP_B5[j] * k[j][i];
                v4 += DP_B4[j] * k[j][i];
            }
            y5[i] = y[i] + h * v5;
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y5[i].abs());
            err += ((h * (v5 - v4)) / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if err <= 1.0 {
            s += h;
            y.copy_from_slice(&y5);
            // FSAL: stage 7 derivative equals the first stage at the new point.
            let last = k[6].clone();
            k[0].copy_from_slice(&last);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).clamp(-opts.max_step, opts.max_step);
        if h == 0.0 || h.abs() < min_step {
            return Err(OulabError::Stiffness { s, min_step });
        }
    }
}

/// The characteristic point xi(t1; t0, x): the solution at time t1 of
/// dy/ds = F(s, y), y(t0) = x. Coordinates beyond the field's base are
/// carried unchanged.
pub fn flow(
    field: &CylinderVectorField,
    spec: &Spectrum,
    t0: f64,
    t1: f64,
    x: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<f64>> {
    if field.base_dim > spec.n() {
        return Err(OulabError::Shape { expected: spec.n(), got: field.base_dim });
    }
    let fb = field.base_dim.min(x.len());
    let moving = &x[..fb];
    let out = rk45(
        |s, y, dy| field.eval_into(s, y, dy),
        t0,
        t1,
        moving,
        opts,
    )?;
    let mut full = x.to_vec();
    full[..fb].copy_from_slice(&out);
    Ok(full)
}

/// Sign convention of the backward solution, fixed once by the residual
/// oracle: u(t,x) = -int_t^T f(s, xi(s, t, x)) ds solves
/// du/dt + <F, Du> = f with u(T, .) = 0. (The opposite sign and the
/// time-shifted integrand both fail the oracle.)
pub const BACKWARD_SIGN: f64 = -1.0;

fn backward_solution_with(
    f: &CylinderFunction,
    field: &CylinderVectorField,
    t: f64,
    x: &[f64],
    opts: &OdeOptions,
    sign: f64,
    shift_time: bool,
) -> Result<f64> {
    let horizon = f.horizon;
    if t > horizon {
        return Err(OulabError::Domain(format!("t = {t} beyond horizon {horizon}")));
    }
    let dims = f.base_dim.max(field.base_dim);
    let mut y0 = vec![0.0; dims + 1];
    for k in 0..dims {
        y0[k] = if k < x.len() { x[k] } else { 0.0 };
    }
    let out = rk45(
        |s, y, dy| {
            field.eval_into(s, &y[..dims], &mut dy[..dims]);
            let ts = if shift_time { s - t } else { s };
            dy[dims] = f.eval(ts, &y[..dims]);
        },
        t,
        horizon,
        &y0,
        opts,
    )?;
    Ok(sign * out[dims])
}

/// u(t, x) = -int_t^T f(s, xi(s, t, x)) ds, the characteristics solution
/// of du/dt + <F, Du> = f, u(T, .) = 0, computed by one augmented ODE.
pub fn backward_solution(
    f: &CylinderFunction,
    field: &CylinderVectorField,
    spec: &Spectrum,
    t: f64,
    x: &[f64],
    opts: &OdeOptions,
) -> Result<f64> {
    if field.base_dim > spec.n() {
        return Err(OulabError::Shape { expected: spec.n(), got: field.base_dim });
    }
    backward_solution_with(f, field, t, x, opts, BACKWARD_SIGN, false)
}

/// Deterministic (t, x) probe points: times uniform in (0, horizon),
/// coordinates scaled to the spectrum's top mode.
pub fn probe_grid(
    spec: &Spectrum,
    dims: usize,
    horizon: f64,
    count: usize,
    seed: u64,
) -> Vec<(f64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 2.0 * spec.lambdas()[0].sqrt();
    (0..count)
        .map(|_| {
            // Stay strictly inside (0, T) so central time differences fit.
            let t = rng.gen_range(0.05..0.95) * horizon;
            let x: Vec<f64> = (0..dims).map(|_| rng.gen_range(-radius..radius)).collect();
            (t, x)
        })
        .collect()
}

/// Residual of du/dt + <F, Du> - f over a probe grid.
#[derive(Debug, Clone, Copy)]
pub struct ResidualReport {
    pub max_abs: f64,
    pub mean_abs: f64,
}

/// Finite-difference residual meter for a numerically given u.
/// Time derivative by central difference (step 1e-4); spatial gradient by
/// central differences in the field's base coordinates.
pub fn pde_residual<U>(
    u: U,
    field: &CylinderVectorField,
    f: &CylinderFunction,
    probes: &[(f64, Vec<f64>)],
) -> ResidualReport
where
    U: Fn(f64, &[f64]) -> f64 + Sync,
{
    let h = 1e-4;
    let residuals: Vec<f64> = probes
        .par_iter()
        .map(|(t, x)| {
            let du_dt = (u(t + h, x) - u(t - h, x)) / (2.0 * h);
            let fx = field.eval(*t, x);
            let mut advect = 0.0;
            for k in 0..field.base_dim {
                if fx[k] == 0.0 {
                    continue;
                }
                let mut xp = x.clone();
                xp[k] += h;
                let up = u(*t, &xp);
                xp[k] -= 2.0 * h;
                let um = u(*t, &xp);
                advect += fx[k] * (up - um) / (2.0 * h);
            }
            (du_dt + advect - f.eval(*t, x)).abs()
        })
        .collect();
    let max_abs = residuals.iter().cloned().fold(0.0, f64::max);
    let mean_abs = residuals.iter().sum::<f64>() / residuals.len().max(1) as f64;
    ResidualReport { max_abs, mean_abs }
}

/// Integral maximum principle report: ||u||_inf <= T ||f||_inf on probes.
#[derive(Debug, Clone, Copy)]
pub struct MaxPrincipleReport {
    pub max_u: f64,
    pub max_f: f64,
    /// max|u| / max|f| (infinite when f vanishes on the probes but u does
    /// not).
    pub ratio: f64,
    /// max|u| / (T max|f|), the horizon-normalized ratio.
    pub ratio_per_horizon: f64,
    pub pass: bool,
}

pub fn max_principle_check<U>(
    u: U,
    f: &CylinderFunction,
    horizon: f64,
    probes: &[(f64, Vec<f64>)],
) -> Result<MaxPrincipleReport>
where
    U: Fn(f64, &[f64]) -> f64 + Sync,
{
    if probes.is_empty() {
        return Err(OulabError::Domain("empty probe grid".into()));
    }
    let max_u = probes
        .par_iter()
        .map(|(t, x)| u(*t, x).abs())
        .reduce(|| 0.0, f64::max);
    let max_f = probes.iter().map(|(t, x)| f.eval(*t, x).abs()).fold(0.0, f64::max);
    let ratio = if max_f > 0.0 { max_u / max_f } else if max_u > 0.0 { f64::INFINITY } else { 0.0 };
    let ratio_per_horizon = ratio / horizon;
    Ok(MaxPrincipleReport {
        max_u,
        max_f,
        ratio,
        ratio_per_horizon,
        pass: ratio <= horizon * (1.0 + 1e-6),
    })
}

/// An equally weighted particle cloud in R^dim.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub dim: usize,
    /// Row-major m x dim positions.
    pub positions: Vec<f64>,
    pub seed: u64,
    /// Descriptor of the initial law.
    pub provenance: String,
}

impl ParticleEnsemble {
    pub fn from_gaussian(spec: &Spectrum, m: usize, seed: u64, mean_shift: &[f64]) -> Result<Self> {
        let batch = sample_gaussian(spec, m, seed)?;
        let dim = spec.n();
        let mut positions = Vec::with_capacity(m * dim);
        for i in 0..m {
            let p = batch.point(i);
            for k in 0..dim {
                let shift = if k < mean_shift.len() { mean_shift[k] } else { 0.0 };
                positions.push(p[k] + shift);
            }
        }
        let provenance = if mean_shift.iter().any(|&v| v != 0.0) {
            "shifted-gaussian".to_string()
        } else {
            "mu".to_string()
        };
        Ok(ParticleEnsemble { dim, positions, seed, provenance })
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean(&self, k: usize) -> f64 {
        let m = self.len();
        (0..m).map(|i| self.point(i)[k]).sum::<f64>() / m as f64
    }

    pub fn covariance(&self, j: usize, k: usize) -> f64 {
        let m = self.len();
        let mj = self.mean(j);
        let mk = self.mean(k);
        (0..m)
            .map(|i| (self.point(i)[j] - mj) * (self.point(i)[k] - mk))
            .sum::<f64>()
            / (m as f64 - 1.0)
    }
}

/// Particle positions along a time grid; each frame pushes the initial
/// law forward through the flow of the drift.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub frames: Vec<ParticleEnsemble>,
}

/// mu_t = Phi_t # zeta realized particle-wise; mass (count and uniform
/// weights) is conserved exactly.
pub fn push_forward(
    zeta: &ParticleEnsemble,
    field: &CylinderVectorField,
    spec: &Spectrum,
    time_grid: &[f64],
    opts: &OdeOptions,
) -> Result<Trajectory> {
    if time_grid.is_empty() {
        return Err(OulabError::EmptyTimeGrid);
    }
    if field.base_dim > spec.n() {
        return Err(OulabError::Shape { expected: spec.n(), got: field.base_dim });
    }
    let m = zeta.len();
    let dim = zeta.dim;
    // Each particle integrates once through the whole grid.
    let paths: Vec<Result<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut pos = zeta.point(i).to_vec();
            let mut path = Vec::with_capacity(time_grid.len() * dim);
            let mut prev_t = time_grid[0];
            path.extend_from_slice(&pos);
            for &t in &time_grid[1..] {
                pos = flow(field, spec, prev_t, t, &pos, opts).map_err(|e| {
                    OulabError::Domain(format!("particle {i}: {e}"))
                })?;
                path.extend_from_slice(&pos);
                prev_t = t;
            }
            Ok(path)
        })
        .collect();
    let mut frames: Vec<ParticleEnsemble> = (0..time_grid.len())
        .map(|_| ParticleEnsemble {
            dim,
            positions: Vec::with_capacity(m * dim),
            seed: zeta.seed,
            provenance: zeta.provenance.clone(),
        })
        .collect();
    for path in paths {
        let path = path?;
        for (j, frame) in frames.iter_mut().enumerate() {
            frame.positions.extend_from_slice(&path[j * dim..(j + 1) * dim]);
        }
    }
    Ok(Trajectory { times: time_grid.to_vec(), frames })
}

/// Weak-form residual of a trajectory against a terminal-zero test
/// function: int_0^T int (du/dt + <F, Du>) dmu_s ds + int u(0,.) dzeta.
/// Zero (up to MC and time-quadrature error) iff the trajectory solves
/// the continuity equation.
pub fn weak_residual(
    traj: &Trajectory,
    u: &CylinderFunction,
    field: &CylinderVectorField,
) -> Result<Estimate> {
    if !u.terminal_zero {
        return Err(OulabError::TestClass(
            "weak residual requires a terminal-zero test function".into(),
        ));
    }
    if traj.times.len() < 2 {
        return Err(OulabError::EmptyTimeGrid);
    }
    let m = traj.frames[0].len();
    let per_particle: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let vals: Vec<f64> = traj
                .times
                .iter()
                .zip(&traj.frames)
                .map(|(&t, frame)| {
                    let x = frame.point(i);
                    let fx = field.eval(t, x);
                    let du = u.grad(t, x);
                    u.dt(t, x) + du.iter().zip(fx.iter()).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            trapezoid(&traj.times, &vals).unwrap() + u.eval(traj.times[0], traj.frames[0].point(i))
        })
        .collect();
    Ok(Estimate::from_samples(&per_particle))
}

/// Norms of the three error terms of K_F(P_eps u_n) - f and their sum.
#[derive(Debug, Clone)]
pub struct RangeProbeReport {
    pub eps: f64,
    pub approx_dim: usize,
    /// ||P_eps f - f||_{L^{p'}(dt x mu)}.
    pub smoothing_term: Estimate,
    /// ||<F - F_n, D P_eps u_n>||_{L^{p'}}.
    pub drift_term: Estimate,
    /// ||B_eps(u_n, F_n)||_{L^{p'}}.
    pub commutator_term: Estimate,
    /// ||K_F(P_eps u_n) - f||_{L^{p'}} (norm of the pointwise sum).
    pub total: Estimate,
    pub accuracy_warning: bool,
}

/// Decompose K_F(P_eps u_n) - f on a batch x time grid, with
/// F_n = project_smooth(F, approx_dim) and u_n the characteristics
/// solution under F_n. Inner Gaussian expectations use tensor
/// Gauss-Hermite over the (few) base coordinates.
#[allow(clippy::too_many_arguments)]
pub fn range_probe(
    f: &CylinderFunction,
    field: &CylinderVectorField,
    spec: &Spectrum,
    eps: f64,
    approx_dim: usize,
    exps: ExponentTriple,
    batch: &SampleBatch,
    time_grid: &[f64],
    opts: &OdeOptions,
) -> Result<RangeProbeReport> {
    if time_grid.len() < 2 {
        return Err(OulabError::EmptyTimeGrid);
    }
    let field_n = project_smooth(field, approx_dim, batch)?;
    let exact_projection = approx_dim >= field.base_dim;
    let dims = f.base_dim.max(field_n.base_dim);
    let q = QuadratureSpec::GaussHermite { nodes_per_mode: 8, retained_modes: dims.min(4) };
    let pp = exps.p_prime();

    // u_n as a cylinder function over the first `dims` coordinates.
    let f_c = f.clone();
    let fnc = field_n.clone();
    let opts_c = *opts;
    let eval: ScalarClosure = Arc::new(move |t, x| {
        backward_solution_with(&f_c, &fnc, t, x, &opts_c, BACKWARD_SIGN, false).unwrap()
    });
    let u_n = CylinderFunction::new(
        dims,
        f.horizon,
        true,
        eval,
        None,
        Arc::new(|_t, _x| f64::NAN),
    );

    let mut any_warning = false;
    let per_x: Vec<[f64; 4]> = batch
        .points()
        .map(|x| {
            let mut cols: [Vec<f64>; 4] = Default::default();
            for &t in time_grid {
                let pf = mehler_apply(f, spec, eps, t, x, &q).unwrap();
                let e1 = pf.value - f.eval(t, x);
                let e2 = if exact_projection {
                    0.0
                } else {
                    let g = grad_mehler(&u_n, spec, eps, t, x, &q, GradEstimator::Weight).unwrap();
                    let fx = field.eval(t, x);
                    let fnx = field_n.eval(t, x);
                    let mut acc = 0.0;
                    for k in 0..g.value.len() {
                        let dfk = if k < fx.len() { fx[k] } else { 0.0 }
                            - if k < fnx.len() { fnx[k] } else { 0.0 };
                        acc += dfk * g.value[k];
                    }
                    acc
                };
                let e3 = commutator_rep_sum(&u_n, &field_n, spec, eps, t, x, &q).unwrap();
                cols[0].push(e1.abs().powf(pp));
                cols[1].push(e2.abs().powf(pp));
                cols[2].push(e3.value.abs().powf(pp));
                cols[3].push((e1 + e2 + e3.value).abs().powf(pp));
            }
            [
                trapezoid(time_grid, &cols[0]).unwrap(),
                trapezoid(time_grid, &cols[1]).unwrap(),
                trapezoid(time_grid, &cols[2]).unwrap(),
                trapezoid(time_grid, &cols[3]).unwrap(),
            ]
        })
        .collect();
    let norm_of = |j: usize| {
        let col: Vec<f64> = per_x.iter().map(|r| r[j]).collect();
        Estimate::from_samples(&col).powf(1.0 / pp)
    };
    let smoothing_term = norm_of(0);
    let drift_term = norm_of(1);
    let commutator_term = norm_of(2);
    let total = norm_of(3);
    for e in [&smoothing_term, &drift_term, &commutator_term, &total] {
        if e.value.abs() > 1e-12 && e.std_err > 0.1 * e.value.abs() {
            any_warning = true;
        }
    }
    Ok(RangeProbeReport {
        eps,
        approx_dim,
        smoothing_term,
        drift_term,
        commutator_term,
        total,
        accuracy_warning: any_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{dt_battery, make_field, make_function, ramp};
    use crate::quadrature::uniform_grid;
    use std::collections::BTreeMap;

    fn params(kvs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kvs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn spec2() -> Spectrum {
        Spectrum::new(vec![1.0, 0.5]).unwrap()
    }

    #[test]
    fn flow_constant_field() {
        let f = make_field("constant", &params(&[("value", 1.0), ("index", 1.0)])).unwrap();
        let spec = spec2();
        let opts = OdeOptions::default();
        let out = flow(&f, &spec, 0.0, 0.5, &[0.2, -0.1], &opts).unwrap();
        assert!((out[0] - 0.7).abs() < 1e-10);
        assert_eq!(out[1], -0.1);
        // identity at equal times
        let same = flow(&f, &spec, 0.3, 0.3, &[0.2, -0.1], &opts).unwrap();
        assert_eq!(same, vec![0.2, -0.1]);
    }

    #[test]
    fn flow_linear_contraction() {
        let f = make_field("contraction", &params(&[("a", -1.0), ("dim", 1.0)])).unwrap();
        let spec = spec2();
        let opts = OdeOptions::default();
        let out = flow(&f, &spec, 0.0, 1.0, &[1.0, 0.4], &opts).unwrap();
        let expected = (-1.0f64).exp();
        assert!(
            (out[0] - expected).abs() <= 10.0 * opts.rel_tol * expected,
            "{} vs {expected}",
            out[0]
        );
        assert_eq!(out[1], 0.4);
    }

    #[test]
    fn flow_group_property() {
        let f = make_field("sine_field", &params(&[("amp", 1.0), ("a", 1.3)])).unwrap();
        let spec = spec2();
        let opts = OdeOptions::default();
        let x = [0.5, -0.8];
        let mid = flow(&f, &spec, 0.0, 0.4, &x, &opts).unwrap();
        let two_leg = flow(&f, &spec, 0.4, 1.0, &mid, &opts).unwrap();
        let direct = flow(&f, &spec, 0.0, 1.0, &x, &opts).unwrap();
        for k in 0..2 {
            assert!(
                (two_leg[k] - direct[k]).abs() <= 10.0 * opts.rel_tol * (1.0 + direct[k].abs()),
                "{:?} vs {:?}",
                two_leg,
                direct
            );
        }
    }

    #[test]
    fn backward_convention_oracle() {
        // Time-dependent source so that the s-vs-(s - t) choice is visible
        // as well as the sign: only sign = -1, unshifted, satisfies the PDE.
        let one = make_function("constant", &params(&[("value", 1.0)]), 1.0).unwrap();
        let framp = ramp(one.clone(), 1.0); // f(t) = 1 - t
        let c = make_field("constant", &params(&[("value", 1.0), ("index", 1.0)])).unwrap();
        let spec = spec2();
        let opts = OdeOptions::default();
        let probes = probe_grid(&spec, 2, 1.0, 16, 5);
        for (sign, shift) in [(1.0, false), (-1.0, false), (1.0, true), (-1.0, true)] {
            let u = |t: f64, x: &[f64]| {
                backward_solution_with(&framp, &c, t, x, &opts, sign, shift).unwrap()
            };
            let rep = pde_residual(u, &c, &framp, &probes);
            if sign == BACKWARD_SIGN && !shift {
                assert!(rep.max_abs <= 1e-3, "chosen convention residual {}", rep.max_abs);
            } else {
                assert!(rep.max_abs > 0.3, "wrong convention passed: {sign}, {shift}");
            }
        }
        // Closed form: u(t, x) = -(T - t).
        let v = backward_solution(&one, &c, &spec, 0.25, &[0.0, 0.0], &opts).unwrap();
        assert!((v + 0.75).abs() < 1e-9);
        let at_t = backward_solution(&one, &c, &spec, 1.0, &[0.3, 0.0], &opts).unwrap();
        assert!(at_t.abs() < 1e-12);
    }

    #[test]
    fn backward_zero_field_coordinate_source() {
        // F = 0, f = x1: u(t, x) = -(T - t) x1.
        let f = make_function("coordinate", &params(&[("index", 1.0)]), 1.0).unwrap();
        let zero = make_field("constant", &params(&[("value", 0.0), ("index", 1.0)])).unwrap();
        let spec = spec2();
        let opts = OdeOptions::default();
        let v = backward_solution(&f, &zero, &spec, 0.4, &[0.7, 0.0], &opts).unwrap();
        assert!((v + 0.6 * 0.7).abs() < 1e-9, "{v}");
    }

    #[test]
    fn residual_meter_calibration() {
        let one = make_function("constant", &params(&[("value", 1.0)]), 1.0).unwrap();
        let zero_f = make_function("constant", &params(&[("value", 0.0)]), 1.0).unwrap();
        let c = make_field("constant", &params(&[("value", 1.0), ("index", 1.0)])).unwrap();
        let spec = spec2();
        let probes = probe_grid(&spec, 2, 1.0, 32, 9);
        let rep = pde_residual(|_t, _x| 0.0, &c, &zero_f, &probes);
        assert_eq!(rep.max_abs, 0.0);
        let rep1 = pde_residual(|_t, _x| 0.0, &c, &one, &probes);
        assert!((rep1.max_abs - 1.0).abs() < 1e-12);
        assert!((rep1.mean_abs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn residual_smooth_catalog_pairs() {
        let spec = spec2();
        let opts = OdeOptions::default();
        let probes = probe_grid(&spec, 2, 1.0, 64, 13);
        let sources = [
            make_function("sine", &params(&[("amp", 1.0), ("a1", 1.0), ("a2", 0.7)]), 1.0).unwrap(),
            make_function("gauss", &params(&[("amp", 1.0), ("b1", 0.8), ("b2", 0.5)]), 1.0).unwrap(),
        ];
        let fields = [
            make_field("sine_field", &params(&[("amp", 0.8), ("a", 1.0)])).unwrap(),
            make_field("tanh_field", &params(&[("amp", 0.7), ("a", 1.2)])).unwrap(),
        ];
        for f in &sources {
            for field in &fields {
                let u = |t: f64, x: &[f64]| {
                    backward_solution(f, field, &spec, t, x, &OdeOptions::default()).unwrap()
                };
                let rep = pde_residual(u, field, f, &probes);
                assert!(rep.max_abs <= 1e-3, "residual {}", rep.max_abs);
                let _ = &opts;
            }
        }
    }

    #[test]
    fn max_principle_tight_and_trivial() {
        let one = make_function("constant", &params(&[("value", 1.0)]), 1.0).unwrap();
        let c = make_field("constant", &params(&[("value", 1.0), ("index", 1.0)])).unwrap();
        let spec = spec2();
        let opts = OdeOptions::default();
        let mut probes = probe_grid(&spec, 2, 1.0, 32, 17);
        probes.push((0.0, vec![0.0, 0.0])); // where |u| attains T ||f||
        let u = |t: f64, x: &[f64]| backward_solution(&one, &c, &spec, t, x, &opts).unwrap();
        let rep = max_principle_check(u, &one, 1.0, &probes).unwrap();
        assert!(rep.pass);
        assert!((rep.max_u - 1.0).abs() < 1e-9);
        assert!((rep.ratio - 1.0).abs() < 1e-9);
        let zero_f = make_function("constant", &params(&[("value", 0.0)]), 1.0).unwrap();
        let rep0 = max_principle_check(|_t, _x| 0.0, &zero_f, 1.0, &probes).unwrap();
        assert_eq!(rep0.ratio, 0.0);
        assert!(rep0.pass);
    }

    #[test]
    fn pushforward_zero_field_static() {
        let spec = spec2();
        let zeta = ParticleEnsemble::from_gaussian(&spec, 100, 3, &[]).unwrap();
        let zero = make_field("constant", &params(&[("value", 0.0), ("index", 1.0)])).unwrap();
        let tg = uniform_grid(0.0, 1.0, 5);
        let traj = push_forward(&zeta, &zero, &spec, &tg, &OdeOptions::default()).unwrap();
        for frame in &traj.frames {
            assert_eq!(frame.positions, zeta.positions);
            assert_eq!(frame.len(), zeta.len());
        }
    }

    #[test]
    fn pushforward_translation_and_contraction() {
        let spec = spec2();
        let m = 20_000;
        let zeta = ParticleEnsemble::from_gaussian(&spec, m, 7, &[]).unwrap();
        let c = make_field("constant", &params(&[("value", 1.0), ("index", 1.0)])).unwrap();
        let tg = uniform_grid(0.0, 1.0, 3);
        let traj = push_forward(&zeta, &c, &spec, &tg, &OdeOptions::default()).unwrap();
        let end = traj.frames.last().unwrap();
        let tol = 3.0 * (spec.lambdas()[0] / m as f64).sqrt();
        assert!((end.mean(0) - (zeta.mean(0) + 1.0)).abs() <= tol);

        let lin = make_field("contraction", &params(&[("a", -1.0), ("dim", 2.0)])).unwrap();
        let traj2 = push_forward(&zeta, &lin, &spec, &tg, &OdeOptions::default()).unwrap();
        let end2 = traj2.frames.last().unwrap();
        for k in 0..2 {
            let expected = (-2.0f64).exp() * spec.lambdas()[k];
            let got = end2.covariance(k, k);
            // variance-of-variance SE ~ sqrt(2/m) * var
            let se = (2.0 / m as f64).sqrt() * expected;
            assert!((got - expected).abs() <= 3.0 * se, "{got} vs {expected}");
        }
    }

    #[test]
    fn weak_residual_battery_and_negative_control() {
        let spec = spec2();
        let zeta = ParticleEnsemble::from_gaussian(&spec, 5_000, 11, &[]).unwrap();
        let c = make_field("constant", &params(&[("value", 1.0), ("index", 1.0)])).unwrap();
        let tg = uniform_grid(0.0, 1.0, 65);
        let traj = push_forward(&zeta, &c, &spec, &tg, &OdeOptions::default()).unwrap();
        for (i, u) in dt_battery(1.0).iter().enumerate() {
            let res = weak_residual(&traj, u, &c).unwrap();
            assert!(
                res.value.abs() <= 3.0 * (res.std_err + 1e-4),
                "battery {i}: {} +- {}",
                res.value,
                res.std_err
            );
        }
        // Frozen particles are not a solution; the meter must notice.
        let frozen = Trajectory {
            times: tg.clone(),
            frames: tg.iter().map(|_| zeta.clone()).collect(),
        };
        let ramped = ramp(
            make_function("coordinate", &params(&[("index", 1.0)]), 1.0).unwrap(),
            1.0,
        );
        let res = weak_residual(&frozen, &ramped, &c).unwrap();
        assert!(
            res.value.abs() >= 5.0 * res.std_err,
            "negative control undetected: {} +- {}",
            res.value,
            res.std_err
        );

        // Terminal-zero class is enforced.
        let not_dt = make_function("sine", &params(&[("amp", 1.0)]), 1.0).unwrap();
        assert!(matches!(
            weak_residual(&traj, &not_dt, &c),
            Err(OulabError::TestClass(_))
        ));
    }

    #[test]
    fn weak_residual_zero_field_telescopes() {
        let spec = spec2();
        let zeta = ParticleEnsemble::from_gaussian(&spec, 2_000, 13, &[]).unwrap();
        let zero = make_field("constant", &params(&[("value", 0.0), ("index", 1.0)])).unwrap();
        let tg = uniform_grid(0.0, 1.0, 65);
        let traj = push_forward(&zeta, &zero, &spec, &tg, &OdeOptions::default()).unwrap();
        for u in dt_battery(1.0).iter().take(4) {
            let res = weak_residual(&traj, u, &zero).unwrap();
            assert!(res.value.abs() <= 3.0 * (res.std_err + 1e-4), "{}", res.value);
        }
    }

    #[test]
    fn range_probe_zero_source() {
        let spec = spec2();
        let f = ramp(
            make_function("constant", &params(&[("value", 0.0)]), 1.0).unwrap(),
            1.0,
        );
        let field = make_field("sine_field", &params(&[("amp", 0.8), ("a", 1.0)])).unwrap();
        let exps = ExponentTriple::new(4.0, 4.0, 2.0).unwrap();
        let batch = sample_gaussian(&spec, 32, 19).unwrap();
        let tg = uniform_grid(0.05, 0.95, 3);
        let rep = range_probe(
            &f, &field, &spec, 0.2, 2, exps, &batch, &tg, &OdeOptions::default(),
        )
        .unwrap();
        assert!(rep.smoothing_term.value.abs() < 1e-12);
        assert!(rep.commutator_term.value.abs() < 1e-10);
        assert!(rep.total.value.abs() < 1e-10);
        // F finitely based and fully retained: middle term exactly zero.
        assert_eq!(rep.drift_term.value, 0.0);
    }

    #[test]
    fn range_probe_eps_refinement() {
        let spec = spec2();
        let f = ramp(
            make_function("sine", &params(&[("amp", 1.0), ("a1", 1.0), ("a2", 0.5)]), 1.0)
                .unwrap(),
            1.0,
        );
        let field = make_field("sine_field", &params(&[("amp", 0.8), ("a", 1.0)])).unwrap();
        let exps = ExponentTriple::new(4.0, 4.0, 2.0).unwrap();
        let batch = sample_gaussian(&spec, 48, 23).unwrap();
        let tg = uniform_grid(0.05, 0.95, 3);
        let coarse = range_probe(
            &f, &field, &spec, 0.4, 2, exps, &batch, &tg, &OdeOptions::default(),
        )
        .unwrap();
        let fine = range_probe(
            &f, &field, &spec, 0.01, 2, exps, &batch, &tg, &OdeOptions::default(),
        )
        .unwrap();
        assert!(
            fine.total.value + 3.0 * fine.total.std_err
                < coarse.total.value - 3.0 * coarse.total.std_err,
            "{} !< {}",
            fine.total.value,
            coarse.total.value
        );
    }

    #[test]
    fn stiffness_detected() {
        // Finite-time blow-up: dy/ds = 1 + y^2 from y = 0 blows up at pi/2.
        let opts = OdeOptions::default();
        let res = rk45(|_s, y, dy| dy[0] = 1.0 + y[0] * y[0], 0.0, 2.0, &[0.0], &opts);
        assert!(matches!(res, Err(OulabError::Stiffness { .. })));
    }
}
