//! Named catalog of parametric cylinder functions and vector fields.
//!
//! Config files select entries from this catalog by name; arbitrary user
//! code is out of scope. Every smooth entry carries hand-derived gradient
//! closures; finite differences are used only as test oracles.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::cylinder::{CylinderFunction, CylinderVectorField};
use crate::error::{OulabError, Result};

type Params = BTreeMap<String, f64>;

fn get(params: &Params, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// Builds a catalog function by name.
///
/// Names: `constant`, `coordinate`, `sine`, `gauss`, `tanh`, `sign`,
/// `ramp_sine`, `ramp_gauss`. The `ramp_*` entries carry the factor
/// (1 - t/T) and belong to the terminal-zero test class; `coordinate` is
/// unbounded; `sign` is bounded but not differentiable.
pub fn make_function(name: &str, params: &Params, horizon: f64) -> Result<CylinderFunction> {
    match name {
        "constant" => {
            let c = get(params, "value", 1.0);
            Ok(CylinderFunction::new(
                1,
                horizon,
                false,
                Arc::new(move |_t, _x| c),
                Some(Arc::new(|_t, _x, out: &mut [f64]| out.fill(0.0))),
                Arc::new(|_t, _x| 0.0),
            ))
        }
        "coordinate" => {
            let i = get(params, "index", 1.0) as usize;
            if i == 0 {
                return Err(OulabError::Config("coordinate index is 1-based".into()));
            }
            Ok(CylinderFunction::new(
                i,
                horizon,
                false,
                Arc::new(move |_t, x| x[i - 1]),
                Some(Arc::new(move |_t, _x, out: &mut [f64]| {
                    out.fill(0.0);
                    out[i - 1] = 1.0;
                })),
                Arc::new(|_t, _x| 0.0),
            ))
        }
        "sine" => {
            let amp = get(params, "amp", 1.0);
            let a1 = get(params, "a1", 1.0);
            let a2 = get(params, "a2", 0.0);
            let phase = get(params, "phase", 0.0);
            Ok(CylinderFunction::new(
                2,
                horizon,
                false,
                Arc::new(move |_t, x| amp * (a1 * x[0] + a2 * x[1] + phase).sin()),
                Some(Arc::new(move |_t, x: &[f64], out: &mut [f64]| {
                    let c = amp * (a1 * x[0] + a2 * x[1] + phase).cos();
                    out[0] = a1 * c;
                    out[1] = a2 * c;
                })),
                Arc::new(|_t, _x| 0.0),
            ))
        }
        "gauss" => {
            let amp = get(params, "amp", 1.0);
            let b1 = get(params, "b1", 1.0);
            let b2 = get(params, "b2", 1.0);
            Ok(CylinderFunction::new(
                2,
                horizon,
                false,
                Arc::new(move |_t, x| {
                    amp * (-(b1 * x[0] * x[0] + b2 * x[1] * x[1]) / 2.0).exp()
                }),
                Some(Arc::new(move |_t, x: &[f64], out: &mut [f64]| {
                    let e = amp * (-(b1 * x[0] * x[0] + b2 * x[1] * x[1]) / 2.0).exp();
                    out[0] = -b1 * x[0] * e;
                    out[1] = -b2 * x[1] * e;
                })),
                Arc::new(|_t, _x| 0.0),
            ))
        }
        "tanh" => {
            let amp = get(params, "amp", 1.0);
            let a1 = get(params, "a1", 1.0);
            let a2 = get(params, "a2", 0.0);
            Ok(CylinderFunction::new(
                2,
                horizon,
                false,
                Arc::new(move |_t, x| amp * (a1 * x[0] + a2 * x[1]).tanh()),
                Some(Arc::new(move |_t, x: &[f64], out: &mut [f64]| {
                    let s = (a1 * x[0] + a2 * x[1]).cosh().powi(-2) * amp;
                    out[0] = a1 * s;
                    out[1] = a2 * s;
                })),
                Arc::new(|_t, _x| 0.0),
            ))
        }
        "sign" => Ok(CylinderFunction::new(
            1,
            horizon,
            false,
            Arc::new(|_t, x| {
                if x[0] > 0.0 {
                    1.0
                } else if x[0] < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            None,
            Arc::new(|_t, _x| 0.0),
        )),
        "ramp_sine" => {
            let inner = make_function("sine", params, horizon)?;
            Ok(ramp(inner, horizon))
        }
        "ramp_gauss" => {
            let inner = make_function("gauss", params, horizon)?;
            Ok(ramp(inner, horizon))
        }
        other => Err(OulabError::Config(format!("unknown catalog function `{other}`"))),
    }
}

/// Multiplies a time-independent function by (1 - t/T), which puts it in
/// the terminal-zero class.
pub fn ramp(inner: CylinderFunction, horizon: f64) -> CylinderFunction {
    let base_dim = inner.base_dim;
    let f = inner.clone();
    let g = inner.clone();
    let h = inner;
    CylinderFunction::new(
        base_dim,
        horizon,
        true,
        Arc::new(move |t, x| (1.0 - t / horizon) * f.eval(t, x)),
        Some(Arc::new(move |t: f64, x: &[f64], out: &mut [f64]| {
            let grad = g.grad(t, x);
            let c = 1.0 - t / horizon;
            for (o, v) in out.iter_mut().zip(&grad) {
                *o = c * v;
            }
        })),
        Arc::new(move |t, x| -h.eval(t, x) / horizon),
    )
}

/// Builds a catalog vector field by name.
///
/// Names: `constant` (bounded), `linear_diag` (unbounded), `contraction`
/// (unbounded, a * x over the first `dim` coordinates), `sine_field`
/// (bounded), `tanh_field` (bounded), `bump` (compactly supported).
pub fn make_field(name: &str, params: &Params) -> Result<CylinderVectorField> {
    match name {
        "constant" => {
            let c = get(params, "value", 1.0);
            let i = get(params, "index", 1.0) as usize;
            if i == 0 {
                return Err(OulabError::Config("field index is 1-based".into()));
            }
            Ok(CylinderVectorField::new(
                i,
                true,
                Arc::new(move |_t, _x, out| {
                    out.fill(0.0);
                    out[i - 1] = c;
                }),
                Arc::new(|_t, _x, out| out.fill(0.0)),
            ))
        }
        "linear_diag" => {
            let a = get(params, "a", 1.0);
            Ok(CylinderVectorField::new(
                1,
                false,
                Arc::new(move |_t, x, out| out[0] = a * x[0]),
                Arc::new(move |_t, _x, out| out[0] = a),
            ))
        }
        "contraction" => {
            let a = get(params, "a", -1.0);
            let dim = get(params, "dim", 1.0) as usize;
            Ok(CylinderVectorField::new(
                dim,
                false,
                Arc::new(move |_t, x, out| {
                    for k in 0..dim {
                        out[k] = a * x[k];
                    }
                }),
                Arc::new(move |_t, _x, out| {
                    out.fill(0.0);
                    for k in 0..dim {
                        out[k * dim + k] = a;
                    }
                }),
            ))
        }
        "sine_field" => {
            // amp (sin(a x2) e1 + cos(a x1) e2), divergence-free.
            let amp = get(params, "amp", 1.0);
            let a = get(params, "a", 1.0);
            Ok(CylinderVectorField::new(
                2,
                true,
                Arc::new(move |_t, x, out| {
                    out[0] = amp * (a * x[1]).sin();
                    out[1] = amp * (a * x[0]).cos();
                }),
                Arc::new(move |_t, x, out| {
                    out[0] = 0.0;
                    out[1] = amp * a * (a * x[1]).cos();
                    out[2] = -amp * a * (a * x[0]).sin();
                    out[3] = 0.0;
                }),
            ))
        }
        "tanh_field" => {
            let amp = get(params, "amp", 1.0);
            let a = get(params, "a", 1.0);
            Ok(CylinderVectorField::new(
                2,
                true,
                Arc::new(move |_t, x, out| {
                    out[0] = amp * (a * x[0]).tanh();
                    out[1] = amp * (a * x[1]).tanh();
                }),
                Arc::new(move |_t, x, out| {
                    out[0] = amp * a * (a * x[0]).cosh().powi(-2);
                    out[1] = 0.0;
                    out[2] = 0.0;
                    out[3] = amp * a * (a * x[1]).cosh().powi(-2);
                }),
            ))
        }
        "bump" => {
            // amp ((1 - rho^2)_+)^2 e1 with rho^2 = (x1^2 + x2^2)/R^2; C^1
            // with compact support.
            let amp = get(params, "amp", 1.0);
            let r = get(params, "radius", 2.0);
            let r2 = r * r;
            Ok(CylinderVectorField::new(
                2,
                true,
                Arc::new(move |_t, x, out| {
                    let rho2 = (x[0] * x[0] + x[1] * x[1]) / r2;
                    let b = (1.0 - rho2).max(0.0);
                    out[0] = amp * b * b;
                    out[1] = 0.0;
                }),
                Arc::new(move |_t, x, out| {
                    let rho2 = (x[0] * x[0] + x[1] * x[1]) / r2;
                    let b = (1.0 - rho2).max(0.0);
                    let c = -4.0 * amp * b / r2;
                    out[0] = c * x[0];
                    out[1] = c * x[1];
                    out[2] = 0.0;
                    out[3] = 0.0;
                }),
            ))
        }
        other => Err(OulabError::Config(format!("unknown catalog field `{other}`"))),
    }
}

/// Twelve terminal-zero test functions for the weak-residual battery.
pub fn dt_battery(horizon: f64) -> Vec<CylinderFunction> {
    let mut out = Vec::with_capacity(12);
    let sine_params: [(f64, f64, f64, f64); 6] = [
        (1.0, 1.0, 0.0, 0.0),
        (1.0, 0.5, 0.5, 0.3),
        (0.7, 2.0, 0.0, 1.0),
        (1.2, 0.0, 1.0, 0.0),
        (0.5, 1.5, -0.5, 0.7),
        (1.0, 0.3, 1.3, -0.4),
    ];
    for (amp, a1, a2, phase) in sine_params {
        let mut p = Params::new();
        p.insert("amp".into(), amp);
        p.insert("a1".into(), a1);
        p.insert("a2".into(), a2);
        p.insert("phase".into(), phase);
        out.push(make_function("ramp_sine", &p, horizon).unwrap());
    }
    let gauss_params: [(f64, f64, f64); 6] = [
        (1.0, 1.0, 1.0),
        (1.0, 0.5, 2.0),
        (0.8, 2.0, 0.5),
        (1.5, 0.2, 0.2),
        (0.6, 1.0, 3.0),
        (1.0, 3.0, 1.0),
    ];
    for (amp, b1, b2) in gauss_params {
        let mut p = Params::new();
        p.insert("amp".into(), amp);
        p.insert("b1".into(), b1);
        p.insert("b2".into(), b2);
        out.push(make_function("ramp_gauss", &p, horizon).unwrap());
    }
    out
}

/// A random bounded smooth (u, F) pair for representation-identity checks.
pub fn random_bounded_pair<R: Rng>(rng: &mut R, horizon: f64) -> (CylinderFunction, CylinderVectorField) {
    let mut p = Params::new();
    p.insert("amp".into(), rng.gen_range(0.5..1.5));
    p.insert("a1".into(), rng.gen_range(-1.5..1.5));
    p.insert("a2".into(), rng.gen_range(-1.5..1.5));
    p.insert("phase".into(), rng.gen_range(0.0..3.0));
    let u = if rng.gen_bool(0.5) {
        make_function("sine", &p, horizon).unwrap()
    } else {
        let mut q = Params::new();
        q.insert("amp".into(), rng.gen_range(0.5..1.5));
        q.insert("b1".into(), rng.gen_range(0.3..2.0));
        q.insert("b2".into(), rng.gen_range(0.3..2.0));
        make_function("gauss", &q, horizon).unwrap()
    };
    let mut fp = Params::new();
    fp.insert("amp".into(), rng.gen_range(0.5..1.5));
    fp.insert("a".into(), rng.gen_range(0.5..1.5));
    let f = if rng.gen_bool(0.5) {
        make_field("sine_field", &fp).unwrap()
    } else {
        make_field("tanh_field", &fp).unwrap()
    };
    (u, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central finite-difference oracle for gradients.
    fn fd_grad(u: &CylinderFunction, t: f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..u.base_dim)
            .map(|k| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += h;
                xm[k] -= h;
                (u.eval(t, &xp) - u.eval(t, &xm)) / (2.0 * h)
            })
            .collect()
    }

    fn fd_jac(f: &CylinderVectorField, t: f64, x: &[f64], h: f64) -> Vec<f64> {
        let n = f.base_dim;
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let fp = f.eval(t, &xp);
            let fm = f.eval(t, &xm);
            for i in 0..n {
                out[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let names = ["sine", "gauss", "tanh", "coordinate", "ramp_sine", "ramp_gauss"];
        for name in names {
            let mut p = Params::new();
            p.insert("amp".into(), 1.3);
            p.insert("a1".into(), 0.8);
            p.insert("a2".into(), -0.6);
            p.insert("b1".into(), 0.9);
            p.insert("b2".into(), 1.4);
            let u = make_function(name, &p, 1.0).unwrap();
            for _ in 0..16 {
                let x: Vec<f64> = (0..u.base_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let t = rng.gen_range(0.0..1.0);
                let g = u.grad(t, &x);
                let fd = fd_grad(&u, t, &x, 1e-5);
                for (a, b) in g.iter().zip(&fd) {
                    let scale = 1.0_f64.max(b.abs());
                    assert!(
                        (a - b).abs() / scale < 1e-6,
                        "{name}: analytic {a} vs fd {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let names = ["constant", "linear_diag", "contraction", "sine_field", "tanh_field", "bump"];
        for name in names {
            let mut p = Params::new();
            p.insert("a".into(), 0.7);
            p.insert("amp".into(), 1.1);
            p.insert("dim".into(), 2.0);
            p.insert("radius".into(), 2.0);
            let f = make_field(name, &p).unwrap();
            for _ in 0..16 {
                let x: Vec<f64> = (0..f.base_dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let j = f.jacobian(0.0, &x);
                let fd = fd_jac(&f, 0.0, &x, 1e-5);
                for (a, b) in j.iter().zip(&fd) {
                    let scale = 1.0_f64.max(b.abs());
                    assert!(
                        (a - b).abs() / scale < 1e-6,
                        "{name}: analytic {a} vs fd {b} at {x:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn ramp_entries_vanish_at_horizon() {
        for u in dt_battery(1.0) {
            assert!(u.terminal_zero);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..8 {
                let x: Vec<f64> = (0..u.base_dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
                assert!(u.eval(1.0, &x).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn battery_has_twelve_elements() {
        assert_eq!(dt_battery(1.0).len(), 12);
    }

    #[test]
    fn cylinder_functions_ignore_higher_coordinates() {
        let p = Params::new();
        let u = make_function("sine", &p, 1.0).unwrap();
        let a = u.eval(0.2, &[0.5, -0.3, 99.0, -7.0]);
        let b = u.eval(0.2, &[0.5, -0.3]);
        assert_eq!(a, b);
    }

    #[test]
    fn bump_has_compact_support() {
        let mut p = Params::new();
        p.insert("radius".into(), 2.0);
        let f = make_field("bump", &p).unwrap();
        assert_eq!(f.eval(0.0, &[3.0, 0.0]), vec![0.0, 0.0]);
        assert!(f.eval(0.0, &[0.0, 0.0])[0] > 0.0);
    }

    #[test]
    fn random_pairs_are_bounded(){
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let (u, f) = random_bounded_pair(&mut rng, 1.0);
            assert!(u.smooth);
            assert!(f.bounded);
        }
    }
}
