use oulab::commutator::ExponentTriple;
use oulab::estimate::Estimate;
use oulab::spectral::{ou_operators, Spectrum};
use proptest::prelude::*;

proptest! {
    // T_t^2 + S_t^2 = 1 mode by mode, for any eigenvalue and any time.
    #[test]
    fn rotation_identity_holds(lam in 1e-3..10.0f64, log_t in -6.0..1.0f64) {
        let spec = Spectrum::new(vec![lam]).unwrap();
        let ops = ou_operators(&spec, 10f64.powf(log_t)).unwrap();
        let gap = (ops.tau[0] * ops.tau[0] + ops.sigma[0] * ops.sigma[0] - 1.0).abs();
        prop_assert!(gap <= 4.0 * f64::EPSILON, "gap {gap}");
    }

    // tau decreases strictly in t; qt increases towards lambda. Times
    // stay within a few relaxation lengths so the exponentials do not
    // saturate to machine precision.
    #[test]
    fn contraction_monotone(lam in 0.5..10.0f64, t in 1e-4..1.0f64, dt in 1e-4..1.0f64) {
        let spec = Spectrum::new(vec![lam]).unwrap();
        let a = ou_operators(&spec, t).unwrap();
        let b = ou_operators(&spec, t + dt).unwrap();
        prop_assert!(b.tau[0] < a.tau[0]);
        prop_assert!(a.qt[0] < b.qt[0] && b.qt[0] <= lam);
    }

    // The exponent triple is accepted exactly when 1/p' = 1/r + 1/s.
    #[test]
    fn exponent_relation_is_the_gate(p in 2.1..8.0f64, r in 1.0..8.0f64, s in 1.01..2.0f64) {
        let holds = (1.0 - 1.0 / p - (1.0 / r + 1.0 / s)).abs() <= 1e-12;
        prop_assert_eq!(ExponentTriple::new(p, r, s).is_ok(), holds);
    }

    // Sample estimates are homogeneous: value scales by c, error by |c|.
    #[test]
    fn estimate_scaling_homogeneous(
        vals in prop::collection::vec(-10.0..10.0f64, 2..40),
        c in -3.0..3.0f64,
    ) {
        let base = Estimate::from_samples(&vals);
        let scaled_samples: Vec<f64> = vals.iter().map(|v| c * v).collect();
        let direct = Estimate::from_samples(&scaled_samples);
        let lifted = base.scale(c);
        prop_assert!((direct.value - lifted.value).abs() <= 1e-9 * (1.0 + lifted.value.abs()));
        prop_assert!((direct.std_err - lifted.std_err).abs() <= 1e-9 * (1.0 + lifted.std_err));
    }
}
