//! Property-based invariants over randomized inputs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use twoport_core::cone_geometry::{cone_contains, ConeSpec};
use twoport_core::gap::chordal_distance;
use twoport_core::lti::pade_delay;
use twoport_core::sim::Signal;

proptest! {
    /// Truncated L2 norms are nondecreasing in the horizon.
    #[test]
    fn truncated_norm_monotone(values in prop::collection::vec(-1e3f64..1e3, 1..200),
                               h in 1e-4f64..1.0) {
        let sig = Signal { values, h };
        let t_total = sig.len() as f64 * h;
        let mut prev = 0.0;
        for i in 0..=20 {
            let t = t_total * i as f64 / 20.0;
            let n = sig.truncated_norm(t);
            prop_assert!(n + 1e-12 >= prev, "norm decreased: {n} < {prev}");
            prev = n;
        }
        prop_assert!((sig.truncated_norm(t_total) - sig.norm()).abs() <= 1e-9 * (1.0 + sig.norm()));
    }

    /// Diagonal Pade approximants of a pure delay are all-pass on the axis.
    #[test]
    fn pade_delay_all_pass(tau in 0.01f64..5.0, order in 1usize..=8,
                           omega in 1e-3f64..1e3) {
        let g = pade_delay(tau, order).unwrap();
        let v = g.evaluate(omega);
        prop_assert!((v.norm() - 1.0).abs() < 1e-9, "|R(jw)| = {}", v.norm());
    }

    /// The pointwise chordal distance is a symmetric [0, 1] metric.
    #[test]
    fn chordal_symmetric_bounded(entries in prop::collection::vec(-3.0f64..3.0, 16)) {
        let m1 = DMatrix::from_fn(2, 2, |i, j| Complex64::new(entries[4 * i + 2 * j], entries[4 * i + 2 * j + 1]));
        let m2 = DMatrix::from_fn(2, 2, |i, j| Complex64::new(entries[8 + 4 * i + 2 * j], entries[8 + 4 * i + 2 * j + 1]));
        let d12 = chordal_distance(&m1, &m2);
        let d21 = chordal_distance(&m2, &m1);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d12));
        prop_assert!((d12 - d21).abs() < 1e-10);
        prop_assert!(chordal_distance(&m1, &m1) < 1e-12);
    }

    /// Cone membership is invariant under nonzero scaling of the vector.
    #[test]
    fn cone_membership_scaling_invariant(coords in prop::collection::vec(-2.0f64..2.0, 4),
                                         r in 0.05f64..0.95,
                                         alpha in prop::sample::select(vec![-7.5f64, -0.3, 0.004, 2.0, 100.0])) {
        let mut basis = DMatrix::zeros(4, 1);
        basis[(0, 0)] = 1.0;
        let spec = ConeSpec::new(basis, vec![r]).unwrap();
        let v = DVector::from_column_slice(&coords);
        prop_assume!(v.norm() > 1e-9);
        // stay off the angular boundary where scaling noise could flip
        let angle = twoport_core::cone_geometry::angle_to_subspace(&v, &spec.center_basis).unwrap();
        prop_assume!((angle.sin() - r).abs() > 1e-9);
        let member = cone_contains(&spec, &v);
        let scaled = &v * alpha;
        prop_assert_eq!(member, cone_contains(&spec, &scaled));
    }
}
