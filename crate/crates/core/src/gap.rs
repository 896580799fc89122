//! Nu-gap metric between rational systems and the finite-dimensional
//! subspace gap.
//!
//! The pointwise chordal distance is maximized over a refined frequency
//! grid; the value is valid as the nu-gap only when the winding condition
//! holds. The winding number of det(I + P2~ P1) is obtained exactly from
//! the argument principle by counting open right-half-plane zeros and poles
//! via eigenvalue computations on a state-space realization, which stays
//! robust when the systems carry imaginary-axis poles.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lti::{
    compose, eigenvalues, minimal_realization, pade_delay, poles, refine_grid_max, sigma_max,
    sigma_max_real, tf_to_ss, Compose, Evaluator, FrequencyGrid, StateSpace,
};

/// Outcome of a nu-gap computation.
#[derive(Debug, Clone, Serialize)]
pub struct GapResult {
    /// Gap value in [0, 1]; equals 1 when the winding condition fails.
    pub value: f64,
    /// Whether the winding condition held.
    pub winding_ok: bool,
    /// Frequency attaining the pointwise maximum.
    pub peak_omega: f64,
    /// Documents that the computed nu-gap lower-bounds the gap metric.
    pub lower_is_nu_gap: bool,
}

/// Hermitian inverse square root of (I + M^H M).
fn inv_sqrt_gram(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let k = m.ncols();
    let gram = DMatrix::<Complex64>::identity(k, k) + m.adjoint() * m;
    let se = gram.symmetric_eigen();
    let mut d = DMatrix::<Complex64>::zeros(k, k);
    for i in 0..k {
        d[(i, i)] = Complex64::new(1.0 / se.eigenvalues[i].sqrt(), 0.0);
    }
    &se.eigenvectors * d * se.eigenvectors.adjoint()
}

/// Pointwise chordal distance between two complex frequency-response
/// matrices of equal dimensions:
/// sigma_max((I + M2 M2*)^{-1/2} (M2 - M1) (I + M1* M1)^{-1/2}).
pub fn chordal_distance(m1: &DMatrix<Complex64>, m2: &DMatrix<Complex64>) -> f64 {
    assert_eq!(m1.shape(), m2.shape(), "chordal_distance shape mismatch");
    // left factor uses rows: (I + M2 M2^H)^{-1/2} = inv_sqrt over the adjoint
    let left = inv_sqrt_gram(&m2.adjoint());
    let right = inv_sqrt_gram(m1);
    let k = left * (m2 - m1) * right;
    sigma_max(&k).min(1.0)
}

/// Conjugate system G~(s) = G(-s)^T.
fn para_conjugate(sys: &StateSpace) -> StateSpace {
    StateSpace {
        a: -sys.a.transpose(),
        b: -sys.c.transpose(),
        c: sys.b.transpose(),
        d: sys.d.transpose(),
    }
}

// Classification threshold for the winding bookkeeping. Repeated
// imaginary-axis poles form Jordan blocks whose computed eigenvalues
// scatter like eps^(1/k); 1e-3 absorbs that scatter for the multiplicities
// seen in practice while staying far below genuine half-plane distances.
const WINDING_AXIS_TOL: f64 = 1e-3;

fn count_open_rhp(eigs: &[Complex64]) -> usize {
    eigs.iter()
        .filter(|l| l.re > WINDING_AXIS_TOL * (1.0 + l.norm()))
        .count()
}

fn count_axis(eigs: &[Complex64]) -> usize {
    eigs.iter()
        .filter(|l| l.re.abs() <= WINDING_AXIS_TOL * (1.0 + l.norm()))
        .count()
}

/// Winding-number balance check for the nu-gap:
/// wno det(I + P2~ P1) + eta(P1) - eta(P2) - eta0(P2) == 0,
/// with wno = (open-RHP zeros) - (open-RHP poles) of det(I + P2~ P1).
fn winding_condition(p1: &StateSpace, p2: &StateSpace) -> Result<bool> {
    let p1r = minimal_realization(p1);
    let p2r = minimal_realization(p2);
    // the series realization is used unreduced: its zero and pole counts
    // enter only through the difference, where shared non-minimal modes
    // cancel exactly
    let h = compose(Compose::Series, &p1r, &para_conjugate(&p2r))?;
    let m = h.inputs();
    let gram = DMatrix::identity(m, m) + &h.d;
    let gram_inv = gram
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("det(I + P2~P1) singular at infinity".into()))?;
    // zeros of det(I + H(s)) are the eigenvalues of A - B (I+D)^{-1} C
    let zeros_a = &h.a - &h.b * gram_inv * &h.c;
    let zeros = eigenvalues(&zeros_a);
    let hpoles = eigenvalues(&h.a);
    if zeros.len() != zeros_a.nrows() || hpoles.len() != h.a.nrows() {
        return Err(Error::Numerical("eigenvalue iteration failed".into()));
    }
    // an axis zero of det(I + P2~ P1) violates the nonzero-on-axis condition
    if count_axis(&zeros) > 0 {
        return Ok(false);
    }
    let wno = count_open_rhp(&zeros) as i64 - count_open_rhp(&hpoles) as i64;
    let eta1 = count_open_rhp(&poles(&p1r)) as i64;
    let p2_poles = poles(&p2r);
    let eta2 = count_open_rhp(&p2_poles) as i64;
    let eta0_2 = count_axis(&p2_poles) as i64;
    Ok(wno + eta1 - eta2 - eta0_2 == 0)
}

/// Nu-gap between two proper systems of identical dimensions.
pub fn nu_gap(p1: &StateSpace, p2: &StateSpace, grid: &FrequencyGrid) -> Result<GapResult> {
    if p1.inputs() != p2.inputs() || p1.outputs() != p2.outputs() {
        return Err(Error::DimensionMismatch(
            "nu_gap requires systems of identical dimensions".into(),
        ));
    }
    let winding_ok = winding_condition(p1, p2)?;
    if !winding_ok {
        return Ok(GapResult {
            value: 1.0,
            winding_ok: false,
            peak_omega: f64::NAN,
            lower_is_nu_gap: true,
        });
    }
    let e1 = Evaluator::new(p1);
    let e2 = Evaluator::new(p2);
    // skipped grid points (shared imaginary-axis poles) are tolerated: the
    // chordal distance extends continuously across them
    let peak = refine_grid_max(grid, |w| match (e1.evaluate(w), e2.evaluate(w)) {
        (Ok(m1), Ok(m2)) => Some(chordal_distance(&m1, &m2)),
        _ => None,
    });
    // feedthrough comparison covers the supremum at infinity
    let to_c = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
    let d_dist = chordal_distance(&to_c(&p1.d), &to_c(&p2.d));
    let (mut peak_omega, mut value) = peak.unwrap_or((f64::INFINITY, 0.0));
    if d_dist > value {
        value = d_dist;
        peak_omega = f64::INFINITY;
    }
    Ok(GapResult {
        value: value.min(1.0),
        winding_ok: true,
        peak_omega,
        lower_is_nu_gap: true,
    })
}

/// Gap between finite-dimensional subspaces spanned by the columns of X and
/// Y: the operator norm of the difference of orthogonal projections.
pub fn subspace_gap(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(
            "bases must live in the same ambient space".into(),
        ));
    }
    let orth = |m: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let svd = m.clone().svd(true, false);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-12 * smax.max(1.0))
            .count();
        if rank < m.ncols() {
            return Err(Error::InvalidArgument("rank-deficient basis".into()));
        }
        Ok(svd.u.unwrap().columns(0, rank).into_owned())
    };
    let qx = orth(x)?;
    let qy = orth(y)?;
    let px = &qx * qx.transpose();
    let py = &qy * qy.transpose();
    Ok(sigma_max_real(&(px - py)))
}

/// Largest Pade-estimated nu-gap between a plant and its delayed copy over
/// the given approximation orders.
pub struct DelayGapEstimate {
    pub value: f64,
    /// Per-order gap values, matching the input order list.
    pub per_order: Vec<f64>,
}

/// Estimate the gap radius induced by a transport delay of `delay` seconds
/// on plant P, maximized over the listed Pade orders.
pub fn delay_gap_estimate(
    plant: &StateSpace,
    delay: f64,
    orders: &[usize],
) -> Result<DelayGapEstimate> {
    if delay < 0.0 {
        return Err(Error::InvalidArgument("delay must be nonnegative".into()));
    }
    if orders.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one Pade order".into(),
        ));
    }
    if delay == 0.0 {
        return Ok(DelayGapEstimate {
            value: 0.0,
            per_order: vec![0.0; orders.len()],
        });
    }
    let grid = FrequencyGrid::default_grid();
    let mut per_order = Vec::with_capacity(orders.len());
    for &k in orders {
        let pade = tf_to_ss(&pade_delay(delay, k)?)?;
        let delayed = compose(Compose::Series, &pade, plant)?;
        let g = nu_gap(plant, &delayed, &grid)?;
        per_order.push(g.value);
    }
    let value = per_order.iter().copied().fold(0.0, f64::max);
    Ok(DelayGapEstimate { value, per_order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{tf_to_ss, RationalTransfer};
    use approx::assert_relative_eq;

    fn ss(num: &[f64], den: &[f64]) -> StateSpace {
        tf_to_ss(&RationalTransfer::new(num.to_vec(), den.to_vec()).unwrap()).unwrap()
    }

    fn scalar(z: Complex64) -> DMatrix<Complex64> {
        DMatrix::from_element(1, 1, z)
    }

    #[test]
    fn chordal_same_matrix_is_zero() {
        let m = scalar(Complex64::new(0.3, -1.2));
        assert_relative_eq!(chordal_distance(&m, &m), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn chordal_scalars_one_zero() {
        let d = chordal_distance(&scalar(1.0.into()), &scalar(0.0.into()));
        assert_relative_eq!(d, 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn chordal_antipodal_scalars() {
        // a and -1/a are antipodal on the Riemann sphere
        for &a in &[0.5, 1.0, 3.0] {
            let d = chordal_distance(
                &scalar(Complex64::new(a, 0.0)),
                &scalar(Complex64::new(-1.0 / a, 0.0)),
            );
            // brute-force formula |a-b| / sqrt((1+a^2)(1+b^2))
            let b = -1.0 / a;
            let want = (a - b).abs() / ((1.0 + a * a) * (1.0 + b * b)).sqrt();
            assert_relative_eq!(d, want, epsilon = 1e-12);
            assert_relative_eq!(d, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn chordal_metric_properties_sampled() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let rand_mat = |rng: &mut rand_chacha::ChaCha8Rng| {
            DMatrix::from_fn(2, 2, |_, _| {
                Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            })
        };
        for _ in 0..1000 {
            let a = rand_mat(&mut rng);
            let b = rand_mat(&mut rng);
            let c = rand_mat(&mut rng);
            let dab = chordal_distance(&a, &b);
            let dba = chordal_distance(&b, &a);
            assert_relative_eq!(dab, dba, epsilon = 1e-12);
            let dac = chordal_distance(&a, &c);
            let dcb = chordal_distance(&c, &b);
            assert!(dab <= dac + dcb + 1e-12, "triangle violated");
        }
    }

    #[test]
    fn nu_gap_identical_systems() {
        let p = ss(&[1.0], &[1.0, 1.0]);
        let g = nu_gap(&p, &p, &FrequencyGrid::default_grid()).unwrap();
        assert!(g.winding_ok);
        assert!(g.value < 1e-9);
    }

    #[test]
    fn nu_gap_identical_double_integrators() {
        // imaginary-axis poles on both sides must not break the winding check
        let p = ss(&[1.0], &[1.0, 0.0, 0.0]);
        let g = nu_gap(&p, &p, &FrequencyGrid::default_grid()).unwrap();
        assert!(g.winding_ok);
        assert!(g.value < 1e-9);
    }

    #[test]
    fn nu_gap_static_one_zero() {
        let one = ss(&[1.0], &[1.0]);
        let zero = ss(&[0.0], &[1.0]);
        let g = nu_gap(&one, &zero, &FrequencyGrid::default_grid()).unwrap();
        assert!(g.winding_ok);
        assert_relative_eq!(g.value, 1.0 / 2.0f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn nu_gap_symmetry() {
        let p1 = ss(&[1.0], &[1.0, 0.5]);
        let p2 = ss(&[1.5, 0.3], &[1.0, 2.0, 0.8]);
        let grid = FrequencyGrid::default_grid();
        let g12 = nu_gap(&p1, &p2, &grid).unwrap();
        let g21 = nu_gap(&p2, &p1, &grid).unwrap();
        assert_relative_eq!(g12.value, g21.value, epsilon = 1e-6);
    }

    #[test]
    fn nu_gap_winding_failure_gives_one() {
        // mirrored first-order systems: pointwise distance reaches 1 at DC
        let p1 = ss(&[1.0], &[1.0, -1.0]);
        let p2 = ss(&[1.0], &[1.0, 1.0]);
        let g = nu_gap(&p1, &p2, &FrequencyGrid::default_grid()).unwrap();
        assert_relative_eq!(g.value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn nu_gap_integrator_vs_zero_has_defect_one() {
        // eta0(P2) = 1 breaks the balance: value 1 by winding failure
        let p1 = ss(&[0.0], &[1.0]);
        let p2 = ss(&[1.0], &[1.0, 0.0]);
        let g = nu_gap(&p1, &p2, &FrequencyGrid::default_grid()).unwrap();
        assert_relative_eq!(g.value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn delayed_double_integrator_gap_bounds() {
        // frozen against the closed-form pointwise maximum of
        // 2 w^2 |sin(delay w / 2)| / (w^4 + 1)
        let p = ss(&[1.0], &[1.0, 0.0, 0.0]);
        let est = delay_gap_estimate(&p, 0.1, &[4]).unwrap();
        assert_relative_eq!(est.value, 0.0569466, epsilon = 1e-4);
        let est2 = delay_gap_estimate(&p, 0.2, &[4]).unwrap();
        assert_relative_eq!(est2.value, 0.1136472, epsilon = 1e-4);
    }

    #[test]
    fn delay_gap_zero_delay() {
        let p = ss(&[1.0], &[1.0, 0.0, 0.0]);
        let est = delay_gap_estimate(&p, 0.0, &[3, 4, 5]).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn delay_gap_stable_across_orders() {
        let p = ss(&[1.0], &[1.0, 0.0, 0.0]);
        let est = delay_gap_estimate(&p, 0.1, &[3, 4, 5]).unwrap();
        let spread = est.per_order.iter().copied().fold(0.0, f64::max)
            - est.per_order.iter().copied().fold(1.0, f64::min);
        assert!(est.value <= 0.0576, "value {} above the bound", est.value);
        assert!(est.value >= 0.05);
        assert!(spread <= 5e-3, "order spread {spread}");
    }

    #[test]
    fn delay_gap_longer_delay_band() {
        let p = ss(&[1.0], &[1.0, 0.0, 0.0]);
        let est = delay_gap_estimate(&p, 0.2, &[3, 4, 5]).unwrap();
        assert!(
            (est.value - 0.1141).abs() <= 2e-3,
            "value {} outside 0.1141 +- 0.002",
            est.value
        );
    }

    #[test]
    fn subspace_gap_identical_and_orthogonal() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_relative_eq!(subspace_gap(&e1, &e1).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(subspace_gap(&e1, &e2).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn subspace_gap_rotated_line() {
        let phi: f64 = 0.3;
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let y = DMatrix::from_column_slice(2, 1, &[phi.cos(), phi.sin()]);
        assert_relative_eq!(subspace_gap(&x, &y).unwrap(), phi.sin(), epsilon = 1e-12);
    }

    #[test]
    fn subspace_gap_rejects_rank_deficient() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let y = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        assert!(subspace_gap(&x, &y).is_err());
    }

    #[test]
    fn subspace_gap_matches_brute_force_sup() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let x = DMatrix::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let gap = subspace_gap(&x, &y).unwrap();
        // brute force: sup over random unit vectors of |(Px - Py) v|
        let orth = |m: &DMatrix<f64>| {
            let svd = m.clone().svd(true, false);
            let u = svd.u.unwrap();
            u.columns(0, 2).into_owned()
        };
        let qx = orth(&x);
        let qy = orth(&y);
        let px = &qx * qx.transpose();
        let py = &qy * qy.transpose();
        let diff = px - py;
        let mut best: f64 = 0.0;
        for _ in 0..10_000 {
            let mut v = nalgebra::DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0f64));
            let n = v.norm();
            if n < 1e-9 {
                continue;
            }
            v /= n;
            best = best.max((&diff * &v).norm());
        }
        assert!((gap - best).abs() <= 1e-3, "gap {gap} vs sampled {best}");
    }
}
