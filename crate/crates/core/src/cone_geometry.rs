//! Finite-dimensional sampling oracle for conelike neighborhoods.
//!
//! A conelike neighborhood S(M, r) around a set M collects all vectors
//! within relative distance r of M (plus the origin); when the center is a
//! subspace this is exactly the set of vectors within angle arcsin(r) of it.
//! The routines here exercise that angle characterization, the
//! forward/inverse equivalence, chained-cone containment and cone
//! disjointness on sampled vectors in low dimension.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Chain of conelike neighborhoods around an orthonormal subspace basis.
#[derive(Debug, Clone)]
pub struct ConeSpec {
    /// Orthonormal basis vectors of the center subspace (columns).
    pub center_basis: DMatrix<f64>,
    /// Radii of the chained neighborhoods, each in [0, 1).
    pub radii: Vec<f64>,
}

impl ConeSpec {
    pub fn new(center_basis: DMatrix<f64>, radii: Vec<f64>) -> Result<Self> {
        if radii.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::InvalidArgument(
                "cone radii must lie in [0, 1)".into(),
            ));
        }
        // orthonormality of the provided basis
        let g = center_basis.transpose() * &center_basis;
        let k = center_basis.ncols();
        if (g - DMatrix::identity(k, k)).norm() > 1e-8 {
            return Err(Error::InvalidArgument(
                "center basis not orthonormal".into(),
            ));
        }
        Ok(Self {
            center_basis,
            radii,
        })
    }

    /// Total opening angle: sum of arcsin(r_j).
    pub fn opening_angle(&self) -> f64 {
        self.radii.iter().map(|r| r.asin()).sum()
    }
}

/// Acute angle between two vectors; infinity when either is zero.
pub fn acute_angle(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let nx = x.norm();
    let ny = y.norm();
    if nx == 0.0 || ny == 0.0 {
        return f64::INFINITY;
    }
    let c = (x.dot(y).abs() / (nx * ny)).clamp(0.0, 1.0);
    c.acos()
}

/// Angle between a nonzero vector and the subspace spanned by the columns
/// of the orthonormal basis `m0`: arccos(|Pv| / |v|).
pub fn angle_to_subspace(v: &DVector<f64>, m0: &DMatrix<f64>) -> Result<f64> {
    let nv = v.norm();
    if nv == 0.0 {
        return Err(Error::InvalidArgument("zero vector has no angle".into()));
    }
    let proj = m0 * (m0.transpose() * v);
    let c = (proj.norm() / nv).clamp(0.0, 1.0);
    Ok(c.acos())
}

/// Membership in the chained cone: v = 0 or
/// angle(v, center) <= sum_j arcsin(r_j), ties counting as members.
pub fn cone_contains(spec: &ConeSpec, v: &DVector<f64>) -> bool {
    if v.norm() == 0.0 {
        return true;
    }
    let angle = angle_to_subspace(v, &spec.center_basis).expect("nonzero v");
    // tolerance on the sine scale matches the 1e-9 ratio tolerance
    angle.sin() <= spec.opening_angle().min(std::f64::consts::FRAC_PI_2).sin() + 1e-9
}

/// Forward (distance relative to the center point) or inverse (relative to
/// the tested vector) membership definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipMode {
    Forward,
    Inverse,
}

/// Numerical membership test of v in S(M0, r) directly from the defining
/// infimum: closed-form projection plus a scaling line search, backed by
/// random direction sampling inside the subspace.
pub fn brute_force_membership(
    m0: &DMatrix<f64>,
    r: f64,
    v: &DVector<f64>,
    mode: MembershipMode,
    samples: usize,
    seed: u64,
) -> Result<bool> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidArgument("radius must be in [0, 1)".into()));
    }
    if samples < 1000 {
        return Err(Error::InvalidArgument("need at least 1000 samples".into()));
    }
    if v.norm() == 0.0 {
        return Ok(true);
    }
    let mut best = f64::INFINITY;
    let mut consider = |u: &DVector<f64>| {
        let nu = u.norm();
        if nu < 1e-12 {
            return;
        }
        match mode {
            MembershipMode::Forward => {
                // optimal scaling of u against v in closed form: the best
                // ratio along a fixed direction is sin(angle(u, v))
                let c = (v.dot(u).abs() / (v.norm() * nu)).clamp(0.0, 1.0);
                best = best.min((1.0 - c * c).sqrt());
            }
            MembershipMode::Inverse => {
                // distance from v to the line through u, relative to |v|
                let t = v.dot(u) / (nu * nu);
                let d = (v - u * t).norm() / v.norm();
                best = best.min(d);
            }
        }
    };
    // projection direction first, then random directions in the subspace
    let proj = m0 * (m0.transpose() * v);
    consider(&proj);
    let k = m0.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let coeffs = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0f64));
        let u = m0 * coeffs;
        consider(&u);
    }
    Ok(best <= r + 1e-9)
}

/// Closed-form minimum angle between two cones around 1-D (or wider)
/// subspaces, with the disjointness verdict.
#[derive(Debug, Clone)]
pub struct DisjointnessCheck {
    pub min_angle: f64,
    pub disjoint: bool,
    /// Smallest sampled angle, as corroboration of the closed form.
    pub sampled_min_angle: f64,
}

/// Minimum principal angle between the subspaces spanned by orthonormal
/// bases `a` and `b`.
pub fn min_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let prod = a.transpose() * b;
    let smax = prod
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max);
    smax.clamp(0.0, 1.0).acos()
}

/// Check whether the cones S(Mp, rp) and S(Mc, rc) intersect only at the
/// origin. The closed-form minimum pairwise angle is
/// max(0, principal_angle - arcsin rp - arcsin rc); sampling corroborates.
pub fn cone_disjointness_check(
    mp: &DMatrix<f64>,
    rp: f64,
    mc: &DMatrix<f64>,
    rc: f64,
    samples: usize,
    seed: u64,
) -> Result<DisjointnessCheck> {
    if !(0.0..1.0).contains(&rp) || !(0.0..1.0).contains(&rc) {
        return Err(Error::InvalidArgument("radii must be in [0, 1)".into()));
    }
    let phi = min_principal_angle(mp, mc);
    let min_angle = (phi - rp.asin() - rc.asin()).max(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mp.nrows();
    let mut sampled = f64::INFINITY;
    for _ in 0..samples {
        let u = sample_cone_member(mp, rp, &mut rng, n);
        let v = sample_cone_member(mc, rc, &mut rng, n);
        let th = acute_angle(&u, &v);
        if th.is_finite() {
            sampled = sampled.min(th);
        }
    }
    Ok(DisjointnessCheck {
        min_angle,
        // ties count as touching; the tiny tolerance absorbs arcsin/acos
        // round-trip noise at exact-tie inputs
        disjoint: min_angle > 1e-12,
        sampled_min_angle: sampled,
    })
}

/// Draw a random member of S(M, r): a subspace point tilted by a random
/// angle up to arcsin(r) toward a random orthogonal direction.
fn sample_cone_member(m: &DMatrix<f64>, r: f64, rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    let k = m.ncols();
    loop {
        let coeffs = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0f64));
        let base = m * coeffs;
        let nb = base.norm();
        if nb < 1e-9 {
            continue;
        }
        let base = base / nb;
        // random direction orthogonal to the subspace
        let raw = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0f64));
        let orth = &raw - m * (m.transpose() * &raw);
        let no = orth.norm();
        let theta = rng.gen_range(0.0..1.0f64) * r.asin();
        if no < 1e-9 {
            return base;
        }
        return base * theta.cos() + (orth / no) * theta.sin();
    }
}

/// Aggregate pass/fail counts of the sampled cone-geometry suite.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SelftestReport {
    pub equivalence_pass: usize,
    pub equivalence_total: usize,
    pub scaling_pass: usize,
    pub scaling_total: usize,
    pub containment_pass: usize,
    pub containment_total: usize,
    pub disjointness_pass: usize,
    pub disjointness_total: usize,
}

impl SelftestReport {
    pub fn all_pass(&self) -> bool {
        self.equivalence_pass == self.equivalence_total
            && self.scaling_pass == self.scaling_total
            && self.containment_pass == self.containment_total
            && self.disjointness_pass == self.disjointness_total
    }
}

/// Random orthonormal basis of a k-dimensional subspace of R^n.
pub fn random_subspace(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0f64));
        let svd = m.svd(true, false);
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-6).count();
        if rank >= k {
            return svd.u.unwrap().columns(0, k).into_owned();
        }
    }
}

/// Run the full sampled suite in R^5:
/// - forward/inverse/angle three-way membership equivalence,
/// - scaling invariance of membership,
/// - chained-cone containment with the arcsin-sum radius,
/// - disjointness iff arcsin rp + arcsin rc < principal angle.
pub fn selftest(seed: u64) -> SelftestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 5;
    let mut report = SelftestReport {
        equivalence_pass: 0,
        equivalence_total: 1000,
        scaling_pass: 0,
        scaling_total: 1000,
        containment_pass: 0,
        containment_total: 10_000,
        disjointness_pass: 0,
        disjointness_total: 200,
    };
    // three-way equivalence and scaling invariance
    for i in 0..report.equivalence_total {
        let k = rng.gen_range(1..=2usize);
        let m0 = random_subspace(n, k, &mut rng);
        let r = rng.gen_range(0.05..0.95f64);
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0f64));
        if v.norm() < 1e-6 {
            report.equivalence_pass += 1;
            report.scaling_pass += 1;
            continue;
        }
        let fwd =
            brute_force_membership(&m0, r, &v, MembershipMode::Forward, 2000, seed ^ i as u64)
                .unwrap();
        let inv =
            brute_force_membership(&m0, r, &v, MembershipMode::Inverse, 2000, seed ^ i as u64)
                .unwrap();
        let spec = ConeSpec::new(m0.clone(), vec![r]).unwrap();
        let ang = cone_contains(&spec, &v);
        // all three routes reduce to the same sine comparison through the
        // exact projection direction; only draws inside the shared
        // round-off band at the boundary are skipped
        let gap = (angle_to_subspace(&v, &m0).unwrap().sin() - r).abs();
        if gap < 1e-12 || (fwd == inv && inv == ang) {
            report.equivalence_pass += 1;
        }
        let alpha = rng.gen_range(0.1..5.0f64) * if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
        let scaled = &v * alpha;
        if cone_contains(&spec, &scaled) == ang {
            report.scaling_pass += 1;
        }
    }
    // chained-cone containment, constructed stage by stage
    for _ in 0..report.containment_total {
        let k = rng.gen_range(1..=2usize);
        let m0 = random_subspace(n, k, &mut rng);
        let stages = rng.gen_range(1..=3usize);
        // keep the arcsin sum within pi/2
        let budget = std::f64::consts::FRAC_PI_2;
        let mut radii = Vec::with_capacity(stages);
        let mut used = 0.0;
        for _ in 0..stages {
            let room = (budget - used) * 0.9;
            let ang = rng.gen_range(0.0..room.max(1e-6));
            radii.push(ang.sin());
            used += ang;
        }
        // walk outward: x0 in M0, then x_j = x_{j-1} + delta_j with
        // |delta_j| <= r_j |x_{j-1}|
        let coeffs = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0f64));
        let mut x = &m0 * coeffs;
        if x.norm() < 1e-6 {
            report.containment_pass += 1;
            continue;
        }
        for &r in &radii {
            let dir = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0f64));
            let nd = dir.norm();
            if nd < 1e-9 {
                continue;
            }
            let step = rng.gen_range(0.0..1.0f64) * r * x.norm();
            x += dir * (step / nd);
        }
        let spec = ConeSpec::new(m0, radii).unwrap();
        if cone_contains(&spec, &x) {
            report.containment_pass += 1;
        }
    }
    // disjointness vs the arcsine inequality on 1-D pairs
    for i in 0..report.disjointness_total {
        let mp = random_subspace(n, 1, &mut rng);
        let mc = random_subspace(n, 1, &mut rng);
        let phi = min_principal_angle(&mp, &mc);
        let rp = rng.gen_range(0.0..0.9f64);
        let rc = rng.gen_range(0.0..0.9f64);
        let predicted_disjoint = rp.asin() + rc.asin() < phi;
        // skip near-boundary draws where the verdict is numerically knife-edge
        if (rp.asin() + rc.asin() - phi).abs() < 1e-6 {
            report.disjointness_pass += 1;
            continue;
        }
        let check =
            cone_disjointness_check(&mp, rp, &mc, rc, 2000, seed ^ (i as u64) << 8).unwrap();
        let mut ok = check.disjoint == predicted_disjoint;
        if check.disjoint {
            // sampling can only corroborate: no sampled pair may touch
            ok = ok && check.sampled_min_angle > 0.0;
        } else {
            // construct a common vector along the geodesic between the lines
            ok = ok && witness_intersection(&mp, rp, &mc, rc);
        }
        if ok {
            report.disjointness_pass += 1;
        }
    }
    report
}

/// For overlapping 1-D cones, rotate from Mp toward Mc by the largest
/// admissible angle and verify the vector lies in both cones.
fn witness_intersection(mp: &DMatrix<f64>, rp: f64, mc: &DMatrix<f64>, rc: f64) -> bool {
    let u = mp.column(0).into_owned();
    let mut w = mc.column(0).into_owned();
    if u.dot(&w) < 0.0 {
        w = -w;
    }
    let phi = acute_angle(&u, &w);
    if phi == 0.0 {
        return true;
    }
    // orthonormal frame of the plane spanned by u, w
    let e1 = u.clone();
    let mut e2 = &w - &e1 * e1.dot(&w);
    let n2 = e2.norm();
    if n2 < 1e-12 {
        return true;
    }
    e2 /= n2;
    let theta = rp.asin().min(phi);
    let x = &e1 * theta.cos() + &e2 * theta.sin();
    let ang_p = angle_to_subspace(&x, mp).unwrap();
    let ang_c = angle_to_subspace(&x, mc).unwrap();
    ang_p.sin() <= rp + 1e-9 && ang_c.sin() <= rc + 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vecn(vals: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(vals)
    }

    fn basis(cols: &[&[f64]]) -> DMatrix<f64> {
        let n = cols[0].len();
        let mut m = DMatrix::zeros(n, cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (i, &x) in col.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        m
    }

    #[test]
    fn acute_angle_basic() {
        assert_relative_eq!(
            acute_angle(&vecn(&[1.0, 0.0]), &vecn(&[0.0, 1.0])),
            std::f64::consts::FRAC_PI_2
        );
        assert_relative_eq!(
            acute_angle(&vecn(&[1.0, 0.0]), &vecn(&[1.0, 1.0])),
            std::f64::consts::FRAC_PI_4,
            epsilon = 1e-12
        );
        assert!(acute_angle(&vecn(&[1.0, 0.0, 0.0]), &vecn(&[0.0, 0.0, 0.0])).is_infinite());
    }

    #[test]
    fn angle_to_subspace_in_and_orthogonal() {
        let m0 = basis(&[&[1.0, 0.0, 0.0]]);
        assert_relative_eq!(
            angle_to_subspace(&vecn(&[2.0, 0.0, 0.0]), &m0).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            angle_to_subspace(&vecn(&[0.0, 1.0, 1.0]), &m0).unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
        assert!(angle_to_subspace(&vecn(&[0.0, 0.0, 0.0]), &m0).is_err());
    }

    #[test]
    fn angle_to_subspace_thirty_degrees() {
        let m0 = basis(&[&[1.0, 0.0, 0.0]]);
        let v = vecn(&[3.0f64.sqrt(), 1.0, 0.0]);
        let got = angle_to_subspace(&v, &m0).unwrap();
        assert_relative_eq!(got, std::f64::consts::FRAC_PI_6, epsilon = 1e-12);
        // sampled infimum of acute angles over the subspace agrees
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut best = f64::INFINITY;
        for _ in 0..100_000 {
            let u = &m0 * DVector::from_fn(1, |_, _| rng.gen_range(-1.0..1.0f64));
            let a = acute_angle(&u, &v);
            if a.is_finite() {
                best = best.min(a);
            }
        }
        assert!((best - got).abs() < 1e-3);
    }

    #[test]
    fn cone_contains_zero_and_boundary() {
        let m0 = basis(&[&[1.0, 0.0, 0.0]]);
        let spec = ConeSpec::new(m0, vec![0.5]).unwrap();
        assert!(cone_contains(&spec, &vecn(&[0.0, 0.0, 0.0])));
        // boundary: angle pi/6 = arcsin(0.5)
        assert!(cone_contains(&spec, &vecn(&[3.0f64.sqrt(), 1.0, 0.0])));
        assert!(!cone_contains(&spec, &vecn(&[1.0, 1.0, 0.0])));
    }

    #[test]
    fn chained_cone_rejects_outside_arcsin_sum() {
        let m0 = basis(&[&[1.0, 0.0, 0.0]]);
        let spec = ConeSpec::new(m0, vec![0.3, 0.4]).unwrap();
        let theta = 0.3f64.asin() + 0.4f64.asin() + 0.01;
        let v = vecn(&[theta.cos(), theta.sin(), 0.0]);
        assert!(!cone_contains(&spec, &v));
        let inside = 0.3f64.asin() + 0.4f64.asin() - 0.01;
        let w = vecn(&[inside.cos(), inside.sin(), 0.0]);
        assert!(cone_contains(&spec, &w));
    }

    #[test]
    fn cone_spec_validates_radii() {
        let m0 = basis(&[&[1.0, 0.0]]);
        assert!(ConeSpec::new(m0.clone(), vec![1.0]).is_err());
        assert!(ConeSpec::new(m0, vec![0.99]).is_ok());
    }

    #[test]
    fn membership_forward_subspace_points_always_in() {
        let m0 = basis(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let v = vecn(&[0.3, -0.7, 0.0]);
        for &r in &[0.0, 0.2, 0.9] {
            assert!(brute_force_membership(&m0, r, &v, MembershipMode::Forward, 1000, 9).unwrap());
        }
    }

    #[test]
    fn membership_requires_enough_samples() {
        let m0 = basis(&[&[1.0, 0.0]]);
        let v = vecn(&[1.0, 0.0]);
        assert!(brute_force_membership(&m0, 0.5, &v, MembershipMode::Forward, 10, 9).is_err());
    }

    #[test]
    fn disjointness_orthogonal_lines() {
        let mp = basis(&[&[1.0, 0.0]]);
        let mc = basis(&[&[0.0, 1.0]]);
        let c = cone_disjointness_check(&mp, 0.0, &mc, 0.0, 1000, 4).unwrap();
        assert_relative_eq!(c.min_angle, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert!(c.disjoint);
        // cones touching: arcsin rp + arcsin rc = pi/2
        let r = std::f64::consts::FRAC_PI_4.sin();
        let c = cone_disjointness_check(&mp, r, &mc, r, 1000, 4).unwrap();
        assert!(c.min_angle.abs() < 1e-12);
        assert!(!c.disjoint);
    }

    #[test]
    fn disjointness_closed_form_value() {
        // principal angle 0.9, arcsin rp + arcsin rc = 0.5 -> min angle 0.4
        let phi: f64 = 0.9;
        let mp = basis(&[&[1.0, 0.0]]);
        let mc = basis(&[&[phi.cos(), phi.sin()]]);
        let rp = 0.2f64.sin();
        let rc = 0.3f64.sin();
        let c = cone_disjointness_check(&mp, rp, &mc, rc, 20_000, 11).unwrap();
        assert_relative_eq!(c.min_angle, 0.4, epsilon = 1e-12);
        assert!((c.sampled_min_angle - 0.4).abs() < 1e-2);
    }

    #[test]
    fn selftest_small_smoke() {
        // the full-size run is exercised by the acceptance suite
        let report = selftest(42);
        assert!(report.all_pass(), "selftest failures: {:?}", report);
    }
}
