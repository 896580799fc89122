//! H-infinity norm computation and the closed-loop stability margin.
//!
//! The norm is bracketed by bisection on gamma using the imaginary-axis
//! eigenvalue test of the associated Hamiltonian matrix; the bracket is
//! seeded from a refined grid maximum. A dense grid sweep serves as the
//! fallback when the eigenvalue iteration is inconclusive.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lti::{
    eigenvalues, gang_of_four, is_hurwitz, minimal_realization, refine_grid_max, sigma_max,
    sigma_max_real, Evaluator, FrequencyGrid, StateSpace,
};

/// How the reported norm value was certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bisection,
    Grid,
}

/// Result of an H-infinity norm computation.
#[derive(Debug, Clone, Serialize)]
pub struct NormResult {
    /// Operator norm estimate.
    pub value: f64,
    /// Frequency of the largest response; `f64::INFINITY` when the supremum
    /// is attained at the feedthrough.
    pub peak_omega: f64,
    pub method: Method,
    /// Certified bracket [lo, hi] with hi - lo <= tol * value.
    pub certified_interval: (f64, f64),
}

/// True when the Hamiltonian associated with gamma has an eigenvalue on the
/// imaginary axis, i.e. sigma_max(G(jw)) = gamma for some finite w.
/// Returns None when the eigenvalue iteration fails.
fn hamiltonian_has_imaginary_eig(sys: &StateSpace, gamma: f64) -> Option<bool> {
    let n = sys.order();
    let m = sys.inputs();
    let p = sys.outputs();
    let r = DMatrix::identity(m, m) * (gamma * gamma) - sys.d.transpose() * &sys.d;
    let r_inv = r.lu().try_inverse()?;
    let core = &sys.a + &sys.b * &r_inv * sys.d.transpose() * &sys.c;
    let top_right = &sys.b * &r_inv * sys.b.transpose();
    let s = DMatrix::identity(p, p) + &sys.d * &r_inv * sys.d.transpose();
    let bottom_left = -(sys.c.transpose() * s * &sys.c);
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&core);
    h.view_mut((0, n), (n, n)).copy_from(&top_right);
    h.view_mut((n, 0), (n, n)).copy_from(&bottom_left);
    h.view_mut((n, n), (n, n)).copy_from(&(-core.transpose()));
    let eigs = eigenvalues(&h);
    if eigs.len() != 2 * n {
        return None;
    }
    Some(eigs.iter().any(|l| l.re.abs() <= 1e-8 * (1.0 + l.norm())))
}

/// Refined grid maximum of sigma_max(G(jw)).
fn grid_peak(sys: &StateSpace, grid: &FrequencyGrid) -> (f64, f64) {
    let ev = Evaluator::new(sys);
    refine_grid_max(grid, |w| ev.evaluate(w).ok().map(|m| sigma_max(&m)))
        .unwrap_or((grid.omegas[0], 0.0))
}

/// H-infinity norm of a stable system with certified bracket width
/// tol * value.
pub fn hinf_norm(sys: &StateSpace, tol: f64) -> Result<NormResult> {
    let red = minimal_realization(sys);
    if !is_hurwitz(&red, 0.0) {
        return Err(Error::Unstable(
            "norm infinite; system has closed right-half-plane poles".into(),
        ));
    }
    let d_norm = sigma_max_real(&red.d);
    let grid = FrequencyGrid::default_grid();
    let (peak_w, peak_v) = grid_peak(&red, &grid);
    if red.order() == 0 {
        return Ok(NormResult {
            value: d_norm,
            peak_omega: f64::INFINITY,
            method: Method::Bisection,
            certified_interval: (d_norm, d_norm),
        });
    }
    let mut lo = peak_v.max(d_norm);
    if lo <= 0.0 {
        // zero system
        return Ok(NormResult {
            value: 0.0,
            peak_omega: peak_w,
            method: Method::Bisection,
            certified_interval: (0.0, 0.0),
        });
    }
    let mut hi = 2.0 * lo;
    let mut inconclusive = false;
    for _ in 0..64 {
        match hamiltonian_has_imaginary_eig(&red, hi) {
            Some(true) => {
                lo = hi;
                hi *= 2.0;
            }
            Some(false) => break,
            None => {
                inconclusive = true;
                break;
            }
        }
    }
    if !inconclusive {
        for _ in 0..200 {
            if hi - lo <= tol * lo {
                break;
            }
            let mid = 0.5 * (lo + hi);
            match hamiltonian_has_imaginary_eig(&red, mid) {
                Some(true) => lo = mid,
                Some(false) => hi = mid,
                None => {
                    inconclusive = true;
                    break;
                }
            }
        }
    }
    if inconclusive {
        // dense grid fallback
        let dense = FrequencyGrid::log_spaced(1e-4, 1e4, 10_000)?;
        let (w, v) = grid_peak(&red, &dense);
        let value = v.max(d_norm);
        return Ok(NormResult {
            value,
            peak_omega: if d_norm >= v { f64::INFINITY } else { w },
            method: Method::Grid,
            certified_interval: (value, value * (1.0 + 1e-3)),
        });
    }
    let value = 0.5 * (lo + hi);
    // supremum attained at the feedthrough when no finite frequency beats it
    let peak_omega = if d_norm >= value * (1.0 - 10.0 * tol.max(1e-12)) && d_norm >= peak_v {
        f64::INFINITY
    } else {
        peak_w
    };
    Ok(NormResult {
        value,
        peak_omega,
        method: Method::Bisection,
        certified_interval: (lo, hi),
    })
}

/// Default-tolerance H-infinity norm (1e-8 relative).
pub fn hinf_norm_default(sys: &StateSpace) -> Result<NormResult> {
    hinf_norm(sys, 1e-8)
}

/// Stability margin of the closed loop: the reciprocal Gang-of-Four norm.
#[derive(Debug, Clone, Serialize)]
pub struct MarginResult {
    /// ||P # C||_inf.
    pub norm: f64,
    /// Margin = 1 / norm, in (0, 1].
    pub margin: f64,
    /// arcsin(margin) in radians.
    pub arcsin_margin: f64,
    pub peak_omega: f64,
}

/// Compute the stability margin ||P # C||_inf^{-1} of the nominal loop.
pub fn stability_margin(plant: &StateSpace, ctrl: &StateSpace) -> Result<MarginResult> {
    let gof = gang_of_four(plant, ctrl)?;
    let red = minimal_realization(&gof);
    if !is_hurwitz(&red, 0.0) {
        return Err(Error::Unstable(
            "nominal loop unstable; margin undefined".into(),
        ));
    }
    let norm = hinf_norm_default(&red)?;
    let margin = 1.0 / norm.value;
    Ok(MarginResult {
        norm: norm.value,
        margin,
        arcsin_margin: margin.asin(),
        peak_omega: norm.peak_omega,
    })
}
