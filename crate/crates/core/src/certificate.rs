//! Arcsine robust-stability certificate for cascaded two-port loops.
//!
//! The certified condition compares the arcsin-sum of all uncertainty radii
//! (plant gap ball, controller gap ball, one gain bound per channel) against
//! arcsin of the nominal stability margin. The empty-channel and
//! channels-only specializations reduce to the classical gap and small-gain
//! conditions respectively.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hinf::stability_margin;
use crate::lti::StateSpace;

/// Radii of the admissible perturbations.
#[derive(Debug, Clone, Default)]
pub struct UncertaintyBudget {
    /// Plant gap-ball radius.
    pub r_p: f64,
    /// Controller gap-ball radius.
    pub r_c: f64,
    /// Gain bounds of the channel uncertainty quartets, one per stage.
    pub channel_radii: Vec<f64>,
    /// Whether the gap radii were measured with the nu-gap surrogate.
    pub nu_gap_radii: bool,
}

impl UncertaintyBudget {
    pub fn validate(&self) -> Result<()> {
        let all = std::iter::once(self.r_p)
            .chain(std::iter::once(self.r_c))
            .chain(self.channel_radii.iter().copied());
        for r in all {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidArgument(format!(
                    "uncertainty radius {r} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Verdict of the arcsine comparison; ties at the boundary are not
/// certified (strict inequality).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    NotCertified,
}

/// Evaluated arcsine condition.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    /// arcsin r_p + arcsin r_c + sum_k arcsin r_k, radians.
    pub lhs: f64,
    /// arcsin of the stability margin, radians.
    pub rhs: f64,
    /// rhs - lhs.
    pub slack: f64,
    pub verdict: Verdict,
    /// Stability margin of the nominal loop.
    pub margin: f64,
    /// Gang-of-Four H-infinity norm.
    pub norm: f64,
    /// "nu-gap" when the gap radii came from the nu-gap surrogate.
    pub radius_metric: &'static str,
}

/// Evaluate the arcsine certificate for the given loop and budget.
pub fn arcsine_certificate(
    plant: &StateSpace,
    ctrl: &StateSpace,
    budget: &UncertaintyBudget,
) -> Result<Certificate> {
    budget.validate()?;
    let margin = stability_margin(plant, ctrl)?;
    let lhs = budget.r_p.asin()
        + budget.r_c.asin()
        + budget.channel_radii.iter().map(|r| r.asin()).sum::<f64>();
    let rhs = margin.arcsin_margin;
    let slack = rhs - lhs;
    Ok(Certificate {
        lhs,
        rhs,
        slack,
        verdict: if slack > 0.0 {
            Verdict::Certified
        } else {
            Verdict::NotCertified
        },
        margin: margin.margin,
        norm: margin.norm,
        radius_metric: if budget.nu_gap_radii { "nu-gap" } else { "gap" },
    })
}

/// Split the slack left by (r_p, r_c) evenly over `l` channels so that the
/// resulting certificate has slack exactly `eps`.
pub fn max_equal_budget(
    plant: &StateSpace,
    ctrl: &StateSpace,
    r_p: f64,
    r_c: f64,
    l: usize,
    eps: f64,
) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::InvalidArgument("need at least one channel".into()));
    }
    let margin = stability_margin(plant, ctrl)?;
    let rhs = margin.arcsin_margin;
    let head = r_p.asin() + r_c.asin();
    let room = rhs - head - eps;
    if room <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "no remaining slack: arcsin r_p + arcsin r_c + eps = {:.6} >= {:.6}",
            head + eps,
            rhs
        )));
    }
    Ok(vec![(room / l as f64).sin(); l])
}
