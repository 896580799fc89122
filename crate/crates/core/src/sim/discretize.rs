//! Continuous-to-discrete conversion for simulation blocks.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lti::StateSpace;

/// Discretization rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscretizeMethod {
    Zoh,
    Tustin,
}

/// Discretize a continuous state-space system with step `h`.
///
/// `Zoh` integrates the input exactly over each step via the exponential of
/// the augmented block matrix; `Tustin` applies the bilinear map, which
/// preserves the DC gain exactly.
pub fn discretize(sys: &StateSpace, h: f64, method: DiscretizeMethod) -> Result<StateSpace> {
    if h <= 0.0 {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let n = sys.order();
    let m = sys.inputs();
    match method {
        DiscretizeMethod::Zoh => {
            // exp([[A, B], [0, 0]] h) = [[Ad, Bd], [0, I]]
            let mut aug = DMatrix::zeros(n + m, n + m);
            aug.view_mut((0, 0), (n, n)).copy_from(&(&sys.a * h));
            aug.view_mut((0, n), (n, m)).copy_from(&(&sys.b * h));
            let e = aug.exp();
            let ad = e.view((0, 0), (n, n)).into_owned();
            let bd = e.view((0, n), (n, m)).into_owned();
            StateSpace::new(ad, bd, sys.c.clone(), sys.d.clone())
        }
        DiscretizeMethod::Tustin => {
            let half = h / 2.0;
            let id = DMatrix::identity(n, n);
            let minus = &id - &sys.a * half;
            let inv = minus
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::Numerical("Tustin pole at 2/h".into()))?;
            let ad = &inv * (&id + &sys.a * half);
            let bd = &inv * &sys.b * h;
            let cd = &sys.c * &inv;
            let dd = &sys.d + &sys.c * &inv * &sys.b * half;
            StateSpace::new(ad, bd, cd, dd)
        }
    }
}
