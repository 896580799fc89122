//! Runtime blocks of the fixed-step simulator.
//!
//! A block is strict when its output at step t does not depend on its input
//! at step t (zero instantaneous feedthrough). Strict blocks may sit inside
//! algebraic feedback paths; their current output is readable before the
//! current input is known.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{tf_to_ss, RationalTransfer, StateSpace};
use crate::sim::discretize::{discretize, DiscretizeMethod};

/// Declarative description of a nonlinear block, as found in scenario files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockSpec {
    /// Identically zero map.
    Zero,
    /// Static scalar gain.
    Gain { value: f64 },
    /// Odd saturation to [-limit, limit].
    Saturation { limit: f64 },
    /// Static piecewise-linear map through the listed (x, y) points; must
    /// map 0 to 0. Extrapolates with the boundary slopes.
    Pwl { points: Vec<(f64, f64)> },
    /// Pure delay of a whole number of steps.
    Delay { steps: usize },
    /// Continuous SISO transfer function, discretized at build time.
    Tf { num: Vec<f64>, den: Vec<f64> },
    /// Continuous state-space block, discretized at build time.
    Ss {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
    },
    /// Blocks applied left to right.
    Series { blocks: Vec<BlockSpec> },
    /// Sum of parallel branches.
    Sum { blocks: Vec<BlockSpec> },
    /// Scalar multiple of an inner block.
    Scale { factor: f64, block: Box<BlockSpec> },
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Schema("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl BlockSpec {
    /// Build the runtime block for step size `h`.
    pub fn build(&self, h: f64, method: DiscretizeMethod) -> Result<Block> {
        match self {
            BlockSpec::Zero => Ok(Block::Zero),
            BlockSpec::Gain { value } => Ok(Block::Gain { k: *value }),
            BlockSpec::Saturation { limit } => {
                if *limit <= 0.0 {
                    return Err(Error::Schema("saturation limit must be positive".into()));
                }
                Ok(Block::Saturation { limit: *limit })
            }
            BlockSpec::Pwl { points } => {
                let mut pts = points.clone();
                pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                if pts.len() < 2 {
                    return Err(Error::Schema("pwl needs at least two points".into()));
                }
                if pts.windows(2).any(|w| w[0].0 == w[1].0) {
                    return Err(Error::Schema("pwl x-coordinates must be distinct".into()));
                }
                let at_zero = pwl_eval(&pts, 0.0);
                if at_zero.abs() > 1e-12 {
                    return Err(Error::Schema(format!(
                        "pwl table must map 0 to 0 (got {at_zero})"
                    )));
                }
                Ok(Block::Pwl { points: pts })
            }
            BlockSpec::Delay { steps } => {
                if *steps == 0 {
                    return Err(Error::Schema("delay must be at least one step".into()));
                }
                Ok(Block::Delay {
                    buf: vec![0.0; *steps],
                    idx: 0,
                })
            }
            BlockSpec::Tf { num, den } => {
                let sys = tf_to_ss(&RationalTransfer::new(num.clone(), den.clone())?)?;
                Block::from_continuous(&sys, h, method)
            }
            BlockSpec::Ss { a, b, c, d } => {
                let sys = StateSpace::new(
                    rows_to_matrix(a)?,
                    rows_to_matrix(b)?,
                    rows_to_matrix(c)?,
                    rows_to_matrix(d)?,
                )?;
                if sys.inputs() != 1 || sys.outputs() != 1 {
                    return Err(Error::Schema("block state-space must be SISO".into()));
                }
                Block::from_continuous(&sys, h, method)
            }
            BlockSpec::Series { blocks } => {
                if blocks.is_empty() {
                    return Err(Error::Schema("series needs at least one block".into()));
                }
                let built: Result<Vec<Block>> = blocks.iter().map(|b| b.build(h, method)).collect();
                Ok(Block::Series { blocks: built? })
            }
            BlockSpec::Sum { blocks } => {
                if blocks.is_empty() {
                    return Err(Error::Schema("sum needs at least one block".into()));
                }
                let built: Result<Vec<Block>> = blocks.iter().map(|b| b.build(h, method)).collect();
                Ok(Block::Sum { blocks: built? })
            }
            BlockSpec::Scale { factor, block } => Ok(Block::Scale {
                factor: *factor,
                inner: Box::new(block.build(h, method)?),
            }),
        }
    }
}

fn pwl_eval(points: &[(f64, f64)], x: f64) -> f64 {
    let n = points.len();
    if x <= points[0].0 {
        let (x0, y0) = points[0];
        let (x1, y1) = points[1];
        return y0 + (x - x0) * (y1 - y0) / (x1 - x0);
    }
    if x >= points[n - 1].0 {
        let (x0, y0) = points[n - 2];
        let (x1, y1) = points[n - 1];
        return y1 + (x - x1) * (y1 - y0) / (x1 - x0);
    }
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x <= x1 {
            return y0 + (x - x0) * (y1 - y0) / (x1 - x0);
        }
    }
    unreachable!("pwl bracket not found")
}

/// Stateful scalar runtime block.
#[derive(Debug, Clone)]
pub enum Block {
    Zero,
    Gain {
        k: f64,
    },
    Saturation {
        limit: f64,
    },
    Pwl {
        points: Vec<(f64, f64)>,
    },
    Delay {
        buf: Vec<f64>,
        idx: usize,
    },
    Linear {
        sys: StateSpace,
        x: DVector<f64>,
        strict: bool,
    },
    Series {
        blocks: Vec<Block>,
    },
    Sum {
        blocks: Vec<Block>,
    },
    Scale {
        factor: f64,
        inner: Box<Block>,
    },
}

impl Block {
    /// Discretize a continuous SISO system into a linear runtime block.
    pub fn from_continuous(sys: &StateSpace, h: f64, method: DiscretizeMethod) -> Result<Block> {
        let d = discretize(sys, h, method)?;
        let strict = d.d.iter().all(|&x| x == 0.0);
        let n = d.order();
        Ok(Block::Linear {
            sys: d,
            x: DVector::zeros(n),
            strict,
        })
    }

    /// Output at step t independent of the input at step t?
    pub fn is_strict(&self) -> bool {
        match self {
            Block::Zero => true,
            Block::Gain { k } => *k == 0.0,
            Block::Saturation { .. } | Block::Pwl { .. } => false,
            Block::Delay { .. } => true,
            Block::Linear { strict, .. } => *strict,
            Block::Series { blocks } => blocks.iter().any(Block::is_strict),
            Block::Sum { blocks } => blocks.iter().all(Block::is_strict),
            Block::Scale { factor, inner } => *factor == 0.0 || inner.is_strict(),
        }
    }

    /// Output at the current step. `u` may be None only for strict blocks.
    pub fn out(&self, u: Option<f64>) -> f64 {
        match self {
            Block::Zero => 0.0,
            Block::Gain { k } => {
                if *k == 0.0 {
                    0.0
                } else {
                    k * u.expect("gain needs its input")
                }
            }
            Block::Saturation { limit } => {
                let v = u.expect("saturation needs its input");
                v.clamp(-limit, *limit)
            }
            Block::Pwl { points } => pwl_eval(points, u.expect("pwl needs its input")),
            Block::Delay { buf, idx } => buf[*idx],
            Block::Linear { sys, x, strict } => {
                let mut y = (&sys.c * x)[(0, 0)];
                if !strict {
                    y += sys.d[(0, 0)] * u.expect("non-strict linear block needs its input");
                }
                y
            }
            Block::Series { blocks } => {
                let mut cur = u;
                if cur.is_none() {
                    // start from the last strict element; earlier values
                    // cannot influence the current output
                    let j = blocks
                        .iter()
                        .rposition(Block::is_strict)
                        .expect("series out(None) requires a strict element");
                    let mut val = blocks[j].out(None);
                    for b in &blocks[j + 1..] {
                        val = b.out(Some(val));
                    }
                    return val;
                }
                for b in blocks {
                    cur = Some(b.out(cur));
                }
                cur.unwrap()
            }
            Block::Sum { blocks } => blocks.iter().map(|b| b.out(u)).sum(),
            Block::Scale { factor, inner } => {
                if *factor == 0.0 {
                    0.0
                } else {
                    factor * inner.out(u)
                }
            }
        }
    }

    /// Commit the state transition with the input of the current step.
    pub fn advance(&mut self, u: f64) {
        match self {
            Block::Zero | Block::Gain { .. } | Block::Saturation { .. } | Block::Pwl { .. } => {}
            Block::Delay { buf, idx } => {
                buf[*idx] = u;
                *idx = (*idx + 1) % buf.len();
            }
            Block::Linear { sys, x, .. } => {
                *x = &sys.a * &*x + &sys.b * u;
            }
            Block::Series { blocks } => {
                let mut cur = u;
                for b in blocks.iter_mut() {
                    let next = b.out(Some(cur));
                    b.advance(cur);
                    cur = next;
                }
            }
            Block::Sum { blocks } => {
                for b in blocks.iter_mut() {
                    b.advance(u);
                }
            }
            Block::Scale { inner, .. } => inner.advance(u),
        }
    }

    /// Output then advance.
    pub fn step(&mut self, u: f64) -> f64 {
        let y = self.out(Some(u));
        self.advance(u);
        y
    }

    /// Reset all internal state to zero.
    pub fn reset(&mut self) {
        match self {
            Block::Zero | Block::Gain { .. } | Block::Saturation { .. } | Block::Pwl { .. } => {}
            Block::Delay { buf, idx } => {
                buf.iter_mut().for_each(|v| *v = 0.0);
                *idx = 0;
            }
            Block::Linear { x, .. } => x.fill(0.0),
            Block::Series { blocks } | Block::Sum { blocks } => {
                blocks.iter_mut().for_each(Block::reset)
            }
            Block::Scale { inner, .. } => inner.reset(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn saturation_is_odd_and_fixes_zero() {
        let b = Block::Saturation { limit: 1.0 };
        assert_eq!(b.out(Some(0.0)), 0.0);
        assert_eq!(b.out(Some(0.5)), 0.5);
        assert_eq!(b.out(Some(2.0)), 1.0);
        assert_eq!(b.out(Some(-2.0)), -1.0);
    }

    #[test]
    fn delay_shifts_by_steps() {
        let spec = BlockSpec::Delay { steps: 3 };
        let mut b = spec.build(0.1, DiscretizeMethod::Zoh).unwrap();
        assert!(b.is_strict());
        let inputs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let outputs: Vec<f64> = inputs.iter().map(|&u| b.step(u)).collect();
        assert_eq!(outputs, vec![0.0, 0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn pwl_interpolates_and_requires_zero_fixed_point() {
        let spec = BlockSpec::Pwl {
            points: vec![(-1.0, -2.0), (0.0, 0.0), (1.0, 1.0)],
        };
        let b = spec.build(0.1, DiscretizeMethod::Zoh).unwrap();
        assert_relative_eq!(b.out(Some(0.5)), 0.5);
        assert_relative_eq!(b.out(Some(-0.5)), -1.0);
        // boundary-slope extrapolation
        assert_relative_eq!(b.out(Some(2.0)), 2.0);
        let bad = BlockSpec::Pwl {
            points: vec![(-1.0, 0.0), (1.0, 1.0)],
        };
        assert!(bad.build(0.1, DiscretizeMethod::Zoh).is_err());
    }

    #[test]
    fn strictness_rules() {
        let h = 1e-3;
        let m = DiscretizeMethod::Zoh;
        let strict_tf = BlockSpec::Tf {
            num: vec![100.0],
            den: vec![1.0, 100.0],
        };
        assert!(strict_tf.build(h, m).unwrap().is_strict());
        let feedthrough_tf = BlockSpec::Tf {
            num: vec![1.0, 0.0],
            den: vec![1.0, 1.0],
        };
        assert!(!feedthrough_tf.build(h, m).unwrap().is_strict());
        // series is strict when any element is strict
        let series = BlockSpec::Series {
            blocks: vec![strict_tf.clone(), BlockSpec::Saturation { limit: 1.0 }],
        };
        assert!(series.build(h, m).unwrap().is_strict());
        // sum is strict only when all branches are
        let sum = BlockSpec::Sum {
            blocks: vec![strict_tf, BlockSpec::Gain { value: 2.0 }],
        };
        assert!(!sum.build(h, m).unwrap().is_strict());
        assert!(BlockSpec::Zero.build(h, m).unwrap().is_strict());
        assert!(BlockSpec::Gain { value: 0.0 }
            .build(h, m)
            .unwrap()
            .is_strict());
    }

    #[test]
    fn series_out_none_uses_suffix_after_last_strict() {
        // sat -> delay: composite output equals the delayed value
        let spec = BlockSpec::Series {
            blocks: vec![
                BlockSpec::Saturation { limit: 1.0 },
                BlockSpec::Delay { steps: 1 },
            ],
        };
        let mut b = spec.build(0.1, DiscretizeMethod::Zoh).unwrap();
        assert!(b.is_strict());
        assert_eq!(b.out(None), 0.0);
        b.advance(5.0); // saturates to 1.0 into the delay
        assert_eq!(b.out(None), 1.0);
    }

    #[test]
    fn first_order_filter_tracks_step_input() {
        let spec = BlockSpec::Tf {
            num: vec![100.0],
            den: vec![1.0, 100.0],
        };
        let mut b = spec.build(1e-3, DiscretizeMethod::Zoh).unwrap();
        let mut y = 0.0;
        for _ in 0..5000 {
            y = b.step(1.0);
        }
        assert_relative_eq!(y, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn reset_restores_zero_state() {
        let spec = BlockSpec::Series {
            blocks: vec![
                BlockSpec::Tf {
                    num: vec![1.0],
                    den: vec![1.0, 1.0],
                },
                BlockSpec::Delay { steps: 2 },
            ],
        };
        let mut b = spec.build(0.01, DiscretizeMethod::Zoh).unwrap();
        for _ in 0..10 {
            b.step(1.0);
        }
        assert!(b.out(None) != 0.0);
        b.reset();
        assert_eq!(b.out(None), 0.0);
    }
}
