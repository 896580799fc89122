//! Scenario file schema and validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{tf_to_ss, RationalTransfer, StateSpace};
use crate::sim::block::BlockSpec;
use crate::sim::discretize::DiscretizeMethod;

/// A SISO system in a config file: transfer function or state-space matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Tf {
        num: Vec<f64>,
        den: Vec<f64>,
    },
    Ss {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
    },
}

impl SystemSpec {
    pub fn to_state_space(&self) -> Result<StateSpace> {
        match self {
            SystemSpec::Tf { num, den } => {
                tf_to_ss(&RationalTransfer::new(num.clone(), den.clone())?)
            }
            SystemSpec::Ss { a, b, c, d } => {
                let rows = |m: &[Vec<f64>]| -> Result<nalgebra::DMatrix<f64>> {
                    let r = m.len();
                    let cc = m.first().map_or(0, |row| row.len());
                    if m.iter().any(|row| row.len() != cc) {
                        return Err(Error::Schema("ragged matrix".into()));
                    }
                    Ok(nalgebra::DMatrix::from_fn(r, cc, |i, j| m[i][j]))
                };
                StateSpace::new(rows(a)?, rows(b)?, rows(c)?, rows(d)?)
            }
        }
    }
}

/// Plant entry: a system plus an optional input delay in whole steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantSpec {
    #[serde(flatten)]
    pub system: SystemSpec,
    #[serde(default)]
    pub delay_steps: usize,
}

/// One two-port channel: the four quartet blocks and the declared gain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub delta_div: BlockSpec,
    pub delta_minus: BlockSpec,
    pub delta_plus: BlockSpec,
    pub delta_times: BlockSpec,
    pub gain_bound: f64,
}

/// Exogenous injection shapes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InjectionKind {
    /// One-sample pulse of the given area at `time` (height area/h).
    Impulse {
        #[serde(default = "one")]
        area: f64,
        #[serde(default)]
        time: f64,
    },
    /// Constant from `start` onward.
    Step {
        amplitude: f64,
        #[serde(default)]
        start: f64,
    },
    /// Sum of sinusoids amp * sin(2 pi freq t + phase).
    Multisine { components: Vec<SineComponent> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SineComponent {
    pub amp: f64,
    pub freq_hz: f64,
    #[serde(default)]
    pub phase: f64,
}

fn one() -> f64 {
    1.0
}

/// Injection bound to a port name: `p0..pl` on the control line toward the
/// plant, `q0..ql` on the measurement line toward the controller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub port: String,
    #[serde(flatten)]
    pub kind: InjectionKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSpec {
    pub h: f64,
    pub duration: f64,
    #[serde(default = "default_method")]
    pub method: DiscretizeMethod,
}

fn default_method() -> DiscretizeMethod {
    DiscretizeMethod::Zoh
}

/// Optional certification budget carried alongside a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetSpec {
    #[serde(default)]
    pub r_p: Option<f64>,
    #[serde(default)]
    pub r_c: Option<f64>,
    /// Derive r_p from a plant transport delay via the Pade nu-gap estimate.
    #[serde(default)]
    pub r_p_from_delay: Option<DelayBudgetSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayBudgetSpec {
    /// Delay in seconds whose gap radius bounds the plant uncertainty.
    pub delay: f64,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
}

fn default_orders() -> Vec<usize> {
    vec![3, 4, 5]
}

/// Full scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDescriptor {
    pub plant: PlantSpec,
    pub controller: SystemSpec,
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub injections: Vec<InjectionSpec>,
    pub solver: SolverSpec,
    #[serde(default)]
    pub budget: Option<BudgetSpec>,
}

impl ScenarioDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }
}

/// Parse a port name like `p2` or `q0` into (line, interface index).
pub fn parse_port(name: &str, stages: usize) -> Result<(PortLine, usize)> {
    let (line, rest) = match name.split_at(1) {
        ("p", rest) => (PortLine::Control, rest),
        ("q", rest) => (PortLine::Measurement, rest),
        _ => {
            return Err(Error::Schema(format!(
                "port '{name}' must start with 'p' or 'q'"
            )))
        }
    };
    let idx: usize = rest
        .parse()
        .map_err(|_| Error::Schema(format!("port '{name}' has no interface index")))?;
    if idx > stages {
        return Err(Error::Schema(format!(
            "port '{name}' exceeds the last interface {stages}"
        )));
    }
    Ok((line, idx))
}

/// Which line of an interface an injection enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortLine {
    /// u-line, flowing toward the plant.
    Control,
    /// y-line, flowing toward the controller.
    Measurement,
}

impl InjectionKind {
    /// Sample the injection at step `t_idx` for step size `h`.
    pub fn sample(&self, t_idx: usize, h: f64) -> f64 {
        let t = t_idx as f64 * h;
        match self {
            InjectionKind::Impulse { area, time } => {
                if (t - time).abs() < 0.5 * h {
                    area / h
                } else {
                    0.0
                }
            }
            InjectionKind::Step { amplitude, start } => {
                if t >= *start - 0.5 * h {
                    *amplitude
                } else {
                    0.0
                }
            }
            InjectionKind::Multisine { components } => components
                .iter()
                .map(|c| c.amp * (2.0 * std::f64::consts::PI * c.freq_hz * t + c.phase).sin())
                .sum(),
        }
    }
}
