//! The saturated-channel benchmark scenario: double-integrator plant,
//! optimally robust first-order controller, one two-port channel whose
//! subtractive entry is a saturated low-pass interference and whose
//! multiplicative entry is a low-pass distortion, plus a transport delay at
//! the plant input.

use crate::error::{Error, Result};
use crate::lti::{tf_to_ss, RationalTransfer, StateSpace};
use crate::sim::block::{Block, BlockSpec};
use crate::sim::descriptor::{
    ChannelSpec, InjectionKind, InjectionSpec, PlantSpec, ScenarioDescriptor, SolverSpec,
    SystemSpec,
};
use crate::sim::discretize::DiscretizeMethod;
use crate::sim::Signal;

/// Optimally robust controller for the double integrator:
/// C(s) = -((1 + sqrt(2)) s + 1) / (s + 1 + sqrt(2)).
pub fn optimal_controller_tf() -> RationalTransfer {
    let k = 1.0 + 2.0f64.sqrt();
    RationalTransfer::new(vec![-k, -1.0], vec![1.0, k]).expect("valid controller")
}

/// Double integrator 1/s^2.
pub fn double_integrator_tf() -> RationalTransfer {
    RationalTransfer::new(vec![1.0], vec![1.0, 0.0, 0.0]).expect("valid plant")
}

pub fn double_integrator() -> StateSpace {
    tf_to_ss(&double_integrator_tf()).expect("realizable")
}

pub fn optimal_controller() -> StateSpace {
    tf_to_ss(&optimal_controller_tf()).expect("realizable")
}

/// The benchmark channel quartet for gain parameter `r` and filter
/// bandwidth `alpha`:
/// Delta_minus = -(sqrt(3)/2) r * sat(g y), Delta_times = -(r/2) g y,
/// with g = alpha / (alpha + s) strictly proper.
pub fn saturated_channel(r: f64, alpha: f64) -> ChannelSpec {
    let g = BlockSpec::Tf {
        num: vec![alpha],
        den: vec![1.0, alpha],
    };
    ChannelSpec {
        delta_div: BlockSpec::Zero,
        delta_minus: BlockSpec::Scale {
            factor: -(3.0f64.sqrt() / 2.0) * r,
            block: Box::new(BlockSpec::Series {
                blocks: vec![g.clone(), BlockSpec::Saturation { limit: 1.0 }],
            }),
        },
        delta_plus: BlockSpec::Zero,
        delta_times: BlockSpec::Scale {
            factor: -r / 2.0,
            block: Box::new(g),
        },
        gain_bound: r,
    }
}

/// Build the benchmark scenario descriptor. The plant carries the
/// round-trip delay 2*tau as an input delay of round(2 tau / h) steps; the
/// impulse (area 1) enters at p1, the channel input on the controller side.
/// Returns a rounding note when 2*tau/h is not close to an integer.
pub fn paper_example_scenario(
    r: f64,
    tau: f64,
    alpha: f64,
    h: f64,
    duration: f64,
) -> Result<(ScenarioDescriptor, Option<String>)> {
    if h <= 0.0 || duration <= 0.0 || alpha <= 0.0 || tau < 0.0 {
        return Err(Error::InvalidArgument(
            "parameters must be positive (tau nonnegative)".into(),
        ));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidArgument("r must lie in [0, 1)".into()));
    }
    let exact = 2.0 * tau / h;
    let delay_steps = exact.round() as usize;
    let warning = if (exact - exact.round()).abs() > 1e-9 * (1.0 + exact) {
        Some(format!(
            "round-trip delay 2*tau/h = {exact} is not an integer; rounded to {delay_steps} steps"
        ))
    } else {
        None
    };
    let plant_tf = double_integrator_tf();
    let ctrl_tf = optimal_controller_tf();
    let descriptor = ScenarioDescriptor {
        plant: PlantSpec {
            system: SystemSpec::Tf {
                num: plant_tf.num,
                den: plant_tf.den,
            },
            delay_steps,
        },
        controller: SystemSpec::Tf {
            num: ctrl_tf.num,
            den: ctrl_tf.den,
        },
        channels: vec![saturated_channel(r, alpha)],
        injections: vec![InjectionSpec {
            port: "p1".into(),
            kind: InjectionKind::Impulse {
                area: 1.0,
                time: 0.0,
            },
        }],
        solver: SolverSpec {
            h,
            duration,
            method: DiscretizeMethod::Zoh,
        },
        budget: None,
    };
    Ok((descriptor, warning))
}

/// Apply a channel's transmission map T = I + Delta in the forward (graph)
/// direction: (u, y) on the plant-side port to (v, w) on the controller
/// side.
pub fn apply_channel(
    spec: &ChannelSpec,
    h: f64,
    u: &Signal,
    y: &Signal,
) -> Result<(Signal, Signal)> {
    if u.len() != y.len() {
        return Err(Error::DimensionMismatch("signal lengths differ".into()));
    }
    let method = DiscretizeMethod::Zoh;
    let mut div = spec.delta_div.build(h, method)?;
    let mut minus = spec.delta_minus.build(h, method)?;
    let mut plus = spec.delta_plus.build(h, method)?;
    let mut times = spec.delta_times.build(h, method)?;
    let n = u.len();
    let mut v = Signal::zeros(n, h);
    let mut w = Signal::zeros(n, h);
    for t in 0..n {
        let ut = u.values[t];
        let yt = y.values[t];
        v.values[t] = ut + div.step(ut) + minus.step(yt);
        w.values[t] = plus.step(ut) + yt + times.step(yt);
    }
    Ok((v, w))
}

/// Closed-form inverse of the benchmark channel: recover (u, y) from
/// (v, w). The multiplicative row is inverted through the strictly causal
/// feedback y_t = w_t + (r/2)(g y)_t; the subtractive row then adds back
/// the saturated interference computed from the same filtered signal.
pub fn paper_channel_inverse(
    r: f64,
    alpha: f64,
    h: f64,
    v: &Signal,
    w: &Signal,
) -> Result<(Signal, Signal)> {
    if v.len() != w.len() {
        return Err(Error::DimensionMismatch("signal lengths differ".into()));
    }
    let g_sys = tf_to_ss(&RationalTransfer::new(vec![alpha], vec![1.0, alpha])?)?;
    let mut g = Block::from_continuous(&g_sys, h, DiscretizeMethod::Zoh)?;
    if !g.is_strict() {
        return Err(Error::WellPosedness(
            "filter must be strictly proper".into(),
        ));
    }
    let n = v.len();
    let mut u = Signal::zeros(n, h);
    let mut y = Signal::zeros(n, h);
    let c = 3.0f64.sqrt() / 2.0 * r;
    for t in 0..n {
        let g_out = g.out(None);
        let yt = w.values[t] + (r / 2.0) * g_out;
        let sat = g_out.clamp(-1.0, 1.0);
        u.values[t] = v.values[t] + c * sat;
        y.values[t] = yt;
        g.advance(yt);
    }
    Ok((u, y))
}
