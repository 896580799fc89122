//! Fixed-step time-domain simulation of the cascaded two-port loop.
//!
//! The wiring follows the chain plant - T_1 - ... - T_l - controller. Each
//! stage's transmission map sends its plant-side port pair (a, b) to the
//! controller-side pair (c, d) via T = I + Delta; simulating the physical
//! signal flow therefore applies the uplink rows forward and solves the
//! downlink rows, which is well posed exactly when every instantaneous
//! cycle is broken by a strict block. Injections p_k (control line) and
//! q_k (measurement line) enter on the wires between stages.

pub mod block;
pub mod descriptor;
pub mod discretize;
pub mod output;
pub mod paper;

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lti::StateSpace;

use block::{Block, BlockSpec};
use descriptor::{parse_port, InjectionKind, PortLine, ScenarioDescriptor, SolverSpec};
use discretize::DiscretizeMethod;

/// Uniformly sampled scalar signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub values: Vec<f64>,
    pub h: f64,
}

impl Signal {
    pub fn zeros(n: usize, h: f64) -> Self {
        Self {
            values: vec![0.0; n],
            h,
        }
    }

    /// Truncated L2 norm over [0, t_end]: sqrt(h * sum of squares).
    pub fn truncated_norm(&self, t_end: f64) -> f64 {
        let steps = ((t_end / self.h).floor() as usize + 1).min(self.values.len());
        (self.h * self.values[..steps].iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn norm(&self) -> f64 {
        (self.h * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A validated, ready-to-run scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub descriptor: ScenarioDescriptor,
    plant: Block,
    controller: Block,
    /// Per stage: [delta_div, delta_minus, delta_plus, delta_times].
    channels: Vec<[Block; 4]>,
    /// (line, interface, kind) triples.
    injections: Vec<(PortLine, usize, InjectionKind)>,
    pub solver: SolverSpec,
    /// Topological evaluation order over the instantaneous graph.
    topo: Vec<NodeId>,
}

impl Scenario {
    pub fn stages(&self) -> usize {
        self.channels.len()
    }
}

/// Signal node of the instantaneous-dependency graph. `A(k)` is the raw
/// downlink emitted by stage k toward the plant (k = l+1 being the
/// controller output); `D(k)` the raw uplink emitted by stage k toward the
/// controller (k = 0 being the plant output).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeId {
    A(usize),
    D(usize),
}

/// Run diagnostics.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct Diagnostics {
    pub diverged: bool,
    pub first_overflow_time: Option<f64>,
}

/// Simulation traces keyed by port name plus diagnostics.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub traces: BTreeMap<String, Signal>,
    pub h: f64,
    pub stages: usize,
    pub diagnostics: Diagnostics,
}

impl SimResult {
    pub fn trace(&self, port: &str) -> Option<&Signal> {
        self.traces.get(port)
    }
}

/// Magnitude beyond which a run is flagged divergent and stopped.
pub const DIVERGENCE_THRESHOLD: f64 = 1e9;

/// Validate a descriptor and build the runtime scenario.
pub fn build_scenario(descriptor: &ScenarioDescriptor) -> Result<Scenario> {
    let solver = descriptor.solver.clone();
    if solver.h <= 0.0 {
        return Err(Error::Schema("solver.h must be positive".into()));
    }
    if solver.duration < solver.h {
        return Err(Error::Schema(
            "duration must cover at least one step".into(),
        ));
    }
    let plant_ss = descriptor.plant.system.to_state_space()?;
    if plant_ss.inputs() != 1 || plant_ss.outputs() != 1 {
        return Err(Error::Schema(
            "simulator ports are scalar: plant must be SISO".into(),
        ));
    }
    let ctrl_ss = descriptor.controller.to_state_space()?;
    if ctrl_ss.inputs() != 1 || ctrl_ss.outputs() != 1 {
        return Err(Error::Schema("controller must be SISO".into()));
    }
    let mut plant = Block::from_continuous(&plant_ss, solver.h, solver.method)?;
    if descriptor.plant.delay_steps > 0 {
        plant = Block::Series {
            blocks: vec![
                Block::Delay {
                    buf: vec![0.0; descriptor.plant.delay_steps],
                    idx: 0,
                },
                plant,
            ],
        };
    }
    let controller = Block::from_continuous(&ctrl_ss, solver.h, solver.method)?;
    let mut channels = Vec::with_capacity(descriptor.channels.len());
    for (k, ch) in descriptor.channels.iter().enumerate() {
        if !(0.0..1.0).contains(&ch.gain_bound) {
            return Err(Error::InvalidArgument(format!(
                "channel {}: declared gain bound {} must lie in [0, 1)",
                k + 1,
                ch.gain_bound
            )));
        }
        let entries = [
            ("delta_div", &ch.delta_div),
            ("delta_minus", &ch.delta_minus),
            ("delta_plus", &ch.delta_plus),
            ("delta_times", &ch.delta_times),
        ];
        let mut built = Vec::with_capacity(4);
        for (name, spec) in entries {
            let block = spec.build(solver.h, solver.method)?;
            // the uncertainty quartet must be strongly causal: discretely,
            // zero instantaneous feedthrough in every entry
            if !block.is_strict() {
                return Err(Error::WellPosedness(format!(
                    "channel {}: {} has instantaneous feedthrough; quartet \
                     entries must be strict (or zero) in every stage",
                    k + 1,
                    name
                )));
            }
            built.push(block);
        }
        let [div, minus, plus, times]: [Block; 4] = built.try_into().expect("four quartet entries");
        channels.push([div, minus, plus, times]);
    }
    let mut injections = Vec::new();
    for inj in &descriptor.injections {
        let (line, idx) = parse_port(&inj.port, channels.len())?;
        injections.push((line, idx, inj.kind.clone()));
    }
    let topo = instantaneous_order(&plant, &controller, &channels)?;
    Ok(Scenario {
        descriptor: descriptor.clone(),
        plant,
        controller,
        channels,
        injections,
        solver,
        topo,
    })
}

/// Topological order of the instantaneous-dependency graph; errors with the
/// member list of the stuck cycle when one exists.
fn instantaneous_order(
    plant: &Block,
    controller: &Block,
    channels: &[[Block; 4]],
) -> Result<Vec<NodeId>> {
    let l = channels.len();
    // node indices: A(k) for k = 1..=l+1 at k-1, D(k) for k = 0..=l at l+1+k
    let idx_a = |k: usize| k - 1;
    let idx_d = |k: usize| l + 1 + k;
    let n_nodes = 2 * l + 2;
    let mut deps: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for k in 1..=l {
        // A(k) <- A(k+1) through the downlink wire
        deps[idx_a(k)].push(idx_a(k + 1));
        if !channels[k - 1][1].is_strict() {
            deps[idx_a(k)].push(idx_d(k - 1));
        }
        // D(k) <- D(k-1) through the identity term
        deps[idx_d(k)].push(idx_d(k - 1));
        if !channels[k - 1][2].is_strict() {
            deps[idx_d(k)].push(idx_a(k));
        }
    }
    if !plant.is_strict() {
        deps[idx_d(0)].push(idx_a(1));
    }
    if !controller.is_strict() {
        deps[idx_a(l + 1)].push(idx_d(l));
    }
    let mut indegree = vec![0usize; n_nodes];
    let mut fwd: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (node, ds) in deps.iter().enumerate() {
        indegree[node] = ds.len();
        for &d in ds {
            fwd[d].push(node);
        }
    }
    let mut ready: Vec<usize> = (0..n_nodes).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n_nodes);
    while let Some(node) = ready.pop() {
        order.push(node);
        for &next in &fwd[node] {
            indegree[next] -= 1;
            if indegree[next] == 0 {
                ready.push(next);
            }
        }
    }
    if order.len() != n_nodes {
        let name = |i: usize| {
            if i <= l {
                format!("downlink out of stage {}", i + 1)
            } else {
                format!("uplink out of stage {}", i - l - 1)
            }
        };
        let cycle: Vec<String> = (0..n_nodes)
            .filter(|&i| indegree[i] > 0)
            .map(name)
            .collect();
        return Err(Error::WellPosedness(format!(
            "algebraic loop through {{{}}}: every cycle needs a strict block",
            cycle.join(", ")
        )));
    }
    Ok(order
        .into_iter()
        .map(|i| {
            if i <= l {
                NodeId::A(i + 1)
            } else {
                NodeId::D(i - l - 1)
            }
        })
        .collect())
}

/// Execute the scenario; deterministic in the descriptor.
pub fn simulate(sc: &Scenario) -> SimResult {
    let l = sc.channels.len();
    let h = sc.solver.h;
    let steps = (sc.solver.duration / h).round() as usize;
    let mut plant = sc.plant.clone();
    let mut controller = sc.controller.clone();
    let mut channels = sc.channels.clone();
    let mut store: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for k in 0..=l {
        for prefix in ["p", "q", "u", "y", "v", "w"] {
            store.insert(format!("{prefix}{k}"), Vec::with_capacity(steps));
        }
    }
    let mut diagnostics = Diagnostics::default();
    let mut a_vals = vec![0.0f64; l + 2]; // a[k] valid for k = 1..=l+1
    let mut d_vals = vec![0.0f64; l + 1]; // d[k] valid for k = 0..=l
    'time: for t in 0..steps {
        let mut p_inj = vec![0.0f64; l + 1];
        let mut q_inj = vec![0.0f64; l + 1];
        for (line, idx, kind) in &sc.injections {
            let v = kind.sample(t, h);
            match line {
                PortLine::Control => p_inj[*idx] += v,
                PortLine::Measurement => q_inj[*idx] += v,
            }
        }
        let mut a_known = vec![false; l + 2];
        let mut d_known = vec![false; l + 1];
        // phase 1: node values in topological order
        for node in &sc.topo {
            match *node {
                NodeId::A(k) if k == l + 1 => {
                    let y_l = if d_known[l] {
                        Some(d_vals[l] + q_inj[l])
                    } else {
                        None
                    };
                    a_vals[k] = controller.out(y_l);
                    a_known[k] = true;
                }
                NodeId::A(k) => {
                    let ch = &channels[k - 1];
                    debug_assert!(a_known[k + 1]);
                    let u_k = a_vals[k + 1] + p_inj[k];
                    let y_prev = if d_known[k - 1] {
                        Some(d_vals[k - 1] + q_inj[k - 1])
                    } else {
                        None
                    };
                    let minus_out = ch[1].out(y_prev);
                    let div_out = ch[0].out(None);
                    a_vals[k] = u_k - minus_out - div_out;
                    a_known[k] = true;
                }
                NodeId::D(0) => {
                    let u_0 = if a_known[1] {
                        Some(a_vals[1] + p_inj[0])
                    } else {
                        None
                    };
                    d_vals[0] = plant.out(u_0);
                    d_known[0] = true;
                }
                NodeId::D(k) => {
                    let ch = &channels[k - 1];
                    debug_assert!(d_known[k - 1]);
                    let y_prev = d_vals[k - 1] + q_inj[k - 1];
                    let a_k = if a_known[k] { Some(a_vals[k]) } else { None };
                    let plus_out = ch[2].out(a_k);
                    let times_out = ch[3].out(Some(y_prev));
                    d_vals[k] = plus_out + y_prev + times_out;
                    d_known[k] = true;
                }
            }
        }
        // phase 2: advance all states with the now-known step-t inputs
        plant.advance(a_vals[1] + p_inj[0]);
        controller.advance(d_vals[l] + q_inj[l]);
        for k in 1..=l {
            let y_prev = d_vals[k - 1] + q_inj[k - 1];
            let a_k = a_vals[k];
            let ch = &mut channels[k - 1];
            ch[0].advance(a_k);
            ch[1].advance(y_prev);
            ch[2].advance(a_k);
            ch[3].advance(y_prev);
        }
        // record
        for k in 0..=l {
            store.get_mut(&format!("p{k}")).unwrap().push(p_inj[k]);
            store.get_mut(&format!("q{k}")).unwrap().push(q_inj[k]);
            store
                .get_mut(&format!("u{k}"))
                .unwrap()
                .push(a_vals[k + 1] + p_inj[k]);
            store
                .get_mut(&format!("y{k}"))
                .unwrap()
                .push(d_vals[k] + q_inj[k]);
            store.get_mut(&format!("v{k}")).unwrap().push(a_vals[k + 1]);
            store.get_mut(&format!("w{k}")).unwrap().push(d_vals[k]);
        }
        for k in 0..=l {
            if a_vals[k + 1].abs() > DIVERGENCE_THRESHOLD || d_vals[k].abs() > DIVERGENCE_THRESHOLD
            {
                diagnostics.diverged = true;
                diagnostics.first_overflow_time = Some(t as f64 * h);
                break 'time;
            }
        }
    }
    let traces = store
        .into_iter()
        .map(|(k, values)| (k, Signal { values, h }))
        .collect();
    SimResult {
        traces,
        h,
        stages: l,
        diagnostics,
    }
}

/// Truncated-norm gain ratios (stacked outputs over input) per window;
/// windows with zero input norm are skipped as None.
pub fn finite_gain_estimate(
    res: &SimResult,
    input_port: &str,
    output_ports: &[&str],
    windows: &[f64],
) -> Result<Vec<Option<f64>>> {
    let input = res
        .trace(input_port)
        .ok_or_else(|| Error::InvalidArgument(format!("no trace for port {input_port}")))?;
    let outputs: Result<Vec<&Signal>> = output_ports
        .iter()
        .map(|p| {
            res.trace(p)
                .ok_or_else(|| Error::InvalidArgument(format!("no trace for port {p}")))
        })
        .collect();
    let outputs = outputs?;
    let mut ratios = Vec::with_capacity(windows.len());
    for &t_end in windows {
        let in_norm = input.truncated_norm(t_end);
        if in_norm <= 1e-300 {
            ratios.push(None);
            continue;
        }
        let out_sq: f64 = outputs
            .iter()
            .map(|s| s.truncated_norm(t_end).powi(2))
            .sum();
        ratios.push(Some(out_sq.sqrt() / in_norm));
    }
    Ok(ratios)
}

/// What `operator_gain_estimate` probes.
pub enum GainTarget<'a> {
    Block(&'a BlockSpec),
    /// Full quartet map (u, y) -> (D_div u + D_minus y, D_plus u + D_times y).
    Quartet(&'a descriptor::ChannelSpec),
}

/// Monte-Carlo lower bound on the finite-gain norm of a block or quartet:
/// maximum truncated-norm ratio over seeded random probes (multisines,
/// steps, impulses across amplitudes and frequencies).
pub fn operator_gain_estimate(
    target: GainTarget<'_>,
    h: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes < 10 {
        return Err(Error::InvalidArgument("need at least 10 probes".into()));
    }
    let horizon = 30.0f64;
    let steps = (horizon / h) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..probes {
        let ratio = match &target {
            GainTarget::Block(spec) => {
                let mut block = spec.build(h, DiscretizeMethod::Zoh)?;
                let probe = random_probe(&mut rng);
                let mut input = Signal::zeros(steps, h);
                let mut output = Signal::zeros(steps, h);
                for t in 0..steps {
                    let u = probe.sample(t, h);
                    input.values[t] = u;
                    output.values[t] = block.step(u);
                }
                max_window_ratio(&[&input], &[&output], horizon)
            }
            GainTarget::Quartet(ch) => {
                let mut div = ch.delta_div.build(h, DiscretizeMethod::Zoh)?;
                let mut minus = ch.delta_minus.build(h, DiscretizeMethod::Zoh)?;
                let mut plus = ch.delta_plus.build(h, DiscretizeMethod::Zoh)?;
                let mut times = ch.delta_times.build(h, DiscretizeMethod::Zoh)?;
                // energy split between the two input lines: both, y only,
                // or u only
                let mode = rng.gen_range(0..3);
                let probe_u = random_probe(&mut rng);
                let probe_y = random_probe(&mut rng);
                let mut iu = Signal::zeros(steps, h);
                let mut iy = Signal::zeros(steps, h);
                let mut o1 = Signal::zeros(steps, h);
                let mut o2 = Signal::zeros(steps, h);
                for t in 0..steps {
                    let u = if mode == 1 { 0.0 } else { probe_u.sample(t, h) };
                    let y = if mode == 2 { 0.0 } else { probe_y.sample(t, h) };
                    iu.values[t] = u;
                    iy.values[t] = y;
                    o1.values[t] = div.step(u) + minus.step(y);
                    o2.values[t] = plus.step(u) + times.step(y);
                }
                max_window_ratio(&[&iu, &iy], &[&o1, &o2], horizon)
            }
        };
        best = best.max(ratio);
    }
    Ok(best)
}

fn random_probe(rng: &mut ChaCha8Rng) -> InjectionKind {
    let amp = 10f64.powf(rng.gen_range(-2.0..0.45));
    match rng.gen_range(0..3) {
        0 => InjectionKind::Multisine {
            components: (0..rng.gen_range(1..=3))
                .map(|_| descriptor::SineComponent {
                    amp,
                    freq_hz: 10f64.powf(rng.gen_range(-2.3..0.7)),
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                })
                .collect(),
        },
        1 => InjectionKind::Step {
            amplitude: amp,
            start: 0.0,
        },
        _ => InjectionKind::Impulse {
            area: amp,
            time: 0.0,
        },
    }
}

/// Largest stacked-norm ratio over a few truncation windows; each truncated
/// ratio lower-bounds the finite-gain norm of a causal operator.
fn max_window_ratio(inputs: &[&Signal], outputs: &[&Signal], horizon: f64) -> f64 {
    let mut best: f64 = 0.0;
    for &frac in &[0.25, 0.5, 1.0] {
        let t_end = horizon * frac;
        let in_sq: f64 = inputs.iter().map(|s| s.truncated_norm(t_end).powi(2)).sum();
        if in_sq <= 1e-300 {
            continue;
        }
        let out_sq: f64 = outputs
            .iter()
            .map(|s| s.truncated_norm(t_end).powi(2))
            .sum();
        best = best.max((out_sq / in_sq).sqrt());
    }
    best
}

/// Assemble the LTI closed loop of plant, controller and an LTI quartet
/// (a 2x2 block transfer matrix on the stacked pair (u0, y0)) by
/// eliminating the algebraic constraints. Only the A matrix matters for
/// stability checks; B, C, D are zero.
pub fn assemble_lti_quartet_loop(
    plant: &StateSpace,
    ctrl: &StateSpace,
    delta: &StateSpace,
) -> Result<StateSpace> {
    use nalgebra::DMatrix;
    let m = plant.inputs();
    let p = plant.outputs();
    if ctrl.inputs() != p || ctrl.outputs() != m {
        return Err(Error::DimensionMismatch("controller dimensions".into()));
    }
    if delta.inputs() != m + p || delta.outputs() != m + p {
        return Err(Error::DimensionMismatch(
            "quartet must map stacked (u, y) to stacked (d1, d2)".into(),
        ));
    }
    let (np, nc, nd) = (plant.order(), ctrl.order(), delta.order());
    let nz = 2 * (m + p);
    let n = np + nc + nd;
    // unknowns z = [u0; y0; d1; d2], constraints E z = F x
    let mut e = DMatrix::<f64>::zeros(nz, nz);
    let mut f = DMatrix::<f64>::zeros(nz, n);
    let (iu, iy, id1, id2) = (0, m, m + p, m + p + m);
    let mut row = 0;
    // plant rows: y0 - Dp u0 = Cp xp
    for r in 0..p {
        e[(row, iy + r)] = 1.0;
        for c in 0..m {
            e[(row, iu + c)] = -plant.d[(r, c)];
        }
        for c in 0..np {
            f[(row, c)] = plant.c[(r, c)];
        }
        row += 1;
    }
    // controller rows: u0 + d1 - Dc y0 - Dc d2 = Cc xc
    // (v = u0 + d1, w = y0 + d2, v = C w)
    for r in 0..m {
        e[(row, iu + r)] = 1.0;
        e[(row, id1 + r)] = 1.0;
        for c in 0..p {
            e[(row, iy + c)] -= ctrl.d[(r, c)];
            e[(row, id2 + c)] -= ctrl.d[(r, c)];
        }
        for c in 0..nc {
            f[(row, np + c)] = ctrl.c[(r, c)];
        }
        row += 1;
    }
    // quartet rows: d - Dd [u0; y0] = Cd xd
    for r in 0..(m + p) {
        e[(row, id1 + r)] = 1.0;
        for c in 0..(m + p) {
            e[(row, iu + c)] -= delta.d[(r, c)];
        }
        for c in 0..nd {
            f[(row, np + nc + c)] = delta.c[(r, c)];
        }
        row += 1;
    }
    let e_inv = e
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::WellPosedness("singular algebraic constraint".into()))?;
    let z = e_inv * f;
    let zu = z.rows(iu, m).into_owned();
    let zy = z.rows(iy, p).into_owned();
    let zd2 = z.rows(id2, p).into_owned();
    let mut a = DMatrix::<f64>::zeros(n, n);
    a.view_mut((0, 0), (np, np)).copy_from(&plant.a);
    a.view_mut((np, np), (nc, nc)).copy_from(&ctrl.a);
    a.view_mut((np + nc, np + nc), (nd, nd)).copy_from(&delta.a);
    // plant drive: Bp u0
    add_product(&mut a, 0, &plant.b, &zu);
    // controller drive: Bc (y0 + d2)
    add_product(&mut a, np, &ctrl.b, &(&zy + &zd2));
    // quartet drive: Bd [u0; y0]
    let mut zin = DMatrix::<f64>::zeros(m + p, n);
    zin.view_mut((0, 0), (m, n)).copy_from(&zu);
    zin.view_mut((m, 0), (p, n)).copy_from(&zy);
    add_product(&mut a, np + nc, &delta.b, &zin);
    StateSpace::new(
        a,
        DMatrix::zeros(n, 1),
        DMatrix::zeros(1, n),
        DMatrix::zeros(1, 1),
    )
}

fn add_product(
    a: &mut nalgebra::DMatrix<f64>,
    row0: usize,
    b: &nalgebra::DMatrix<f64>,
    z: &nalgebra::DMatrix<f64>,
) {
    let prod = b * z;
    let mut view = a.view_mut((row0, 0), (prod.nrows(), prod.ncols()));
    view += prod;
}
