//! Command-line front end: margin computation, nu-gap, certification,
//! simulation, the cone-geometry self-test and the one-shot benchmark
//! pipeline.
//!
//! Exit codes: 0 success (and certified), 1 not certified, 2 usage,
//! 3 input/schema error, 4 domain error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use twoport_core::certificate::{arcsine_certificate, UncertaintyBudget, Verdict};
use twoport_core::cone_geometry;
use twoport_core::error::Error as CoreError;
use twoport_core::gap::{delay_gap_estimate, nu_gap};
use twoport_core::hinf::stability_margin;
use twoport_core::lti::FrequencyGrid;
use twoport_core::sim::descriptor::{ScenarioDescriptor, SystemSpec};
use twoport_core::sim::output::{to_csv, to_svg};
use twoport_core::sim::paper::paper_example_scenario;
use twoport_core::sim::{build_scenario, finite_gain_estimate, simulate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CERTIFIED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_DOMAIN: i32 = 4;

/// Outcome of one CLI invocation.
#[derive(Debug)]
pub struct RunReport {
    pub command: String,
    pub outputs: Value,
    pub exit_code: i32,
}

#[derive(Parser, Debug)]
#[command(
    name = "twoport",
    about = "Robust-control analysis of cascaded two-port networked control loops",
    version
)]
struct Cli {
    /// Significant digits in JSON output (env: TWOPORT_PRECISION).
    #[arg(long, global = true)]
    precision: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gang-of-Four H-infinity norm and stability margin of a loop.
    Margin {
        /// Plant file: {"num":[...],"den":[...]} or {"a":...,"b":...,"c":...,"d":...}.
        #[arg(long)]
        plant: PathBuf,
        #[arg(long)]
        controller: PathBuf,
    },
    /// Nu-gap between two systems.
    Nugap {
        #[arg(long)]
        p1: PathBuf,
        #[arg(long)]
        p2: PathBuf,
    },
    /// Evaluate the arcsine certificate of a scenario file.
    Certify {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run scenario files and write CSV traces (and optional SVG plots).
    Simulate {
        /// Scenario file; repeat for a batch.
        #[arg(long, required = true)]
        scenario: Vec<PathBuf>,
        /// Output directory for traces.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Also write an SVG line chart per run.
        #[arg(long)]
        plot: bool,
        /// Ports to plot (comma separated).
        #[arg(long, default_value = "y0")]
        ports: String,
        /// Concurrent runs for a batch.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the sampled cone-geometry suite and print pass/fail counts.
    GeometrySelftest {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Full benchmark pipeline: delay gap, certificate, simulation.
    PaperExample {
        #[arg(long, value_parser = ["stable", "unstable"])]
        case: String,
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        #[arg(long, default_value_t = 40.0)]
        duration: f64,
        #[arg(long, default_value_t = 100.0)]
        alpha: f64,
    },
}

fn classify(err: &CoreError) -> i32 {
    match err {
        CoreError::Schema(_) | CoreError::ImproperTransfer { .. } | CoreError::ZeroDenominator => {
            EXIT_INPUT
        }
        _ => EXIT_DOMAIN,
    }
}

fn read_system(path: &Path) -> Result<twoport_core::lti::StateSpace, (i32, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (EXIT_INPUT, format!("cannot read {}: {e}", path.display())))?;
    let spec: SystemSpec = serde_json::from_str(&text)
        .map_err(|e| (EXIT_INPUT, format!("{}: {e}", path.display())))?;
    spec.to_state_space()
        .map_err(|e| (classify(&e), format!("{}: {e}", path.display())))
}

fn read_scenario(path: &Path) -> Result<ScenarioDescriptor, (i32, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (EXIT_INPUT, format!("cannot read {}: {e}", path.display())))?;
    ScenarioDescriptor::from_json(&text)
        .map_err(|e| (EXIT_INPUT, format!("{}: {e}", path.display())))
}

/// Round every number in a JSON document to `sig` significant digits.
pub fn round_json(v: &Value, sig: usize) -> Value {
    match v {
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                if n.is_i64() || n.is_u64() {
                    return v.clone();
                }
                let rounded = round_sig(x, sig);
                serde_json::Number::from_f64(rounded)
                    .map(Value::Number)
                    .unwrap_or_else(|| Value::String(format!("{x}")))
            } else {
                v.clone()
            }
        }
        Value::Array(a) => Value::Array(a.iter().map(|x| round_json(x, sig)).collect()),
        Value::Object(o) => Value::Object(
            o.iter()
                .map(|(k, x)| (k.clone(), round_json(x, sig)))
                .collect(),
        ),
        other => other.clone(),
    }
}

fn round_sig(x: f64, sig: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor();
    let factor = 10f64.powi(sig as i32 - 1 - mag as i32);
    (x * factor).round() / factor
}

/// Budget evaluation for `certify`: explicit radii plus the optional
/// Pade-based delay gap for the plant side.
fn budget_from_scenario(
    descriptor: &ScenarioDescriptor,
) -> Result<(UncertaintyBudget, Value), (i32, String)> {
    let mut r_p = 0.0;
    let mut r_c = 0.0;
    let mut gap_info = Value::Null;
    if let Some(b) = &descriptor.budget {
        if let Some(v) = b.r_p {
            r_p = v;
        }
        if let Some(v) = b.r_c {
            r_c = v;
        }
        if let Some(d) = &b.r_p_from_delay {
            let plant = descriptor
                .plant
                .system
                .to_state_space()
                .map_err(|e| (classify(&e), e.to_string()))?;
            let est = delay_gap_estimate(&plant, d.delay, &d.orders)
                .map_err(|e| (classify(&e), e.to_string()))?;
            r_p = r_p.max(est.value);
            gap_info = json!({
                "delay": d.delay,
                "orders": d.orders,
                "per_order": est.per_order,
                "value": est.value,
            });
        }
    }
    let channel_radii: Vec<f64> = descriptor.channels.iter().map(|c| c.gain_bound).collect();
    Ok((
        UncertaintyBudget {
            r_p,
            r_c,
            channel_radii,
            nu_gap_radii: gap_info != Value::Null,
        },
        gap_info,
    ))
}

fn certificate_json(cert: &twoport_core::certificate::Certificate) -> Value {
    json!({
        "lhs": cert.lhs,
        "rhs": cert.rhs,
        "slack": cert.slack,
        "verdict": if cert.verdict == Verdict::Certified { "certified" } else { "not_certified" },
        "margin": cert.margin,
        "norm": cert.norm,
        "radius_metric": cert.radius_metric,
    })
}

fn simulate_and_summarize(
    descriptor: &ScenarioDescriptor,
    out_csv: Option<&Path>,
    plot: Option<(&Path, &[&str])>,
) -> Result<Value, (i32, String)> {
    let sc = build_scenario(descriptor).map_err(|e| (classify(&e), e.to_string()))?;
    let res = simulate(&sc);
    if let Some(path) = out_csv {
        let csv = to_csv(&res).map_err(|e| (EXIT_DOMAIN, e.to_string()))?;
        std::fs::write(path, csv)
            .map_err(|e| (EXIT_INPUT, format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some((path, ports)) = plot {
        let svg = to_svg(&res, ports, &format!("ports {}", ports.join(", ")))
            .map_err(|e| (EXIT_DOMAIN, e.to_string()))?;
        std::fs::write(path, svg)
            .map_err(|e| (EXIT_INPUT, format!("cannot write {}: {e}", path.display())))?;
    }
    let y = res.trace("y0");
    let (peak, tail_ratio) = match y {
        Some(sig) if !sig.is_empty() => {
            let peak = sig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let tail_start = sig.len() * 4 / 5;
            let tail = sig.values[tail_start..]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            (peak, if peak > 0.0 { tail / peak } else { 0.0 })
        }
        _ => (0.0, 0.0),
    };
    // windowed gain ratios from the first injected port to the stacked
    // per-stage outputs
    let mut gain_ratios = Value::Null;
    if let Some(inj) = descriptor.injections.first() {
        let outputs: Vec<String> = (0..=res.stages)
            .flat_map(|k| [format!("u{k}"), format!("w{k}")])
            .collect();
        let out_refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
        let t_final = res.trace("y0").map_or(0.0, |s| s.len() as f64 * res.h);
        let windows: Vec<f64> = (1..=4).map(|i| t_final * i as f64 / 4.0).collect();
        if let Ok(ratios) = finite_gain_estimate(&res, &inj.port, &out_refs, &windows) {
            gain_ratios = json!({
                "input": inj.port,
                "windows": windows,
                "ratios": ratios,
            });
        }
    }
    Ok(json!({
        "steps": res.trace("y0").map_or(0, |s| s.len()),
        "h": res.h,
        "diverged": res.diagnostics.diverged,
        "first_overflow_time": res.diagnostics.first_overflow_time,
        "output_peak": peak,
        "tail_to_peak": tail_ratio,
        "finite_gain": gain_ratios,
    }))
}

/// Execute one command line; never panics on user errors.
pub fn run<I, S>(argv: I) -> RunReport
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap renders help/version through the error path as well
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return RunReport {
                command: "usage".into(),
                outputs: Value::Null,
                exit_code: if is_help { EXIT_OK } else { EXIT_USAGE },
            };
        }
    };
    let precision = cli
        .precision
        .or_else(|| {
            std::env::var("TWOPORT_PRECISION")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(6)
        .clamp(1, 17);
    let (command, result) = dispatch(cli.command);
    match result {
        Ok((outputs, exit_code)) => {
            let rounded = round_json(&outputs, precision);
            println!(
                "{}",
                serde_json::to_string_pretty(&rounded).expect("serializable output")
            );
            RunReport {
                command,
                outputs: rounded,
                exit_code,
            }
        }
        Err((exit_code, msg)) => {
            eprintln!("error: {msg}");
            RunReport {
                command,
                outputs: json!({ "error": msg }),
                exit_code,
            }
        }
    }
}

type CmdResult = Result<(Value, i32), (i32, String)>;

fn dispatch(cmd: Command) -> (String, CmdResult) {
    match cmd {
        Command::Margin { plant, controller } => ("margin".into(), cmd_margin(&plant, &controller)),
        Command::Nugap { p1, p2 } => ("nugap".into(), cmd_nugap(&p1, &p2)),
        Command::Certify { scenario } => ("certify".into(), cmd_certify(&scenario)),
        Command::Simulate {
            scenario,
            out_dir,
            plot,
            ports,
            jobs,
        } => (
            "simulate".into(),
            cmd_simulate(&scenario, &out_dir, plot, &ports, jobs),
        ),
        Command::GeometrySelftest { seed } => ("geometry-selftest".into(), cmd_geometry(seed)),
        Command::PaperExample {
            case,
            h,
            duration,
            alpha,
        } => (
            "paper-example".into(),
            cmd_paper_example(&case, h, duration, alpha),
        ),
    }
}

fn cmd_margin(plant: &Path, controller: &Path) -> CmdResult {
    let p = read_system(plant)?;
    let c = read_system(controller)?;
    let m = stability_margin(&p, &c).map_err(|e| (classify(&e), e.to_string()))?;
    Ok((
        json!({
            "norm": m.norm,
            "margin": m.margin,
            "arcsin_margin": m.arcsin_margin,
            "peak_omega": if m.peak_omega.is_finite() {
                Value::from(m.peak_omega)
            } else {
                Value::String("infinity".into())
            },
        }),
        EXIT_OK,
    ))
}

fn cmd_nugap(p1: &Path, p2: &Path) -> CmdResult {
    let a = read_system(p1)?;
    let b = read_system(p2)?;
    let g = nu_gap(&a, &b, &FrequencyGrid::default_grid())
        .map_err(|e| (classify(&e), e.to_string()))?;
    Ok((
        json!({
            "value": g.value,
            "winding_ok": g.winding_ok,
            "peak_omega": if g.peak_omega.is_finite() {
                Value::from(g.peak_omega)
            } else {
                Value::String(if g.peak_omega.is_nan() { "undefined" } else { "infinity" }.into())
            },
        }),
        EXIT_OK,
    ))
}

fn cmd_certify(path: &Path) -> CmdResult {
    let descriptor = read_scenario(path)?;
    let plant = descriptor
        .plant
        .system
        .to_state_space()
        .map_err(|e| (classify(&e), e.to_string()))?;
    let ctrl = descriptor
        .controller
        .to_state_space()
        .map_err(|e| (classify(&e), e.to_string()))?;
    let (budget, gap_info) = budget_from_scenario(&descriptor)?;
    let cert =
        arcsine_certificate(&plant, &ctrl, &budget).map_err(|e| (classify(&e), e.to_string()))?;
    let exit = if cert.verdict == Verdict::Certified {
        EXIT_OK
    } else {
        EXIT_NOT_CERTIFIED
    };
    let mut out = certificate_json(&cert);
    out["budget"] = json!({
        "r_p": budget.r_p,
        "r_c": budget.r_c,
        "channel_radii": budget.channel_radii,
    });
    if gap_info != Value::Null {
        out["plant_delay_gap"] = gap_info;
    }
    Ok((out, exit))
}

fn cmd_simulate(
    scenarios: &[PathBuf],
    out_dir: &Path,
    plot: bool,
    ports: &str,
    jobs: usize,
) -> CmdResult {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        (
            EXIT_INPUT,
            format!("cannot create {}: {e}", out_dir.display()),
        )
    })?;
    let port_list: Vec<String> = ports.split(',').map(|s| s.trim().to_string()).collect();
    let jobs = jobs.max(1);
    type RunOutcome = (String, Result<Value, (i32, String)>);
    let mut summaries: Vec<RunOutcome> = Vec::new();
    for chunk in scenarios.chunks(jobs) {
        let handles: Vec<_> = chunk
            .iter()
            .map(|path| {
                let path = path.clone();
                let out_dir = out_dir.to_path_buf();
                let port_list = port_list.clone();
                std::thread::spawn(move || {
                    let stem = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().to_string())
                        .unwrap_or_else(|| "scenario".into());
                    let descriptor = match read_scenario(&path) {
                        Ok(d) => d,
                        Err(e) => return (stem, Err(e)),
                    };
                    let csv_path = out_dir.join(format!("{stem}.csv"));
                    let svg_path = out_dir.join(format!("{stem}.svg"));
                    let port_refs: Vec<&str> = port_list.iter().map(String::as_str).collect();
                    let plot_arg = if plot {
                        Some((svg_path.as_path(), port_refs.as_slice()))
                    } else {
                        None
                    };
                    let summary =
                        simulate_and_summarize(&descriptor, Some(csv_path.as_path()), plot_arg);
                    (
                        stem,
                        summary.map(|mut s| {
                            s["csv"] = json!(csv_path.display().to_string());
                            if plot {
                                s["svg"] = json!(svg_path.display().to_string());
                            }
                            s
                        }),
                    )
                })
            })
            .collect();
        for handle in handles {
            summaries.push(handle.join().expect("simulation thread"));
        }
    }
    let mut worst_exit = EXIT_OK;
    let mut runs = serde_json::Map::new();
    for (stem, outcome) in summaries {
        match outcome {
            Ok(v) => {
                runs.insert(stem, v);
            }
            Err((code, msg)) => {
                worst_exit = worst_exit.max(code);
                runs.insert(stem, json!({ "error": msg }));
            }
        }
    }
    Ok((Value::Object(runs), worst_exit))
}

fn cmd_geometry(seed: u64) -> CmdResult {
    let report = cone_geometry::selftest(seed);
    let all = report.all_pass();
    Ok((
        json!({
            "equivalence": format!("{}/{}", report.equivalence_pass, report.equivalence_total),
            "scaling": format!("{}/{}", report.scaling_pass, report.scaling_total),
            "containment": format!("{}/{}", report.containment_pass, report.containment_total),
            "disjointness": format!("{}/{}", report.disjointness_pass, report.disjointness_total),
            "all_pass": all,
        }),
        if all { EXIT_OK } else { EXIT_DOMAIN },
    ))
}

fn cmd_paper_example(case: &str, h: f64, duration: f64, alpha: f64) -> CmdResult {
    let (r, tau) = match case {
        "stable" => (0.32, 0.1),
        _ => (0.4, 0.2),
    };
    let (descriptor, warning) = paper_example_scenario(r, tau, alpha, h, duration)
        .map_err(|e| (classify(&e), e.to_string()))?;
    let plant = descriptor
        .plant
        .system
        .to_state_space()
        .map_err(|e| (classify(&e), e.to_string()))?;
    let ctrl = descriptor
        .controller
        .to_state_space()
        .map_err(|e| (classify(&e), e.to_string()))?;
    // gap radius of the one-way delay, maximized over Pade orders 3..5
    let est =
        delay_gap_estimate(&plant, tau, &[3, 4, 5]).map_err(|e| (classify(&e), e.to_string()))?;
    let budget = UncertaintyBudget {
        r_p: est.value,
        r_c: 0.0,
        channel_radii: vec![r],
        nu_gap_radii: true,
    };
    let cert =
        arcsine_certificate(&plant, &ctrl, &budget).map_err(|e| (classify(&e), e.to_string()))?;
    let sim_summary = simulate_and_summarize(&descriptor, None, None)?;
    Ok((
        json!({
            "case": case,
            "params": { "r": r, "tau": tau, "alpha": alpha, "h": h, "duration": duration },
            "warning": warning,
            "delay_gap": { "value": est.value, "per_order": est.per_order, "orders": [3, 4, 5] },
            "certificate": certificate_json(&cert),
            "simulation": sim_summary,
        }),
        EXIT_OK,
    ))
}
