//! Command-line front end: load a network description, then validate,
//! classify, evaluate the Jacobian, simulate, cross-validate, or run the
//! monotone order test. Reports are printed as text or JSON (stable key
//! order, byte-identical across runs with the same seed and inputs) and
//! optionally written to an output directory together with trajectory CSVs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use coopex_core::classify::{classify_system, ClassificationReport, ClassifyOptions};
use coopex_core::jacobian::{assemble_jacobian, JacobianReport};
use coopex_core::network::ReactionNetwork;
use coopex_core::simulate::{
    convergence_study, extent_csv, integrate_extents, integrate_moles, mole_csv,
    monotone_order_test, random_ordered_chain, ConvergenceReport, OrderTestResult, ORDER_TOL,
};
use coopex_core::transform::{ExtentState, FlowProfile, FlowSpec, VolumeModel};

const TOOL: &str = "coopex";

#[derive(Parser)]
#[command(name = TOOL, version, about = "Cooperativity analysis of open reaction systems in the extent domain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a network description and report its rank structure.
    Validate(Args),
    /// Classify reaction pairs and flow couplings.
    Classify(Args),
    /// Assemble the extent-domain Jacobian at the canonical initial state
    /// and run the Metzler test.
    Jacobian(Args),
    /// Integrate the extent and mole dynamics and export trajectories.
    Simulate(Args),
    /// Integrate both model forms and report the reconstruction deviation
    /// and the stepper's order of convergence.
    CrossValidate(Args),
    /// Run the monotone order test on randomly ordered chains.
    Monotone(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Network description (JSON).
    #[arg(long)]
    network: PathBuf,
    /// Flow profile (JSON); defaults to batch operation.
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long, default_value_t = 10.0)]
    t1: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Constant reactor volume.
    #[arg(long, default_value_t = 1.0)]
    volume: f64,
    /// Seed for every sampled check.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_parser = ["text", "json"], default_value = "text")]
    format: String,
    /// Directory for report.json and trajectory CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    /// Unreadable or malformed input: exit 2.
    Schema(String),
    /// Violated invariants or numerical failure: exit 1.
    Domain(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Schema(_) => ExitCode::from(2),
            CliError::Domain(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Schema(m) | CliError::Domain(m) => m,
        }
    }
}

impl From<coopex_core::ModelError> for CliError {
    fn from(e: coopex_core::ModelError) -> Self {
        CliError::Domain(e.to_string())
    }
}

#[derive(Serialize)]
struct FileRef {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Inputs {
    network: FileRef,
    flows: Option<FileRef>,
}

#[derive(Serialize)]
struct Settings {
    t0: f64,
    t1: f64,
    dt: f64,
    volume: f64,
    seed: u64,
}

#[derive(Serialize)]
struct Envelope<T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    inputs: Inputs,
    settings: Settings,
    report: T,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{TOOL}: {}", e.message());
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let (name, args): (&'static str, &Args) = match &cli.command {
        Command::Validate(a) => ("validate", a),
        Command::Classify(a) => ("classify", a),
        Command::Jacobian(a) => ("jacobian", a),
        Command::Simulate(a) => ("simulate", a),
        Command::CrossValidate(a) => ("cross-validate", a),
        Command::Monotone(a) => ("monotone", a),
    };
    let settings_ok = args.dt > 0.0 && args.t1 > args.t0 && args.volume > 0.0;
    if !settings_ok {
        return Err(CliError::Domain(format!(
            "invalid settings: t0 = {}, t1 = {}, dt = {}, volume = {}",
            args.t0, args.t1, args.dt, args.volume
        )));
    }

    let network_bytes = read_input(&args.network)?;
    let network_ref = FileRef {
        path: args.network.display().to_string(),
        sha256: hex::encode(Sha256::digest(&network_bytes)),
    };
    let network_text = String::from_utf8(network_bytes)
        .map_err(|_| CliError::Schema(format!("{}: not valid UTF-8", args.network.display())))?;
    let spec = coopex_core::NetworkSpec::from_json(&network_text).map_err(|e| {
        CliError::Schema(format!("{}: {e}", args.network.display()))
    })?;
    let built = ReactionNetwork::from_spec(&spec);

    // `validate` reports violations instead of failing outright
    if name == "validate" {
        return run_validate(args, network_ref, built);
    }
    let net = built.map_err(|e| CliError::Domain(e.to_string()))?;

    let (flows, flows_ref) = match &args.flows {
        Some(path) => {
            let bytes = read_input(path)?;
            let fref = FileRef {
                path: path.display().to_string(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            };
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::Schema(format!("{}: not valid UTF-8", path.display())))?;
            let fspec = FlowSpec::from_json(&text)
                .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
            let flows = FlowProfile::from_spec(&fspec, net.num_inlets())
                .map_err(|e| CliError::Domain(e.to_string()))?;
            (flows, Some(fref))
        }
        None => (FlowProfile::batch(net.num_inlets()), None),
    };
    let inputs = Inputs {
        network: network_ref,
        flows: flows_ref,
    };
    let volume = VolumeModel::Constant(args.volume);

    match name {
        "classify" => {
            let options = ClassifyOptions {
                seed: args.seed,
                sample_box: None,
            };
            let report = classify_system(&net, &flows, &options)?;
            emit(args, name, inputs, &report, render_classification)
        }
        "jacobian" => {
            let report =
                assemble_jacobian(&net, &ExtentState::origin(&net), &flows, &volume, args.t0)?;
            emit(args, name, inputs, &report, render_jacobian)
        }
        "simulate" => {
            let t_span = (args.t0, args.t1);
            let extents =
                integrate_extents(&net, &ExtentState::origin(&net), &flows, &volume, t_span, args.dt)?;
            let moles =
                integrate_moles(&net, net.n0(), net.m0(), &flows, &volume, t_span, args.dt)?;
            let mut files = Vec::new();
            if let Some(dir) = &args.out {
                fs::create_dir_all(dir)
                    .map_err(|e| CliError::Domain(format!("{}: {e}", dir.display())))?;
                for (file, contents) in [
                    ("trajectory_extents.csv", extent_csv(&net, &extents)),
                    ("trajectory_moles.csv", mole_csv(&net, &moles)),
                ] {
                    fs::write(dir.join(file), contents)
                        .map_err(|e| CliError::Domain(format!("{file}: {e}")))?;
                    files.push(file.to_string());
                }
            }
            #[derive(Serialize)]
            struct SimulationSummary {
                points: usize,
                truncated: Option<coopex_core::simulate::Truncation>,
                final_time: f64,
                final_state: ExtentState,
                final_mass: f64,
                files: Vec<String>,
            }
            let final_state = extents.states.last().unwrap().clone();
            let report = SimulationSummary {
                points: extents.times.len(),
                truncated: extents.truncated,
                final_time: *extents.times.last().unwrap(),
                final_mass: final_state.mass(&net),
                final_state,
                files,
            };
            emit(args, name, inputs, &report, |r| {
                let mut out = format!(
                    "integrated {} points to t = {}\nfinal mass: {}\n",
                    r.points, r.final_time, r.final_mass
                );
                if let Some(t) = &r.truncated {
                    let _ = writeln!(out, "truncated: mass depleted at t = {}", t.time);
                }
                for f in &r.files {
                    let _ = writeln!(out, "wrote {f}");
                }
                out
            })
        }
        "cross-validate" => {
            let report =
                convergence_study(&net, &flows, &volume, (args.t0, args.t1), args.dt)?;
            emit(args, name, inputs, &report, render_convergence)
        }
        "monotone" => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let mut chains = Vec::new();
            for _ in 0..20 {
                let chain = random_ordered_chain(&ExtentState::origin(&net), 3, 0.05, &mut rng);
                chains.push(monotone_order_test(
                    &net,
                    &flows,
                    &volume,
                    &chain,
                    (args.t0, args.t1),
                    args.dt,
                    ORDER_TOL,
                )?);
            }
            #[derive(Serialize)]
            struct MonotoneSummary {
                chains: Vec<OrderTestResult>,
                preserved_count: usize,
                all_preserved: bool,
            }
            let preserved_count = chains.iter().filter(|c| c.preserved).count();
            let report = MonotoneSummary {
                all_preserved: preserved_count == chains.len(),
                preserved_count,
                chains,
            };
            emit(args, name, inputs, &report, |r| {
                let mut out = format!(
                    "order preserved in {}/{} chains\n",
                    r.preserved_count,
                    r.chains.len()
                );
                for (k, chain) in r.chains.iter().enumerate() {
                    if let Some(v) = &chain.first_violation {
                        let _ = writeln!(
                            out,
                            "chain {}: violated at t = {} in {} (gap {:.3e})",
                            k + 1,
                            v.time,
                            v.component_label,
                            v.gap
                        );
                    }
                }
                out
            })
        }
        _ => unreachable!(),
    }
}

fn run_validate(
    args: &Args,
    network_ref: FileRef,
    built: Result<ReactionNetwork, coopex_core::BuildError>,
) -> Result<ExitCode, CliError> {
    #[derive(Serialize)]
    struct ValidationReport {
        valid: bool,
        violations: Vec<String>,
        species: Option<usize>,
        reactions: Option<usize>,
        inlets: Option<usize>,
        initial_mass: Option<f64>,
        independence: Option<coopex_core::IndependenceReport>,
    }
    let inputs = Inputs {
        network: network_ref,
        flows: None,
    };
    let (report, code) = match &built {
        Ok(net) => (
            ValidationReport {
                valid: true,
                violations: Vec::new(),
                species: Some(net.num_species()),
                reactions: Some(net.num_reactions()),
                inlets: Some(net.num_inlets()),
                initial_mass: Some(net.m0()),
                independence: Some(net.check_independence()),
            },
            ExitCode::SUCCESS,
        ),
        Err(e) => (
            ValidationReport {
                valid: false,
                violations: e.violations.iter().map(ToString::to_string).collect(),
                species: None,
                reactions: None,
                inlets: None,
                initial_mass: None,
                independence: None,
            },
            ExitCode::from(1),
        ),
    };
    emit(args, "validate", inputs, &report, |r| {
        let mut out = String::new();
        if r.valid {
            let _ = writeln!(
                out,
                "valid network: {} species, {} reactions, {} inlets, m0 = {}",
                r.species.unwrap(),
                r.reactions.unwrap(),
                r.inlets.unwrap(),
                r.initial_mass.unwrap()
            );
            let ind = r.independence.as_ref().unwrap();
            let _ = writeln!(
                out,
                "rank(N) = {} ({}), rank(W_in) = {} ({}), rank[N' W_in n0] = {}",
                ind.rank_stoich,
                if ind.reactions_independent { "independent" } else { "dependent" },
                ind.rank_inlet_composition,
                if ind.inlets_independent { "independent" } else { "dependent" },
                ind.rank_augmented
            );
            let _ = writeln!(
                out,
                "forward transformation admissible: {}{}",
                if ind.transform_admissible { "yes" } else { "no" },
                if ind.remark_case { " (remark case: extent model still usable)" } else { "" }
            );
        } else {
            let _ = writeln!(out, "invalid network:");
            for v in &r.violations {
                let _ = writeln!(out, "  - {v}");
            }
        }
        out
    })?;
    Ok(code)
}

fn render_classification(r: &ClassificationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "system verdict: {}", r.system_verdict);
    let _ = writeln!(out, "  ({})", r.explanation);
    if !r.pairs.is_empty() {
        let _ = writeln!(out, "pairs:");
        for p in &r.pairs {
            let (i, j) = p.reactions;
            let _ = writeln!(out, "  R{}-R{}: {} [{}]", i + 1, j + 1, p.verdict, p.basis);
            if let Some(c) = &p.conditions {
                for cond in &c.conditions {
                    let _ = writeln!(out, "    requires {}", cond.rendered);
                }
            }
            if let Some(obs) = &p.observed {
                let _ = writeln!(
                    out,
                    "    sampled d(r{})/d(x_r{}) in [{:.3e}, {:.3e}], d(r{})/d(x_r{}) in [{:.3e}, {:.3e}]",
                    i + 1, j + 1, obs.d_ri_d_xrj.0, obs.d_ri_d_xrj.1,
                    j + 1, i + 1, obs.d_rj_d_xri.0, obs.d_rj_d_xri.1
                );
            }
        }
    }
    for (i, row) in r.inlet_effects.iter().enumerate() {
        if !row.is_empty() {
            let signs: Vec<&str> = row.iter().map(|s| s.as_str()).collect();
            let _ = writeln!(out, "inlet effects on R{}: {}", i + 1, signs.join(" "));
        }
    }
    let ic: Vec<&str> = r.ic_effects.iter().map(|s| s.as_str()).collect();
    let _ = writeln!(out, "initial-condition effects: {}", ic.join(" "));
    for a2 in &r.a2 {
        let _ = writeln!(
            out,
            "rate sign conditions R{}: {}{}",
            a2.reaction + 1,
            if a2.holds() { "hold" } else { "VIOLATED" },
            if a2.symbolic_pass { " (structural)" } else { " (sampled)" }
        );
    }
    out
}

fn render_jacobian(r: &JacobianReport) -> String {
    let mut out = String::new();
    let dim = r.jacobian.nrows();
    let _ = writeln!(
        out,
        "{dim}x{dim} Jacobian at t = {}, mass = {}",
        r.eval_point.time, r.eval_point.mass
    );
    let _ = writeln!(out, "metzler: {}", if r.metzler { "yes" } else { "no" });
    for (i, j, v) in &r.violations {
        let _ = writeln!(out, "  off-diagonal ({}, {}) = {v:.6e}", i + 1, j + 1);
    }
    out
}

fn render_convergence(r: &ConvergenceReport) -> String {
    format!(
        "reconstruction deviation: {:.6e} at dt = {:.6e} ({} points)\n\
         reconstruction deviation: {:.6e} at dt/2\n\
         richardson self-deviation: {:.6e} (dt) / {:.6e} (dt/2), order ratio {:.2}\n",
        r.coarse.max_deviation,
        r.coarse.dt,
        r.coarse.points,
        r.fine.max_deviation,
        r.richardson_coarse,
        r.richardson_fine,
        r.order_ratio
    )
}

fn emit<T: Serialize>(
    args: &Args,
    command: &'static str,
    inputs: Inputs,
    report: &T,
    render: impl Fn(&T) -> String,
) -> Result<ExitCode, CliError> {
    let envelope = Envelope {
        tool: TOOL,
        version: env!("CARGO_PKG_VERSION"),
        command,
        inputs,
        settings: Settings {
            t0: args.t0,
            t1: args.t1,
            dt: args.dt,
            volume: args.volume,
            seed: args.seed,
        },
        report,
    };
    let json = serde_json::to_string_pretty(&envelope)
        .map_err(|e| CliError::Domain(format!("serialization: {e}")))?;
    if args.format == "json" {
        println!("{json}");
    } else {
        print!("{}", render(report));
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| CliError::Domain(format!("{}: {e}", dir.display())))?;
        let path = dir.join("report.json");
        fs::write(&path, json + "\n")
            .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}
