use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use floppynet::control::{paired_reach, random_grasp_task, run_task, TaskSpec};
use floppynet::loadpredict::{
    exact_sweep, extensions_from_sim, globality, predict_loaded_edges, read_extensions_csv, score, Pairing,
    DEFAULT_ENSEMBLE, DEFAULT_THRESHOLD,
};
use floppynet::netgen::{fixture, generate, Boundary, FixtureKind, GeneratorKind, GeneratorSpec, PackingParams};
use floppynet::nullspace::{ensemble, run_seeds, svd_basis, SndParams, DEFAULT_ZERO_TOL};
use floppynet::output::to_canonical_string;
use floppynet::rigidify::{tune, Protocol, TuneParams};
use floppynet::rigidity::DEFAULT_RANK_TOL;
use floppynet::springsim::{simulate, BoundaryProtocol, SimConfig};
use floppynet::{Error, Method, Network, RigidityMatrix};

mod render;
mod stats;

#[derive(Parser)]
#[command(name = "floppynet", version, about = "Floppy-mode analysis of 2D constraint networks")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for ensembles and batches (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Primary output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a network from a generator or a named fixture.
    Generate(GenerateArgs),
    /// Floppy-mode basis of a network.
    Decompose(DecomposeArgs),
    /// Drive effector nodes to a target with motion primitives.
    Control(ControlArgs),
    /// Add links one at a time and track the shear modulus.
    Rigidify(RigidifyArgs),
    /// Relax a spring network under a boundary protocol.
    Simulate(SimulateArgs),
    /// Predict load-bearing links and score them against extensions.
    Predict(PredictArgs),
    /// Draw a network as SVG with an optional overlay.
    Render(render::RenderArgs),
    /// Paired SND versus SVD experiments.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Lattice,
    Packing,
    Fixture,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 5)]
    nx: usize,
    #[arg(long, default_value_t = 5)]
    ny: usize,
    /// Fraction of lattice edges kept.
    #[arg(long, default_value_t = 1.0)]
    dilution: f64,
    /// open, fixed_rows, fixed_bottom or fixed_circle.
    #[arg(long)]
    boundary: Option<String>,
    /// Packing: disks before rattler removal.
    #[arg(long)]
    disks: Option<usize>,
    /// Packing: remove contacts until this many DoF remain.
    #[arg(long)]
    target_dof: Option<usize>,
    /// robot_arm, molecule, lattice4x4, hinged or pinned_bar.
    #[arg(long)]
    fixture: Option<String>,
}

#[derive(Args)]
struct DecomposeArgs {
    network: PathBuf,
    #[arg(long, default_value = "snd")]
    method: String,
    /// Row-shuffled SND runs.
    #[arg(long, default_value_t = 1)]
    ensemble: usize,
}

#[derive(Args)]
struct ControlArgs {
    /// Task JSON file.
    #[arg(required_unless_present = "random_grasp")]
    task: Option<PathBuf>,
    /// Use a randomized robot-arm grasping task drawn from --seed.
    #[arg(long)]
    random_grasp: bool,
    /// Overrides the task's basis method.
    #[arg(long)]
    method: Option<String>,
    /// Writes the per-step trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long, default_value_t = 1e-4)]
    noise: f64,
    /// Shear strain.
    #[arg(long, default_value_t = 0.08)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    stiffness: f64,
}

impl SimArgs {
    fn config(&self, seed: u64, protocol: BoundaryProtocol) -> SimConfig {
        SimConfig {
            stiffness: self.stiffness,
            dt: self.dt,
            steps: self.steps,
            noise_amplitude: self.noise,
            seed,
            boundary_protocol: protocol,
            strain: self.gamma,
            ..SimConfig::default()
        }
    }
}

#[derive(Args)]
struct RigidifyArgs {
    network: PathBuf,
    #[arg(long, default_value = "ms")]
    protocol: String,
    /// Stop once the network has this many links (default: one addition).
    #[arg(long)]
    stop_at: Option<usize>,
    /// Basis the MS rule reads modes from.
    #[arg(long, default_value = "snd")]
    basis: String,
    /// Writes the tuning curve as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimProtocol {
    Shear,
    Radial,
    None,
}

#[derive(Args)]
struct SimulateArgs {
    network: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    protocol: SimProtocol,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct PredictArgs {
    network: PathBuf,
    /// Globality threshold.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    t: f64,
    #[arg(long, default_value_t = DEFAULT_ENSEMBLE)]
    ensemble: usize,
    /// nearest or all-pairs.
    #[arg(long, default_value = "nearest")]
    pairing: String,
    /// Mark every tied shortest path.
    #[arg(long)]
    all_ties: bool,
    /// Measured extensions CSV (edge_a, edge_b, extension) to score against.
    #[arg(long, conflicts_with = "simulate")]
    extensions: Option<PathBuf>,
    /// Score against a simulated radial stretch.
    #[arg(long)]
    simulate: bool,
    /// Writes the threshold sweep as CSV.
    #[arg(long)]
    sweep: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Subcommand)]
enum Experiment {
    /// Participation of shuffled SND runs against SVD on the same rows.
    Sparsity {
        network: PathBuf,
        #[arg(long, default_value_t = 100)]
        ensemble: usize,
    },
    /// Energy of paired reaching tasks solved with SND and SVD modes.
    Energy {
        network: PathBuf,
        #[arg(long, default_value_t = 250)]
        tasks: usize,
    },
}

#[derive(Args)]
struct CompareArgs {
    #[command(subcommand)]
    experiment: Experiment,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let seed = cli.seed;
    let text = match &cli.command {
        Command::Generate(a) => cmd_generate(a, seed)?.to_json(),
        Command::Decompose(a) => to_canonical_string(&cmd_decompose(a, seed)?),
        Command::Control(a) => to_canonical_string(&cmd_control(a, seed)?),
        Command::Rigidify(a) => to_canonical_string(&cmd_rigidify(a, seed)?),
        Command::Simulate(a) => {
            let net = Network::load(&a.network)?;
            let protocol = match a.protocol {
                SimProtocol::Shear => BoundaryProtocol::ShearTopRow,
                SimProtocol::Radial => BoundaryProtocol::RadialStretch,
                SimProtocol::None => BoundaryProtocol::None,
            };
            to_canonical_string(&simulate(&net, &a.sim.config(seed, protocol))?.to_json())
        }
        Command::Predict(a) => to_canonical_string(&cmd_predict(a, seed)?),
        Command::Render(a) => render::render(a, seed)?,
        Command::Compare(a) => to_canonical_string(&cmd_compare(a, seed)?),
    };
    emit(cli.out.as_deref(), &text)
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p.to_path_buf(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_generate(a: &GenerateArgs, seed: u64) -> Result<Network, Error> {
    let boundary = a.boundary.as_deref().map(str::parse::<Boundary>).transpose()?;
    match a.kind {
        Kind::Fixture => {
            let name = a
                .fixture
                .as_deref()
                .ok_or_else(|| Error::BadGeneratorSpec("--fixture is required with --kind fixture".into()))?;
            fixture(name.parse::<FixtureKind>()?)
        }
        Kind::Lattice => generate(&GeneratorSpec {
            kind: GeneratorKind::TriangularLattice,
            dimensions: (a.nx, a.ny),
            dilution_fraction: a.dilution,
            seed,
            boundary: boundary.unwrap_or(Boundary::Open),
            disks: 0,
            target_dof: None,
        }),
        Kind::Packing => {
            let mut spec = GeneratorSpec::packing(seed);
            spec.disks = a.disks.unwrap_or(PackingParams::default().disks);
            spec.target_dof = a.target_dof.or(spec.target_dof);
            spec.boundary = boundary.unwrap_or(Boundary::FixedCircle);
            generate(&spec)
        }
    }
}

fn cmd_decompose(a: &DecomposeArgs, seed: u64) -> Result<Value, Error> {
    let net = Network::load(&a.network)?;
    let method: Method = a.method.parse()?;
    let r = RigidityMatrix::build(&net)?;
    let runs: Vec<_> = match method {
        Method::Snd => ensemble(&r, &run_seeds(seed, a.ensemble), &SndParams::default())?.bases,
        _ => vec![floppynet::control::compute_basis(&net, method)?],
    };
    Ok(json!({
        "method": method.as_str(),
        "dof": r.dof(DEFAULT_RANK_TOL),
        "participation": runs.iter().map(|b| b.participation()).collect::<Vec<_>>(),
        "runs": runs.iter().map(|b| b.to_json()).collect::<Vec<_>>(),
    }))
}

fn cmd_control(a: &ControlArgs, seed: u64) -> Result<Value, Error> {
    let mut task = match &a.task {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.clone(), e))?;
            TaskSpec::from_json_str(&text)?.into_task(path.parent())?
        }
        None => random_grasp_task(seed, Method::Snd)?,
    };
    if let Some(m) = &a.method {
        task.basis_method = m.parse()?;
    }
    let trace = run_task(&task)?;
    if let Some(path) = &a.trace {
        emit(Some(path), &trace.to_csv())?;
    }
    Ok(trace.summary_json(task.basis_method))
}

fn cmd_rigidify(a: &RigidifyArgs, seed: u64) -> Result<Value, Error> {
    let net = Network::load(&a.network)?;
    let params = TuneParams {
        protocol: a.protocol.parse::<Protocol>()?,
        seed,
        stop_at: a.stop_at.unwrap_or(net.edge_count() + 1),
        sim: a.sim.config(seed, BoundaryProtocol::ShearTopRow),
        basis: a.basis.parse()?,
    };
    let run = tune(&net, &params)?;
    if let Some(path) = &a.csv {
        emit(Some(path), &run.to_csv())?;
    }
    Ok(run.to_json())
}

fn cmd_predict(a: &PredictArgs, seed: u64) -> Result<Value, Error> {
    let net = Network::load(&a.network)?;
    let pairing: Pairing = a.pairing.parse()?;
    let g = globality(&net, a.ensemble, seed)?;
    let prediction = predict_loaded_edges(&net, &g, a.t, pairing, a.all_ties);
    let mut out = prediction.to_json();
    out["globality"] = json!(g.f);
    out["rigid_nodes"] = json!((0..net.node_count()).filter(|&i| g.rigid[i]).collect::<Vec<_>>());
    let extensions = if let Some(path) = &a.extensions {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.clone(), e))?;
        Some(read_extensions_csv(file)?)
    } else if a.simulate {
        let sim = simulate(&net, &a.sim.config(seed, BoundaryProtocol::RadialStretch))?;
        Some(extensions_from_sim(&sim))
    } else {
        None
    };
    if let Some(ext) = extensions {
        let sweep = exact_sweep(&prediction.loaded, &ext)?;
        let (best_e, best_eta) = sweep.best();
        let at_best = score(&prediction.loaded, &ext, best_e)?;
        out["score"] = json!({
            "best_e": best_e,
            "best_eta": best_eta,
            "n_b": at_best.n_b,
            "n_o": at_best.n_o,
            "n_t": at_best.n_t,
        });
        if let Some(path) = &a.sweep {
            emit(Some(path), &sweep.to_csv())?;
        }
    }
    Ok(out)
}

fn cmd_compare(a: &CompareArgs, seed: u64) -> Result<Value, Error> {
    match &a.experiment {
        Experiment::Sparsity { network, ensemble: m } => {
            let net = Network::load(network)?;
            let r = RigidityMatrix::build(&net)?;
            let seeds = run_seeds(seed, *m);
            let snd = ensemble(&r, &seeds, &SndParams::default())?.participations();
            let svd: Vec<usize> = seeds
                .iter()
                .map(|&s| svd_basis(&r.shuffle_rows(s), DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL).participation())
                .collect();
            let diffs: Vec<f64> = svd.iter().zip(&snd).map(|(&v, &s)| v as f64 - s as f64).collect();
            Ok(json!({
                "experiment": "sparsity",
                "runs": m,
                "mean_p_snd": stats::mean_usize(&snd),
                "mean_p_svd": stats::mean_usize(&svd),
                "p_value_snd_less": stats::paired_one_sided_p(&diffs),
            }))
        }
        Experiment::Energy { network, tasks } => {
            let net = Network::load(network)?;
            let seeds = run_seeds(seed, *tasks);
            let pairs = paired_reach(&net, &seeds, Method::Snd, Method::Svd)?;
            let wins = pairs.iter().filter(|(s, v)| s.total_energy < v.total_energy).count();
            Ok(json!({
                "experiment": "energy",
                "tasks": tasks,
                "snd_lower": wins,
                "fraction_snd_lower": wins as f64 / pairs.len().max(1) as f64,
                "success_snd": pairs.iter().filter(|p| p.0.success).count(),
                "success_svd": pairs.iter().filter(|p| p.1.success).count(),
            }))
        }
    }
}
