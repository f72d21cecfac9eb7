use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lasround::artifact::{check_schema, verify_run, RunArtifact, SpectrumSummary};
use lasround::experiment::{run_experiment, write_experiment, ExperimentConfig};
use lasround::generate::{generate, GenSpec, GraphSpec, ProblemSpec};
use lasround::rounding::{round_instance, RoundingOptions, Strategy};
use lasround::sdp::{solve, MomentMatrix, RelaxationConfig, RelaxationProblem, SolveOptions, DEFAULT_BASIS_CAP};
use lasround::spectral::SpectralProfile;

#[derive(Parser)]
#[command(name = "lasround", version, about = "Lasserre relaxations and correlation rounding for 2-CSPs")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "LASROUND_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen(GenArgs),
    /// Normalized-adjacency spectrum and threshold ranks.
    Spectrum {
        instance: PathBuf,
        /// Thresholds to report the rank at.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.9")]
        tau: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the relaxation and write a run artifact.
    Solve(SolveArgs),
    /// Round a solved run; the artifact is rewritten with the rounding attached.
    Round(RoundArgs),
    /// Re-check every stored invariant of a run artifact.
    Verify { run: PathBuf },
    /// Run a parameter sweep from a JSON config.
    Experiment {
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    RandomRegular,
    Cycle,
    Complete,
    Hypercube,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemKind {
    MaxCut,
    PlantedUg,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    graph: GraphKind,
    /// Vertex count (random-regular, cycle, complete).
    #[arg(long, short)]
    n: Option<usize>,
    /// Degree for random-regular.
    #[arg(long, short)]
    d: Option<usize>,
    /// Hypercube dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Hypercube edge noise in (0, 1/2].
    #[arg(long, default_value_t = 0.1)]
    flip: f64,
    /// Take this many disjoint copies of the graph.
    #[arg(long)]
    copies: Option<usize>,
    #[arg(long, value_enum, default_value = "max-cut")]
    problem: ProblemKind,
    /// Alphabet size for planted-ug.
    #[arg(long, short, default_value_t = 3)]
    k: usize,
    /// Fraction of planted-ug constraints re-randomized.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the hidden labeling of planted instances here.
    #[arg(long)]
    planted_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    /// Lasserre depth: PSD over sets of size ≤ depth.
    #[arg(long, default_value_t = 1, conflicts_with = "local")]
    depth: usize,
    /// Use the basic PSD block plus local tables of this size instead.
    #[arg(long)]
    local: Option<usize>,
    /// Stop once the certified gap is below this.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iter: usize,
    /// Largest moment basis accepted.
    #[arg(long, default_value_t = DEFAULT_BASIS_CAP)]
    cap: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RoundArgs {
    run: PathBuf,
    #[arg(long, default_value = "random")]
    strategy: Strategy,
    #[arg(long, default_value_t = 64)]
    trials: usize,
    /// Seed budget; defaults to what the relaxation supports.
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest seed-set size searched by the exhaustive strategy.
    #[arg(long, default_value_t = 2)]
    cap: usize,
    /// Skip the brute-force optimum.
    #[arg(long)]
    no_oracle: bool,
    /// Defaults to overwriting the input run.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_instance(path: &Path) -> Result<lasround::Csp2Instance> {
    Ok(lasround::Csp2Instance::from_json(&read(path)?)?)
}

fn read_run(path: &Path) -> Result<RunArtifact> {
    Ok(RunArtifact::from_json(&read(path)?)?)
}

fn gen(a: GenArgs) -> Result<()> {
    let need = |v: Option<usize>, name: &str| v.with_context(|| format!("--{name} is required for this graph"));
    let mut graph = match a.graph {
        GraphKind::RandomRegular => GraphSpec::RandomRegular {
            n: need(a.n, "n")?,
            d: need(a.d, "d")?,
        },
        GraphKind::Cycle => GraphSpec::Cycle { n: need(a.n, "n")? },
        GraphKind::Complete => GraphSpec::Complete { n: need(a.n, "n")? },
        GraphKind::Hypercube => GraphSpec::Hypercube {
            dim: need(a.dim, "dim")?,
            noise: a.flip,
        },
    };
    if let Some(t) = a.copies {
        graph = GraphSpec::DisjointCopies {
            base: Box::new(graph),
            t,
        };
    }
    let problem = match a.problem {
        ProblemKind::MaxCut => ProblemSpec::MaxCut,
        ProblemKind::PlantedUg => ProblemSpec::PlantedUg { k: a.k, noise: a.noise },
    };
    let g = generate(&GenSpec {
        graph,
        problem,
        seed: a.seed,
    })?;
    if let (Some(p), Some(labels)) = (&a.planted_out, &g.planted) {
        fs::write(p, serde_json::to_string(labels)? + "\n")?;
    }
    emit(a.out.as_deref(), &g.instance.to_json()?)
}

fn spectrum(instance: &Path, taus: &[f64], out: Option<&Path>) -> Result<()> {
    let inst = read_instance(instance)?;
    let profile = SpectralProfile::of_graph(inst.graph())?;
    emit(out, &serde_json::to_string_pretty(&SpectrumSummary::new(&profile, taus))?)
}

fn solve_cmd(a: SolveArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    let mut config = match a.local {
        Some(l) => RelaxationConfig::local(l),
        None => RelaxationConfig::lasserre(a.depth),
    };
    config.basis_cap = a.cap;
    let problem = RelaxationProblem::new(&inst, config)?;
    let opts = SolveOptions {
        gap_tol: a.tol,
        max_iter: a.max_iter,
        ..Default::default()
    };
    let (m, report) = solve(&problem, &opts)?;
    eprintln!(
        "objective {:.6}  upper bound {:.6}  iterations {}  converged {}",
        report.objective, report.upper_bound, report.iterations, report.converged
    );
    emit(a.out.as_deref(), &RunArtifact::new(&inst, config, report, &m).to_json()?)
}

fn round_cmd(a: RoundArgs) -> Result<()> {
    let mut run = read_run(&a.run)?;
    let inst = run.instance.to_instance()?;
    let m = MomentMatrix::from_data(run.moments.clone())?;
    let opts = RoundingOptions {
        strategy: a.strategy,
        trials: a.trials,
        rounds: a.rounds,
        exhaustive_cap: a.cap,
        oracle: !a.no_oracle,
        ..Default::default()
    };
    let r = round_instance(&inst, &m, &opts, a.seed)?;
    eprintln!("best value {:.6} over {} trials", r.best_value, r.trial_values.len());
    run.rounding = Some(r);
    let out = a.out.unwrap_or(a.run);
    emit(Some(&out), &run.to_json()?)
}

fn verify(path: &Path) -> Result<bool> {
    let text = read(path)?;
    check_schema(&serde_json::from_str(&text)?)?;
    let run = RunArtifact::from_json(&text)?;
    let checks = verify_run(&run)?;
    for c in &checks {
        println!("{} {:<22} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn experiment(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg: ExperimentConfig = serde_json::from_str(&read(config)?).context("parsing experiment config")?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let (report, timings) = run_experiment(&cfg);
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    write_experiment(&report, &timings, out)?;
    eprintln!("{} runs, {failed} failed, written to {}", report.rows.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("LASROUND_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Gen(a) => gen(a)?,
        Command::Spectrum { instance, tau, out } => spectrum(&instance, &tau, out.as_deref())?,
        Command::Solve(a) => solve_cmd(a)?,
        Command::Round(a) => round_cmd(a)?,
        Command::Verify { run } => return verify(&run),
        Command::Experiment { config, seed, out } => experiment(&config, seed, &out)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
