//! Parameter sweeps producing deterministic reports.

use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::SCHEMA_VERSION;
use crate::error::Result;
use crate::generate::{generate, GraphSpec, ProblemSpec};
use crate::oracle::{brute_force_optimum, ENUMERATION_CAP};
use crate::rounding::{round_instance, RoundingOptions, Strategy};
use crate::sdp::{solve, Hierarchy, RelaxationConfig, RelaxationProblem, SolveOptions, DEFAULT_BASIS_CAP};
use crate::spectral::{threshold_rank, SpectralProfile, MAX_DENSE_N};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub name: String,
    pub graph: GraphSpec,
    pub problem: ProblemSpec,
    /// Generator seed; derived from the master seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    #[serde(default)]
    pub instances: Vec<InstanceSpec>,
    pub hierarchies: Vec<Hierarchy>,
    pub strategies: Vec<Strategy>,
    pub trials: Vec<usize>,
    #[serde(default)]
    pub solve: Option<SolveOptions>,
    /// Threshold for the reported threshold rank.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    0.9
}

/// Stream `index` of the master seed: a counter-based derivation that does
/// not depend on execution order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Fixed, versioned CSV columns.
pub const CSV_COLUMNS: [&str; 22] = [
    "run_id",
    "instance",
    "n",
    "k",
    "hierarchy",
    "depth",
    "strategy",
    "trials",
    "run_seed",
    "sdp_objective",
    "upper_bound",
    "gap",
    "psd_violation",
    "consistency_violation",
    "iterations",
    "converged",
    "rounded_value",
    "independent_value",
    "optimum",
    "threshold_rank",
    "lambda_2",
    "error",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run_id: usize,
    pub instance: String,
    pub n: usize,
    pub k: usize,
    pub hierarchy: Hierarchy,
    pub depth: usize,
    pub strategy: Strategy,
    pub trials: usize,
    pub run_seed: u64,
    pub sdp_objective: Option<f64>,
    pub upper_bound: Option<f64>,
    pub gap: Option<f64>,
    pub psd_violation: Option<f64>,
    pub consistency_violation: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub rounded_value: Option<f64>,
    pub independent_value: Option<f64>,
    pub optimum: Option<f64>,
    pub threshold_rank: Option<usize>,
    pub lambda_2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub master_seed: u64,
    pub tau: f64,
    pub rows: Vec<ReportRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub run_id: usize,
    pub solve_ms: u64,
    pub round_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub schema_version: u32,
    pub runs: Vec<RunTiming>,
    pub total_ms: u64,
}

struct InstanceData {
    name: String,
    instance: Option<crate::csp::Csp2Instance>,
    error: Option<String>,
    optimum: Option<f64>,
    rank: Option<usize>,
    lambda_2: Option<f64>,
}

fn prepare(spec: &InstanceSpec, seed: u64, tau: f64) -> InstanceData {
    let gen = crate::generate::GenSpec {
        graph: spec.graph.clone(),
        problem: spec.problem.clone(),
        seed,
    };
    match generate(&gen) {
        Err(e) => InstanceData {
            name: spec.name.clone(),
            instance: None,
            error: Some(e.to_string()),
            optimum: None,
            rank: None,
            lambda_2: None,
        },
        Ok(g) => {
            let inst = g.instance;
            let small = (inst.k() as f64).powi(inst.n() as i32) <= ENUMERATION_CAP;
            let optimum = small.then(|| brute_force_optimum(&inst).ok().map(|o| o.0)).flatten();
            let profile = (inst.n() <= MAX_DENSE_N).then(|| SpectralProfile::of_graph(inst.graph()).ok()).flatten();
            InstanceData {
                name: spec.name.clone(),
                error: None,
                optimum,
                rank: profile.as_ref().map(|p| threshold_rank(p, tau)),
                lambda_2: profile.as_ref().and_then(|p| p.eigenvalues.get(1).copied()),
                instance: Some(inst),
            }
        }
    }
}

/// Runs the full grid. Rows are ordered by `(instance, hierarchy, strategy,
/// trials)`; each row's seed is derived from the master seed and its run id.
pub fn run_experiment(config: &ExperimentConfig) -> (Report, Timings) {
    let start = Instant::now();
    let data: Vec<InstanceData> = config
        .instances
        .par_iter()
        .enumerate()
        .map(|(t, spec)| {
            let seed = spec.seed.unwrap_or_else(|| derive_seed(config.master_seed, t as u64));
            prepare(spec, seed, config.tau)
        })
        .collect();
    let solve_opts = config.solve.unwrap_or_default();
    let per_round = config.strategies.len() * config.trials.len();
    let jobs: Vec<(usize, usize)> = (0..data.len())
        .flat_map(|i| (0..config.hierarchies.len()).map(move |h| (i, h)))
        .collect();
    let results: Vec<Vec<(ReportRow, RunTiming)>> = jobs
        .par_iter()
        .enumerate()
        .map(|(job, &(i, h))| {
            let d = &data[i];
            let hierarchy = config.hierarchies[h];
            let base_id = job * per_round;
            let mut rows = Vec::with_capacity(per_round);
            let solve_start = Instant::now();
            let solved = match &d.instance {
                None => Err(d.error.clone().unwrap_or_default()),
                Some(inst) => {
                    let cfg = RelaxationConfig {
                        hierarchy,
                        sampled_sets: None,
                        basis_cap: DEFAULT_BASIS_CAP,
                    };
                    RelaxationProblem::new(inst, cfg)
                        .and_then(|p| solve(&p, &solve_opts))
                        .map_err(|e| e.to_string())
                }
            };
            let solve_ms = solve_start.elapsed().as_millis() as u64;
            let mut slot = 0;
            for &strategy in &config.strategies {
                for &trials in &config.trials {
                    let run_id = base_id + slot;
                    slot += 1;
                    let run_seed = derive_seed(config.master_seed, (1 << 32) + run_id as u64);
                    let mut row = ReportRow {
                        run_id,
                        instance: d.name.clone(),
                        n: d.instance.as_ref().map_or(0, |x| x.n()),
                        k: d.instance.as_ref().map_or(0, |x| x.k()),
                        hierarchy,
                        depth: hierarchy.depth_label(),
                        strategy,
                        trials,
                        run_seed,
                        sdp_objective: None,
                        upper_bound: None,
                        gap: None,
                        psd_violation: None,
                        consistency_violation: None,
                        iterations: None,
                        converged: None,
                        rounded_value: None,
                        independent_value: None,
                        optimum: d.optimum,
                        threshold_rank: d.rank,
                        lambda_2: d.lambda_2,
                        error: None,
                    };
                    let round_start = Instant::now();
                    match &solved {
                        Err(e) => row.error = Some(e.clone()),
                        Ok((m, rep)) => {
                            row.sdp_objective = Some(rep.objective);
                            row.upper_bound = Some(rep.upper_bound);
                            row.gap = Some(rep.gap);
                            row.psd_violation = Some(rep.psd_violation);
                            row.consistency_violation = Some(rep.consistency_violation);
                            row.iterations = Some(rep.iterations);
                            row.converged = Some(rep.converged);
                            let opts = RoundingOptions {
                                strategy,
                                trials,
                                oracle: false,
                                ..Default::default()
                            };
                            let inst = d.instance.as_ref().expect("solved instance");
                            match round_instance(inst, m, &opts, run_seed) {
                                Ok(run) => {
                                    row.rounded_value = Some(run.best_value);
                                    row.independent_value = Some(run.independent_value);
                                }
                                Err(e) => row.error = Some(e.to_string()),
                            }
                        }
                    }
                    let timing = RunTiming {
                        run_id,
                        solve_ms,
                        round_ms: round_start.elapsed().as_millis() as u64,
                    };
                    rows.push((row, timing));
                }
            }
            rows
        })
        .collect();
    let (rows, runs): (Vec<ReportRow>, Vec<RunTiming>) = results.into_iter().flatten().unzip();
    (
        Report {
            schema_version: SCHEMA_VERSION,
            master_seed: config.master_seed,
            tau: config.tau,
            rows,
        },
        Timings {
            schema_version: SCHEMA_VERSION,
            runs,
            total_ms: start.elapsed().as_millis() as u64,
        },
    )
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// CSV rendering with [`CSV_COLUMNS`]; the first line is a version comment.
pub fn report_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in &report.rows {
        let hierarchy = match r.hierarchy {
            Hierarchy::Lasserre { .. } => "lasserre",
            Hierarchy::Local { .. } => "local",
        };
        w.write_record([
            r.run_id.to_string(),
            r.instance.clone(),
            r.n.to_string(),
            r.k.to_string(),
            hierarchy.to_string(),
            r.depth.to_string(),
            r.strategy.to_string(),
            r.trials.to_string(),
            r.run_seed.to_string(),
            opt(&r.sdp_objective),
            opt(&r.upper_bound),
            opt(&r.gap),
            opt(&r.psd_violation),
            opt(&r.consistency_violation),
            opt(&r.iterations),
            opt(&r.converged),
            opt(&r.rounded_value),
            opt(&r.independent_value),
            opt(&r.optimum),
            opt(&r.threshold_rank),
            opt(&r.lambda_2),
            opt(&r.error),
        ])?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8 csv");
    Ok(format!("# schema_version={}\n{body}", report.schema_version))
}

/// Writes `report.json`, `report.csv` and `timings.json` into `dir`.
pub fn write_experiment(report: &Report, timings: &Timings, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    std::fs::write(dir.join("report.csv"), report_csv(report)?)?;
    std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(timings)? + "\n")?;
    Ok(())
}
