//! Subcommand drivers.
//!
//! Each run loads and validates its config before touching the filesystem,
//! then writes into `<out>/<command>-<hash12>` where the hash covers the
//! effective config (including a `--seed` override). Numerical outputs depend
//! only on that config; the thread count and timestamps appear only in the
//! manifest.

use std::path::{Path, PathBuf};

use fockfield::coherent::FoliationConfig;
use fockfield::fields::{density_matrix_mc, WeightedBatch};
use fockfield::maxent::validate_solution;
use fockfield::{
    commutator_defect, compare_constructions, foliation_probe, solve_chemical_potential, Error, FieldSamples,
    LadderOperators, SampleBatch,
};
use serde_json::Value;

use crate::config::{field_from_pairs, ConfigError, ExperimentConfig};
use crate::formats::{self, DefectSummary, SolveContext};
use crate::manifest::{now_rfc3339, RunDir, RunManifest};
use crate::sampling::{fock_batch, sample_points};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_BAD_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_ESS_COLLAPSE: i32 = 4;
pub const EXIT_NON_CONVERGENCE: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Compare,
    Foliation,
    Sample,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Compare => "compare",
            Command::Foliation => "foliation",
            Command::Sample => "sample",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// What a finished invocation reports back to `main`.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub run_dir: Option<PathBuf>,
    /// Printed to stderr when the run failed.
    pub error: Option<Value>,
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::EssCollapse { .. } | Error::DegenerateWeights { .. } => EXIT_ESS_COLLAPSE,
        Error::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        Error::Capacity { .. } | Error::DimensionMismatch { .. } | Error::InvalidArgument(_) => EXIT_BAD_CONFIG,
        Error::Rejected { .. } | Error::Numerical(_) => EXIT_FAILURE,
    }
}

fn config_error_json(e: &ConfigError) -> Value {
    serde_json::json!({ "error": "bad_config", "exit_code": EXIT_BAD_CONFIG, "message": e.to_string() })
}

fn io_error_json(e: &std::io::Error) -> Value {
    serde_json::json!({ "error": "io", "exit_code": EXIT_FAILURE, "message": e.to_string() })
}

/// Load the config, apply overrides and run the subcommand-specific checks.
pub fn load_config(cmd: Command, opts: &RunOptions) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::from_path(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    match cmd {
        Command::Solve => cfg.solve_section().map(|_| ())?,
        Command::Compare => cfg.compare_section().map(|_| ())?,
        Command::Foliation => cfg.foliation_section().map(|_| ())?,
        Command::Sample => cfg.sample_dim().map(|_| ())?,
    }
    Ok(cfg)
}

pub fn run_dir_name(cmd: Command, cfg: &ExperimentConfig) -> String {
    format!("{}-{}", cmd.name(), &cfg.hash()[..12])
}

pub fn execute(cmd: Command, opts: &RunOptions) -> Outcome {
    let cfg = match load_config(cmd, opts) {
        Ok(c) => c,
        Err(e) => return Outcome { exit_code: EXIT_BAD_CONFIG, run_dir: None, error: Some(config_error_json(&e)) },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let err = serde_json::json!({ "error": "bad_config", "exit_code": EXIT_BAD_CONFIG, "message": e.to_string() });
            return Outcome { exit_code: EXIT_BAD_CONFIG, run_dir: None, error: Some(err) };
        }
    };
    let started_at = now_rfc3339();
    let path = opts.out.join(run_dir_name(cmd, &cfg));
    let result = pool.install(|| -> std::io::Result<(RunDir, Option<Error>)> {
        let mut dir = RunDir::create(path.clone())?;
        dir.write("config.json", &formats::to_json_bytes(&cfg))?;
        let status = match cmd {
            Command::Solve => cmd_solve(&cfg, &mut dir),
            Command::Compare => cmd_compare(&cfg, &mut dir),
            Command::Foliation => cmd_foliation(&cfg, &mut dir),
            Command::Sample => cmd_sample(&cfg, &mut dir),
        }?;
        Ok((dir, status.err()))
    });
    let (mut dir, failure) = match result {
        Ok(r) => r,
        Err(e) => return Outcome { exit_code: EXIT_FAILURE, run_dir: Some(path), error: Some(io_error_json(&e)) },
    };
    let (exit_code, error) = match failure {
        None => (EXIT_OK, None),
        Some(e) => {
            let code = exit_code_for(&e);
            let json = formats::error_json(&e, code);
            if let Err(io) = dir.write("error.json", &formats::to_json_bytes(&json)) {
                return Outcome { exit_code: EXIT_FAILURE, run_dir: Some(path), error: Some(io_error_json(&io)) };
            }
            (code, Some(json))
        }
    };
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.name().to_string(),
        config_hash: cfg.hash(),
        config: serde_json::to_value(&cfg).expect("config serialises"),
        threads: pool.current_num_threads(),
        started_at,
        finished_at: now_rfc3339(),
        exit_code,
        files: Vec::new(),
    };
    match dir.finish(manifest) {
        Ok(_) => Outcome { exit_code, run_dir: Some(path), error },
        Err(e) => Outcome { exit_code: EXIT_FAILURE, run_dir: Some(path), error: Some(io_error_json(&e)) },
    }
}

/// Solver failures are data, not IO errors: the inner result carries them.
type Step = std::io::Result<Result<(), Error>>;

fn draw(cfg: &ExperimentConfig, space: &fockfield::ModeSpace, start: u64) -> fockfield::Result<SampleBatch> {
    fock_batch(space, cfg.seed, start, cfg.count, cfg.antithetic)
}

fn cmd_solve(cfg: &ExperimentConfig, dir: &mut RunDir) -> Step {
    let space = cfg.mode_space().expect("validated");
    let ops = LadderOperators::new(&space);
    let target = field_from_pairs(&cfg.solve.as_ref().expect("validated").target);
    let scfg = cfg.solver.to_solver_config();
    let hash = cfg.hash();

    let computed = (|| {
        let batch = draw(cfg, &space, 0)?;
        let samples = FieldSamples::new(&batch, &ops)?;
        let sol = solve_chemical_potential(&target, &scfg, &samples, &ops)?;
        // validation draws come from the disjoint index range count..2*count
        let fresh = FieldSamples::new(&draw(cfg, &space, cfg.count as u64)?, &ops)?;
        let val = validate_solution(&sol, &fresh, scfg.ess_fraction)?;
        let w = WeightedBatch::from_log_weights(&batch, samples.log_weights(&sol.mu))?.with_ess_fraction(scfg.ess_fraction);
        let dm = density_matrix_mc(&w)?;
        Ok((batch.count(), sol, val, dm))
    })();
    let (n_samples, sol, val, dm) = match computed {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    let m = space.num_modes();
    let defect = DefectSummary::worst((0..m).flat_map(|a| (0..m).map(move |b| (a, b))).map(|(a, b)| commutator_defect(&ops, a, b)));
    let ctx = SolveContext { config_hash: &hash, space: &space, seed: cfg.seed, draws: cfg.count, samples: n_samples, defect };
    dir.write("solution.json", &formats::to_json_bytes(&formats::solution_json(&ctx, &sol, &val)))?;
    dir.write("density_matrix.json", &formats::to_json_bytes(&formats::density_matrix_json(&space, dm.rho.matrix(), &dm.stderr)))?;
    dir.write("density_matrix.csv", &formats::density_matrix_csv(dm.rho.matrix(), &dm.stderr))?;
    Ok(Ok(()))
}

fn cmd_compare(cfg: &ExperimentConfig, dir: &mut RunDir) -> Step {
    let section = cfg.compare.as_ref().expect("validated");
    let cutoffs = cfg.compare_cutoffs();
    let scfg = cfg.solver.to_solver_config();
    let mut reports = Vec::with_capacity(section.targets.len());
    for t in &section.targets {
        let target = field_from_pairs(t);
        match compare_constructions(&target, &scfg, cfg.modes, &cutoffs, |space| draw(cfg, space, 0)) {
            Ok(r) => reports.push(r),
            Err(e) => return Ok(Err(e)),
        }
    }
    let hash = cfg.hash();
    dir.write("comparison.json", &formats::to_json_bytes(&formats::comparison_json(&hash, &reports)))?;
    dir.write("comparison.csv", &formats::comparison_csv(cfg.modes, &reports))?;
    Ok(Ok(()))
}

fn cmd_foliation(cfg: &ExperimentConfig, dir: &mut RunDir) -> Step {
    let f = cfg.foliation.as_ref().expect("validated");
    let space = cfg.mode_space().expect("validated");
    let ops = LadderOperators::new(&space);
    let fcfg = FoliationConfig {
        points: f.points,
        max_starts: f.max_starts,
        seed: cfg.seed,
        test_mus: f.test_mus,
        accept: f.accept,
        max_iters: f.max_iters,
    };
    let report = match foliation_probe(&field_from_pairs(&f.field), &space, &ops, &fcfg) {
        Ok(r) => r,
        Err(e) => return Ok(Err(e)),
    };
    dir.write("foliation.json", &formats::to_json_bytes(&formats::foliation_json(&cfg.hash(), &report)))?;
    dir.write("surface_points.csv", &formats::surface_points_csv(&report))?;
    Ok(Ok(()))
}

/// Raw uniform draws; parity images are a solver device and are not dumped.
fn cmd_sample(cfg: &ExperimentConfig, dir: &mut RunDir) -> Step {
    let dim = cfg.sample_dim().expect("validated");
    let points = sample_points(dim, cfg.seed, 0, cfg.count);
    dir.write("samples.csv", &formats::samples_csv(0, &points))?;
    Ok(Ok(()))
}

/// Convenience for tests and scripts: the run directory a config would use.
pub fn planned_run_dir(cmd: Command, opts: &RunOptions) -> Result<PathBuf, ConfigError> {
    let cfg = load_config(cmd, opts)?;
    Ok(Path::new(&opts.out).join(run_dir_name(cmd, &cfg)))
}
