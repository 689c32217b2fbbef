//! Configuration, testbeds, experiment runners and the uniform-error probe.
//!
//! Every runner writes its artifacts into an output directory through a
//! temporary file and a rename, plus a `manifest.json` naming them.

pub mod config;
pub mod probe;
pub mod rates;
pub mod testbeds;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{
    BasisFamily, DualConfig, ExperimentConfig, LadderConfig, PenaltyKind, PrimalConfig, ProbeConfig, TestConfig,
    CONFIG_SCHEMA_VERSION,
};
pub use probe::{uniform_error_probe, ProbeFamily, ProbeRow};
pub use rates::{dual_coefficient_errors, primal_l2_errors, RateRow};
pub use testbeds::{t1_chain, t2_gaussian, t3_deterministic, two_state, GaussianParams, TestbedId};

use crate::basis::NoiseBasis;
use crate::bounds::{duality_gap_experiment, BoundReport, PenaltySpec, REPORT_SCHEMA_VERSION};
use crate::dual::{
    audit_zero_mean, build_dual_martingale, default_audit_points, exact_dual_from_oracle, fit_score_martingale,
    PenaltyFamily, ScoreFeatures, ZeroPenalty,
};
use crate::error::{Error, Result};
use crate::mdp::{solve_exact, uniform_grid};
use crate::primal::{backward_pass, StageDiagnostics, ValueFunctionEstimate};
use crate::rng::Streams;

/// Schema version stamped on every JSON artifact the harness writes.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Oracle,
    Primal,
    Dual,
    Bound,
    Ladder,
    UniformError,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Oracle => "oracle",
            Subcommand::Primal => "primal",
            Subcommand::Dual => "dual",
            Subcommand::Bound => "bound",
            Subcommand::Ladder => "ladder",
            Subcommand::UniformError => "uniform-error",
        }
    }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// One human-readable line for the terminal.
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct OracleOutput {
    schema_version: u32,
    testbed: String,
    horizon: usize,
    x0: f64,
    method: &'static str,
    value: f64,
}

#[derive(Debug, Serialize)]
struct PrimalOutput<'a> {
    schema_version: u32,
    testbed: String,
    fingerprint: String,
    x0: f64,
    value_at_x0: f64,
    stages: &'a [ValueFunctionEstimate],
    diagnostics: Vec<StageDiagnostics>,
}

#[derive(Debug, Serialize)]
struct DualOutput {
    schema_version: u32,
    testbed: String,
    fingerprint: String,
    penalty: &'static str,
    zero_mean_deviation: f64,
    tolerance: f64,
    martingale: Option<serde_json::Value>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    schema_version: u32,
    subcommand: &'static str,
    fingerprint: String,
    artifacts: Vec<String>,
}

#[derive(Debug, Serialize)]
struct LadderRow {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    lower: f64,
    lower_se: f64,
    upper: f64,
    upper_se: f64,
    gap: f64,
    oracle: Option<f64>,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct ProbeCsvRow {
    #[serde(rename = "N")]
    n: usize,
    sup_error: f64,
}

/// Writes `bytes` to `dir/name` through a temporary sibling and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(target)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Seed number `r` of a replicated sweep; replication 0 keeps the base seed.
fn replicate_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        Streams::derive_seed(seed, r as u64)
    }
}

/// The penalty family of the configured kind, with its serialized form.
fn fit_family(
    exp: &crate::bounds::GapExperiment,
    primal: &crate::primal::PrimalSolution,
) -> Result<(Box<dyn PenaltyFamily>, Option<serde_json::Value>)> {
    let model = &exp.model;
    if model.noise().is_degenerate() {
        return Ok((Box::new(ZeroPenalty), None));
    }
    Ok(match &exp.penalty {
        PenaltySpec::NoiseBasis { size } => {
            let basis = NoiseBasis::for_law(model.noise(), *size)?;
            let d = build_dual_martingale(
                model,
                primal,
                &basis,
                &exp.grid,
                exp.inner_samples,
                exp.lipschitz,
                exp.seeds.dual,
            )?;
            let v = serde_json::to_value(&d)?;
            (Box::new(d), Some(v))
        }
        PenaltySpec::Score { harmonics } => {
            let s = fit_score_martingale(
                model,
                primal,
                ScoreFeatures { harmonics: *harmonics },
                &exp.grid,
                exp.inner_samples,
                exp.lipschitz,
                exp.seeds.dual,
            )?;
            let v = serde_json::to_value(&s)?;
            (Box::new(s), Some(v))
        }
        PenaltySpec::Exact => (Box::new(exact_dual_from_oracle(model, &solve_exact(model)?)?), None),
        PenaltySpec::Zero => (Box::new(ZeroPenalty), None),
    })
}

/// Runs one subcommand and writes its artifacts into `out`.
pub fn run(cfg: &ExperimentConfig, cmd: Subcommand, out: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let fingerprint = cfg.fingerprint()?;
    let testbed = cfg.testbed.to_string();
    let mut artifacts = Vec::new();
    let summary = match cmd {
        Subcommand::Oracle => {
            let model = cfg.model()?;
            let value = cfg.oracle(&model)?;
            let o = OracleOutput {
                schema_version: OUTPUT_SCHEMA_VERSION,
                testbed: testbed.clone(),
                horizon: cfg.horizon,
                x0: cfg.start_state(),
                method: if model.states().is_finite() { "exact" } else { "dense-grid" },
                value,
            };
            artifacts.push(write_atomic(out, "oracle.json", &json_bytes(&o)?)?);
            format!("V*_0({}) = {value}", o.x0)
        }
        Subcommand::Primal => {
            let exp = cfg.experiment()?;
            let sol = backward_pass(&exp.model, &exp.state_basis, &exp.reference, exp.primal, exp.seeds.primal)
                .map_err(Error::in_stage("primal"))?;
            let value_at_x0 = sol.value(0, exp.x0);
            let o = PrimalOutput {
                schema_version: OUTPUT_SCHEMA_VERSION,
                testbed: testbed.clone(),
                fingerprint: fingerprint.clone(),
                x0: exp.x0,
                value_at_x0,
                stages: sol.stages(),
                diagnostics: sol.diagnostics(exp.primal.samples, exp.seeds.primal),
            };
            artifacts.push(write_atomic(out, "primal.json", &json_bytes(&o)?)?);
            format!("V_0,N({}) = {value_at_x0}", exp.x0)
        }
        Subcommand::Dual => {
            let exp = cfg.experiment()?;
            let sol = backward_pass(&exp.model, &exp.state_basis, &exp.reference, exp.primal, exp.seeds.primal)
                .map_err(Error::in_stage("primal"))?;
            let (family, martingale) = fit_family(&exp, &sol).map_err(Error::in_stage("dual"))?;
            let tolerance = crate::bounds::ZERO_MEAN_TOL;
            let dev = audit_zero_mean(&exp.model, family.as_ref(), &default_audit_points(&exp.model), tolerance)
                .map_err(Error::in_stage("dual"))?;
            let o = DualOutput {
                schema_version: OUTPUT_SCHEMA_VERSION,
                testbed: testbed.clone(),
                fingerprint: fingerprint.clone(),
                penalty: family.label(),
                zero_mean_deviation: dev,
                tolerance,
                martingale,
            };
            artifacts.push(write_atomic(out, "dual.json", &json_bytes(&o)?)?);
            format!("{} penalty, zero-mean deviation {dev:e}", family.label())
        }
        Subcommand::Bound => {
            let exp = cfg.experiment()?;
            let (report, timing) = duality_gap_experiment(&exp)?;
            artifacts.push(write_atomic(out, "report.json", &json_bytes(&report)?)?);
            artifacts.push(write_atomic(out, "timing.json", &json_bytes(&timing)?)?);
            bound_summary(&report)
        }
        Subcommand::Ladder => {
            let base = cfg.experiment()?;
            let mut rows = Vec::new();
            for &e in &cfg.ladder.exponents {
                let size = 1usize << e;
                for r in 0..cfg.ladder.replications {
                    let mut exp = base.clone();
                    exp.primal.samples = size;
                    exp.inner_samples = size;
                    exp.seeds.primal = replicate_seed(cfg.seeds.primal, r);
                    exp.seeds.dual = replicate_seed(cfg.seeds.dual, r);
                    exp.seeds.test = replicate_seed(cfg.seeds.test, r);
                    let (rep, _) = duality_gap_experiment(&exp)?;
                    rows.push(LadderRow {
                        n: size,
                        m: size,
                        lower: rep.lower.mean,
                        lower_se: rep.lower.std_err,
                        upper: rep.upper.mean,
                        upper_se: rep.upper.std_err,
                        gap: rep.gap,
                        oracle: rep.oracle,
                        seed: exp.seeds.test,
                    });
                }
            }
            artifacts.push(write_atomic(out, "ladder.csv", &csv_bytes(&rows)?)?);
            format!("{} ladder rows", rows.len())
        }
        Subcommand::UniformError => {
            let params = uniform_grid(0.0, 1.0, cfg.probe.params);
            let ns: Vec<usize> = cfg.probe.exponents.iter().map(|&e| 1usize << e).collect();
            let table = uniform_error_probe(ProbeFamily::Linear, &params, &ns, cfg.probe.replications, cfg.seeds.test)?;
            let rows: Vec<ProbeCsvRow> = table
                .iter()
                .map(|r| ProbeCsvRow {
                    n: r.n,
                    sup_error: r.sup_error,
                })
                .collect();
            artifacts.push(write_atomic(out, "uniform_error.csv", &csv_bytes(&rows)?)?);
            let xs: Vec<f64> = table.iter().map(|r| r.n as f64).collect();
            let ys: Vec<f64> = table.iter().map(|r| r.sup_error).collect();
            format!("log-log slope {:.4}", crate::numeric::loglog_slope(&xs, &ys))
        }
    };
    let manifest = Manifest {
        schema_version: OUTPUT_SCHEMA_VERSION,
        subcommand: cmd.name(),
        fingerprint,
        artifacts: artifacts
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    artifacts.push(write_atomic(out, "manifest.json", &json_bytes(&manifest)?)?);
    Ok(RunOutcome { summary, artifacts })
}

/// [`run`] inside a dedicated rayon pool of `threads` workers.
pub fn run_with_threads(
    cfg: &ExperimentConfig,
    cmd: Subcommand,
    out: &Path,
    threads: Option<usize>,
) -> Result<RunOutcome> {
    match threads {
        None => run(cfg, cmd, out),
        Some(0) => Err(Error::invalid("thread count must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(|| run(cfg, cmd, out)),
    }
}

fn bound_summary(r: &BoundReport) -> String {
    debug_assert_eq!(r.schema_version, REPORT_SCHEMA_VERSION);
    let oracle = r.oracle.map(|v| format!(", oracle {v:.6}")).unwrap_or_default();
    format!(
        "lower {:.6} ({:.2e}), upper {:.6} ({:.2e}), gap {:.6}{oracle}",
        r.lower.mean, r.lower.std_err, r.upper.mean, r.upper.std_err, r.gap
    )
}
