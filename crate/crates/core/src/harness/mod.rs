//! Experiment orchestration: cohort generation, the method × execution grid,
//! convergence filtering, persistence and reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::SyntheticCohortSpec;
use crate::quant::{MethodConfig, MethodId};
use crate::signal::{
    generate_basis, MacromoleculeModel, MetaboliteBasis, SpectrometerContext, DEFAULT_POINTS,
    DEFAULT_SPECTRAL_WIDTH_HZ,
};

pub mod report;
pub mod run;
pub mod table;

pub use report::{analyze, write_reports, ReportBundle};
pub use run::{generate_cohort, load_cohort, run_experiment, write_cohort};
pub use table::{filter_converged, read_results, write_results, DiscardReport, ResultRow, ResultsTable};

pub const RESULTS_FILE: &str = "results.csv";
pub const DISCARD_FILE: &str = "discard_report.csv";
pub const COHORT_DIR: &str = "cohort";
pub const REPORT_DIR: &str = "reports";

pub const SEED_POLICY: &str = "execution seed = mix(master_seed, method id, signal id, execution); \
tdfit starts use ChaCha8 substream 0 of the execution seed; fail injection uses substream 0xFA11; \
synthetic signal i of voxel v uses mix(master_seed, v, i); bootstrap replicate b of (metabolite, method, voxel) \
uses substream b of mix(master_seed, \"bootstrap\", metabolite, method, voxel)";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("analysis: {0}")]
    Analysis(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Data(_) => 2,
            HarnessError::Analysis(_) => 3,
        }
    }
}

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Data(format!("{}: {e}", path.display()))
}

/// Where the signals come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CohortSource {
    /// Directory of FID files.
    InputDir(PathBuf),
    /// Synthetic cohort; its `master_seed` is replaced by the experiment's.
    Synthetic(SyntheticCohortSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cohort: CohortSource,
    pub methods: Vec<MethodId>,
    pub n_exec: u32,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub alpha: f64,
    pub n_boot: usize,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    /// Probability of marking an execution non-converged (filter testing).
    pub fail_rate: f64,
    pub hlsvd_order: usize,
    pub hlsvd_damping_threshold: f64,
}

/// Config file contents: every key optional, flags fill in the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub cohort: Option<CohortSource>,
    pub methods: Option<Vec<MethodId>>,
    pub n_exec: Option<u32>,
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub n_boot: Option<usize>,
    pub jobs: Option<usize>,
    pub fail_rate: Option<f64>,
    pub hlsvd_order: Option<usize>,
    pub hlsvd_damping_threshold: Option<f64>,
}

impl PartialConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| HarnessError::Usage(format!("{}: {e}", path.display())))
    }

    /// Values set in `over` win.
    pub fn overlay(self, over: PartialConfig) -> PartialConfig {
        PartialConfig {
            cohort: over.cohort.or(self.cohort),
            methods: over.methods.or(self.methods),
            n_exec: over.n_exec.or(self.n_exec),
            master_seed: over.master_seed.or(self.master_seed),
            output_dir: over.output_dir.or(self.output_dir),
            alpha: over.alpha.or(self.alpha),
            n_boot: over.n_boot.or(self.n_boot),
            jobs: over.jobs.or(self.jobs),
            fail_rate: over.fail_rate.or(self.fail_rate),
            hlsvd_order: over.hlsvd_order.or(self.hlsvd_order),
            hlsvd_damping_threshold: over.hlsvd_damping_threshold.or(self.hlsvd_damping_threshold),
        }
    }

    /// Fill defaults. `master_seed` has none on purpose.
    pub fn resolve(self) -> Result<ExperimentConfig, HarnessError> {
        let master_seed = self.master_seed.ok_or_else(|| {
            HarnessError::Usage("master_seed is required (config key or --master-seed)".into())
        })?;
        let hlsvd = crate::hlsvd::HlsvdConfig::default();
        let cohort = match self.cohort {
            Some(CohortSource::Synthetic(mut spec)) => {
                spec.master_seed = master_seed;
                Some(CohortSource::Synthetic(spec))
            }
            other => other,
        };
        let cfg = ExperimentConfig {
            cohort: cohort.unwrap_or_else(|| CohortSource::Synthetic(SyntheticCohortSpec::default_with_seed(master_seed))),
            methods: self.methods.unwrap_or_else(|| MethodId::ALL.to_vec()),
            n_exec: self.n_exec.unwrap_or(30),
            master_seed,
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from("mrs-repro-out")),
            alpha: self.alpha.unwrap_or(0.05),
            n_boot: self.n_boot.unwrap_or(1000),
            jobs: self.jobs.unwrap_or(0),
            fail_rate: self.fail_rate.unwrap_or(0.0),
            hlsvd_order: self.hlsvd_order.unwrap_or(hlsvd.model_order),
            hlsvd_damping_threshold: self
                .hlsvd_damping_threshold
                .unwrap_or(hlsvd.baseline_damping_threshold),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    /// Defaults for everything but the seed and output directory.
    pub fn new(master_seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        PartialConfig {
            master_seed: Some(master_seed),
            output_dir: Some(output_dir.into()),
            ..Default::default()
        }
        .resolve()
        .expect("defaults are valid")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Usage(m));
        if self.n_exec == 0 {
            return bad("n_exec must be >= 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must be non-empty".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} not in (0, 1)", self.alpha));
        }
        if self.n_boot == 0 {
            return bad("n_boot must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.fail_rate) {
            return bad(format!("fail_rate {} not in [0, 1]", self.fail_rate));
        }
        for m in self.method_configs() {
            m.validate().map_err(|e| HarnessError::Usage(e.to_string()))?;
        }
        if let CohortSource::Synthetic(spec) = &self.cohort {
            spec.validate().map_err(|e| HarnessError::Usage(e.to_string()))?;
        }
        Ok(())
    }

    /// Methods in canonical order, without duplicates.
    pub fn method_ids(&self) -> Vec<MethodId> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }

    pub fn method_configs(&self) -> Vec<MethodConfig> {
        self.method_ids()
            .into_iter()
            .map(|id| {
                let mut c = MethodConfig::preset(id);
                c.hlsvd.model_order = self.hlsvd_order;
                c.hlsvd.baseline_damping_threshold = self.hlsvd_damping_threshold;
                c
            })
            .collect()
    }

    pub fn results_path(&self) -> PathBuf {
        self.output_dir.join(RESULTS_FILE)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Fixed acquisition setup shared by generation and fitting.
pub struct Acquisition {
    pub ctx: SpectrometerContext,
    pub basis: MetaboliteBasis,
    pub mm: MacromoleculeModel,
}

impl Acquisition {
    pub fn standard() -> Self {
        let ctx = SpectrometerContext::default();
        let basis = generate_basis(&ctx, DEFAULT_POINTS, 1.0 / DEFAULT_SPECTRAL_WIDTH_HZ)
            .expect("default basis is valid");
        let mm = MacromoleculeModel::default_for(&ctx);
        Self { ctx, basis, mm }
    }
}

/// Effective configuration plus run facts, written next to the outputs.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub subcommand: &'a str,
    pub tool_version: &'a str,
    pub config: &'a ExperimentConfig,
    pub seed_policy: &'a str,
    pub facts: serde_json::Value,
}

pub fn write_manifest(cfg: &ExperimentConfig, subcommand: &str, facts: serde_json::Value) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    let m = Manifest {
        subcommand,
        tool_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seed_policy: SEED_POLICY,
        facts,
    };
    let path = cfg.output_dir.join(format!("manifest_{subcommand}.json"));
    let text = crate::fidio::to_json_string(&m).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// `generate`: materialize the cohort under `<output>/cohort`.
pub fn cmd_generate(cfg: &ExperimentConfig, acq: &Acquisition) -> Result<Vec<crate::signal::FidSignal>, HarnessError> {
    let signals = generate_cohort(cfg, acq)?;
    write_cohort(&signals, &run::cohort_dir(cfg))?;
    write_manifest(
        cfg,
        "generate",
        serde_json::json!({
            "n_signals": signals.len(),
            "signal_ids": signals.iter().map(|s| s.signal_id.as_str()).collect::<Vec<_>>(),
            "n_points": acq.basis.n_points(),
            "dwell_time_s": acq.basis.dwell_time(),
            "field_strength_t": acq.ctx.field_strength,
        }),
    )?;
    Ok(signals)
}

/// `run`: fit the grid and persist `results.csv` plus the discard report.
pub fn cmd_run(
    cfg: &ExperimentConfig,
    acq: &Acquisition,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ResultsTable, HarnessError> {
    let signals = generate_cohort(cfg, acq)?;
    let table = run_experiment(cfg, &signals, acq, progress)?;
    write_results(&table, &cfg.results_path())?;
    let (_, discard) = filter_converged(&table);
    let p = cfg.output_dir.join(DISCARD_FILE);
    fs::write(&p, discard.to_csv()).map_err(|e| io_err(&p, e))?;
    write_manifest(
        cfg,
        "run",
        serde_json::json!({
            "n_signals": signals.len(),
            "n_rows": table.rows.len(),
            "n_converged_rows": table.rows.iter().filter(|r| r.converged).count(),
            "zero_retained": discard.zero_retained.iter()
                .map(|(s, m)| format!("{s} {m}")).collect::<Vec<_>>(),
        }),
    )?;
    Ok(table)
}

/// `analyze`: reports from the persisted table only.
pub fn cmd_analyze(cfg: &ExperimentConfig) -> Result<ReportBundle, HarnessError> {
    let table = read_results(&cfg.results_path())?;
    let bundle = analyze(&table, cfg)?;
    write_reports(&bundle, &cfg.output_dir, &cfg.output_dir.join(REPORT_DIR))?;
    write_manifest(
        cfg,
        "analyze",
        serde_json::json!({
            "n_records": bundle.n_records,
            "n_converged_records": bundle.n_converged,
        }),
    )?;
    Ok(bundle)
}

pub fn cmd_all(
    cfg: &ExperimentConfig,
    acq: &Acquisition,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ReportBundle, HarnessError> {
    cmd_generate(cfg, acq)?;
    cmd_run(cfg, acq, progress)?;
    cmd_analyze(cfg)
}
