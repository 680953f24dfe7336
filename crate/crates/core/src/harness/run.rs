//! Cohort materialization and the (signal, method, execution) grid.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rayon::prelude::*;

use super::table::{ResultRow, ResultsTable};
use super::{io_err, Acquisition, CohortSource, ExperimentConfig, HarnessError, COHORT_DIR};
use crate::cohort::synthesize_cohort;
use crate::fidio::{read_fid, write_fid};
use crate::quant::{check_grid, fit_freq_domain, fit_time_domain, Engine, FitResult, MethodConfig};
use crate::seed::{execution_seed, substream};
use crate::signal::FidSignal;

/// Sub-stream label of the non-convergence injection draw.
pub const FAIL_STREAM: u64 = 0xFA11;

/// Signals of the configured cohort, sorted by signal id.
pub fn generate_cohort(cfg: &ExperimentConfig, acq: &Acquisition) -> Result<Vec<FidSignal>, HarnessError> {
    let mut signals = match &cfg.cohort {
        CohortSource::Synthetic(spec) => {
            let mut spec = spec.clone();
            spec.master_seed = cfg.master_seed;
            synthesize_cohort(&spec, &acq.basis, &acq.mm, &acq.ctx)
                .map_err(|e| HarnessError::Usage(e.to_string()))?
        }
        CohortSource::InputDir(dir) => load_cohort(dir)?,
    };
    signals.sort_by(|a, b| a.signal_id.cmp(&b.signal_id));
    for s in &signals {
        check_grid(s, &acq.basis, &acq.mm)
            .map_err(|e| HarnessError::Data(format!("{}: {e}", s.signal_id)))?;
    }
    Ok(signals)
}

/// Read every `*.json` FID in `dir`. Any unreadable file aborts the load.
pub fn load_cohort(dir: &Path) -> Result<Vec<FidSignal>, HarnessError> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(io_err(dir, "no FID files (*.json)"));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let fid = read_fid(&p).map_err(|e| HarnessError::Data(e.to_string()))?;
        if !seen.insert(fid.signal_id.clone()) {
            return Err(io_err(&p, format!("duplicate signal_id {:?}", fid.signal_id)));
        }
        out.push(fid);
    }
    Ok(out)
}

/// One FID file per signal plus `truth.csv`.
pub fn write_cohort(signals: &[FidSignal], dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut truth = String::from("signal_id,voxel,animal_id,metabolite,concentration\n");
    for s in signals {
        let p = dir.join(format!("{}.json", s.signal_id));
        write_fid(s, &p).map_err(|e| HarnessError::Data(e.to_string()))?;
        for (m, c) in s.truth.iter().flatten() {
            truth.push_str(&format!(
                "{},{},{},{},{}\n",
                s.signal_id,
                s.voxel,
                s.animal_id,
                m,
                crate::fidio::format_f64(*c)
            ));
        }
    }
    let p = dir.join("truth.csv");
    fs::write(&p, truth).map_err(|e| io_err(&p, e))
}

pub fn cohort_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join(COHORT_DIR)
}

struct Job<'a> {
    signal: &'a FidSignal,
    method: &'a MethodConfig,
    execution: u32,
}

fn fit_one(job: &Job<'_>, cfg: &ExperimentConfig, acq: &Acquisition) -> Result<(u64, FitResult), HarnessError> {
    let seed = execution_seed(
        cfg.master_seed,
        job.method.method_id.as_str(),
        &job.signal.signal_id,
        job.execution,
    );
    let fit = match job.method.engine {
        Engine::TimeDomain => fit_time_domain(job.signal, &acq.basis, &acq.mm, job.method, seed),
        Engine::FreqDomain => fit_freq_domain(job.signal, &acq.basis, &acq.mm, job.method, &acq.ctx),
    }
    .map_err(|e| {
        HarnessError::Data(format!(
            "{} / {} / execution {}: {e}",
            job.signal.signal_id, job.method.method_id, job.execution
        ))
    })?;
    Ok((seed, fit))
}

/// Run the full grid. Output order is canonical regardless of `cfg.jobs`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    signals: &[FidSignal],
    acq: &Acquisition,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ResultsTable, HarnessError> {
    cfg.validate()?;
    let methods = cfg.method_configs();
    let mut jobs = Vec::new();
    for s in signals {
        for m in &methods {
            for e in 0..cfg.n_exec {
                jobs.push(Job {
                    signal: s,
                    method: m,
                    execution: e,
                });
            }
        }
    }
    let total = jobs.len();
    let done = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| HarnessError::Usage(format!("thread pool: {e}")))?;
    let fits: Vec<Result<(u64, FitResult), HarnessError>> = pool.install(|| {
        jobs.par_iter()
            .map(|j| {
                let r = fit_one(j, cfg, acq);
                progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
                r
            })
            .collect()
    });

    let mut table = ResultsTable::default();
    for (job, fit) in jobs.iter().zip(fits) {
        let (seed, fit) = fit?;
        let injected = cfg.fail_rate > 0.0 && substream(seed, FAIL_STREAM).gen::<f64>() < cfg.fail_rate;
        for (m, c) in &fit.concentrations {
            table.rows.push(ResultRow {
                signal_id: job.signal.signal_id.clone(),
                voxel: job.signal.voxel,
                animal_id: job.signal.animal_id.clone(),
                method: job.method.method_id,
                execution: job.execution,
                seed,
                converged: fit.converged && !injected,
                final_cost: fit.final_cost,
                n_iter: fit.n_iterations,
                metabolite: *m,
                concentration: *c,
                crb_sd: fit.crb_sd.get(m).copied().flatten(),
            });
        }
    }
    table.sort();
    table.check_unique()?;
    Ok(table)
}
