//! Report bundle computed from a persisted results table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::table::{filter_converged, DiscardReport, ResultsTable};
use super::{io_err, ExperimentConfig, HarnessError, DISCARD_FILE};
use crate::fidio::{format_f64, to_json_string};
use crate::metrics::agreement::MeanKey;
use crate::metrics::{
    bootstrap_rmse, finding_preservation, mean_over_executions, z95_matrix, FindingPreservation,
    QuantRecord, StatsError, VariabilityStats, Z95Matrix,
};
use crate::quant::MethodId;
use crate::seed::SeedMixer;
use crate::signal::{Metabolite, Voxel};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub n_records: usize,
    pub n_converged: usize,
    pub methods: Vec<MethodId>,
    pub voxels: Vec<Voxel>,
    pub discard: DiscardReport,
    /// (m, s, q) with every execution discarded, plus signals dropped from
    /// agreement because some method had no mean for them.
    pub omitted_means: Vec<MeanKey>,
    pub z95: Vec<Z95Matrix>,
    pub variability: Vec<VariabilityStats>,
    pub preservation: Vec<FindingPreservation>,
    pub alpha: f64,
}

pub fn bootstrap_seed(master: u64, m: Metabolite, q: MethodId, v: Voxel) -> u64 {
    SeedMixer::new(master)
        .str("bootstrap")
        .str(m.name())
        .str(q.as_str())
        .str(v.as_str())
        .finish()
}

fn analysis_err(e: StatsError) -> HarnessError {
    HarnessError::Analysis(e.to_string())
}

pub fn analyze(table: &ResultsTable, cfg: &ExperimentConfig) -> Result<ReportBundle, HarnessError> {
    if table.rows.is_empty() {
        return Err(HarnessError::Analysis("no records in results table".into()));
    }
    let (kept, discard) = filter_converged(table);
    let records = table.records();
    let methods: Vec<MethodId> = records.iter().map(|r| r.method).collect::<BTreeSet<_>>().into_iter().collect();
    let voxels: Vec<Voxel> = records.iter().map(|r| r.voxel).collect::<BTreeSet<_>>().into_iter().collect();
    let voxel_of: BTreeMap<String, Voxel> = records.iter().map(|r| (r.signal_id.clone(), r.voxel)).collect();

    // agreement on signals that every method could quantify
    let (mut means, mut omitted) = mean_over_executions(&records);
    let incomplete: BTreeSet<(Metabolite, String)> = means
        .keys()
        .map(|(m, s, _)| (*m, s.clone()))
        .filter(|(m, s)| methods.iter().any(|q| !means.contains_key(&(*m, s.clone(), *q))))
        .collect();
    means.retain(|(m, s, q), _| {
        let drop = incomplete.contains(&(*m, s.clone()));
        if drop {
            omitted.push((*m, s.clone(), *q));
        }
        !drop
    });
    omitted.sort();
    let mut z95 = Vec::new();
    if methods.len() >= 2 {
        for &v in &voxels {
            z95.push(z95_matrix(&means, &methods, &voxel_of, v).map_err(analysis_err)?);
        }
    }

    let mut groups: BTreeMap<(Metabolite, MethodId, Voxel), Vec<QuantRecord>> = BTreeMap::new();
    for r in &records {
        groups.entry((r.metabolite, r.method, r.voxel)).or_default().push(r.clone());
    }
    let mut variability = Vec::new();
    for ((m, q, v), g) in &groups {
        if !g.iter().any(|r| r.converged) {
            // listed in the discard report
            continue;
        }
        let stats = bootstrap_rmse(g, cfg.n_boot, bootstrap_seed(cfg.master_seed, *m, *q, *v))
            .map_err(|e| analysis_err(e.with_context(*m, format!("{q} in {v}"))))?;
        variability.push(stats);
    }

    let mut preservation = Vec::new();
    if voxels.contains(&Voxel::Vox1) && voxels.contains(&Voxel::Vox2) {
        let mut by_mq: BTreeMap<(Metabolite, MethodId), Vec<QuantRecord>> = BTreeMap::new();
        for r in records.iter().filter(|r| matches!(r.voxel, Voxel::Vox1 | Voxel::Vox2)) {
            by_mq.entry((r.metabolite, r.method)).or_default().push(r.clone());
        }
        for g in by_mq.values() {
            preservation.push(finding_preservation(g, cfg.alpha).map_err(analysis_err)?);
        }
    }

    Ok(ReportBundle {
        n_records: table.rows.len(),
        n_converged: kept.rows.len(),
        methods,
        voxels,
        discard,
        omitted_means: omitted,
        z95,
        variability,
        preservation,
        alpha: cfg.alpha,
    })
}

fn num(v: f64) -> Value {
    // JSON has no infinities; keep them readable
    if v.is_finite() {
        json!(v)
    } else {
        json!(format!("{v}"))
    }
}

impl ReportBundle {
    pub fn summary(&self) -> Value {
        let z95: serde_json::Map<String, Value> = self
            .z95
            .iter()
            .map(|z| {
                let per_met: serde_json::Map<String, Value> = z
                    .metabolites
                    .iter()
                    .zip(&z.values)
                    .map(|(m, row)| {
                        let pairs: serde_json::Map<String, Value> = z
                            .pairs
                            .iter()
                            .zip(row)
                            .map(|((a, b), v)| (format!("{a} vs {b}"), num(*v)))
                            .collect();
                        (m.name().to_string(), Value::Object(pairs))
                    })
                    .collect();
                (z.voxel.to_string(), Value::Object(per_met))
            })
            .collect();
        let variability: Vec<Value> = self
            .variability
            .iter()
            .map(|v| {
                json!({
                    "metabolite": v.metabolite.name(),
                    "method": v.method.as_str(),
                    "voxel": v.voxel.as_str(),
                    "rmse": num(v.rmse),
                    "bootstrap_ci95": [num(v.bootstrap_ci.0), num(v.bootstrap_ci.1)],
                    "mean_crb_sd": v.mean_crb_sd.map(num),
                    "n_signals": v.n_signals,
                    "n_records": v.n_records,
                })
            })
            .collect();
        let preservation: Vec<Value> = self
            .preservation
            .iter()
            .map(|f| {
                json!({
                    "metabolite": f.metabolite.name(),
                    "method": f.method.as_str(),
                    "n_significant": f.n_significant,
                    "n_executions": f.n_executions,
                    "mean_z_statistic": num(f.mean_z_statistic),
                    "skipped_executions": f.skipped_executions,
                })
            })
            .collect();
        let median: serde_json::Map<String, Value> = self
            .discard
            .median_retained()
            .into_iter()
            .map(|(m, c)| (m.as_str().to_string(), json!(c)))
            .collect();
        json!({
            "n_records": self.n_records,
            "n_converged_records": self.n_converged,
            "methods": self.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "voxels": self.voxels.iter().map(|v| v.as_str()).collect::<Vec<_>>(),
            "alpha": self.alpha,
            "median_retained_executions": median,
            "zero_retained": self.discard.zero_retained.iter()
                .map(|(s, m)| json!([s, m.as_str()])).collect::<Vec<_>>(),
            "omitted_means": self.omitted_means.iter()
                .map(|(m, s, q)| json!([m.name(), s, q.as_str()])).collect::<Vec<_>>(),
            "z95": z95,
            "variability": variability,
            "finding_preservation": preservation,
        })
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), HarnessError> {
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| io_err(&p, e))
}

/// CSV reports and `summary.json` under `dir`; the discard report goes to
/// `dir/../discard_report.csv` alongside the results table.
pub fn write_reports(bundle: &ReportBundle, output_dir: &Path, report_dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(report_dir).map_err(|e| io_err(report_dir, e))?;
    write(output_dir, DISCARD_FILE, &bundle.discard.to_csv())?;

    let mut agree = String::from("metabolite,voxel,method_a,method_b,n_signals,bias,sd_diff,ci95,z95\n");
    let mut points = String::from("metabolite,voxel,method_a,method_b,signal_id,mean,difference\n");
    for z in &bundle.z95 {
        let mut mat = String::from("metabolite");
        for (a, b) in &z.pairs {
            let _ = write!(mat, ",{a} vs {b}");
        }
        mat.push('\n');
        for (m, row) in z.metabolites.iter().zip(&z.values) {
            mat.push_str(m.name());
            for v in row {
                let _ = write!(mat, ",{}", format_f64(*v));
            }
            mat.push('\n');
        }
        write(report_dir, &format!("z95_{}.csv", z.voxel), &mat)?;
        for d in &z.details {
            let (a, b) = d.method_pair;
            let s = &d.stats;
            let _ = writeln!(
                agree,
                "{},{},{a},{b},{},{},{},{},{}",
                d.metabolite,
                d.voxel,
                s.points.len(),
                format_f64(s.bias),
                format_f64(s.sd_diff),
                format_f64(s.ci95),
                format_f64(s.z95)
            );
            for (sig, mean, diff) in &s.points {
                let _ = writeln!(
                    points,
                    "{},{},{a},{b},{sig},{},{}",
                    d.metabolite,
                    d.voxel,
                    format_f64(*mean),
                    format_f64(*diff)
                );
            }
        }
    }
    write(report_dir, "agreement.csv", &agree)?;
    write(report_dir, "bland_altman_points.csv", &points)?;

    let mut var = String::from(
        "metabolite,method,voxel,n_signals,n_records,rmse,bootstrap_ci_low,bootstrap_ci_high,mean_crb_sd\n",
    );
    let mut boot = String::from("metabolite,method,voxel,replicate,rmse\n");
    for v in &bundle.variability {
        let _ = writeln!(
            var,
            "{},{},{},{},{},{},{},{},{}",
            v.metabolite,
            v.method,
            v.voxel,
            v.n_signals,
            v.n_records,
            format_f64(v.rmse),
            format_f64(v.bootstrap_ci.0),
            format_f64(v.bootstrap_ci.1),
            v.mean_crb_sd.map_or_else(|| "NaN".into(), format_f64)
        );
        for (i, r) in v.bootstrap_rmse.iter().enumerate() {
            let _ = writeln!(boot, "{},{},{},{i},{}", v.metabolite, v.method, v.voxel, format_f64(*r));
        }
    }
    write(report_dir, "variability.csv", &var)?;
    write(report_dir, "bootstrap_rmse.csv", &boot)?;

    let mut fp = String::from("metabolite,method,n_significant,n_executions,mean_z_statistic,skipped_executions\n");
    for f in &bundle.preservation {
        let skipped: Vec<String> = f.skipped_executions.iter().map(u32::to_string).collect();
        let _ = writeln!(
            fp,
            "{},{},{},{},{},{}",
            f.metabolite,
            f.method,
            f.n_significant,
            f.n_executions,
            format_f64(f.mean_z_statistic),
            skipped.join(";")
        );
    }
    write(report_dir, "finding_preservation.csv", &fp)?;

    let summary = to_json_string(&bundle.summary()).map_err(|e| HarnessError::Analysis(e.to_string()))?;
    write(report_dir, "summary.json", &summary)
}
