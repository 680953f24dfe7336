//! Flat results table: one row per (signal, method, execution, metabolite).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{io_err, HarnessError};
use crate::fidio::format_f64;
use crate::metrics::QuantRecord;
use crate::quant::MethodId;
use crate::signal::{Metabolite, Voxel};

pub const HEADER: [&str; 13] = [
    "signal_id",
    "voxel",
    "animal_id",
    "method",
    "paramset",
    "execution",
    "seed",
    "converged",
    "final_cost",
    "n_iter",
    "metabolite",
    "concentration",
    "crb_sd",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub signal_id: String,
    pub voxel: Voxel,
    pub animal_id: String,
    pub method: MethodId,
    pub execution: u32,
    pub seed: u64,
    pub converged: bool,
    pub final_cost: f64,
    pub n_iter: usize,
    pub metabolite: Metabolite,
    pub concentration: f64,
    pub crb_sd: Option<f64>,
}

impl ResultRow {
    pub fn key(&self) -> (&str, MethodId, u32, Metabolite) {
        (&self.signal_id, self.method, self.execution, self.metabolite)
    }

    pub fn to_record(&self) -> QuantRecord {
        QuantRecord {
            metabolite: self.metabolite,
            signal_id: self.signal_id.clone(),
            voxel: self.voxel,
            animal_id: self.animal_id.clone(),
            method: self.method,
            execution: self.execution,
            concentration: self.concentration,
            crb_sd: self.crb_sd,
            converged: self.converged,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    /// Canonical (signal, method, execution, metabolite) order.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| a.key().cmp(&b.key()));
    }

    pub fn check_unique(&self) -> Result<(), HarnessError> {
        let mut seen = BTreeSet::new();
        for r in &self.rows {
            if !seen.insert(r.key()) {
                return Err(HarnessError::Data(format!(
                    "duplicate row {} {} e{} {}",
                    r.signal_id, r.method, r.execution, r.metabolite
                )));
            }
        }
        Ok(())
    }

    pub fn records(&self) -> Vec<QuantRecord> {
        self.rows.iter().map(ResultRow::to_record).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.signal_id.as_str(),
                r.voxel.as_str(),
                r.animal_id.as_str(),
                r.method.family(),
                r.method.paramset(),
                &r.execution.to_string(),
                &r.seed.to_string(),
                if r.converged { "true" } else { "false" },
                &format_f64(r.final_cost),
                &r.n_iter.to_string(),
                r.metabolite.name(),
                &format_f64(r.concentration),
                &r.crb_sd.map_or_else(|| "NaN".to_string(), format_f64),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self, HarnessError> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| io_err(path, e))?.clone();
        if header.iter().ne(HEADER.iter().copied()) {
            return Err(io_err(path, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| io_err(path, e))?;
            let line = i + 2;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let bad = |k: usize, msg: &str| io_err(path, format!("line {line}, {}: {msg} ({:?})", HEADER[k], field(k)));
            let num = |k: usize| field(k).parse::<f64>().map_err(|_| bad(k, "not a number"));
            let method = MethodId::from_parts(field(3), field(4)).ok_or_else(|| bad(3, "unknown method"))?;
            let crb = num(12)?;
            rows.push(ResultRow {
                signal_id: field(0).to_string(),
                voxel: field(1).parse().map_err(|_| bad(1, "unknown voxel"))?,
                animal_id: field(2).to_string(),
                method,
                execution: field(5).parse().map_err(|_| bad(5, "not an integer"))?,
                seed: field(6).parse().map_err(|_| bad(6, "not an integer"))?,
                converged: field(7).parse().map_err(|_| bad(7, "not a boolean"))?,
                final_cost: num(8)?,
                n_iter: field(9).parse().map_err(|_| bad(9, "not an integer"))?,
                metabolite: field(10).parse().map_err(|_| bad(10, "unknown metabolite"))?,
                concentration: num(11)?,
                crb_sd: (!crb.is_nan()).then_some(crb),
            });
        }
        let table = ResultsTable { rows };
        table.check_unique()?;
        Ok(table)
    }
}

pub fn write_results(table: &ResultsTable, path: &Path) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, table.to_csv()).map_err(|e| io_err(path, e))
}

pub fn read_results(path: &Path) -> Result<ResultsTable, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    ResultsTable::from_csv(&text, path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetainedCount {
    pub signal_id: String,
    pub method: MethodId,
    pub retained: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiscardReport {
    pub counts: Vec<RetainedCount>,
    /// (signal, method) pairs left with no converged execution.
    pub zero_retained: Vec<(String, MethodId)>,
}

impl DiscardReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("signal_id,method,paramset,retained,total,flag\n");
        for c in &self.counts {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.signal_id,
                c.method.family(),
                c.method.paramset(),
                c.retained,
                c.total,
                if c.retained == 0 { "ZERO_RETAINED" } else { "" }
            ));
        }
        out
    }

    /// Median retained count per method (lower median for even sizes).
    pub fn median_retained(&self) -> BTreeMap<MethodId, usize> {
        let mut by: BTreeMap<MethodId, Vec<usize>> = BTreeMap::new();
        for c in &self.counts {
            by.entry(c.method).or_default().push(c.retained);
        }
        by.into_iter()
            .map(|(m, mut v)| {
                v.sort_unstable();
                (m, v[(v.len() - 1) / 2])
            })
            .collect()
    }
}

/// Drop non-converged rows; count retained executions per (signal, method).
pub fn filter_converged(table: &ResultsTable) -> (ResultsTable, DiscardReport) {
    let mut execs: BTreeMap<(String, MethodId), (BTreeSet<u32>, BTreeSet<u32>)> = BTreeMap::new();
    for r in &table.rows {
        let e = execs.entry((r.signal_id.clone(), r.method)).or_default();
        e.0.insert(r.execution);
        if r.converged {
            e.1.insert(r.execution);
        }
    }
    let mut report = DiscardReport::default();
    for ((s, m), (all, kept)) in execs {
        if kept.is_empty() {
            report.zero_retained.push((s.clone(), m));
        }
        report.counts.push(RetainedCount {
            signal_id: s,
            method: m,
            retained: kept.len(),
            total: all.len(),
        });
    }
    let rows = table.rows.iter().filter(|r| r.converged).cloned().collect();
    (ResultsTable { rows }, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: &str, e: u32, conv: bool, crb: Option<f64>) -> ResultRow {
        ResultRow {
            signal_id: s.into(),
            voxel: Voxel::Vox1,
            animal_id: "rat01".into(),
            method: MethodId::TdfitB,
            execution: e,
            seed: u64::MAX - e as u64,
            converged: conv,
            final_cost: 1.0 / 3.0,
            n_iter: 12,
            metabolite: Metabolite::CrPcr,
            concentration: 0.1 + 0.2,
            crb_sd: crb,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = ResultsTable {
            rows: vec![row("a", 0, true, Some(0.123)), row("a", 1, false, None)],
        };
        let text = t.to_csv();
        assert!(text.starts_with(&HEADER.join(",")));
        assert!(text.contains(",tdfit,B,"));
        assert!(text.contains(",NaN\n"));
        let back = ResultsTable::from_csv(&text, Path::new("t.csv")).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn duplicate_keys_rejected() {
        let t = ResultsTable {
            rows: vec![row("a", 0, true, None), row("a", 0, true, None)],
        };
        assert!(ResultsTable::from_csv(&t.to_csv(), Path::new("t")).is_err());
    }

    #[test]
    fn bad_field_is_named() {
        let text = format!("{}\na,Vox1,r,tdfit,A,x,1,true,1,1,NAA,1,1\n", HEADER.join(","));
        let err = ResultsTable::from_csv(&text, Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("execution"), "{err}");
    }

    #[test]
    fn filter_counts() {
        let mut rows: Vec<ResultRow> = (0..30).map(|e| row("a", e, e >= 3, None)).collect();
        rows.extend((0..30).map(|e| row("b", e, false, None)));
        let (kept, rep) = filter_converged(&ResultsTable { rows });
        assert_eq!(kept.rows.len(), 27);
        assert_eq!(rep.counts[0].retained, 27);
        assert_eq!(rep.counts[0].total, 30);
        assert_eq!(rep.zero_retained, vec![("b".to_string(), MethodId::TdfitB)]);
        assert!(rep.to_csv().contains("b,tdfit,B,0,30,ZERO_RETAINED"));
    }

    #[test]
    fn all_converged_is_identity() {
        let t = ResultsTable {
            rows: (0..5).map(|e| row("a", e, true, None)).collect(),
        };
        assert_eq!(filter_converged(&t).0, t);
    }
}
