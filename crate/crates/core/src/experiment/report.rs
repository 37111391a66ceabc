use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::design::ScenarioKey;
use super::runner::RunRecord;
use super::speedup::{SpeedupCategory, SpeedupRecord};
use crate::error::ExperimentError;
use crate::model::PolicyKind;

/// Formats with 9 significant digits, shortest form, `.` separator.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("float round trip");
    format!("{rounded}")
}

#[derive(Serialize, Deserialize)]
struct SpeedupRow {
    page: String,
    policy: String,
    if1_rtt_ms: String,
    if1_bw_bps: String,
    if2_rtt_ms: String,
    if2_bw_bps: String,
    plt_s: String,
    speedup: String,
    category: String,
}

fn scenario_cols(s: &ScenarioKey) -> [String; 4] {
    [
        format_number(s.if1_rtt_ms),
        format_number(s.if1_bw_bps),
        format_number(s.if2_rtt_ms),
        format_number(s.if2_bw_bps),
    ]
}

/// Writes `runs.csv`-style output, one row per record.
pub fn write_runs_csv<W: Write>(records: &[RunRecord], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "page",
        "policy",
        "if1_rtt_ms",
        "if1_bw_bps",
        "if2_rtt_ms",
        "if2_bw_bps",
        "plt_s",
        "status",
    ])?;
    for r in records {
        let [a, b, c, d] = scenario_cols(&r.scenario);
        let plt = r.plt_s.map(format_number).unwrap_or_default();
        w.write_record([
            r.page.as_str(),
            &r.policy.to_string(),
            &a,
            &b,
            &c,
            &d,
            &plt,
            r.status.tag(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_speedups_csv(records: &[SpeedupRecord], path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        let [if1_rtt_ms, if1_bw_bps, if2_rtt_ms, if2_bw_bps] = scenario_cols(&r.scenario);
        w.serialize(SpeedupRow {
            page: r.page.clone(),
            policy: r.policy.to_string(),
            if1_rtt_ms,
            if1_bw_bps,
            if2_rtt_ms,
            if2_bw_bps,
            plt_s: format_number(r.plt_s),
            speedup: format_number(r.speedup),
            category: r.category.to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn bad_row(line: usize, what: &str) -> ExperimentError {
    ExperimentError::Io(std::io::Error::new(
        std::io::ErrorKind::InvalidData,
        format!("speedups row {line}: {what}"),
    ))
}

/// Reads a file produced by [`emit_reports`].
pub fn read_speedups_csv<R: Read>(input: R) -> Result<Vec<SpeedupRecord>, ExperimentError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SpeedupRow>().enumerate() {
        let row = row?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad_row(i + 1, &format!("bad number {s:?}")))
        };
        let policy: PolicyKind = row.policy.parse().map_err(|_| bad_row(i + 1, "unknown policy"))?;
        let category = row.category.parse().map_err(|e: String| bad_row(i + 1, &e))?;
        out.push(SpeedupRecord {
            page: row.page,
            policy,
            scenario: ScenarioKey {
                if1_rtt_ms: num(&row.if1_rtt_ms)?,
                if1_bw_bps: num(&row.if1_bw_bps)?,
                if2_rtt_ms: num(&row.if2_rtt_ms)?,
                if2_bw_bps: num(&row.if2_bw_bps)?,
            },
            plt_s: num(&row.plt_s)?,
            speedup: num(&row.speedup)?,
            category,
        });
    }
    Ok(out)
}

/// Sorted speedups with their cumulative fraction. Ties keep one point at
/// the highest fraction.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (i, x) in v.into_iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => out.push((x, frac)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorRow {
    pub factor: &'static str,
    pub level: String,
    /// Indexed like [`SpeedupCategory::ALL`].
    pub counts: [usize; 5],
}

impl FactorRow {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

type FactorFn = fn(&SpeedupRecord) -> (String, f64);

/// Category counts against every level of every factor. Levels are ordered
/// numerically for network factors and by first appearance otherwise.
pub fn category_by_factor(records: &[SpeedupRecord]) -> Vec<FactorRow> {
    let factors: [(&'static str, FactorFn); 6] = [
        ("policy", |r| (r.policy.to_string(), 0.0)),
        ("page", |r| (r.page.clone(), 0.0)),
        ("if1_rtt_ms", |r| {
            (format_number(r.scenario.if1_rtt_ms), r.scenario.if1_rtt_ms)
        }),
        ("if1_bw_bps", |r| {
            (format_number(r.scenario.if1_bw_bps), r.scenario.if1_bw_bps)
        }),
        ("if2_rtt_ms", |r| {
            (format_number(r.scenario.if2_rtt_ms), r.scenario.if2_rtt_ms)
        }),
        ("if2_bw_bps", |r| {
            (format_number(r.scenario.if2_bw_bps), r.scenario.if2_bw_bps)
        }),
    ];
    let mut rows = Vec::new();
    for (factor, level_of) in factors {
        let mut levels: Vec<(String, f64, [usize; 5])> = Vec::new();
        for r in records {
            let (label, num) = level_of(r);
            let slot = match levels.iter().position(|l| l.0 == label) {
                Some(i) => i,
                None => {
                    levels.push((label, num, [0; 5]));
                    levels.len() - 1
                }
            };
            levels[slot].2[r.category as usize] += 1;
        }
        if !matches!(factor, "policy" | "page") {
            levels.sort_by(|a, b| a.1.total_cmp(&b.1));
        }
        rows.extend(
            levels
                .into_iter()
                .map(|(level, _, counts)| FactorRow { factor, level, counts }),
        );
    }
    rows
}

/// Writes `speedups.csv`, one `ecdf_<policy>.csv` per policy and
/// `category_by_factor.csv` into `out_dir`. Returns the written paths.
pub fn emit_reports(records: &[SpeedupRecord], out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::NoRecords);
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let path = out_dir.join("speedups.csv");
    write_speedups_csv(records, &path)?;
    written.push(path);

    let mut by_policy: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_policy.entry(r.policy.to_string()).or_default().push(r.speedup);
    }
    for (policy, values) in by_policy {
        let path = out_dir.join(format!("ecdf_{policy}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["speedup", "cum_fraction"])?;
        for (x, f) in ecdf(&values) {
            w.write_record([format_number(x), format_number(f)])?;
        }
        w.flush()?;
        written.push(path);
    }

    let path = out_dir.join("category_by_factor.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["factor", "level"];
    header.extend(SpeedupCategory::ALL.iter().map(|c| c.label()));
    header.push("total");
    w.write_record(&header)?;
    for row in category_by_factor(records) {
        let mut rec = vec![row.factor.to_string(), row.level.clone()];
        rec.extend(row.counts.iter().map(|c| c.to_string()));
        rec.push(row.total().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(policy: PolicyKind, if1_rtt: f64, speedup: f64) -> SpeedupRecord {
        SpeedupRecord {
            page: "p".into(),
            policy,
            scenario: ScenarioKey {
                if1_rtt_ms: if1_rtt,
                if1_bw_bps: 2e6,
                if2_rtt_ms: 50.0,
                if2_bw_bps: 0.5e6,
            },
            plt_s: 1.0 / speedup,
            speedup,
            category: SpeedupCategory::of(speedup),
        }
    }

    #[test]
    fn numbers_have_nine_significant_digits() {
        assert_eq!(format_number(0.1 + 0.2), "0.3");
        assert_eq!(format_number(2.303328), "2.303328");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333");
        assert_eq!(format_number(500000.0), "500000");
        assert_eq!(format_number(123456789012.0), "123456789000");
    }

    #[test]
    fn ecdf_of_constant_is_a_step() {
        assert_eq!(ecdf(&[1.0, 1.0, 1.0]), vec![(1.0, 1.0)]);
        assert_eq!(ecdf(&[3.0, 1.0]), vec![(1.0, 0.5), (3.0, 1.0)]);
        assert!(ecdf(&[]).is_empty());
    }

    #[test]
    fn emits_one_ecdf_per_policy() {
        let dir = tempfile::tempdir().unwrap();
        let policies = [PolicyKind::Interface(0), PolicyKind::Eaf, PolicyKind::MptcpRnd];
        let mut records = Vec::new();
        for p in policies {
            for i in 0..10 {
                records.push(rec(p, 10.0 * (i + 1) as f64, 0.5 + i as f64));
            }
        }
        let files = emit_reports(&records, dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        let ecdfs = files
            .iter()
            .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("ecdf_"))
            .count();
        assert_eq!(ecdfs, 3);
        let back = read_speedups_csv(fs::File::open(dir.path().join("speedups.csv")).unwrap()).unwrap();
        assert_eq!(back.len(), 30);
        assert_eq!(back[3].speedup, 3.5);
        assert_eq!(back[3].category, SpeedupCategory::From2To5x);
    }

    #[test]
    fn cross_tab_conserves_counts() {
        let records: Vec<_> = (0..40)
            .map(|i| rec(PolicyKind::Eaf, [10.0, 20.0][i % 2], 0.3 * i as f64 + 0.1))
            .collect();
        let rows = category_by_factor(&records);
        for factor in ["policy", "page", "if1_rtt_ms", "if1_bw_bps", "if2_rtt_ms", "if2_bw_bps"] {
            let total: usize = rows.iter().filter(|r| r.factor == factor).map(FactorRow::total).sum();
            assert_eq!(total, 40, "{factor}");
        }
        let rtt_rows: Vec<_> = rows.iter().filter(|r| r.factor == "if1_rtt_ms").collect();
        assert_eq!(rtt_rows.len(), 2);
        assert_eq!(rtt_rows[0].level, "10");
        assert_eq!(rtt_rows[0].total(), 20);
    }

    #[test]
    fn empty_input_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_reports(&[], dir.path()), Err(ExperimentError::NoRecords)));
    }

    #[test]
    fn runs_csv_header_and_failed_rows() {
        let mut buf = Vec::new();
        let r = RunRecord {
            page: "p".into(),
            policy: PolicyKind::Interface(1),
            scenario: rec(PolicyKind::Eaf, 10.0, 1.0).scenario,
            plt_s: None,
            status: super::super::RunStatus::Error("invalid interface".into()),
        };
        write_runs_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "page,policy,if1_rtt_ms,if1_bw_bps,if2_rtt_ms,if2_bw_bps,plt_s,status"
        );
        assert_eq!(lines.next().unwrap(), "p,if2,10,2000000,50,500000,,invalid interface");
    }
}
