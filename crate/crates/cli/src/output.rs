//! Result files. Every CSV starts with the schema line [`CSV_SCHEMA`].

use std::fmt::Write as _;
use std::path::Path;

use sparseprop::effort::EffortLedger;
use sparseprop::trainer::RunRecord;

use crate::error::{CliError, CliResult};

pub const CSV_SCHEMA: &str = "# sptn-csv-v1";

pub const RECORDS_HEADER: &str =
    "epoch,train_loss_mean,test_accuracy,lr,forward_macs,backward_macs,update_macs,samples_skipped";

pub const COMPARISON_HEADER: &str =
    "name,strategy,final_accuracy,effort_ratio,effort_ratio_incl_forward,samples_skipped";

pub const SWEEP_HEADER: &str = "row,config,seed,s_min,s_max,zeta,skip_threshold,\
final_accuracy,final_accuracy_std,backward_macs,backward_macs_std,\
update_macs,update_macs_std,samples_skipped,samples_skipped_std";

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn csv(header: &str) -> String {
    format!("{CSV_SCHEMA}\n{header}\n")
}

pub fn records_csv(records: &[RunRecord]) -> String {
    let mut out = csv(RECORDS_HEADER);
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            r.train_loss_mean,
            r.test_accuracy,
            r.lr,
            r.forward_macs,
            r.backward_macs,
            r.update_macs,
            r.samples_skipped
        );
    }
    out
}

pub fn ledger_json(ledger: &EffortLedger) -> String {
    let mut s = serde_json::to_string_pretty(ledger).expect("ledger serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub strategy: String,
    pub final_accuracy: f64,
    pub effort_ratio: f64,
    pub effort_ratio_incl_forward: f64,
    pub samples_skipped: u64,
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = csv(COMPARISON_HEADER);
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.name,
            r.strategy,
            r.final_accuracy,
            r.effort_ratio,
            r.effort_ratio_incl_forward,
            r.samples_skipped
        );
    }
    out
}

/// Fixed-width rendering of `rows` for the terminal.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let header = [
        "name",
        "strategy",
        "accuracy",
        "effort",
        "effort+fwd",
        "skipped",
    ];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.strategy.clone(),
                format!("{:.2}%", 100.0 * r.final_accuracy),
                format!("{:.4}", r.effort_ratio),
                format!("{:.4}", r.effort_ratio_incl_forward),
                r.samples_skipped.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cols: [&str; 6]| {
        let mut l = String::new();
        for (i, c) in cols.iter().enumerate() {
            if i < 2 {
                let _ = write!(l, "{c:<w$}  ", w = widths[i]);
            } else {
                let _ = write!(l, "{c:>w$}  ", w = widths[i]);
            }
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(header);
    for row in &cells {
        line(row.each_ref().map(String::as_str));
    }
    out
}

/// Per-run sweep result.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub config: usize,
    pub seed: u64,
    pub final_accuracy: f64,
    pub backward_macs: u64,
    pub update_macs: u64,
    pub samples_skipped: u64,
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One `run` row per (config, seed) followed by one `mean` row per config.
/// `points[c]` is `(s_min, s_max, zeta, skip_threshold)` of config `c`.
pub fn sweep_csv(points: &[(f64, f64, f64, f64)], runs: &[SweepRun]) -> String {
    let mut out = csv(SWEEP_HEADER);
    for (c, &(s_min, s_max, zeta, thr)) in points.iter().enumerate() {
        let mine: Vec<&SweepRun> = runs.iter().filter(|r| r.config == c).collect();
        for r in &mine {
            let _ = writeln!(
                out,
                "run,{c},{},{s_min},{s_max},{zeta},{thr},{},,{},,{},,{},",
                r.seed, r.final_accuracy, r.backward_macs, r.update_macs, r.samples_skipped
            );
        }
        if mine.is_empty() {
            continue;
        }
        let stat =
            |f: &dyn Fn(&SweepRun) -> f64| mean_std(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (acc, acc_sd) = stat(&|r| r.final_accuracy);
        let (bw, bw_sd) = stat(&|r| r.backward_macs as f64);
        let (up, up_sd) = stat(&|r| r.update_macs as f64);
        let (sk, sk_sd) = stat(&|r| r.samples_skipped as f64);
        let _ = writeln!(
            out,
            "mean,{c},,{s_min},{s_max},{zeta},{thr},{acc},{acc_sd},{bw},{bw_sd},{up},{up_sd},{sk},{sk_sd}"
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_csv_layout() {
        let rec = RunRecord {
            epoch: 1,
            train_loss_mean: 0.5,
            test_accuracy: 0.75,
            lr: 0.125,
            forward_macs: 10,
            backward_macs: 20,
            update_macs: 30,
            samples_skipped: 4,
        };
        let text = records_csv(&[rec]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            [CSV_SCHEMA, RECORDS_HEADER, "1,0.5,0.75,0.125,10,20,30,4"]
        );
    }

    #[test]
    fn mean_std_matches_hand_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sweep_rows_per_config() {
        let runs: Vec<SweepRun> = (0..2)
            .flat_map(|c| {
                (0..3).map(move |s| SweepRun {
                    config: c,
                    seed: s,
                    final_accuracy: 0.5 + s as f64 * 0.1,
                    backward_macs: 100 * (s + 1),
                    update_macs: 7,
                    samples_skipped: 0,
                })
            })
            .collect();
        let text = sweep_csv(&[(0.1, 0.8, 0.9, 0.5), (0.1, 0.4, 0.9, 0.5)], &runs);
        let lines: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(lines.iter().filter(|l| l.starts_with("mean,")).count(), 2);
        assert!(lines[3].starts_with("mean,0,,0.1,0.8,0.9,0.5,"));
        let acc: f64 = lines[3].split(',').nth(7).unwrap().parse().unwrap();
        assert!((acc - 0.6).abs() < 1e-12);
        assert!(lines[3].contains(",200,100,7,0,0,0"));
        let fields = SWEEP_HEADER.split(',').count();
        assert!(text.lines().skip(1).all(|l| l.split(',').count() == fields));
    }

    #[test]
    fn table_columns_align() {
        let rows = vec![
            ComparisonRow {
                name: "full".into(),
                strategy: "full".into(),
                final_accuracy: 0.95,
                effort_ratio: 1.0,
                effort_ratio_incl_forward: 1.0,
                samples_skipped: 0,
            },
            ComparisonRow {
                name: "sparse-long-name".into(),
                strategy: "tinypropv2".into(),
                final_accuracy: 0.9412,
                effort_ratio: 0.0634,
                effort_ratio_incl_forward: 0.3,
                samples_skipped: 75206,
            },
        ];
        let table = comparison_table(&rows);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
        assert_eq!(lines[0].find("strategy"), lines[2].find("tinypropv2"));
        assert!(lines[2].contains("94.12%"));
    }
}
