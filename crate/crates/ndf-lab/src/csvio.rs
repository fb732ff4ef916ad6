//! The experiment CSV formats.
//!
//! Four files, all with mandatory headers and real values printed with six
//! significant digits:
//!
//! - `curve.csv`     `run_id,strategy,effective_instances,test_accuracy`
//! - `episodes.csv`  `episode,i_tau,reward,baseline`
//! - `filterlog.csv` `epoch,bucket,filtered_count`
//! - `droplog.csv`   `epoch,ratio`

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{AccuracyCurvePoint, EpisodeRecord};
use crate::strategies::{DropLog, HardnessHistogram, HARDNESS_BUCKETS};

/// Formats a real with six significant digits, in plain positional notation.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// curve.csv
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub run_id: u64,
    pub strategy: String,
    pub effective_instances: u64,
    pub test_accuracy: f64,
}

pub fn curve_rows(run_id: u64, strategy: &str, curve: &[AccuracyCurvePoint]) -> Vec<CurveRow> {
    curve
        .iter()
        .map(|p| CurveRow {
            run_id,
            strategy: strategy.to_string(),
            effective_instances: p.effective_instances,
            test_accuracy: p.test_accuracy,
        })
        .collect()
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut out = String::from("run_id,strategy,effective_instances,test_accuracy\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.run_id,
            r.strategy,
            r.effective_instances,
            fmt_sig6(r.test_accuracy)
        );
    }
    write_file(path, &out)
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    let text = read_file(path)?;
    let bad = |line: usize, reason: &str| Error::FileFormat {
        path: path.to_path_buf(),
        reason: format!("line {}: {reason}", line + 1),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "run_id,strategy,effective_instances,test_accuracy")) => {}
        _ => {
            return Err(Error::FileFormat {
                path: path.to_path_buf(),
                reason: "missing curve.csv header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(bad(n, "expected 4 fields"));
        }
        rows.push(CurveRow {
            run_id: parts[0].parse().map_err(|_| bad(n, "bad run_id"))?,
            strategy: parts[1].to_string(),
            effective_instances: parts[2]
                .parse()
                .map_err(|_| bad(n, "bad effective_instances"))?,
            test_accuracy: parts[3].parse().map_err(|_| bad(n, "bad test_accuracy"))?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// episodes.csv
// ---------------------------------------------------------------------------

pub fn write_episodes(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut out = String::from("episode,i_tau,reward,baseline\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.episode,
            r.i_tau,
            fmt_sig6(r.reward),
            fmt_sig6(r.baseline)
        );
    }
    write_file(path, &out)
}

// ---------------------------------------------------------------------------
// filterlog.csv
// ---------------------------------------------------------------------------

pub fn write_filterlog(path: &Path, histogram: &HardnessHistogram) -> Result<()> {
    let mut out = String::from("epoch,bucket,filtered_count\n");
    for (epoch, counts) in histogram.epochs().iter().enumerate() {
        for (bucket, &count) in counts.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{}",
                epoch,
                histogram.bucket_label(bucket),
                count
            );
        }
    }
    write_file(path, &out)
}

/// Reads back `(epoch, bucket_index, count)` triples; used by the conservation
/// checks.
pub fn read_filterlog(path: &Path) -> Result<Vec<(usize, usize, u64)>> {
    let text = read_file(path)?;
    let bad = |line: usize, reason: &str| Error::FileFormat {
        path: path.to_path_buf(),
        reason: format!("line {}: {reason}", line + 1),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "epoch,bucket,filtered_count")) => {}
        _ => {
            return Err(Error::FileFormat {
                path: path.to_path_buf(),
                reason: "missing filterlog.csv header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(bad(n, "expected 3 fields"));
        }
        let epoch: usize = parts[0].parse().map_err(|_| bad(n, "bad epoch"))?;
        let label = parts[1].to_string();
        let bucket = match labels.iter().position(|l| l == &label) {
            Some(b) => b,
            None => {
                labels.push(label);
                if labels.len() > HARDNESS_BUCKETS {
                    return Err(bad(n, "more than five bucket labels"));
                }
                labels.len() - 1
            }
        };
        let count: u64 = parts[2].parse().map_err(|_| bad(n, "bad count"))?;
        rows.push((epoch, bucket, count));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// droplog.csv
// ---------------------------------------------------------------------------

pub fn write_droplog(path: &Path, log: &DropLog) -> Result<()> {
    let mut out = String::from("epoch,ratio\n");
    for (epoch, &ratio) in log.ratios().iter().enumerate() {
        let _ = writeln!(out, "{},{}", epoch, fmt_sig6(ratio));
    }
    write_file(path, &out)
}

/// Reads a drop log; the header line is optional so hand-written logs load
/// too. Epoch numbers must be consecutive from zero.
pub fn read_droplog(path: &Path) -> Result<DropLog> {
    let text = read_file(path)?;
    let bad = |line: usize, reason: &str| Error::FileFormat {
        path: path.to_path_buf(),
        reason: format!("line {}: {reason}", line + 1),
    };
    let mut ratios = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line == "epoch,ratio") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 2 {
            return Err(bad(n, "expected `epoch,ratio`"));
        }
        let epoch: usize = parts[0].parse().map_err(|_| bad(n, "bad epoch"))?;
        if epoch != ratios.len() {
            return Err(bad(n, "epochs must be consecutive from 0"));
        }
        let ratio: f64 = parts[1].parse().map_err(|_| bad(n, "bad ratio"))?;
        if !(0.0..=1.0).contains(&ratio) {
            return Err(bad(n, "ratio outside [0,1]"));
        }
        ratios.push(ratio);
    }
    DropLog::new(ratios)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formatting() {
        assert_eq!(fmt_sig6(0.0), "0.00000");
        assert_eq!(fmt_sig6(1.0), "1.00000");
        assert_eq!(fmt_sig6(0.5), "0.500000");
        assert_eq!(fmt_sig6(0.693147), "0.693147");
        assert_eq!(fmt_sig6(2.302585), "2.30259");
        assert_eq!(fmt_sig6(45000.0), "45000.0");
        assert_eq!(fmt_sig6(-0.25), "-0.250000");
    }

    #[test]
    fn droplog_roundtrip_and_headerless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("droplog.csv");
        let log = DropLog::new(vec![0.0, 0.125, 1.0]).unwrap();
        write_droplog(&path, &log).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,ratio\n0,0.00000\n1,0.125000\n2,1.00000\n"));
        let back = read_droplog(&path).unwrap();
        assert_eq!(back.ratios(), log.ratios());

        let bare = dir.path().join("bare.csv");
        std::fs::write(&bare, "0,0.5\n1,0.25\n").unwrap();
        let back = read_droplog(&bare).unwrap();
        assert_eq!(back.ratios(), &[0.5, 0.25]);
    }

    #[test]
    fn droplog_rejects_gaps_and_bad_ratios() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "0,0.5\n2,0.25\n").unwrap();
        assert!(read_droplog(&path).is_err());
        std::fs::write(&path, "0,1.5\n").unwrap();
        assert!(read_droplog(&path).is_err());
    }

    #[test]
    fn curve_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let rows = vec![
            CurveRow {
                run_id: 0,
                strategy: "ndf".into(),
                effective_instances: 500,
                test_accuracy: 0.8125,
            },
            CurveRow {
                run_id: 1,
                strategy: "unfiltered".into(),
                effective_instances: 1000,
                test_accuracy: 0.9,
            },
        ];
        write_curve(&path, &rows).unwrap();
        let back = read_curve(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].strategy, "ndf");
        assert_eq!(back[0].effective_instances, 500);
        assert!((back[1].test_accuracy - 0.9).abs() < 1e-12);
    }

    #[test]
    fn filterlog_header_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("filterlog.csv");
        let mut h = HardnessHistogram::new(20).unwrap();
        let losses: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut mask = vec![true; 20];
        mask[19] = false; // the largest loss -> rank 1 -> bucket "1-4"
        h.record(&losses, &mask, 0).unwrap();
        write_filterlog(&path, &h).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,bucket,filtered_count\n0,1-4,1\n"));
        let rows = read_filterlog(&path).unwrap();
        let total: u64 = rows.iter().map(|&(_, _, c)| c).sum();
        assert_eq!(total, 1);
    }
}
