//! ROC curves, TPR at fixed FPR, AUC and the report files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FPR levels every report carries.
pub const REPORT_FPRS: [f64; 3] = [0.001, 0.01, 0.05];

pub const REPORT_HEADER: &str =
    "attack,tpr_at_0.1pct,tpr_at_1pct,tpr_at_5pct,auc,train_seconds,attack_seconds";

/// `(fpr, tpr)` operating points from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

fn class_counts(statistics: &[f64], is_member: &[bool]) -> Result<(usize, usize)> {
    if statistics.len() != is_member.len() {
        return Err(Error::Dimension(format!(
            "{} statistics but {} membership labels",
            statistics.len(),
            is_member.len()
        )));
    }
    if statistics.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN attack statistic".into()));
    }
    let pos = is_member.iter().filter(|&&m| m).count();
    let neg = is_member.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument(
            "ROC needs both members and non-members".into(),
        ));
    }
    Ok((pos, neg))
}

/// Sweeps the threshold down through the distinct statistic values, larger
/// meaning "member". Equal statistics enter together.
pub fn roc_curve(statistics: &[f64], is_member: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(statistics, is_member)?;
    let mut order: Vec<usize> = (0..statistics.len()).collect();
    order.sort_by(|&a, &b| statistics[b].total_cmp(&statistics[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = statistics[order[i]];
        while i < order.len() && statistics[order[i]] == s {
            if is_member[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve { points })
}

impl RocCurve {
    /// Largest TPR among operating points with FPR at most `alpha`.
    pub fn tpr_at_fpr(&self, alpha: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.0 <= alpha)
            .map(|p| p.1)
            .fold(0.0, f64::max)
    }

    /// Trapezoidal area under the curve.
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
            .sum()
    }
}

pub fn tpr_at_fpr(curve: &RocCurve, alpha: f64) -> f64 {
    curve.tpr_at_fpr(alpha)
}

pub fn auc(curve: &RocCurve) -> f64 {
    curve.auc()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub attack_name: String,
    /// `(fpr, tpr)` at each of [`REPORT_FPRS`].
    pub tpr_at: Vec<(f64, f64)>,
    pub auc: f64,
    pub n_members: usize,
    pub n_nonmembers: usize,
    pub train_seconds: f64,
    pub attack_seconds: f64,
    pub roc: RocCurve,
}

impl AttackReport {
    pub fn from_statistics(
        attack_name: &str,
        statistics: &[f64],
        is_member: &[bool],
        train_seconds: f64,
        attack_seconds: f64,
    ) -> Result<Self> {
        let (pos, neg) = class_counts(statistics, is_member)?;
        let roc = roc_curve(statistics, is_member)?;
        Ok(AttackReport {
            attack_name: attack_name.to_string(),
            tpr_at: REPORT_FPRS.iter().map(|&a| (a, roc.tpr_at_fpr(a))).collect(),
            auc: roc.auc(),
            n_members: pos,
            n_nonmembers: neg,
            train_seconds,
            attack_seconds,
            roc,
        })
    }

    pub fn tpr(&self, fpr: f64) -> Option<f64> {
        self.tpr_at.iter().find(|p| p.0 == fpr).map(|p| p.1)
    }
}

/// Path of the ROC plot-data file written next to a report.
pub fn roc_data_path(report_path: &Path) -> PathBuf {
    let stem = report_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report_path.with_file_name(format!("{stem}_roc.csv"))
}

pub fn report_csv(reports: &[AttackReport]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in reports {
        let t = |a: f64| r.tpr(a).unwrap_or(f64::NAN);
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.attack_name,
            t(0.001),
            t(0.01),
            t(0.05),
            r.auc,
            r.train_seconds,
            r.attack_seconds
        );
    }
    s
}

pub fn roc_csv(reports: &[AttackReport]) -> String {
    let mut s = String::from("attack,fpr,tpr\n");
    for r in reports {
        for (f, t) in &r.roc.points {
            let _ = writeln!(s, "{},{f:.9},{t:.9}", r.attack_name);
        }
    }
    s
}

/// Writes the summary CSV to `path` and the ROC plot data beside it.
/// Returns the paths written.
pub fn write_report(reports: &[AttackReport], path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    crate::pipeline::write_atomic(path, report_csv(reports).as_bytes())?;
    let roc = roc_data_path(path);
    crate::pipeline::write_atomic(&roc, roc_csv(reports).as_bytes())?;
    Ok(vec![path.to_path_buf(), roc])
}

/// One parsed row of a report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub attack: String,
    pub tpr: [f64; 3],
    pub auc: f64,
    pub train_seconds: f64,
    pub attack_seconds: f64,
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(bad("unexpected report header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("line {} has {} fields", i + 2, f.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("line {}: bad number {s:?}", i + 2)))
            };
            Ok(ReportRow {
                attack: f[0].to_string(),
                tpr: [num(f[1])?, num(f[2])?, num(f[3])?],
                auc: num(f[4])?,
                train_seconds: num(f[5])?,
                attack_seconds: num(f[6])?,
            })
        })
        .collect()
}
