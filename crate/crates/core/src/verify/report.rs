//! Verification records and their CSV and text renderings.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    Ipc,
    T14v,
    T14vi,
    T14vii,
    T14viii,
    Hj1,
    Hj2,
    WeakInv,
    StrongInv,
    P7Ratio,
    /// Discrete distance decay along a steered path.
    P7Decay,
}

impl Condition {
    pub fn id(self) -> &'static str {
        match self {
            Condition::Ipc => "IPC",
            Condition::T14v => "T14-v",
            Condition::T14vi => "T14-vi",
            Condition::T14vii => "T14-vii",
            Condition::T14viii => "T14-viii",
            Condition::Hj1 => "HJ1",
            Condition::Hj2 => "HJ2",
            Condition::WeakInv => "weak-inv",
            Condition::StrongInv => "strong-inv",
            Condition::P7Ratio => "P7-ratio",
            Condition::P7Decay => "P7-decay",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// How a residual is compared with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `residual <= tol`
    Le,
    /// `residual >= -tol`
    Ge,
    /// `|residual| <= tol`
    AbsLe,
    /// `residual < tol`
    Lt,
}

impl Relation {
    pub fn holds(self, residual: f64, tol: f64) -> bool {
        match self {
            Relation::Le => residual <= tol,
            Relation::Ge => residual >= -tol,
            Relation::AbsLe => residual.abs() <= tol,
            Relation::Lt => residual < tol,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=-",
            Relation::AbsLe => "|.|<=",
            Relation::Lt => "<",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub condition: Condition,
    pub t: f64,
    pub x: Point,
    pub residual: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
    pub note: String,
}

impl ReportRow {
    pub fn new(condition: Condition, t: f64, x: &[f64], residual: f64, relation: Relation, tolerance: f64) -> Self {
        ReportRow {
            condition,
            t,
            x: x.iter().copied().collect(),
            residual,
            tolerance,
            relation,
            pass: relation.holds(residual, tolerance),
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub rows: Vec<ReportRow>,
    /// Probes that were skipped, with the reason.
    pub notes: Vec<String>,
    /// Named scalar outputs such as estimated constants.
    pub metrics: BTreeMap<String, f64>,
}

impl VerificationReport {
    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn merge(&mut self, other: VerificationReport) {
        self.rows.extend(other.rows);
        self.notes.extend(other.notes);
        self.metrics.extend(other.metrics);
    }

    pub fn rows_for(&self, c: Condition) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.condition == c)
    }

    pub fn count(&self, c: Condition) -> usize {
        self.rows_for(c).count()
    }

    pub fn failures(&self, c: Condition) -> usize {
        self.rows_for(c).filter(|r| !r.pass).count()
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Whether every row of `c` passes; false when there are none.
    pub fn condition_passes(&self, c: Condition) -> bool {
        self.count(c) > 0 && self.failures(c) == 0
    }

    /// Largest `|residual|` among rows of `c`.
    pub fn max_abs_residual(&self, c: Condition) -> Option<f64> {
        self.rows_for(c).map(|r| r.residual.abs()).reduce(f64::max)
    }

    pub fn conditions(&self) -> Vec<Condition> {
        let mut cs: Vec<Condition> = self.rows.iter().map(|r| r.condition).collect();
        cs.sort();
        cs.dedup();
        cs
    }

    /// CSV with columns `condition, t, x_1..x_n, residual, relation,
    /// tolerance, pass, note`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.rows.iter().map(|r| r.x.len()).max().unwrap_or(1);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["condition".to_string(), "t".into()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend(["residual", "relation", "tolerance", "pass", "note"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.condition.id().to_string(), r.t.to_string()];
            rec.extend((0..n).map(|i| r.x.get(i).map_or(String::new(), |v| v.to_string())));
            rec.push(r.residual.to_string());
            rec.push(r.relation.symbol().to_string());
            rec.push(r.tolerance.to_string());
            rec.push(if r.pass { "PASS" } else { "FAIL" }.to_string());
            rec.push(r.note.clone());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
        Ok(())
    }

    /// One line per condition with pass counts and the worst residual.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in self.conditions() {
            let total = self.count(c);
            let fails = self.failures(c);
            let worst = self.max_abs_residual(c).unwrap_or(0.0);
            let status = if fails == 0 { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "{:<10} {status}  {}/{} rows pass, max |residual| = {worst:.3e}\n",
                c.id(),
                total - fails,
                total
            ));
        }
        for (k, v) in &self.metrics {
            out.push_str(&format!("{k} = {v}\n"));
        }
        if !self.notes.is_empty() {
            out.push_str(&format!("{} probes skipped\n", self.notes.len()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relations_and_csv() {
        let mut r = VerificationReport::default();
        r.push(ReportRow::new(Condition::T14vii, 0.0, &[1.0], 1e-10, Relation::Le, 1e-9));
        r.push(ReportRow::new(Condition::T14viii, 0.0, &[0.0], -1e-3, Relation::Ge, 1e-9));
        r.push(ReportRow::new(Condition::Ipc, 0.0, &[0.8], 0.0, Relation::Lt, 0.0));
        assert!(r.condition_passes(Condition::T14vii));
        assert_eq!(r.failures(Condition::T14viii), 1);
        assert!(!r.condition_passes(Condition::Ipc));
        assert!(!r.condition_passes(Condition::Hj1));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("condition,t,x_1,residual,relation,tolerance,pass,note\n"));
        assert_eq!(text.lines().filter(|l| l.contains("FAIL")).count(), 2);
        assert!(r.summary().contains("T14-vii    PASS"));
    }
}
