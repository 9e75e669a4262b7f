use std::fmt;
use std::io::Write;

use crate::error::Result;

/// One inequality `lhs ≤ rhs` evaluated on solver output.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`
    pub slack: f64,
    /// Admissible negative slack.
    pub tolerance: f64,
    /// `slack ≥ −tolerance`
    pub pass: bool,
    /// Diagnostic reports never fail a run.
    pub asserted: bool,
    /// `(parameter, value)` pairs, e.g. a refinement or sweep history.
    pub history: Vec<(f64, f64)>,
    pub note: String,
}

impl EstimateReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = rhs - lhs;
        EstimateReport {
            name: name.into(),
            lhs,
            rhs,
            slack,
            tolerance,
            pass: slack >= -tolerance,
            asserted: true,
            history: Vec::new(),
            note: String::new(),
        }
    }

    pub fn diagnostic(mut self) -> Self {
        self.asserted = false;
        self
    }

    pub fn with_history(mut self, history: Vec<(f64, f64)>) -> Self {
        self.history = history;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    /// True unless this is an asserted check that failed.
    pub fn acceptable(&self) -> bool {
        self.pass || !self.asserted
    }
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.pass, self.asserted) {
            (true, true) => "PASS",
            (false, true) => "FAIL",
            (true, false) => "ok (diagnostic)",
            (false, false) => "miss (diagnostic)",
        };
        write!(
            f,
            "{:<28} {:<17} lhs={:.6e} rhs={:.6e} slack={:.3e}",
            self.name, status, self.lhs, self.rhs, self.slack
        )?;
        if !self.note.is_empty() {
            write!(f, "  [{}]", self.note)?;
        }
        Ok(())
    }
}

/// CSV rows `check,lhs,rhs,slack,pass`.
pub fn write_reports_csv<W: Write>(reports: &[EstimateReport], mut out: W) -> Result<()> {
    writeln!(out, "check,lhs,rhs,slack,pass")?;
    for r in reports {
        writeln!(out, "{},{:e},{:e},{:e},{}", r.name, r.lhs, r.rhs, r.slack, r.pass)?;
    }
    Ok(())
}

/// One line per report.
pub fn summary(reports: &[EstimateReport]) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_follows_slack() {
        assert!(EstimateReport::new("a", 1.0, 2.0, 0.0).pass);
        assert!(!EstimateReport::new("a", 2.0, 1.0, 0.5).pass);
        assert!(EstimateReport::new("a", 2.0, 1.0, 1.0).pass);
        let d = EstimateReport::new("d", 2.0, 1.0, 0.0).diagnostic();
        assert!(!d.pass && d.acceptable());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_reports_csv(&[EstimateReport::new("x", 0.5, 1.0, 0.0)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "check,lhs,rhs,slack,pass\nx,5e-1,1e0,5e-1,true\n");
    }
}
