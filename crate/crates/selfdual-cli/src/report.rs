//! JSON report assembled by every subcommand.

use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub id: String,
    /// Names the statement being checked.
    pub anchor: String,
    pub residual: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl CheckRecord {
    /// PASS iff `residual < threshold`; NaN fails.
    pub fn new(
        id: impl Into<String>,
        anchor: impl Into<String>,
        residual: f64,
        threshold: f64,
    ) -> Self {
        let verdict = if residual < threshold {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        CheckRecord {
            id: id.into(),
            anchor: anchor.into(),
            residual,
            threshold,
            verdict,
        }
    }

    /// Records a yes/no outcome as residual 0 or 1 against threshold 0.5.
    pub fn flag(id: impl Into<String>, anchor: impl Into<String>, ok: bool) -> Self {
        CheckRecord::new(id, anchor, if ok { 0.0 } else { 1.0 }, 0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Conventions {
    pub axis_order: &'static str,
    pub sign: &'static str,
    pub monodromy: String,
}

impl Conventions {
    pub fn new(monodromy: &str) -> Self {
        Conventions {
            axis_order: "x_1..x_n, y1_1..y1_n, y2_1..y2_n; lattice coordinates (r, s1, s2) on X",
            sign: "basis blades in increasing axis order; contraction inserts into the first slot",
            monodromy: monodromy.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub suite: String,
    pub conventions: Conventions,
    pub config: Value,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
    pub data: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl Report {
    pub fn new(
        suite: &str,
        conventions: Conventions,
        config: Value,
        checks: Vec<CheckRecord>,
        data: Value,
    ) -> Self {
        let passed = checks.iter().filter(|c| c.verdict == Verdict::Pass).count();
        Report {
            schema_version: SCHEMA_VERSION,
            suite: suite.to_string(),
            conventions,
            config,
            summary: Summary {
                total: checks.len(),
                passed,
                failed: checks.len() - passed,
            },
            checks,
            data,
            wall_time_s: None,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_rule() {
        assert_eq!(CheckRecord::new("a", "b", 0.5, 1.0).verdict, Verdict::Pass);
        assert_eq!(CheckRecord::new("a", "b", 1.0, 1.0).verdict, Verdict::Fail);
        assert_eq!(
            CheckRecord::new("a", "b", f64::NAN, 1.0).verdict,
            Verdict::Fail
        );
        assert_eq!(CheckRecord::flag("a", "b", false).verdict, Verdict::Fail);
    }

    #[test]
    fn summary_counts() {
        let r = Report::new(
            "s",
            Conventions::new("proof-translation"),
            Value::Null,
            vec![
                CheckRecord::flag("a", "x", true),
                CheckRecord::flag("b", "x", false),
            ],
            Value::Null,
        );
        assert_eq!(
            r.summary,
            Summary {
                total: 2,
                passed: 1,
                failed: 1
            }
        );
        assert!(!r.all_passed());
        let text = serde_json::to_string(&r).unwrap();
        assert!(!text.contains("wall_time_s"));
    }
}
