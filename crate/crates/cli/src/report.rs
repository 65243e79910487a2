//! The aggregated `run_report.json`.

use serde::{Deserialize, Serialize};

use crate::stages::{
    certificate_checks, dynamics_checks, theorem_a_checks, CheckFile, ConstantsFile, DynamicsFile, FixedPointFile,
    SpectrumFile,
};

/// One checked number and the tolerance it was held to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `"<="`, `">="` or `">"`; absent when the producer decided pass/fail.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<String>,
    pub pass: bool,
}

impl Check {
    fn with(name: &str, value: f64, tolerance: f64, op: &str, pass: bool) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            comparison: Some(op.to_string()),
            pass,
        }
    }

    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self::with(name, value, tolerance, "<=", value <= tolerance)
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self::with(name, value, tolerance, ">=", value >= tolerance)
    }

    pub fn above(name: &str, value: f64, tolerance: f64) -> Self {
        Self::with(name, value, tolerance, ">", value > tolerance)
    }

    /// A yes/no property recorded as `1` or `0` against `1`.
    pub fn flag(name: &str, ok: bool) -> Self {
        Self::with(name, if ok { 1.0 } else { 0.0 }, 1.0, ">=", ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    #[serde(rename = "theorem_A")]
    pub theorem_a: Vec<Check>,
    #[serde(rename = "theorem_B")]
    pub theorem_b: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    #[serde(rename = "theorem_A")]
    pub theorem_a: String,
    #[serde(rename = "theorem_B")]
    pub theorem_b: String,
    pub checks: Verdicts,
    pub assumptions: CheckFile,
    pub constants: ConstantsFile,
    pub fixed_point: FixedPointFile,
    pub spectrum: SpectrumFile,
    pub dynamics: Option<DynamicsFile>,
}

fn verdict(checks: &[Check]) -> String {
    if checks.iter().all(|c| c.pass) { "pass" } else { "fail" }.to_string()
}

impl RunReport {
    pub fn new(
        config_hash: String,
        assumptions: CheckFile,
        constants: ConstantsFile,
        fixed_point: FixedPointFile,
        spectrum: SpectrumFile,
        dynamics: Option<DynamicsFile>,
    ) -> Self {
        let mut a = vec![Check::flag("existence_hypotheses", assumptions.existence_ready)];
        a.extend(theorem_a_checks(&fixed_point));
        let mut b = certificate_checks(&spectrum);
        match &dynamics {
            Some(d) => b.extend(dynamics_checks(d)),
            None => b.push(Check::flag("dynamics_run", false)),
        }
        Self {
            config_hash,
            theorem_a: verdict(&a),
            theorem_b: verdict(&b),
            checks: Verdicts { theorem_a: a, theorem_b: b },
            assumptions,
            constants,
            fixed_point,
            spectrum,
            dynamics,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_compare_against_their_tolerance() {
        assert!(Check::at_most("a", 1e-9, 1e-8).pass);
        assert!(!Check::at_most("a", f64::NAN, 1e-8).pass);
        assert!(!Check::above("b", 0.0, 0.0).pass);
        assert!(Check::at_least("c", 0.5, 0.5).pass);
        let f = Check::flag("d", false);
        assert_eq!((f.value, f.tolerance, f.pass), (0.0, 1.0, false));
    }

    #[test]
    fn verdict_needs_every_check() {
        assert_eq!(verdict(&[Check::flag("x", true)]), "pass");
        assert_eq!(verdict(&[Check::flag("x", true), Check::flag("y", false)]), "fail");
    }
}
