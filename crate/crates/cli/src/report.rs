//! JSON-lines run reports.
//!
//! One line per record, sorted by name, then a summary line carrying the
//! environment stamp and the scenario digest.

use serde::Serialize;

use jetflow::covariance::CheckRecord;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Record {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Controls are reported but do not decide the overall result.
    pub control: bool,
}

impl From<CheckRecord> for Record {
    fn from(r: CheckRecord) -> Self {
        Record {
            name: r.name,
            max_error: r.max_error,
            tolerance: r.tolerance,
            passed: r.passed,
            control: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Environment {
    pub version: &'static str,
    pub os: &'static str,
    pub arch: &'static str,
    pub rng: &'static str,
    pub seed: u64,
}

impl Environment {
    pub fn new(seed: u64) -> Self {
        Environment {
            version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            rng: "ChaCha8",
            seed,
        }
    }
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    command: &'a str,
    passed: bool,
    failed: Vec<&'a str>,
    environment: &'a Environment,
    scenario_sha256: &'a str,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub command: &'static str,
    pub records: Vec<Record>,
    pub environment: Environment,
    pub scenario_sha256: String,
}

impl RunReport {
    pub fn new(command: &'static str, mut records: Vec<Record>, environment: Environment, digest: &str) -> Self {
        records.sort_by(|a, b| a.name.cmp(&b.name));
        RunReport {
            command,
            records,
            environment,
            scenario_sha256: digest.to_string(),
        }
    }

    pub fn failed(&self) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| !r.control && !r.passed)
            .map(|r| r.name.as_str())
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failed().is_empty()
    }

    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        let summary = Summary {
            command: self.command,
            passed: self.passed(),
            failed: self.failed(),
            environment: &self.environment,
            scenario_sha256: &self.scenario_sha256,
        };
        out.push_str(&serde_json::to_string(&serde_json::json!({ "summary": summary })).expect("summary serializes"));
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(name: &str, err: f64, control: bool) -> Record {
        Record {
            control,
            ..CheckRecord::new(name, err, 1e-7).into()
        }
    }

    #[test]
    fn records_are_sorted_and_controls_do_not_fail_the_run() {
        let r = RunReport::new(
            "check",
            vec![rec("b", 0.0, false), rec("a", 1.0, true)],
            Environment::new(3),
            "00",
        );
        assert_eq!(r.records[0].name, "a");
        assert!(r.passed());
        let text = r.to_json_lines();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().last().unwrap().contains("\"passed\":true"));
    }

    #[test]
    fn a_failing_record_fails_the_run() {
        let r = RunReport::new("check", vec![rec("x", 1.0, false)], Environment::new(0), "00");
        assert_eq!(r.failed(), vec!["x"]);
        let first: serde_json::Value = serde_json::from_str(r.to_json_lines().lines().next().unwrap()).unwrap();
        assert_eq!(first["tolerance"], 1e-7);
    }
}
