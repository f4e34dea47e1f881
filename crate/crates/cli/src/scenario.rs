//! TOML scenario files.
//!
//! ```toml
//! n = 2
//! h11 = "1"
//! phi = [["1", "0"], ["0", "sin(x1)^2"]]
//! lagrangian = "y1^2 + y2^2"          # optional
//! seed = 7
//!
//! [change]                             # optional
//! time = "2*t + 1"
//! time_inverse = "(t - 1)/2"
//! space = ["x1 + x2", "x2"]
//! space_inverse = ["x1 - x2", "x2"]
//!
//! [connection]                         # optional, overrides the derived one
//! m = ["0", "0"]
//! n = [["0", "0"], ["0", "0"]]
//!
//! [[initial]]
//! t0 = 0.0
//! x0 = [1.5707963267948966, 0.0]
//! v0 = [0.0, 1.0]
//!
//! [integrator]
//! method = "rk4"                       # or "rk45"
//! dt = 1e-3
//! t_end = 1.0
//!
//! [check]
//! tolerance = 1e-7
//! generated_changes = 0
//! points = 4
//! ```

use std::sync::Arc;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use jetflow::dynamics::Stepper;
use jetflow::lagrange::{ExprLagrangian, LagrangianFn};
use jetflow::metrics::{ExprSpatialMetric, ExprTemporalMetric, SpatialMetric, TemporalMetric};
use jetflow::spray::{ExprConnection, NonlinearConnection};
use jetflow::{JetChange, SpaceChange, TimeChange};

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    n: usize,
    h11: Option<String>,
    phi: Option<Vec<Vec<String>>>,
    lagrangian: Option<String>,
    #[serde(default)]
    seed: u64,
    change: Option<ChangeSpec>,
    connection: Option<ConnectionSpec>,
    #[serde(default)]
    initial: Vec<Initial>,
    #[serde(default)]
    integrator: IntegratorSpec,
    #[serde(default)]
    check: CheckSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChangeSpec {
    #[serde(default = "ident_t")]
    time: String,
    #[serde(default = "ident_t")]
    time_inverse: String,
    space: Option<Vec<String>>,
    space_inverse: Option<Vec<String>>,
}

fn ident_t() -> String {
    "t".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectionSpec {
    m: Vec<String>,
    n: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    #[serde(default)]
    pub t0: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    /// Overrides the integrator's end time for this curve.
    pub t_end: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Rk4,
    Rk45,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_adaptive_tol")]
    pub atol: f64,
    #[serde(default = "default_adaptive_tol")]
    pub rtol: f64,
    pub t_end: Option<f64>,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_adaptive_tol() -> f64 {
    1e-10
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec {
            method: Method::Rk4,
            dt: default_dt(),
            atol: default_adaptive_tol(),
            rtol: default_adaptive_tol(),
            t_end: None,
        }
    }
}

impl IntegratorSpec {
    pub fn stepper(&self) -> Stepper {
        match self.method {
            Method::Rk4 => Stepper::Rk4 { dt: self.dt },
            Method::Rk45 => Stepper::Rk45 {
                atol: self.atol,
                rtol: self.rtol,
            },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    /// Tolerance of the covariance records.
    #[serde(default = "default_check_tol")]
    pub tolerance: f64,
    /// Random changes drawn from the generator in addition to `[change]`.
    #[serde(default)]
    pub generated_changes: usize,
    /// Probe points per change.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub corrupt_connection: bool,
    /// Points sampled by `el-compare`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Tolerance of the scaled Euler–Lagrange residual.
    #[serde(default = "default_el_tol")]
    pub el_tolerance: f64,
    /// Half-width of the sampling box around each initial condition.
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_check_tol() -> f64 {
    jetflow::covariance::DEFAULT_TOLERANCE
}

fn default_points() -> usize {
    4
}

fn default_samples() -> usize {
    100
}

fn default_el_tol() -> f64 {
    1e-9
}

fn default_radius() -> f64 {
    0.5
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec {
            tolerance: default_check_tol(),
            generated_changes: 0,
            points: default_points(),
            corrupt_connection: false,
            samples: default_samples(),
            el_tolerance: default_el_tol(),
            radius: default_radius(),
        }
    }
}

/// A parsed and validated scenario.
#[derive(Debug)]
pub struct Scenario {
    pub n: usize,
    pub h: Option<Arc<dyn TemporalMetric>>,
    pub h_text: Option<String>,
    pub phi: Option<Arc<dyn SpatialMetric>>,
    pub phi_rows: Option<Vec<Vec<String>>>,
    pub lagrangian: Option<Arc<dyn LagrangianFn>>,
    pub change: Option<JetChange>,
    pub connection: Option<Arc<dyn NonlinearConnection>>,
    pub initial: Vec<Initial>,
    pub integrator: IntegratorSpec,
    pub check: CheckSpec,
    pub seed: u64,
    /// Hex SHA-256 of the file contents.
    pub digest: String,
}

impl Scenario {
    pub fn load(path: &str) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_string(),
            source,
        })?;
        Scenario::from_str(&text).map_err(|e| match e {
            CliError::Invalid(m) => CliError::Invalid(format!("{path}: {m}")),
            other => other,
        })
    }

    pub fn from_str(text: &str) -> Result<Scenario, CliError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| CliError::Invalid(e.to_string()))?;
        let digest = format!("{:x}", Sha256::digest(text.as_bytes()));
        build(file, digest)
    }

    /// `(h, φ)` or an error naming the command that needs them.
    pub fn metrics(&self, what: &str) -> Result<(Arc<dyn TemporalMetric>, Arc<dyn SpatialMetric>), CliError> {
        match (&self.h, &self.phi) {
            (Some(h), Some(phi)) => Ok((h.clone(), phi.clone())),
            _ => Err(CliError::Invalid(format!("{what} needs both `h11` and `phi`"))),
        }
    }

    /// The time metric paired with the Lagrangian; `h₁₁ = 1` when absent.
    pub fn lagrangian_time_metric(&self) -> Arc<dyn TemporalMetric> {
        match &self.h {
            Some(h) => h.clone(),
            None => {
                tracing::info!("no h11 given, using h11 = 1 with the Lagrangian");
                Arc::new(ExprTemporalMetric::parse("1").expect("constant metric"))
            }
        }
    }
}

fn check_len(what: &str, got: usize, n: usize) -> Result<(), CliError> {
    if got == n {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{what} has length {got}, expected n = {n}")))
    }
}

fn positive(what: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!(
            "{what} must be positive and finite, got {v}"
        )))
    }
}

fn build(f: ScenarioFile, digest: String) -> Result<Scenario, CliError> {
    let n = f.n;
    if n == 0 {
        return Err(CliError::Invalid("n must be at least 1".into()));
    }
    let h = match &f.h11 {
        Some(s) => Some(
            Arc::new(ExprTemporalMetric::parse(s).map_err(|e| CliError::invalid("h11", e))?) as Arc<dyn TemporalMetric>,
        ),
        None => None,
    };
    let phi = match &f.phi {
        Some(rows) => {
            check_len("phi", rows.len(), n)?;
            for (i, r) in rows.iter().enumerate() {
                check_len(&format!("phi row {}", i + 1), r.len(), n)?;
            }
            Some(
                Arc::new(ExprSpatialMetric::parse(rows).map_err(|e| CliError::invalid("phi", e))?)
                    as Arc<dyn SpatialMetric>,
            )
        }
        None => None,
    };
    let lagrangian = match &f.lagrangian {
        Some(s) => Some(
            Arc::new(ExprLagrangian::parse(s, n).map_err(|e| CliError::invalid("lagrangian", e))?)
                as Arc<dyn LagrangianFn>,
        ),
        None => None,
    };
    let change = match &f.change {
        Some(c) => {
            let time = TimeChange::parse(&c.time, &c.time_inverse).map_err(|e| CliError::invalid("change.time", e))?;
            let space = match (&c.space, &c.space_inverse) {
                (Some(fw), Some(inv)) => {
                    check_len("change.space", fw.len(), n)?;
                    check_len("change.space_inverse", inv.len(), n)?;
                    SpaceChange::parse(fw, inv).map_err(|e| CliError::invalid("change.space", e))?
                }
                (None, None) => SpaceChange::identity(n),
                _ => {
                    return Err(CliError::Invalid(
                        "change.space and change.space_inverse must be given together".into(),
                    ))
                }
            };
            Some(JetChange::new(time, space))
        }
        None => None,
    };
    let connection = match &f.connection {
        Some(c) => {
            check_len("connection.m", c.m.len(), n)?;
            check_len("connection.n", c.n.len(), n)?;
            for (i, r) in c.n.iter().enumerate() {
                check_len(&format!("connection.n row {}", i + 1), r.len(), n)?;
            }
            Some(
                Arc::new(ExprConnection::parse(&c.m, &c.n).map_err(|e| CliError::invalid("connection", e))?)
                    as Arc<dyn NonlinearConnection>,
            )
        }
        None => None,
    };
    for (k, ic) in f.initial.iter().enumerate() {
        check_len(&format!("initial[{k}].x0"), ic.x0.len(), n)?;
        check_len(&format!("initial[{k}].v0"), ic.v0.len(), n)?;
        if !(ic.t0.is_finite() && ic.x0.iter().chain(&ic.v0).all(|v| v.is_finite())) {
            return Err(CliError::Invalid(format!("initial[{k}] has non-finite entries")));
        }
    }
    let ig = &f.integrator;
    match ig.method {
        Method::Rk4 => positive("integrator.dt", ig.dt)?,
        Method::Rk45 => {
            positive("integrator.atol", ig.atol)?;
            positive("integrator.rtol", ig.rtol)?;
        }
    }
    positive("check.tolerance", f.check.tolerance)?;
    positive("check.el_tolerance", f.check.el_tolerance)?;
    positive("check.radius", f.check.radius)?;
    if f.check.points == 0 || f.check.samples == 0 {
        return Err(CliError::Invalid(
            "check.points and check.samples must be at least 1".into(),
        ));
    }
    let has_pair = h.is_some() && phi.is_some();
    if !has_pair && lagrangian.is_none() {
        return Err(CliError::Invalid(
            "a scenario needs `h11` and `phi`, or a `lagrangian`".into(),
        ));
    }
    Ok(Scenario {
        n,
        h,
        h_text: f.h11,
        phi,
        phi_rows: f.phi,
        lagrangian,
        change,
        connection,
        initial: f.initial,
        integrator: f.integrator,
        check: f.check,
        seed: f.seed,
        digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPHERE: &str = r#"
n = 2
h11 = "1"
phi = [["1", "0"], ["0", "sin(x1)^2"]]

[[initial]]
x0 = [1.0, 0.0]
v0 = [0.0, 1.0]
"#;

    #[test]
    fn loads_a_minimal_scenario() {
        let s = Scenario::from_str(SPHERE).unwrap();
        assert_eq!(s.n, 2);
        assert!(s.lagrangian.is_none());
        assert_eq!(s.integrator.stepper(), Stepper::Rk4 { dt: 1e-3 });
        assert_eq!(s.digest.len(), 64);
    }

    #[test]
    fn rejects_dimension_mismatches() {
        let bad = SPHERE.replace("v0 = [0.0, 1.0]", "v0 = [0.0]");
        assert!(matches!(Scenario::from_str(&bad), Err(CliError::Invalid(_))));
        let bad = SPHERE.replace("sin(x1)^2", "sin(x3)^2");
        assert!(matches!(Scenario::from_str(&bad), Err(CliError::Invalid(_))));
    }

    #[test]
    fn rejects_unknown_keys_and_empty_geometry() {
        assert!(Scenario::from_str(&format!("{SPHERE}\nbogus = 1")).is_err());
        assert!(Scenario::from_str("n = 1").is_err());
    }
}
