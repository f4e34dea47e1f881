use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use jetflow::covariance::{run_covariance, CovarianceOptions, Geometry};
use jetflow::dynamics::{autoparallel_rhs, harmonic_rhs, integrate as run_sode, SodeProblem, Trajectory};
use jetflow::generator::Generator;
use jetflow::lagrange::{
    el_residual_with_scale, el_semisprays, gravitational_potential, lagrangian_semispray, Bracket, ExprLagrangian,
    LagrangianFn,
};
use jetflow::spray::{connection_from_semispray, CanonicalConnection, NonlinearConnection, RelativisticSemispray};
use jetflow::JetPoint;

use crate::error::CliError;
use crate::report::{Environment, Record, RunReport};
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    /// ẍ + 2H + 2G = 0 from the semispray.
    Harmonic,
    /// ẍ + M + N ẋ = 0 from the nonlinear connection.
    Autoparallel,
}

fn semispray(sc: &Scenario, bracket: Bracket) -> Result<RelativisticSemispray, CliError> {
    match &sc.lagrangian {
        Some(l) => Ok(lagrangian_semispray(l.clone(), sc.lagrangian_time_metric(), bracket).0),
        None => {
            let (h, phi) = sc.metrics("the canonical semispray")?;
            Ok(RelativisticSemispray::canonical(h, phi))
        }
    }
}

/// The scenario's connection override, else `Γ_L`, else `Γ̊`.
fn connection(sc: &Scenario, bracket: Bracket) -> Result<Arc<dyn NonlinearConnection>, CliError> {
    if let Some(c) = &sc.connection {
        return Ok(c.clone());
    }
    if sc.lagrangian.is_some() {
        return Ok(Arc::new(connection_from_semispray(&semispray(sc, bracket)?)));
    }
    let (h, phi) = sc.metrics("the canonical connection")?;
    Ok(Arc::new(CanonicalConnection { h, phi }))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

/// `traj.csv` becomes `traj-2.csv` for the second curve.
fn numbered(path: &Path, k: usize) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{k}"),
    };
    path.with_file_name(name)
}

pub fn trajectory_csv(tr: &Trajectory) -> String {
    let n = tr.n();
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    for i in 1..=n {
        out.push_str(&format!(",v{i}"));
    }
    out.push('\n');
    for s in &tr.samples {
        out.push_str(&format!("{:.16e}", s.t));
        for v in s.x.iter().chain(s.v.iter()) {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

pub fn integrate(sc: &Scenario, mode: Mode, bracket: Bracket, out: Option<&Path>) -> Result<(), CliError> {
    if sc.initial.is_empty() {
        return Err(CliError::Invalid(
            "integrate needs at least one [[initial]] entry".into(),
        ));
    }
    if sc.initial.len() > 1 && out.is_none() {
        return Err(CliError::Invalid("several initial conditions need --out".into()));
    }
    let rhs = match mode {
        Mode::Harmonic => harmonic_rhs(&semispray(sc, bracket)?),
        Mode::Autoparallel => autoparallel_rhs(connection(sc, bracket)?),
    };
    for (k, ic) in sc.initial.iter().enumerate() {
        let t_end = ic
            .t_end
            .or(sc.integrator.t_end)
            .ok_or_else(|| CliError::Invalid(format!("initial[{k}] has no t_end and [integrator] sets none")))?;
        let prob = SodeProblem {
            rhs: rhs.clone(),
            t0: ic.t0,
            x0: DVector::from_column_slice(&ic.x0),
            v0: DVector::from_column_slice(&ic.v0),
            t_end,
            stepper: sc.integrator.stepper(),
        };
        let tr = run_sode(&prob).map_err(|e| match e {
            jetflow::Error::Invalid(m) => CliError::Invalid(format!("initial[{k}]: {m}")),
            other => CliError::Numerical(other),
        })?;
        tracing::info!(
            curve = k,
            samples = tr.samples.len(),
            rhs_evals = tr.stats.rhs_evals,
            "integrated"
        );
        let target = match out {
            Some(p) if sc.initial.len() > 1 => Some(numbered(p, k + 1)),
            Some(p) => Some(p.to_path_buf()),
            None => None,
        };
        emit(target.as_deref(), &trajectory_csv(&tr))?;
    }
    Ok(())
}

pub fn check(sc: &Scenario, seed: u64) -> Result<RunReport, CliError> {
    let (h, phi) = sc.metrics("check")?;
    let (h_text, rows) = (
        sc.h_text.as_deref().unwrap_or("1"),
        sc.phi_rows.as_deref().unwrap_or_default(),
    );
    let harmonic = ExprLagrangian::harmonic(h_text, rows).map_err(|e| CliError::invalid("harmonic Lagrangian", e))?;
    let mut lagrangians: Vec<Arc<dyn LagrangianFn>> = vec![Arc::new(harmonic)];
    lagrangians.extend(sc.lagrangian.clone());
    let geom = Geometry { h, phi, lagrangians };
    let mut changes = Vec::new();
    changes.extend(sc.change.clone());
    let mut gen = Generator::new(seed);
    for _ in 0..sc.check.generated_changes {
        changes.push(gen.jet_change(sc.n)?);
    }
    if changes.is_empty() {
        return Err(CliError::Invalid(
            "check needs a [change] table or check.generated_changes > 0".into(),
        ));
    }
    let opts = CovarianceOptions {
        tolerance: sc.check.tolerance,
        points_per_change: sc.check.points,
        seed,
        corrupt_connection: sc.check.corrupt_connection,
    };
    let records = run_covariance(&geom, &changes, &opts).map_err(|e| match e {
        e @ (jetflow::Error::InverseMismatch { .. } | jetflow::Error::Invalid(_)) => CliError::invalid("change", e),
        other => CliError::Numerical(other),
    })?;
    Ok(RunReport::new(
        "check",
        records.into_iter().map(Record::from).collect(),
        Environment::new(seed),
        &sc.digest,
    ))
}

fn sample_points(sc: &Scenario, seed: u64) -> Vec<JetPoint> {
    let mut gen = Generator::new(seed);
    let r = sc.check.radius;
    (0..sc.check.samples)
        .map(|k| {
            if sc.initial.is_empty() {
                return gen.probe_point(sc.n);
            }
            let ic = &sc.initial[k % sc.initial.len()];
            let t = ic.t0 + gen.uniform(-r, r);
            let x = ic.x0.iter().map(|v| v + gen.uniform(-r, r)).collect();
            let y = ic.v0.iter().map(|v| v + gen.uniform(-r, r)).collect();
            JetPoint::new(t, x, y).expect("finite sample")
        })
        .collect()
}

/// Largest scaled residual of the Euler–Lagrange equations along the
/// accelerations predicted by `bracket`.
fn el_worst(
    l: &dyn LagrangianFn,
    h: &dyn jetflow::metrics::TemporalMetric,
    pts: &[JetPoint],
    bracket: Bracket,
) -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    for p in pts {
        let (hh, gg) = el_semisprays(l, h, p, bracket)?;
        let a = (hh + gg) * -2.0;
        let (res, scale) = el_residual_with_scale(l, h, p.t, p.x.as_slice(), p.y.as_slice(), a.as_slice())?;
        let e = res.amax() / (1.0 + scale);
        worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
    }
    Ok(worst)
}

/// Both brackets are reported; the one selected by `judged` decides the run
/// and the other is a control.
pub fn el_compare(sc: &Scenario, seed: u64, judged: Bracket) -> Result<RunReport, CliError> {
    let (Some(l), Some(h)) = (&sc.lagrangian, &sc.h) else {
        return Err(CliError::Invalid("el-compare needs `lagrangian` and `h11`".into()));
    };
    let pts = sample_points(sc, seed);
    let tol = sc.check.el_tolerance;
    let mut records = Vec::new();
    for (name, bracket) in [
        ("el-residual-corrected", Bracket::Corrected),
        ("el-residual-printed", Bracket::Printed),
    ] {
        let worst = el_worst(l.as_ref(), h.as_ref(), &pts, bracket)?;
        records.push(Record {
            name: name.into(),
            max_error: worst,
            tolerance: tol,
            passed: worst <= tol,
            control: bracket != judged,
        });
    }
    Ok(RunReport::new(
        "el-compare",
        records,
        Environment::new(seed),
        &sc.digest,
    ))
}

#[derive(Serialize)]
struct Potential {
    h: f64,
    g: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct ConnectionLine {
    t: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    /// `M⁽ʲ⁾₍₁₎₁`
    m: Vec<f64>,
    /// Row `j` holds `N⁽ʲ⁾₍₁₎ᵢ` over `i`.
    n: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    potential: Option<Potential>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn connection_report(sc: &Scenario, bracket: Bracket, out: Option<&Path>) -> Result<(), CliError> {
    if sc.initial.is_empty() {
        return Err(CliError::Invalid(
            "connection needs at least one [[initial]] point".into(),
        ));
    }
    let conn = connection(sc, bracket)?;
    let mut text = String::new();
    for ic in &sc.initial {
        let p = JetPoint::new(ic.t0, ic.x0.clone(), ic.v0.clone())?;
        let potential = match &sc.lagrangian {
            Some(l) => {
                let g = gravitational_potential(l.clone(), sc.lagrangian_time_metric(), &p, Some(conn.as_ref()))?;
                Some(Potential {
                    h: g.h_block,
                    g: rows(&g.g_block),
                    v: rows(&g.v_block),
                })
            }
            None => None,
        };
        let line = ConnectionLine {
            t: p.t,
            x: ic.x0.clone(),
            y: ic.v0.clone(),
            m: conn.temporal(&p)?.iter().copied().collect(),
            n: rows(&conn.spatial(&p)?),
            potential,
        };
        text.push_str(&serde_json::to_string(&line).expect("line serializes"));
        text.push('\n');
    }
    emit(out, &text)
}

pub fn emit_report(report: &RunReport, out: Option<&Path>) -> Result<(), CliError> {
    emit(out, &report.to_json_lines())?;
    let failed = report.failed();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed.into_iter().map(String::from).collect()))
    }
}
