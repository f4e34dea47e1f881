//! Harmonic and autoparallel curves: right-hand sides, RK4 and Dormand–Prince
//! integrators, the generalized Poisson force and the action functional.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::jet::{prolong_at, JetChange, JetPoint};
use crate::lagrange::LagrangianFn;
use crate::metrics::{SpatialMetric, TemporalMetric};
use crate::spray::{NonlinearConnection, RelativisticSemispray};

type RhsFn = dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync;

/// Acceleration `ẍ` as a function of `(t, x, ẋ)`.
#[derive(Clone)]
pub struct Rhs(pub Arc<RhsFn>);

impl Rhs {
    pub fn new(f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync + 'static) -> Self {
        Rhs(Arc::new(f))
    }

    pub fn eval(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        (self.0)(t, x, v)
    }
}

impl fmt::Debug for Rhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Rhs")
    }
}

fn point(t: f64, x: &DVector<f64>, v: &DVector<f64>) -> JetPoint {
    JetPoint {
        t,
        x: x.clone(),
        y: v.clone(),
    }
}

/// `ẍ = −2H(t, x, ẋ) − 2G(t, x, ẋ)`
pub fn harmonic_rhs(s: &RelativisticSemispray) -> Rhs {
    let s = s.clone();
    Rhs::new(move |t, x, v| {
        let p = point(t, x, v);
        Ok((s.temporal.eval(&p)? + s.spatial.eval(&p)?) * -2.0)
    })
}

/// `ẍ = −M(t, x, ẋ) − N(t, x, ẋ) ẋ`
pub fn autoparallel_rhs(g: Arc<dyn NonlinearConnection>) -> Rhs {
    Rhs::new(move |t, x, v| {
        let p = point(t, x, v);
        Ok(-(g.temporal(&p)? + g.spatial(&p)? * v))
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stepper {
    /// Classical fourth-order Runge–Kutta with a fixed step.
    Rk4 { dt: f64 },
    /// Dormand–Prince 5(4) with error control.
    Rk45 { atol: f64, rtol: f64 },
}

impl Default for Stepper {
    fn default() -> Self {
        Stepper::Rk4 { dt: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct SodeProblem {
    pub rhs: Rhs,
    pub t0: f64,
    pub x0: DVector<f64>,
    pub v0: DVector<f64>,
    pub t_end: f64,
    pub stepper: Stepper,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("trajectories hold at least the initial sample")
    }

    /// The image of the curve under a change of coordinates.
    pub fn transform(&self, change: &JetChange) -> Result<Trajectory> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let c = change.at(s.t, &s.x)?;
                let q = prolong_at(&c, &point(s.t, &s.x, &s.v));
                Ok(Sample { t: q.t, x: q.x, v: q.y })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            samples,
            stats: self.stats.clone(),
        })
    }
}

/// State `z = (x, v)` and its derivative `(v, a)`.
struct System<'a> {
    rhs: &'a Rhs,
    n: usize,
    evals: usize,
}

impl System<'_> {
    fn f(&mut self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.evals += 1;
        let n = self.n;
        let x = z.rows(0, n).into_owned();
        let v = z.rows(n, n).into_owned();
        let a = self.rhs.eval(t, &x, &v)?;
        if a.len() != n {
            return Err(Error::Invalid(format!(
                "right-hand side returned {} components, expected {n}",
                a.len()
            )));
        }
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&v);
        out.rows_mut(n, n).copy_from(&a);
        Ok(out)
    }
}

fn sample(t: f64, z: &DVector<f64>, n: usize) -> Sample {
    Sample {
        t,
        x: z.rows(0, n).into_owned(),
        v: z.rows(n, n).into_owned(),
    }
}

fn check_finite(t: f64, z: &DVector<f64>) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { t })
    }
}

pub fn integrate(prob: &SodeProblem) -> Result<Trajectory> {
    let n = prob.x0.len();
    if n == 0 || prob.v0.len() != n {
        return Err(Error::Invalid(
            "initial position and velocity must have the same positive length".into(),
        ));
    }
    let span = prob.t_end - prob.t0;
    if !(span != 0.0 && span.is_finite() && prob.t0.is_finite()) {
        return Err(Error::Invalid("integration span must be finite and non-empty".into()));
    }
    let mut z = DVector::zeros(2 * n);
    z.rows_mut(0, n).copy_from(&prob.x0);
    z.rows_mut(n, n).copy_from(&prob.v0);
    check_finite(prob.t0, &z)?;
    let mut sys = System {
        rhs: &prob.rhs,
        n,
        evals: 0,
    };
    let mut traj = match prob.stepper {
        Stepper::Rk4 { dt } => rk4(&mut sys, prob.t0, z, span, dt)?,
        Stepper::Rk45 { atol, rtol } => dopri(&mut sys, prob.t0, z, span, atol, rtol)?,
    };
    traj.stats.rhs_evals = sys.evals;
    Ok(traj)
}

fn rk4(sys: &mut System, t0: f64, mut z: DVector<f64>, span: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Invalid(format!("step must be positive, got {dt}")));
    }
    let ratio = span.abs() / dt;
    let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio {
        ratio.round()
    } else {
        ratio.ceil()
    }
    .max(1.0) as usize;
    let h = span / steps as f64;
    let n = sys.n;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(sample(t0, &z, n));
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = sys.f(t, &z)?;
        let k2 = sys.f(t + 0.5 * h, &(&z + &k1 * (0.5 * h)))?;
        let k3 = sys.f(t + 0.5 * h, &(&z + &k2 * (0.5 * h)))?;
        let k4 = sys.f(t + h, &(&z + &k3 * h))?;
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t_next = if k + 1 == steps {
            t0 + span
        } else {
            t0 + (k + 1) as f64 * h
        };
        check_finite(t_next, &z)?;
        samples.push(sample(t_next, &z, n));
    }
    Ok(Trajectory {
        samples,
        stats: StepStats {
            accepted: steps,
            ..Default::default()
        },
    })
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Smallest admissible adaptive step.
pub const MIN_STEP: f64 = 1e-12;

fn dopri(sys: &mut System, t0: f64, mut z: DVector<f64>, span: f64, atol: f64, rtol: f64) -> Result<Trajectory> {
    let ok = |v: f64| (1e-14..=1e-2).contains(&v);
    if !ok(atol) || !ok(rtol) {
        return Err(Error::Invalid(format!(
            "tolerances must lie in [1e-14, 1e-2], got atol {atol}, rtol {rtol}"
        )));
    }
    let n = sys.n;
    let dir = span.signum();
    let t_end = t0 + span;
    let mut t = t0;
    let mut samples = vec![sample(t0, &z, n)];
    let mut stats = StepStats::default();
    let mut k1 = sys.f(t, &z)?;
    // initial step from the size of the derivative
    let scale0 = z.iter().map(|v| atol + rtol * v.abs());
    let d0 = z
        .iter()
        .zip(scale0.clone())
        .fold(0.0f64, |m, (v, s)| m.max(v.abs() / s));
    let d1 = k1.iter().zip(scale0).fold(0.0f64, |m, (v, s)| m.max(v.abs() / s));
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(span.abs()) * dir;
    loop {
        let remaining = t_end - t;
        if remaining * dir <= 0.0 {
            break;
        }
        let last = (h.abs() >= remaining.abs()) || ((remaining - h) * dir).abs() < 1e-12 * span.abs();
        if last {
            h = remaining;
        }
        if h.abs() < MIN_STEP {
            return Err(Error::StepFailure { t, step: h.abs() });
        }
        let mut k = vec![k1.clone()];
        for s in 1..7 {
            let mut zs = z.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    zs += kj * (h * A[s][j]);
                }
            }
            k.push(sys.f(t + C[s] * h, &zs)?);
        }
        let mut z5 = z.clone();
        let mut err = DVector::zeros(2 * n);
        for s in 0..7 {
            if B5[s] != 0.0 {
                z5 += &k[s] * (h * B5[s]);
            }
            err += &k[s] * (h * (B5[s] - B4[s]));
        }
        let en = err
            .iter()
            .zip(z.iter().zip(z5.iter()))
            .map(|(e, (a, b))| e.abs() / (atol + rtol * a.abs().max(b.abs())))
            .fold(0.0f64, f64::max);
        if !en.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            continue;
        }
        if en <= 1.0 {
            t = if last { t_end } else { t + h };
            z = z5;
            check_finite(t, &z)?;
            samples.push(sample(t, &z, n));
            stats.accepted += 1;
            k1 = k.swap_remove(6);
            if last {
                break;
            }
        } else {
            stats.rejected += 1;
        }
        let factor = if en == 0.0 {
            5.0
        } else {
            (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok(Trajectory { samples, stats })
}

/// `Fⁱ = 2h¹¹(Tⁱ + S_spⁱ)` with `T = H̊ − H` and `S_sp = G̊ − G`.
pub fn poisson_force(
    s: &RelativisticSemispray,
    h: Arc<dyn TemporalMetric>,
    phi: Arc<dyn SpatialMetric>,
    p: &JetPoint,
) -> Result<DVector<f64>> {
    let h11 = h.h11(p.t)?;
    let canon = RelativisticSemispray::canonical(h, phi);
    let t = canon.temporal.eval(p)? - s.temporal.eval(p)?;
    let sp = canon.spatial.eval(p)? - s.spatial.eval(p)?;
    Ok((t + sp) * (2.0 / h11))
}

/// Cubic Hermite interpolation of `(x, v)` at `t` inside segment `[a, b]`.
fn hermite(a: &Sample, b: &Sample, t: f64) -> (DVector<f64>, DVector<f64>) {
    let dt = b.t - a.t;
    let s = (t - a.t) / dt;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let x = &a.x * h00 + &a.v * (h10 * dt) + &b.x * h01 + &b.v * (h11 * dt);
    let d00 = (6.0 * s2 - 6.0 * s) / dt;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = (-6.0 * s2 + 6.0 * s) / dt;
    let d11 = 3.0 * s2 - 2.0 * s;
    let v = &a.x * d00 + &a.v * d10 + &b.x * d01 + &b.v * d11;
    (x, v)
}

fn is_uniform(samples: &[Sample]) -> bool {
    let m = samples.len() - 1;
    let h = (samples[m].t - samples[0].t) / m as f64;
    samples
        .windows(2)
        .all(|w| ((w[1].t - w[0].t) - h).abs() <= 1e-9 * h.abs())
}

/// `E₂ = ∫ L(t, x, ẋ) √h₁₁(t) dt` along the trajectory by composite Simpson.
/// Non-uniform or odd grids are first resampled by cubic Hermite
/// interpolation of the stored positions and velocities.
pub fn action_functional(l: &dyn LagrangianFn, h: &dyn TemporalMetric, traj: &Trajectory) -> Result<f64> {
    let s = &traj.samples;
    if s.len() < 3 {
        return Err(Error::Quadrature(format!("need at least 3 samples, got {}", s.len())));
    }
    let integrand = |t: f64, x: &DVector<f64>, v: &DVector<f64>| -> Result<f64> {
        Ok(l.value(&point(t, x, v))? * h.h11(t)?.sqrt())
    };
    let intervals = s.len() - 1;
    let (t0, t1) = (s[0].t, s[intervals].t);
    let values: Vec<f64>;
    let m: usize;
    if intervals % 2 == 0 && is_uniform(s) {
        m = intervals;
        values = s.iter().map(|p| integrand(p.t, &p.x, &p.v)).collect::<Result<_>>()?;
    } else {
        m = 2 * intervals;
        let step = (t1 - t0) / m as f64;
        let forward = t1 > t0;
        let mut seg = 0;
        let mut vals = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let t = if k == m { t1 } else { t0 + k as f64 * step };
            while seg + 1 < intervals && if forward { s[seg + 1].t < t } else { s[seg + 1].t > t } {
                seg += 1;
            }
            let (x, v) = hermite(&s[seg], &s[seg + 1], t);
            vals.push(integrand(t, &x, &v)?);
        }
        values = vals;
    }
    let step = (t1 - t0) / m as f64;
    let mut acc = values[0] + values[m];
    for (k, v) in values.iter().enumerate().take(m).skip(1) {
        acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    Ok(acc * step / 3.0)
}
