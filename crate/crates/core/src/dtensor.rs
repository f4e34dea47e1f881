//! Distinguished tensors on J¹(ℝ, M): index signatures, the factor-by-factor
//! transformation law and the canonical examples.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jet::{prolong_at, ChangeAt, JetChange, JetPoint};
use crate::metrics::TemporalMetric;

/// Kind of one index of a d-tensor. `VelUp` is the paired index `⁽ʲ⁾₍₁₎`,
/// `VelDown` the paired index `⁽¹⁾₍ₗ₎`; a pair behaves as a single index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IndexSlot {
    TimeUp,
    TimeDown,
    SpaceUp,
    SpaceDown,
    VelUp,
    VelDown,
}

impl IndexSlot {
    pub fn extent(self, n: usize) -> usize {
        match self {
            IndexSlot::TimeUp | IndexSlot::TimeDown => 1,
            _ => n,
        }
    }

    pub fn is_up(self) -> bool {
        matches!(self, IndexSlot::TimeUp | IndexSlot::SpaceUp | IndexSlot::VelUp)
    }

    /// `F[(new, old)]` so that an upper slot maps as `ṽ = F v` and a lower
    /// slot as `ω̃ = F ω`, going from the untilde to the tilde chart.
    pub fn factor(self, c: &ChangeAt) -> DMatrix<f64> {
        let scalar = |v: f64| DMatrix::from_element(1, 1, v);
        match self {
            IndexSlot::TimeUp => scalar(c.dtt_dt),
            IndexSlot::TimeDown => scalar(c.dt_dtt),
            IndexSlot::SpaceUp => c.jac.clone(),
            IndexSlot::VelUp => &c.jac * c.dt_dtt,
            IndexSlot::SpaceDown => c.jac_inv.transpose(),
            IndexSlot::VelDown => c.jac_inv.transpose() * c.dtt_dt,
        }
    }

    /// Row of the adapted frame (upper slots) or coframe (lower slots) that
    /// carries basis element `i` of this slot.
    pub fn basis_row(self, n: usize, i: usize) -> usize {
        match self {
            IndexSlot::TimeUp | IndexSlot::TimeDown => 0,
            IndexSlot::SpaceUp | IndexSlot::SpaceDown => 1 + i,
            IndexSlot::VelUp | IndexSlot::VelDown => 1 + n + i,
        }
    }
}

/// Components of a d-tensor at one point, stored densely in row-major order
/// with one axis per slot.
#[derive(Clone, Debug, PartialEq)]
pub struct DTensorValue {
    pub signature: Vec<IndexSlot>,
    pub components: Vec<f64>,
    pub base: JetPoint,
}

impl DTensorValue {
    pub fn new(signature: Vec<IndexSlot>, components: Vec<f64>, base: JetPoint) -> Result<Self> {
        let n = base.n();
        let len: usize = signature.iter().map(|s| s.extent(n)).product();
        if components.len() != len {
            return Err(Error::Invalid(format!(
                "signature {signature:?} needs {len} components, got {}",
                components.len()
            )));
        }
        Ok(DTensorValue {
            signature,
            components,
            base,
        })
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn shape(&self) -> Vec<usize> {
        let n = self.n();
        self.signature.iter().map(|s| s.extent(n)).collect()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let shape = self.shape();
        let flat = idx.iter().zip(&shape).fold(0, |acc, (&i, &e)| acc * e + i);
        self.components[flat]
    }

    /// The components as a matrix, for rank-2 values after dropping
    /// extent-1 axes.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        let dims: Vec<usize> = self.shape().into_iter().filter(|&e| e > 1).collect();
        match dims.as_slice() {
            [r, c] => DMatrix::from_row_slice(*r, *c, &self.components),
            [r] => DMatrix::from_row_slice(*r, 1, &self.components),
            _ => DMatrix::from_row_slice(1, self.components.len(), &self.components),
        }
    }
}

/// Contract `f` into axis `axis` of a row-major array of the given shape.
fn contract_axis(data: &[f64], shape: &[usize], axis: usize, f: &DMatrix<f64>) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let e = shape[axis];
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for a in 0..e {
            for b in 0..e {
                let fab = f[(a, b)];
                if fab == 0.0 {
                    continue;
                }
                let src = (o * e + b) * inner;
                let dst = (o * e + a) * inner;
                for k in 0..inner {
                    out[dst + k] += fab * data[src + k];
                }
            }
        }
    }
    out
}

/// Components of `v` in the chart reached through `c`, attached to the
/// prolonged base point.
pub fn transform_dtensor(v: &DTensorValue, c: &JetChange) -> Result<DTensorValue> {
    let at = c.at(v.base.t, &v.base.x)?;
    Ok(transform_dtensor_at(v, &at))
}

pub fn transform_dtensor_at(v: &DTensorValue, c: &ChangeAt) -> DTensorValue {
    let shape = v.shape();
    let mut data = v.components.clone();
    for (axis, slot) in v.signature.iter().enumerate() {
        data = contract_axis(&data, &shape, axis, &slot.factor(c));
    }
    DTensorValue {
        signature: v.signature.clone(),
        components: data,
        base: prolong_at(c, &v.base),
    }
}

/// A d-tensor field: a map from jet points to values of a fixed signature.
pub trait DTensorField: Send + Sync + fmt::Debug {
    fn signature(&self) -> Vec<IndexSlot>;
    fn eval(&self, p: &JetPoint) -> Result<DTensorValue>;
}

type FieldFn = dyn Fn(&JetPoint) -> Result<Vec<f64>> + Send + Sync;

/// A d-tensor field from a component callback.
#[derive(Clone)]
pub struct FnDTensorField {
    pub signature: Vec<IndexSlot>,
    pub f: Arc<FieldFn>,
}

impl fmt::Debug for FnDTensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnDTensorField({:?})", self.signature)
    }
}

impl DTensorField for FnDTensorField {
    fn signature(&self) -> Vec<IndexSlot> {
        self.signature.clone()
    }

    fn eval(&self, p: &JetPoint) -> Result<DTensorValue> {
        DTensorValue::new(self.signature.clone(), (self.f)(p)?, p.clone())
    }
}

/// Canonical Liouville d-tensor `C⁽ⁱ⁾₍₁₎ = y₁ⁱ`.
pub fn liouville(p: &JetPoint) -> DTensorValue {
    DTensorValue {
        signature: vec![IndexSlot::VelUp],
        components: p.y.as_slice().to_vec(),
        base: p.clone(),
    }
}

/// h-normalization d-tensor `J⁽ⁱ⁾₍₁₎₁ⱼ = h₁₁ δⁱⱼ`.
pub fn h_normalization(h: &dyn TemporalMetric, p: &JetPoint) -> Result<DTensorValue> {
    let n = p.n();
    let h11 = h.h11(p.t)?;
    let m = DMatrix::<f64>::identity(n, n) * h11;
    DTensorValue::new(
        vec![IndexSlot::VelUp, IndexSlot::TimeDown, IndexSlot::SpaceDown],
        m.as_slice().to_vec(),
        p.clone(),
    )
}

/// h-canonical Liouville d-tensor `L⁽ⁱ⁾₍₁₎₁₁ = h₁₁ y₁ⁱ`.
pub fn h_liouville(h: &dyn TemporalMetric, p: &JetPoint) -> Result<DTensorValue> {
    let h11 = h.h11(p.t)?;
    DTensorValue::new(
        vec![IndexSlot::VelUp, IndexSlot::TimeDown, IndexSlot::TimeDown],
        p.y.iter().map(|v| h11 * v).collect(),
        p.clone(),
    )
}

/// Tensor product of two values at the same base point.
pub fn tensor_product(a: &DTensorValue, b: &DTensorValue) -> DTensorValue {
    let mut components = Vec::with_capacity(a.components.len() * b.components.len());
    for x in &a.components {
        for y in &b.components {
            components.push(x * y);
        }
    }
    let mut signature = a.signature.clone();
    signature.extend_from_slice(&b.signature);
    DTensorValue {
        signature,
        components,
        base: a.base.clone(),
    }
}

/// Evaluate the classical tensor whose components in the adapted basis are
/// `v`. Upper slots take covectors and pair them with the frame rows, lower
/// slots take vectors and pair them with the coframe rows; all arguments are
/// in the natural coordinates of the chart that `frame` and `coframe` belong
/// to.
pub fn classical_scalar(v: &DTensorValue, frame: &DMatrix<f64>, coframe: &DMatrix<f64>, args: &[DVector<f64>]) -> f64 {
    assert_eq!(args.len(), v.signature.len(), "one argument per slot");
    let n = v.n();
    // pairing of each argument with each basis element of its slot
    let pairs: Vec<Vec<f64>> = v
        .signature
        .iter()
        .zip(args)
        .map(|(slot, arg)| {
            let basis = if slot.is_up() { frame } else { coframe };
            (0..slot.extent(n))
                .map(|i| basis.row(slot.basis_row(n, i)).transpose().dot(arg))
                .collect()
        })
        .collect();
    let shape = v.shape();
    let mut total = 0.0;
    let mut idx = vec![0usize; shape.len()];
    for &c in &v.components {
        let w: f64 = idx.iter().enumerate().map(|(s, &i)| pairs[s][i]).product();
        total += c * w;
        for axis in (0..shape.len()).rev() {
            idx[axis] += 1;
            if idx[axis] < shape[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
    total
}
