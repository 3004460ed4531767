//! The unconstrained ICA objective: a degeneracy cost plus a log-cosh
//! sparsity prior on the source estimates `W x`.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use crate::basis::{Basis, CostKind};
use crate::costs::{evaluate_matrix, CostEval};
use crate::data::DataMatrix;
use crate::error::{OicaError, Result};
use crate::parallel::{map_indexed, Parallelism};

/// Samples per partition of the prior sum. Fixed so that the reduction order,
/// and therefore the result, does not depend on the execution mode.
const CHUNK: usize = 2048;

/// Anything the optimizer can minimize over `k x n` matrices.
pub trait Objective: Sync {
    fn evaluate(&self, w: ArrayView2<'_, f64>) -> Result<CostEval>;
}

impl Objective for CostKind {
    fn evaluate(&self, w: ArrayView2<'_, f64>) -> Result<CostEval> {
        evaluate_matrix(*self, w)
    }
}

/// `log(cosh(y))` without overflow.
#[inline]
pub fn log_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Mean over samples of `sum_j log cosh(W_j x)`, with gradient
/// `mean_i tanh(W x_i) x_i^T`.
pub fn sparsity_prior(basis: &Basis, data: &DataMatrix) -> Result<CostEval> {
    sparsity_prior_with(basis.view(), data, Parallelism::default())
}

pub fn sparsity_prior_with(
    w: ArrayView2<'_, f64>,
    data: &DataMatrix,
    mode: Parallelism,
) -> Result<CostEval> {
    let x = data.view();
    let (k, n) = w.dim();
    if x.nrows() != n {
        return Err(OicaError::ShapeMismatch(format!(
            "basis has dimension {n} but data has dimension {}",
            x.nrows()
        )));
    }
    let m = x.ncols();
    if m == 0 {
        return Ok(CostEval::zeros(k, n));
    }
    let chunks = m.div_ceil(CHUNK);
    let parts = map_indexed(mode, chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(m);
        let xc = x.slice(s![.., lo..hi]);
        let y = w.dot(&xc);
        let value: f64 = y.iter().map(|&v| log_cosh(v)).sum();
        let t = y.mapv(f64::tanh);
        (value, t.dot(&xc.t()))
    });
    let mut value = 0.0;
    let mut gradient = Array2::zeros((k, n));
    for (v, g) in parts {
        value += v;
        gradient += &g;
    }
    let inv_m = 1.0 / m as f64;
    gradient *= inv_m;
    Ok(CostEval {
        value: value * inv_m,
        gradient,
    })
}

/// `C(W) + lambda * prior(W, X)`.
#[derive(Debug, Clone)]
pub struct IcaObjective {
    pub cost_kind: CostKind,
    pub lambda: f64,
    pub data: DataMatrix,
    pub parallelism: Parallelism,
}

impl IcaObjective {
    pub fn new(cost_kind: CostKind, lambda: f64, data: DataMatrix) -> Result<Self> {
        cost_kind.validate()?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(OicaError::Parse(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self {
            cost_kind,
            lambda,
            data,
            parallelism: Parallelism::default(),
        })
    }

    pub fn with_parallelism(mut self, mode: Parallelism) -> Self {
        self.parallelism = mode;
        self
    }
}

pub fn total_objective(basis: &Basis, obj: &IcaObjective) -> Result<CostEval> {
    obj.evaluate(basis.view())
}

impl Objective for IcaObjective {
    fn evaluate(&self, w: ArrayView2<'_, f64>) -> Result<CostEval> {
        let mut out = evaluate_matrix(self.cost_kind, w)?;
        if self.data.m() > 0 && self.data.n() != w.ncols() {
            return Err(OicaError::ShapeMismatch(format!(
                "basis has dimension {} but data has dimension {}",
                w.ncols(),
                self.data.n()
            )));
        }
        if self.lambda == 0.0 || self.data.m() == 0 {
            return Ok(out);
        }
        let prior = sparsity_prior_with(w, &self.data, self.parallelism)?;
        out.value += self.lambda * prior.value;
        Zip::from(&mut out.gradient)
            .and(&prior.gradient)
            .for_each(|g, &p| *g += self.lambda * p);
        Ok(out)
    }
}

/// Mean squared reconstruction error `mean |x - W^T W x|^2`.
pub fn reconstruction_error(w: ArrayView2<'_, f64>, data: &DataMatrix) -> f64 {
    let x = data.view();
    if x.ncols() == 0 {
        return 0.0;
    }
    let recon = w.t().dot(&w.dot(&x));
    let resid = &x - &recon;
    resid.map_axis(Axis(0), |c| c.dot(&c)).mean().unwrap_or(0.0)
}
