//! Degeneracy-control costs on the Gram matrix and the quasi-orthogonality
//! update.
//!
//! Every cost is a sum of a scalar function of Gram entries,
//! `C(W) = sum_{(i,j) in P} f_ij(G_ij)` with `G = W W^T`. Since
//! `dG_ij/dW_a = delta_ai W_j + delta_aj W_i` and the per-entry derivative
//! matrix `F_ij = f'_ij(G_ij)` is symmetric, the gradient is `2 F W`.
//!
//! * L2 and L4 sum over all ordered pairs including the diagonal, with
//!   `f = (delta_ij - g)^p`.
//! * Coulomb and the random prior sum over ordered pairs `i != j` and use the
//!   regularized denominator `1 + eps - g^2`.

use ndarray::{Array2, ArrayView2, Zip};

use crate::basis::{normalize_rows_in_place, Basis, CostKind};
use crate::error::Result;
use crate::linalg::spectral_norm_sq;

/// Cost value together with its gradient with respect to the raw entries of W.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEval {
    pub value: f64,
    pub gradient: Array2<f64>,
}

impl CostEval {
    pub fn zeros(k: usize, n: usize) -> Self {
        Self {
            value: 0.0,
            gradient: Array2::zeros((k, n)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|v| v.is_finite())
    }
}

pub fn cost_l2(basis: &Basis) -> CostEval {
    eval_power(basis.view(), 2)
}

pub fn cost_l4(basis: &Basis) -> CostEval {
    eval_power(basis.view(), 4)
}

pub fn cost_coulomb(basis: &Basis, eps: f64) -> Result<CostEval> {
    CostKind::Coulomb { eps }.validate()?;
    Ok(eval_coulomb(basis.view(), eps))
}

pub fn cost_random_prior(basis: &Basis, eps: f64) -> Result<CostEval> {
    CostKind::RandomPrior { eps }.validate()?;
    Ok(eval_random_prior(basis.view(), eps))
}

/// Evaluate any cost kind on a basis.
pub fn evaluate(kind: CostKind, basis: &Basis) -> Result<CostEval> {
    evaluate_matrix(kind, basis.view())
}

/// Evaluate on a raw `k x n` matrix, e.g. an unnormalized optimizer iterate.
pub fn evaluate_matrix(kind: CostKind, w: ArrayView2<'_, f64>) -> Result<CostEval> {
    kind.validate()?;
    Ok(match kind {
        CostKind::L2 => eval_power(w, 2),
        CostKind::L4 => eval_power(w, 4),
        CostKind::Coulomb { eps } => eval_coulomb(w, eps),
        CostKind::RandomPrior { eps } => eval_random_prior(w, eps),
    })
}

fn eval_power(w: ArrayView2<'_, f64>, p: i32) -> CostEval {
    let gram = w.dot(&w.t());
    let k = gram.nrows();
    let mut value = 0.0;
    let mut deriv = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            let r = if i == j { 1.0 } else { 0.0 } - gram[[i, j]];
            value += r.powi(p);
            deriv[[i, j]] = -(p as f64) * r.powi(p - 1);
        }
    }
    finish(value, deriv, w)
}

fn eval_coulomb(w: ArrayView2<'_, f64>, eps: f64) -> CostEval {
    off_diagonal(w, |g| {
        let d = 1.0 + eps - g * g;
        let inv_sqrt = d.sqrt().recip();
        (inv_sqrt, g * inv_sqrt / d)
    })
}

fn eval_random_prior(w: ArrayView2<'_, f64>, eps: f64) -> CostEval {
    off_diagonal(w, |g| {
        let d = 1.0 + eps - g * g;
        (-d.ln(), 2.0 * g / d)
    })
}

/// Sum `f(G_ij)` over ordered `i != j`; `f` returns `(value, derivative)`.
fn off_diagonal<F>(w: ArrayView2<'_, f64>, f: F) -> CostEval
where
    F: Fn(f64) -> (f64, f64),
{
    let gram = w.dot(&w.t());
    let k = gram.nrows();
    let mut value = 0.0;
    let mut deriv = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let (v, d) = f(gram[[i, j]]);
            value += v;
            deriv[[i, j]] = d;
        }
    }
    finish(value, deriv, w)
}

fn finish(value: f64, deriv: Array2<f64>, w: ArrayView2<'_, f64>) -> CostEval {
    let mut gradient = deriv.dot(&w);
    gradient *= 2.0;
    CostEval { value, gradient }
}

/// One quasi-orthogonality step: `W <- 3/2 W - 1/2 W W^T W`, then unit rows.
///
/// `W` is first divided by its spectral norm so every singular value is at
/// most one; the cubic map then drives the singular values towards one
/// instead of oscillating.
pub fn quasi_orth_update(basis: &Basis) -> Result<Basis> {
    let w = basis.as_array();
    let scale = spectral_norm_sq(w).sqrt();
    let ws = if scale > 0.0 { w / scale } else { w.clone() };
    let wwtw = ws.dot(&ws.t()).dot(&ws);
    let mut next = Array2::zeros(ws.raw_dim());
    Zip::from(&mut next)
        .and(&ws)
        .and(&wwtw)
        .for_each(|o, &a, &b| *o = 1.5 * a - 0.5 * b);
    normalize_rows_in_place(&mut next)?;
    Basis::new(next)
}

/// Largest elementwise relative error between the analytic gradient and a
/// fourth-order central finite difference of the cost value.
///
/// The relative error uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
/// For the regularized costs the step is capped at `1e-2 * min(1 + eps - g^2)`
/// over off-diagonal Gram entries, since their terms vary on that scale.
pub fn grad_check(kind: CostKind, basis: &Basis, h: f64) -> Result<f64> {
    let analytic = evaluate(kind, basis)?.gradient;
    let base = basis.as_array();
    let h = match kind.eps() {
        Some(eps) => {
            let g = basis.gram();
            let k = basis.k();
            let mut gap = f64::INFINITY;
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        gap = gap.min(1.0 + eps - g.0[[i, j]].powi(2));
                    }
                }
            }
            h.min(1e-2 * gap)
        }
        None => h,
    };
    let value_at = |i: usize, j: usize, delta: f64| -> Result<f64> {
        let mut w = base.clone();
        w[[i, j]] += delta;
        Ok(evaluate_matrix(kind, w.view())?.value)
    };
    let mut worst: f64 = 0.0;
    for i in 0..basis.k() {
        for j in 0..basis.n() {
            let numeric = (-value_at(i, j, 2.0 * h)? + 8.0 * value_at(i, j, h)?
                - 8.0 * value_at(i, j, -h)?
                + value_at(i, j, -2.0 * h)?)
                / (12.0 * h);
            let a = analytic[[i, j]];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
