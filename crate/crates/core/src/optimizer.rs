//! Projected limited-memory quasi-Newton descent.
//!
//! The core [`lbfgs`] routine works on flat parameter vectors with a
//! pluggable [`Geometry`]: gradients are projected onto the tangent space and
//! every trial point is retracted back onto the feasible set before it is
//! evaluated. Curvature pairs are formed from retracted iterates. For bases
//! the geometry is a product of unit spheres (one per row), so the
//! retraction is the row renormalization.

use std::collections::VecDeque;
use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::basis::{normalize_rows_in_place, Basis, Gram};
use crate::costs::{cost_l2, quasi_orth_update};
use crate::error::{OicaError, Result};
use crate::io::CsvTable;
use crate::objective::Objective;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    pub max_iters: usize,
    /// Stop once the infinity norm of the projected gradient is at or below this.
    pub grad_tol: f64,
    /// Number of curvature pairs kept.
    pub history: usize,
    pub line_search: LineSearch,
    /// Seed for callers that draw initializations; the descent itself is deterministic.
    pub seed: u64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-7,
            history: 10,
            line_search: LineSearch::default(),
            seed: 0,
        }
    }
}

impl OptimOptions {
    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        let ok = self.max_iters > 0
            && self.grad_tol > 0.0
            && self.history > 0
            && ls.initial_step > 0.0
            && ls.shrink > 0.0
            && ls.shrink < 1.0
            && ls.sufficient_decrease > 0.0
            && ls.max_backtracks > 0;
        if ok {
            Ok(())
        } else {
            Err(OicaError::Parse(format!("invalid optimizer options: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    GradTol,
    MaxIters,
    LineSearchFail,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Termination::GradTol => "grad_tol",
            Termination::MaxIters => "max_iters",
            Termination::LineSearchFail => "line_search_fail",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub min_angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimTrace {
    pub rows: Vec<TraceRow>,
    pub termination: Termination,
}

impl OptimTrace {
    pub fn final_row(&self) -> &TraceRow {
        self.rows.last().expect("trace always holds the initial point")
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["iter", "objective", "grad_norm", "min_angle_deg"]);
        for r in &self.rows {
            t.push([
                r.iter.to_string(),
                r.objective.to_string(),
                r.grad_norm.to_string(),
                r.min_angle_deg.to_string(),
            ]);
        }
        t
    }
}

/// Feasible set for [`lbfgs`].
pub trait Geometry {
    /// Remove the normal component of `g` at `x`.
    fn project_tangent(&self, x: &[f64], g: &mut [f64]);
    /// Map a point back onto the feasible set.
    fn retract(&self, x: &mut [f64]) -> Result<()>;
}

/// Unconstrained.
pub struct Euclidean;

impl Geometry for Euclidean {
    fn project_tangent(&self, _x: &[f64], _g: &mut [f64]) {}
    fn retract(&self, _x: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

/// Product of unit spheres: consecutive blocks of `dim` entries have unit norm.
pub struct UnitRows {
    pub dim: usize,
}

impl Geometry for UnitRows {
    fn project_tangent(&self, x: &[f64], g: &mut [f64]) {
        for (xr, gr) in x.chunks(self.dim).zip(g.chunks_mut(self.dim)) {
            let radial = dot(xr, gr) / dot(xr, xr);
            for (gv, xv) in gr.iter_mut().zip(xr) {
                *gv -= radial * xv;
            }
        }
    }

    fn retract(&self, x: &mut [f64]) -> Result<()> {
        for (i, row) in x.chunks_mut(self.dim).enumerate() {
            let norm = dot(row, row).sqrt();
            if !(norm > crate::basis::ZERO_ROW_NORM) {
                return Err(OicaError::ZeroRow { row: i, norm });
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub termination: Termination,
    pub iterations: usize,
}

/// Minimize `f` from `x0` over the feasible set described by `geom`.
///
/// `f` returns the value and the full gradient. `observe` is called once for
/// the starting point and once per accepted step with
/// `(iter, x, value, projected_grad_inf_norm)`.
pub fn lbfgs<G, F, O>(
    geom: &G,
    mut f: F,
    x0: Vec<f64>,
    opts: &OptimOptions,
    mut observe: O,
) -> Result<LbfgsOutcome>
where
    G: Geometry,
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    O: FnMut(usize, &[f64], f64, f64),
{
    opts.validate()?;
    let ls = opts.line_search;
    let mut x = x0;
    geom.retract(&mut x)?;
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(OicaError::NonFiniteObjective { iter: 0, value: fx });
    }
    geom.project_tangent(&x, &mut g);
    observe(0, &x, fx, inf_norm(&g));

    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.history);
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;
    let mut xn = vec![0.0; x.len()];

    for iter in 1..=opts.max_iters {
        if inf_norm(&g) <= opts.grad_tol {
            termination = Termination::GradTol;
            break;
        }
        let mut accepted = None;
        // A failed search with curvature memory is retried once as steepest descent.
        for attempt in 0..2 {
            if attempt == 1 {
                if memory.is_empty() {
                    break;
                }
                memory.clear();
            }
            let mut d = two_loop(&g, &memory);
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) {
                memory.clear();
                d = g.iter().map(|v| -v).collect();
                slope = -dot(&g, &g);
            }
            if memory.is_empty() {
                // Unscaled steepest descent: cap the first trial step length at one.
                let norm = dot(&d, &d).sqrt();
                if norm > 1.0 {
                    d.iter_mut().for_each(|v| *v /= norm);
                    slope /= norm;
                }
            }
            let mut step = ls.initial_step;
            for _ in 0..ls.max_backtracks {
                for ((o, xv), dv) in xn.iter_mut().zip(&x).zip(&d) {
                    *o = xv + step * dv;
                }
                if geom.retract(&mut xn).is_ok() {
                    let (fv, gv) = f(&xn)?;
                    let finite = fv.is_finite() && gv.iter().all(|v| v.is_finite());
                    if finite && fv <= fx + ls.sufficient_decrease * step * slope && fv <= fx {
                        accepted = Some((fv, gv));
                        break;
                    }
                }
                step *= ls.shrink;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((fv, mut gv)) = accepted else {
            termination = Termination::LineSearchFail;
            break;
        };
        geom.project_tangent(&xn, &mut gv);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gv.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let scale = (dot(&s, &s) * dot(&y, &y)).sqrt();
        if sy > 1e-10 * scale && sy > 0.0 {
            if memory.len() == opts.history {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut xn);
        fx = fv;
        g = gv;
        iterations = iter;
        observe(iter, &x, fx, inf_norm(&g));
    }
    if termination == Termination::MaxIters && inf_norm(&g) <= opts.grad_tol {
        termination = Termination::GradTol;
    }
    Ok(LbfgsOutcome {
        x,
        value: fx,
        termination,
        iterations,
    })
}

/// Two-loop recursion: returns `-H g`.
fn two_loop(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qv, yv)| *qv -= a * yv);
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qv, sv)| *qv += (a - b) * sv);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimize an objective over bases with unit-norm rows.
pub fn minimize<O: Objective + ?Sized>(
    objective: &O,
    w0: &Basis,
    opts: &OptimOptions,
) -> Result<(Basis, OptimTrace)> {
    let (k, n) = (w0.k(), w0.n());
    let eval = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let view = ArrayView2::from_shape((k, n), x).expect("shape is fixed");
        let e = objective.evaluate(view)?;
        Ok((e.value, e.gradient.into_iter().collect()))
    };
    let mut rows = Vec::new();
    let observe = |iter: usize, x: &[f64], value: f64, gnorm: f64| {
        let view = ArrayView2::from_shape((k, n), x).expect("shape is fixed");
        rows.push(TraceRow {
            iter,
            objective: value,
            grad_norm: gnorm,
            min_angle_deg: Gram(view.dot(&view.t())).min_angle(),
        });
    };
    let x0: Vec<f64> = w0.as_array().iter().copied().collect();
    let out = lbfgs(&UnitRows { dim: n }, eval, x0, opts, observe)?;
    let basis = Basis::new(Array2::from_shape_vec((k, n), out.x).expect("shape is fixed"))?;
    Ok((
        basis,
        OptimTrace {
            rows,
            termination: out.termination,
        },
    ))
}

/// Iterate the quasi-orthogonality update.
///
/// Trace rows carry the L2 cost as `objective` (for reference only) and the
/// Frobenius norm of the change in W as `grad_norm`.
pub fn run_quasi_orth(w0: &Basis, iters: usize) -> Result<(Basis, OptimTrace)> {
    let mut w = w0.clone();
    let mut start = w.as_array().clone();
    normalize_rows_in_place(&mut start)?;
    w = Basis::new(start)?;
    let mut rows = vec![TraceRow {
        iter: 0,
        objective: cost_l2(&w).value,
        grad_norm: 0.0,
        min_angle_deg: w.min_pairwise_angle(),
    }];
    for iter in 1..=iters {
        let next = quasi_orth_update(&w)?;
        let change = (next.as_array() - w.as_array()).mapv(|v| v * v).sum().sqrt();
        w = next;
        rows.push(TraceRow {
            iter,
            objective: cost_l2(&w).value,
            grad_norm: change,
            min_angle_deg: w.min_pairwise_angle(),
        });
    }
    Ok((
        w,
        OptimTrace {
            rows,
            termination: Termination::MaxIters,
        },
    ))
}
