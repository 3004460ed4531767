//! Closed forms for four unit vectors in the plane at angles
//! `{0, t1, t2, t2 + t3}`, evaluated along the path `t1 = t3 = pi/2` where the
//! basis is two stacked orthonormal pairs, plus finite-difference routes
//! through the numeric costs that check them.

use std::f64::consts::FRAC_PI_2;

use ndarray::{array, Array2};
use serde::Serialize;

use crate::basis::{Basis, CostKind};
use crate::costs::evaluate;
use crate::error::{OicaError, Result};
use crate::io::CsvTable;
use crate::linalg::sym_eigvals;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config2D {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl Config2D {
    /// Point on the `t1 = t3 = pi/2` path.
    pub fn on_path(theta2: f64) -> Self {
        Self {
            theta1: FRAC_PI_2,
            theta2,
            theta3: FRAC_PI_2,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.theta1, self.theta2, self.theta3]
    }

    pub fn from_array(t: [f64; 3]) -> Self {
        Self {
            theta1: t[0],
            theta2: t[1],
            theta3: t[2],
        }
    }

    pub fn to_basis(&self) -> Basis {
        let angles = [0.0, self.theta1, self.theta2, self.theta2 + self.theta3];
        let rows: Vec<Vec<f64>> = angles.iter().map(|a| vec![a.cos(), a.sin()]).collect();
        Basis::from_rows(&rows).expect("angles are finite")
    }
}

/// Costs with closed forms on the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PathKind {
    L2,
    L4,
}

impl PathKind {
    pub fn cost_kind(self) -> CostKind {
        match self {
            PathKind::L2 => CostKind::L2,
            PathKind::L4 => CostKind::L4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PathKind::L2 => "l2",
            PathKind::L4 => "l4",
        }
    }
}

impl TryFrom<CostKind> for PathKind {
    type Error = OicaError;
    fn try_from(kind: CostKind) -> Result<Self> {
        match kind {
            CostKind::L2 => Ok(PathKind::L2),
            CostKind::L4 => Ok(PathKind::L4),
            other => Err(OicaError::Parse(format!("no closed form for {other}"))),
        }
    }
}

pub fn path_cost(kind: PathKind, theta2: f64) -> f64 {
    match kind {
        PathKind::L2 => 4.0,
        PathKind::L4 => 3.0 + (4.0 * theta2).cos(),
    }
}

/// `(dC/dt1, dC/dt2, dC/dt3)` on the path.
pub fn path_gradient(kind: PathKind, theta2: f64) -> [f64; 3] {
    match kind {
        PathKind::L2 => [0.0; 3],
        PathKind::L4 => {
            let s4 = (4.0 * theta2).sin();
            [2.0 * s4, -4.0 * s4, -2.0 * s4]
        }
    }
}

pub fn path_hessian(kind: PathKind, theta2: f64) -> Array2<f64> {
    let c2 = (2.0 * theta2).cos();
    let c4 = (4.0 * theta2).cos();
    match kind {
        PathKind::L2 => array![[4.0, 0.0, 4.0 * c2], [0.0, 0.0, 0.0], [4.0 * c2, 0.0, 4.0]],
        PathKind::L4 => {
            let corner = 4.0 * (c2 + c4);
            array![
                [-8.0 * c4, 8.0 * c4, corner],
                [8.0 * c4, -16.0 * c4, -8.0 * c4],
                [corner, -8.0 * c4, -8.0 * c4]
            ]
        }
    }
}

/// Closed-form Hessian eigenvalues on the path, ascending.
pub fn path_hessian_eigs(kind: PathKind, theta2: f64) -> [f64; 3] {
    let mut e = match kind {
        PathKind::L2 => {
            let (s, c) = theta2.sin_cos();
            [0.0, 8.0 * s * s, 8.0 * c * c]
        }
        PathKind::L4 => {
            let c = |m: f64| (m * theta2).cos();
            let disc = 34.0 - 2.0 * c(2.0) + c(4.0) - 2.0 * c(6.0) + 33.0 * c(8.0);
            let root = 2f64.sqrt() * disc.max(0.0).sqrt();
            let mid = -2.0 * c(2.0) - 14.0 * c(4.0);
            [4.0 * (c(2.0) - c(4.0)), mid - root, mid + root]
        }
    };
    e.sort_by(f64::total_cmp);
    e
}

/// Numeric cost of the configuration through the generic cost code.
pub fn numeric_cost(kind: PathKind, cfg: Config2D) -> f64 {
    evaluate(kind.cost_kind(), &cfg.to_basis())
        .expect("L2/L4 never fail")
        .value
}

/// Central-difference gradient in angle coordinates.
pub fn fd_gradient(kind: PathKind, cfg: Config2D, h: f64) -> [f64; 3] {
    let t = cfg.as_array();
    let mut g = [0.0; 3];
    for (a, ga) in g.iter_mut().enumerate() {
        let mut p = t;
        let mut m = t;
        p[a] += h;
        m[a] -= h;
        *ga = (numeric_cost(kind, Config2D::from_array(p)) - numeric_cost(kind, Config2D::from_array(m)))
            / (2.0 * h);
    }
    g
}

/// Second-order central-difference Hessian in angle coordinates.
pub fn fd_hessian(kind: PathKind, cfg: Config2D, h: f64) -> Array2<f64> {
    let t = cfg.as_array();
    let f = |da: [f64; 3]| {
        let mut p = t;
        for i in 0..3 {
            p[i] += da[i];
        }
        numeric_cost(kind, Config2D::from_array(p))
    };
    let unit = |i: usize, s: f64| {
        let mut v = [0.0; 3];
        v[i] = s;
        v
    };
    let add = |a: [f64; 3], b: [f64; 3]| [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
    let f0 = f([0.0; 3]);
    let mut hm = Array2::zeros((3, 3));
    for a in 0..3 {
        hm[[a, a]] = (f(unit(a, h)) - 2.0 * f0 + f(unit(a, -h))) / (h * h);
        for b in (a + 1)..3 {
            let v = (f(add(unit(a, h), unit(b, h))) - f(add(unit(a, h), unit(b, -h)))
                - f(add(unit(a, -h), unit(b, h)))
                + f(add(unit(a, -h), unit(b, -h))))
                / (4.0 * h * h);
            hm[[a, b]] = v;
            hm[[b, a]] = v;
        }
    }
    hm
}

pub const GRAD_STEP: f64 = 1e-5;
pub const HESS_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub cost: f64,
    pub grad: f64,
    pub hessian: f64,
    pub eig: f64,
    /// Closed-form Hessian eigenvalues against the closed-form eigenvalue list.
    pub eig_closed: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cost: 1e-10,
            grad: 1e-6,
            hessian: 1e-5,
            eig: 1e-5,
            eig_closed: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check2dRow {
    pub theta2: f64,
    pub cost_closed: f64,
    pub cost_numeric: f64,
    pub max_grad_err: f64,
    /// Eigenvalues of the finite-difference Hessian against the closed form.
    pub max_eig_err: f64,
    /// Entries of the finite-difference Hessian against the closed form.
    pub max_hess_err: f64,
    /// Eigenvalues of the closed-form Hessian against the closed-form list.
    pub max_eig_closed_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check2dReport {
    pub kind: PathKind,
    pub rows: Vec<Check2dRow>,
    pub violations: Vec<String>,
}

impl Check2dReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "theta2",
            "cost_closed",
            "cost_numeric",
            "max_grad_err",
            "max_eig_err",
            "max_hess_err",
        ]);
        for r in &self.rows {
            t.push([r.theta2, r.cost_closed, r.cost_numeric, r.max_grad_err, r.max_eig_err, r.max_hess_err]);
        }
        t
    }
}

/// `points` values of `theta2` evenly covering `[0, 2 pi)`.
pub fn theta_grid(points: usize) -> Vec<f64> {
    let points = points.max(1);
    (0..points)
        .map(|i| std::f64::consts::TAU * i as f64 / points as f64)
        .collect()
}

/// Compare closed forms against the numeric route over a grid. A nonzero
/// `injected_error` is added to the closed-form cost (negative control).
pub fn check_grid(kind: PathKind, points: usize, tol: Tolerances, injected_error: f64) -> Check2dReport {
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for theta2 in theta_grid(points) {
        let cfg = Config2D::on_path(theta2);
        let cost_closed = path_cost(kind, theta2) + injected_error;
        let cost_numeric = numeric_cost(kind, cfg);

        let g_closed = path_gradient(kind, theta2);
        let g_fd = fd_gradient(kind, cfg, GRAD_STEP);
        let max_grad_err = max_abs_diff(&g_closed, &g_fd);

        let h_closed = path_hessian(kind, theta2);
        let h_fd = fd_hessian(kind, cfg, HESS_STEP);
        let max_hess_err = (&h_closed - &h_fd).iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let eigs = path_hessian_eigs(kind, theta2);
        let fd_eigs = sym_eigvals(&h_fd);
        let max_eig_err = max_abs_diff(&eigs, fd_eigs.as_slice().expect("contiguous"));
        let closed_eigs = sym_eigvals(&h_closed);
        let max_eig_closed_err = max_abs_diff(&eigs, closed_eigs.as_slice().expect("contiguous"));

        let row = Check2dRow {
            theta2,
            cost_closed,
            cost_numeric,
            max_grad_err,
            max_eig_err,
            max_hess_err,
            max_eig_closed_err,
        };
        let mut flag = |what: &str, err: f64, limit: f64| {
            if !(err <= limit) {
                violations.push(format!(
                    "{} theta2={theta2:.6}: {what} error {err:e} exceeds {limit:e}",
                    kind.name()
                ));
            }
        };
        flag("cost", (cost_closed - cost_numeric).abs(), tol.cost);
        flag("gradient", max_grad_err, tol.grad);
        flag("hessian", max_hess_err, tol.hessian);
        flag("eigenvalue", max_eig_err, tol.eig);
        flag("closed eigenvalue", max_eig_closed_err, tol.eig_closed);
        rows.push(row);
    }
    Check2dReport {
        kind,
        rows,
        violations,
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
