//! High-dimensional degenerate configurations and the numerical checks on
//! them: symmetry of the L2 cost under rotating one orthonormal subset,
//! stationarity under single-row rotations, and gradient profiles of
//! two-element bases near `cos = 0` and `cos = 1`.

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::basis::{normalize_rows_in_place, Basis, CostKind};
use crate::costs::{evaluate, evaluate_matrix};
use crate::error::{OicaError, Result};
use crate::linalg::{linear_fit, random_rotation};
use crate::parallel::{map_indexed, Parallelism};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathologicalInit {
    pub n: usize,
    pub m_tiles: usize,
    /// Expected norm of the noise vector added to each basis element.
    pub noise_sigma: f64,
    pub seed: u64,
}

/// `M` stacked copies of a random rotation of the identity, each row
/// perturbed by isotropic Gaussian noise and renormalized.
///
/// The per-entry standard deviation is `noise_sigma / sqrt(n)`, so the noise
/// vector on each row has norm close to `noise_sigma` regardless of `n`.
pub fn pathological_init(p: PathologicalInit) -> Basis {
    let PathologicalInit {
        n,
        m_tiles,
        noise_sigma,
        seed,
    } = p;
    assert!(n >= 2 && m_tiles >= 1, "need n >= 2 and M >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_rotation(n, &mut rng);
    let per_entry = noise_sigma / (n as f64).sqrt();
    let mut w = Array2::zeros((m_tiles * n, n));
    for t in 0..m_tiles {
        w.slice_mut(s![t * n..(t + 1) * n, ..]).assign(&q);
    }
    if noise_sigma > 0.0 {
        w.mapv_inplace(|v| v + per_entry * rng.sample::<f64, _>(StandardNormal));
    }
    normalize_rows_in_place(&mut w).expect("noisy rotation rows are nonzero");
    Basis::new(w).expect("finite by construction")
}

/// Rows drawn uniformly from the unit sphere.
pub fn random_uniform_init(k: usize, n: usize, seed: u64) -> Basis {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut w = Array2::from_shape_fn((k, n), |_| rng.sample::<f64, _>(StandardNormal));
        if normalize_rows_in_place(&mut w).is_ok() {
            return Basis::new(w).expect("finite by construction");
        }
    }
}

/// Check that rows split into `M` subsets of `n` mutually orthonormal rows.
pub fn check_pathological(basis: &Basis, n: usize, m_tiles: usize) -> Result<()> {
    if basis.n() != n || basis.k() != n * m_tiles {
        return Err(OicaError::NotPathological(format!(
            "expected {}x{n}, got {}x{}",
            n * m_tiles,
            basis.k(),
            basis.n()
        )));
    }
    let w = basis.as_array();
    for t in 0..m_tiles {
        let block = w.slice(s![t * n..(t + 1) * n, ..]);
        let g = block.dot(&block.t());
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                if (g[[i, j]] - target).abs() > 1e-8 {
                    return Err(OicaError::NotPathological(format!(
                        "subset {t}: gram[{i},{j}] = {:e}",
                        g[[i, j]]
                    )));
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub deltas: Vec<f64>,
    pub max_delta: f64,
}

/// Rotate only the first orthonormal subset by Haar-random rotations and
/// record the absolute change of the cost. Trial `t` uses seed `seed + t`.
pub fn rotation_invariance_check(
    basis: &Basis,
    n: usize,
    m_tiles: usize,
    trials: usize,
    kind: CostKind,
    seed: u64,
    mode: Parallelism,
) -> Result<InvarianceReport> {
    check_pathological(basis, n, m_tiles)?;
    let base = evaluate(kind, basis)?.value;
    let deltas = map_indexed(mode, trials, |t| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let rot = random_rotation(n, &mut rng);
        let mut w = basis.as_array().clone();
        let rotated = w.slice(s![0..n, ..]).dot(&rot.t());
        w.slice_mut(s![0..n, ..]).assign(&rotated);
        Ok((evaluate_matrix(kind, w.view())?.value - base).abs())
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let max_delta = deltas.iter().copied().fold(0.0, f64::max);
    Ok(InvarianceReport { deltas, max_delta })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    /// `(eps, |C(eps) - C(0)|)` in input order.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `log |dC|` against `log eps` over points with
    /// `eps > 0` and `dC > 0`.
    pub slope: f64,
}

/// Rotate one row of an exact tiled configuration by angle `eps` in the plane
/// spanned by the row and a random orthogonal direction.
pub fn critical_point_scan(
    basis: &Basis,
    n: usize,
    m_tiles: usize,
    row_index: usize,
    generator_seed: u64,
    eps_list: &[f64],
    kind: CostKind,
) -> Result<ScanResult> {
    check_pathological(basis, n, m_tiles)?;
    perturbation_scan(basis, row_index, generator_seed, eps_list, kind)
}

/// Same scan without the structural check, for arbitrary bases.
pub fn perturbation_scan(
    basis: &Basis,
    row_index: usize,
    generator_seed: u64,
    eps_list: &[f64],
    kind: CostKind,
) -> Result<ScanResult> {
    if row_index >= basis.k() {
        return Err(OicaError::ShapeMismatch(format!(
            "row {row_index} out of range for {} rows",
            basis.k()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(generator_seed);
    let row = basis.row(row_index).to_owned();
    let dir = random_orthogonal_unit(&row, &mut rng);
    let base = evaluate(kind, basis)?.value;
    let mut points = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mut w = basis.as_array().clone();
        let rotated: Array1<f64> = &row * eps.cos() + &dir * eps.sin();
        w.row_mut(row_index).assign(&rotated);
        let delta = if eps == 0.0 {
            0.0
        } else {
            (evaluate_matrix(kind, w.view())?.value - base).abs()
        };
        points.push((eps, delta));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(e, d)| *e > 0.0 && *d > 0.0)
        .map(|(e, d)| (e.ln(), d.ln()))
        .unzip();
    let slope = if lx.len() >= 2 {
        linear_fit(&lx, &ly).1
    } else {
        f64::NAN
    };
    Ok(ScanResult { points, slope })
}

fn random_orthogonal_unit<R: Rng>(v: &Array1<f64>, rng: &mut R) -> Array1<f64> {
    let unit = v / v.dot(v).sqrt();
    loop {
        let g = Array1::from_shape_fn(v.len(), |_| rng.sample::<f64, _>(StandardNormal));
        let d = &g - &(&unit * unit.dot(&g));
        let norm = d.dot(&d).sqrt();
        if norm > 1e-8 {
            return d / norm;
        }
    }
}

/// `eps` values log-spaced over `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProfileRegion {
    NearZero,
    NearOne,
}

impl std::str::FromStr for ProfileRegion {
    type Err = OicaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "near_zero" | "zero" => Ok(Self::NearZero),
            "near_one" | "one" => Ok(Self::NearOne),
            other => Err(OicaError::Parse(format!("unknown region '{other}'"))),
        }
    }
}

/// Derivative of the cost of the two-row basis `[(1,0), (cos t, sin t)]`
/// with respect to `t`, from the analytic matrix gradient.
pub fn angular_gradient(kind: CostKind, cos_theta: f64) -> Result<f64> {
    let t = cos_theta.clamp(-1.0, 1.0).acos();
    let w = ndarray::array![[1.0, 0.0], [t.cos(), t.sin()]];
    let g = evaluate_matrix(kind, w.view())?.gradient;
    Ok(g[[1, 0]] * -t.sin() + g[[1, 1]] * t.cos())
}

/// Tabulate `(cos t, dC/dt)` over the chosen region. `near_zero` samples
/// `(0, 0.1]`; `near_one` samples `[0.9, 1 - delta]` with
/// `delta = max(1e-3, 100 eps)`.
pub fn gradient_profile(kind: CostKind, region: ProfileRegion, samples: usize) -> Result<Vec<(f64, f64)>> {
    kind.validate()?;
    let samples = samples.max(2);
    let (lo, hi) = match region {
        ProfileRegion::NearZero => (0.1 / samples as f64, 0.1),
        ProfileRegion::NearOne => (0.9, 1.0 - (100.0 * kind.eps().unwrap_or(0.0)).max(1e-3)),
    };
    (0..samples)
        .map(|i| {
            let c = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            Ok((c, angular_gradient(kind, c)?))
        })
        .collect()
}

/// Fit `|g| = c * x^p` by least squares in log-log space; returns `(c, p, r2)`.
pub fn fit_power_law(table: &[(f64, f64)]) -> (f64, f64, f64) {
    let (lx, ly): (Vec<f64>, Vec<f64>) = table
        .iter()
        .filter(|(x, g)| *x > 0.0 && g.abs() > 0.0)
        .map(|(x, g)| (x.ln(), g.abs().ln()))
        .unzip();
    let (a, p, r2) = linear_fit(&lx, &ly);
    (a.exp(), p, r2)
}
