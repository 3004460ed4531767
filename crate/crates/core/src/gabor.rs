//! Gabor kernels and a three-stage least-squares fit for learned filters.
//!
//! Kernel: `A exp(-u^2 / (2 var_par) - v^2 / (2 var_perp)) cos(2 pi f u + phase)`
//! where `(u, v)` are pixel offsets from the center rotated by `phi`, `u`
//! running along the oscillation axis. Pixel `(row, col)` has coordinates
//! `x = col`, `y = row`.
//!
//! Fit quality is the squared distance between the unit-normalized patch and
//! the unit-normalized kernel (`2 - 2 corr`). The zero kernel scores 1.
//! For fixed geometry the optimal phase and amplitude are linear in the
//! cosine/sine pair and are solved in closed form, so the numerical searches
//! only move the remaining parameters.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use serde::Serialize;

use crate::error::{OicaError, Result};
use crate::io::CsvTable;
use crate::optimizer::{lbfgs, Euclidean, LineSearch, OptimOptions};
use crate::parallel::{map_indexed, Parallelism};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaborParams {
    pub center_x: f64,
    pub center_y: f64,
    /// Orientation of the oscillation axis, radians.
    pub phi: f64,
    pub phase: f64,
    /// Cycles per pixel.
    pub frequency: f64,
    pub var_par: f64,
    pub var_perp: f64,
    pub amplitude: f64,
}

impl GaborParams {
    pub fn validate(&self, size: usize) -> Result<()> {
        let s = size as f64;
        let inside = |c: f64| c >= -s && c <= 2.0 * s;
        if self.frequency > 0.0
            && self.var_par > 0.0
            && self.var_perp > 0.0
            && inside(self.center_x)
            && inside(self.center_y)
            && [self.phi, self.phase, self.amplitude].iter().all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(OicaError::Parse(format!("invalid Gabor parameters {self:?}")))
        }
    }
}

pub fn gabor_kernel(p: &GaborParams, size: usize) -> Array2<f64> {
    let (s, c) = p.phi.sin_cos();
    Array2::from_shape_fn((size, size), |(row, col)| {
        let dx = col as f64 - p.center_x;
        let dy = row as f64 - p.center_y;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        let env = (-u * u / (2.0 * p.var_par) - v * v / (2.0 * p.var_perp)).exp();
        p.amplitude * env * (TAU * p.frequency * u + p.phase).cos()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborFitConfig {
    /// Initial envelope widths, log-spaced over `[0.5, size / 2]` pixels.
    pub widths: usize,
    /// Rotations evenly spaced over `[0, pi)`.
    pub rotations: usize,
    /// Frequencies log-spaced over `[1 / size, 0.5]` cycles per pixel.
    pub frequencies: usize,
    /// Best grid points per width whose rotation and frequency are refined.
    pub refine_per_width: usize,
    /// Candidates advancing to the joint refinement.
    pub top: usize,
    pub stage2_iters: usize,
    pub stage3_iters: usize,
}

impl Default for GaborFitConfig {
    fn default() -> Self {
        Self {
            widths: 8,
            rotations: 12,
            frequencies: 8,
            refine_per_width: 3,
            top: 5,
            stage2_iters: 30,
            stage3_iters: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaborFit {
    pub params: GaborParams,
    pub mse: f64,
}

/// Geometry without phase and amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Shape {
    cx: f64,
    cy: f64,
    phi: f64,
    freq: f64,
    var_par: f64,
    var_perp: f64,
}

const MIN_FREQ: f64 = 1e-3;
const MAX_FREQ: f64 = 0.5;
const MIN_VAR: f64 = 0.1;

struct Target<'a> {
    unit: &'a [f64],
    size: usize,
}

struct Projection {
    corr: f64,
    phase: f64,
    /// Amplitude of the unit-amplitude kernel fitted to the unit patch.
    scale: f64,
}

impl Target<'_> {
    fn clamp(&self, sh: Shape) -> Shape {
        let s = self.size as f64;
        Shape {
            cx: sh.cx.clamp(-s, 2.0 * s),
            cy: sh.cy.clamp(-s, 2.0 * s),
            phi: sh.phi,
            freq: sh.freq.clamp(MIN_FREQ, MAX_FREQ),
            var_par: sh.var_par.clamp(MIN_VAR, 4.0 * s * s),
            var_perp: sh.var_perp.clamp(MIN_VAR, 4.0 * s * s),
        }
    }

    /// Best correlation over phase and amplitude for a fixed shape.
    fn project(&self, sh: Shape) -> Projection {
        let sh = self.clamp(sh);
        let (s, c) = sh.phi.sin_cos();
        let (mut pc, mut ps, mut cc, mut ss, mut cs) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for row in 0..self.size {
            for col in 0..self.size {
                let dx = col as f64 - sh.cx;
                let dy = row as f64 - sh.cy;
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                let env = (-u * u / (2.0 * sh.var_par) - v * v / (2.0 * sh.var_perp)).exp();
                let (sn, cn) = (TAU * sh.freq * u).sin_cos();
                let (kc, ks) = (env * cn, env * sn);
                let p = self.unit[row * self.size + col];
                pc += p * kc;
                ps += p * ks;
                cc += kc * kc;
                ss += ks * ks;
                cs += kc * ks;
            }
        }
        let det = cc * ss - cs * cs;
        let (a, b) = if det > 1e-12 * cc * ss && det > 1e-300 {
            ((ss * pc - cs * ps) / det, (cc * ps - cs * pc) / det)
        } else if cc > 1e-300 {
            (pc / cc, 0.0)
        } else {
            return Projection {
                corr: 0.0,
                phase: 0.0,
                scale: 0.0,
            };
        };
        let energy = a * a * cc + 2.0 * a * b * cs + b * b * ss;
        let corr = if energy > 0.0 {
            ((a * pc + b * ps) / energy.sqrt()).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        Projection {
            corr,
            // a cos x + b sin x = R cos(x - atan2(b, a))
            phase: -b.atan2(a),
            scale: a.hypot(b),
        }
    }

    fn error(&self, sh: Shape) -> f64 {
        2.0 - 2.0 * self.project(sh).corr
    }
}

fn shape_from_vec(x: &[f64]) -> Shape {
    Shape {
        cx: x[0],
        cy: x[1],
        phi: x[2],
        freq: x[3].exp(),
        var_par: x[4].exp(),
        var_perp: x[5].exp(),
    }
}

fn shape_to_vec(sh: Shape) -> Vec<f64> {
    vec![sh.cx, sh.cy, sh.phi, sh.freq.ln(), sh.var_par.ln(), sh.var_perp.ln()]
}

/// Locally minimize the fit error over the parameters flagged in `free`
/// (indices into the `shape_to_vec` layout) using central-difference
/// gradients.
fn refine(target: &Target<'_>, start: Shape, free: &[usize], iters: usize) -> (Shape, f64) {
    let base = shape_to_vec(start);
    let embed = |z: &[f64]| {
        let mut x = base.clone();
        for (&i, &v) in free.iter().zip(z) {
            x[i] = v;
        }
        x
    };
    let f = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
        let value = target.error(shape_from_vec(&embed(z)));
        let h = 1e-6;
        let mut grad = Vec::with_capacity(z.len());
        let mut probe = z.to_vec();
        for i in 0..z.len() {
            probe[i] = z[i] + h;
            let up = target.error(shape_from_vec(&embed(&probe)));
            probe[i] = z[i] - h;
            let down = target.error(shape_from_vec(&embed(&probe)));
            probe[i] = z[i];
            grad.push((up - down) / (2.0 * h));
        }
        Ok((value, grad))
    };
    let opts = OptimOptions {
        max_iters: iters.max(1),
        grad_tol: 1e-10,
        history: 8,
        line_search: LineSearch {
            max_backtracks: 30,
            ..LineSearch::default()
        },
        seed: 0,
    };
    let z0: Vec<f64> = free.iter().map(|&i| base[i]).collect();
    match lbfgs(&Euclidean, f, z0, &opts, |_, _, _, _| {}) {
        Ok(out) => {
            let sh = target.clamp(shape_from_vec(&embed(&out.x)));
            (sh, target.error(sh))
        }
        Err(_) => (start, target.error(start)),
    }
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let (h, w) = img.dim();
    let reflect = |i: isize, len: usize| -> usize {
        let len = len as isize;
        if len == 1 {
            return 0;
        }
        let period = 2 * (len - 1);
        let mut j = i.rem_euclid(period);
        if j >= len {
            j = period - j;
        }
        j as usize
    };
    let mut tmp = Array2::<f64>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            tmp[[r, c]] = weights
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * img[[r, reflect(c as isize + k as isize - radius, w)]])
                .sum();
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            out[[r, c]] = weights
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * tmp[[reflect(r as isize + k as isize - radius, h), c]])
                .sum();
        }
    }
    out
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![(lo * hi).sqrt()];
    }
    (0..count)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Fit a Gabor kernel to a square patch.
///
/// 1. For each initial width, blur `|patch|` and take the intensity centroid
///    as the envelope center.
/// 2. For each center/width, score every rotation x frequency grid point and
///    locally optimize rotation and frequency from the best few (phase is
///    solved exactly at every evaluation).
/// 3. Jointly re-optimize center, variances, rotation and frequency for the
///    best `top` candidates.
pub fn fit_gabor(patch: &Array2<f64>, config: &GaborFitConfig) -> Result<GaborFit> {
    let (h, w) = patch.dim();
    if h != w || h == 0 {
        return Err(OicaError::ShapeMismatch(format!("patch must be square, got {h}x{w}")));
    }
    let size = h;
    let max = patch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = patch.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max - min > 1e-12 * max.abs().max(min.abs()).max(1e-300)) {
        return Err(OicaError::ConstantPatch);
    }
    let norm = patch.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unit_patch = patch / norm;
    let unit: Vec<f64> = unit_patch.iter().copied().collect();
    let target = Target { unit: &unit, size };

    let widths = log_grid(0.5, size as f64 / 2.0, config.widths);
    let freqs = log_grid(1.0 / size as f64, MAX_FREQ, config.frequencies);
    let abs_patch = unit_patch.mapv(f64::abs);

    let mut candidates: Vec<(Shape, f64)> = Vec::new();
    for &width in &widths {
        let blurred = gaussian_blur(&abs_patch, width);
        let mass: f64 = blurred.sum();
        let (mut cx, mut cy) = (0.0, 0.0);
        for ((r, c), v) in blurred.indexed_iter() {
            cx += c as f64 * v;
            cy += r as f64 * v;
        }
        cx /= mass;
        cy /= mass;
        let mut grid: Vec<(Shape, f64)> = Vec::with_capacity(config.rotations * freqs.len());
        for ri in 0..config.rotations {
            let phi = PI * ri as f64 / config.rotations as f64;
            for &freq in &freqs {
                let start = Shape {
                    cx,
                    cy,
                    phi,
                    freq,
                    var_par: width * width,
                    var_perp: width * width,
                };
                grid.push((start, target.error(start)));
            }
        }
        grid.sort_by(|a, b| a.1.total_cmp(&b.1));
        for &(start, _) in grid.iter().take(config.refine_per_width.max(1)) {
            candidates.push(refine(&target, start, &[2, 3], config.stage2_iters));
        }
    }
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1));
    candidates.truncate(config.top.max(1));

    let (best, err) = candidates
        .iter()
        .map(|&(sh, _)| refine(&target, sh, &[0, 1, 2, 3, 4, 5], config.stage3_iters))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one candidate");

    if !(err < 1.0) {
        return Err(OicaError::FitDiverged { best_mse: err });
    }
    let proj = target.project(best);
    let params = canonical(GaborParams {
        center_x: best.cx,
        center_y: best.cy,
        phi: best.phi,
        phase: proj.phase,
        frequency: best.freq,
        var_par: best.var_par,
        var_perp: best.var_perp,
        amplitude: proj.scale * norm,
    });
    Ok(GaborFit { params, mse: err })
}

/// Fold `phi` into `[0, pi)` (negating the phase when shifting by pi) and the
/// phase into `(-pi, pi]`.
pub fn canonical(mut p: GaborParams) -> GaborParams {
    let turns = (p.phi / PI).floor();
    p.phi -= turns * PI;
    if (turns as i64).rem_euclid(2) == 1 {
        p.phase = -p.phase;
    }
    p.phase = wrap_angle(p.phase);
    p
}

/// Wrap into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Distance between two orientations modulo pi, radians.
pub fn orientation_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Squared distance between unit-normalized patch and kernel.
pub fn normalized_mse(patch: &Array2<f64>, kernel: &Array2<f64>) -> f64 {
    let np = patch.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nk = kernel.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nk == 0.0 {
        return 1.0;
    }
    patch
        .iter()
        .zip(kernel)
        .map(|(a, b)| (a / np - b / nk).powi(2))
        .sum()
}

/// Outcome of fitting one basis element.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElementFit {
    pub index: usize,
    pub fit: Option<GaborFit>,
    /// Best score when the fit diverged.
    pub best_mse: f64,
}

/// Fit every row of a basis reshaped to `size x size`. Rows are fit
/// independently and returned in index order.
pub fn fit_basis(
    rows: &Array2<f64>,
    size: usize,
    config: &GaborFitConfig,
    mode: Parallelism,
) -> Result<Vec<ElementFit>> {
    if rows.ncols() != size * size {
        return Err(OicaError::ShapeMismatch(format!(
            "rows of length {} cannot be reshaped to {size}x{size}",
            rows.ncols()
        )));
    }
    map_indexed(mode, rows.nrows(), |i| {
        let patch = Array2::from_shape_vec((size, size), rows.row(i).to_vec()).expect("length checked");
        match fit_gabor(&patch, config) {
            Ok(fit) => Ok(ElementFit {
                index: i,
                best_mse: fit.mse,
                fit: Some(fit),
            }),
            Err(OicaError::FitDiverged { best_mse }) => Ok(ElementFit {
                index: i,
                fit: None,
                best_mse,
            }),
            Err(OicaError::ConstantPatch) => Ok(ElementFit {
                index: i,
                fit: None,
                best_mse: 1.0,
            }),
            Err(e) => Err(e),
        }
    })
    .into_iter()
    .collect()
}

pub fn fits_to_csv(fits: &[ElementFit]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "index", "mse", "center_x", "center_y", "phi_deg", "phase_deg", "freq", "var_par", "var_perp",
    ]);
    for f in fits {
        match &f.fit {
            Some(g) => {
                let p = g.params;
                t.push([
                    f.index.to_string(),
                    g.mse.to_string(),
                    p.center_x.to_string(),
                    p.center_y.to_string(),
                    p.phi.to_degrees().to_string(),
                    p.phase.to_degrees().to_string(),
                    p.frequency.to_string(),
                    p.var_par.to_string(),
                    p.var_perp.to_string(),
                ]);
            }
            None => {
                let mut row = vec![f.index.to_string(), f.best_mse.to_string()];
                row.extend(std::iter::repeat_n("nan".to_string(), 7));
                t.push(row);
            }
        }
    }
    t
}

/// Parameter ranges for synthetic round-trip kernels on `size x size`
/// patches: center within 2 px of the middle, any orientation and phase,
/// frequency in `[0.1, 0.25]`, envelope standard deviations in `[2, 4]` px.
pub fn random_params<R: rand::Rng>(size: usize, rng: &mut R) -> GaborParams {
    let mid = (size as f64 - 1.0) / 2.0;
    let sd_par: f64 = rng.random_range(2.0..4.0);
    let sd_perp: f64 = rng.random_range(2.0..4.0);
    GaborParams {
        center_x: mid + rng.random_range(-2.0..2.0),
        center_y: mid + rng.random_range(-2.0..2.0),
        phi: rng.random_range(0.0..PI),
        phase: rng.random_range(-PI..PI),
        frequency: rng.random_range(0.1..0.25),
        var_par: sd_par * sd_par,
        var_perp: sd_perp * sd_perp,
        amplitude: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn params() -> GaborParams {
        GaborParams {
            center_x: 7.3,
            center_y: 8.1,
            phi: 30f64.to_radians(),
            phase: 0.6,
            frequency: 0.15,
            var_par: 9.0,
            var_perp: 6.0,
            amplitude: 1.0,
        }
    }

    #[test]
    fn odd_kernel_vanishes_at_center() {
        let p = GaborParams {
            center_x: 4.0,
            center_y: 5.0,
            phase: PI / 2.0,
            ..params()
        };
        let k = gabor_kernel(&p, 10);
        assert_abs_diff_eq!(k[[5, 4]], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_frequency_is_gaussian() {
        let p = GaborParams {
            frequency: 1e-12,
            phase: 0.0,
            ..params()
        };
        let k = gabor_kernel(&p, 16);
        assert!(k.iter().all(|&v| v > 0.0 && v <= 1.0));
        let g = gabor_kernel(&GaborParams { frequency: 0.0, ..p }, 16);
        assert!((&k - &g).mapv(f64::abs).sum() < 1e-9);
    }

    #[test]
    fn half_turn_with_negated_phase_is_identical() {
        let p = params();
        let q = GaborParams {
            phi: p.phi + PI,
            phase: -p.phase,
            ..p
        };
        let diff = (&gabor_kernel(&p, 16) - &gabor_kernel(&q, 16)).mapv(f64::abs).sum();
        assert!(diff < 1e-12);
        let c = canonical(q);
        assert_abs_diff_eq!(c.phi, p.phi, epsilon = 1e-12);
        assert_abs_diff_eq!(c.phase, p.phase, epsilon = 1e-12);
    }

    #[test]
    fn recovers_known_kernel() {
        let truth = params();
        let fit = fit_gabor(&gabor_kernel(&truth, 16), &GaborFitConfig::default()).unwrap();
        let p = fit.params;
        assert!(fit.mse < 1e-6, "mse {}", fit.mse);
        assert!((p.frequency / truth.frequency - 1.0).abs() < 0.05);
        assert!(orientation_distance(p.phi, truth.phi).to_degrees() < 3.0);
        assert!((p.center_x - truth.center_x).hypot(p.center_y - truth.center_y) < 0.5);
        assert_abs_diff_eq!(p.amplitude, 1.0, epsilon = 1e-3);
        let k = gabor_kernel(&p, 16);
        assert_abs_diff_eq!(normalized_mse(&gabor_kernel(&truth, 16), &k), fit.mse, epsilon = 1e-9);
    }

    #[test]
    fn recovers_frequency_under_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = params();
        let noisy = gabor_kernel(&truth, 16).mapv(|v| v + 0.05 * rng.sample::<f64, _>(StandardNormal));
        let fit = fit_gabor(&noisy, &GaborFitConfig::default()).unwrap();
        assert!((fit.params.frequency / truth.frequency - 1.0).abs() < 0.10);
    }

    #[test]
    fn noise_patch_is_rejected_or_poor() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let noise = Array2::from_shape_fn((16, 16), |_| rng.sample::<f64, _>(StandardNormal));
            match fit_gabor(&noise, &GaborFitConfig::default()) {
                Err(OicaError::FitDiverged { .. }) => {}
                Ok(fit) => assert!(fit.mse >= 0.8, "noise fit mse {}", fit.mse),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn amplitude_scaling_does_not_change_fit() {
        let k = gabor_kernel(&params(), 12);
        let a = fit_gabor(&k, &GaborFitConfig::default()).unwrap();
        let b = fit_gabor(&(&k * 10.0), &GaborFitConfig::default()).unwrap();
        assert_abs_diff_eq!(a.params.frequency, b.params.frequency, epsilon = 1e-6);
        assert_abs_diff_eq!(a.params.phi, b.params.phi, epsilon = 1e-6);
        assert_abs_diff_eq!(a.params.center_x, b.params.center_x, epsilon = 1e-6);
        assert_abs_diff_eq!(b.params.amplitude / a.params.amplitude, 10.0, epsilon = 1e-6);
    }

    #[test]
    fn constant_patch_is_an_error() {
        let p = Array2::from_elem((8, 8), 3.0);
        assert!(matches!(fit_gabor(&p, &GaborFitConfig::default()), Err(OicaError::ConstantPatch)));
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let c = Array2::from_elem((7, 9), 2.0);
        let b = gaussian_blur(&c, 1.5);
        assert!(b.iter().all(|v| (v - 2.0).abs() < 1e-12));
        let mut spike = Array2::zeros((15, 15));
        spike[[7, 7]] = 1.0;
        let b = gaussian_blur(&spike, 1.0);
        assert_abs_diff_eq!(b.sum(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[[6, 7]], b[[8, 7]], epsilon = 1e-15);
    }
}
