//! Experiment runners shared by the command line and the acceptance suite.
//!
//! Each runner takes a plain config struct and returns a serializable result
//! plus a list of tolerance violations (empty on success).

use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::analytic2d::{check_grid, Check2dReport, PathKind, Tolerances};
use crate::basis::{Basis, CostKind};
use crate::costs::grad_check;
use crate::data::{
    amari_index, extract_patches, fit_whitening, synth_sources, synth_sources_with_mixing, DataMatrix, EigenFloor,
    Image, WhiteningKind, WhiteningTransform,
};
use crate::error::{OicaError, Result};
use crate::gabor::{
    fit_basis, fit_gabor, gabor_kernel, orientation_distance, random_params, ElementFit, GaborFitConfig,
};
use crate::highdim::{
    critical_point_scan, fit_power_law, gradient_profile, log_spaced, pathological_init, perturbation_scan,
    random_uniform_init, rotation_invariance_check, PathologicalInit, ProfileRegion,
};
use crate::io::CsvTable;
use crate::objective::{reconstruction_error, IcaObjective};
use crate::optimizer::{minimize, run_quasi_orth, OptimOptions, OptimTrace};
use crate::parallel::{map_indexed, Parallelism};

/// Statistics over folded pairwise angles (degrees, in `[0, 90]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngleSummary {
    pub pairs: usize,
    pub min: f64,
    pub p01: f64,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

pub fn summarize_angles(angles: &[f64]) -> AngleSummary {
    if angles.is_empty() {
        return AngleSummary {
            pairs: 0,
            min: 90.0,
            p01: 90.0,
            median: 90.0,
            mean: 90.0,
            std: 0.0,
        };
    }
    let mut s = angles.to_vec();
    s.sort_by(f64::total_cmp);
    let len = s.len() as f64;
    let mean = s.iter().sum::<f64>() / len;
    let var = s.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / len;
    AngleSummary {
        pairs: s.len(),
        min: s[0],
        p01: quantile(&s, 0.01),
        median: quantile(&s, 0.5),
        mean,
        std: var.sqrt(),
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Counts per 1 degree bin over `[0, 180]`; 180 lands in the last bin.
pub fn angle_histogram(angles: &[f64]) -> Vec<usize> {
    let mut bins = vec![0; 180];
    for &a in angles {
        let b = (a.floor().max(0.0) as usize).min(179);
        bins[b] += 1;
    }
    bins
}

pub fn histogram_csv(initial: &[f64], fin: &[f64]) -> CsvTable {
    let (hi, hf) = (angle_histogram(initial), angle_histogram(fin));
    let mut t = CsvTable::new(&["bin_lo_deg", "bin_hi_deg", "initial", "final"]);
    for b in 0..180 {
        t.push([b, b + 1, hi[b], hf[b]]);
    }
    t
}

/// Either a degeneracy cost minimized on the sphere or the quasi-orthogonality
/// fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Cost(CostKind),
    QuasiOrth,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Cost(k) => k.name(),
            Method::QuasiOrth => "quasi_orth",
        }
    }
}

impl FromStr for Method {
    type Err = OicaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quasi_orth" | "quasi-orth" | "qo" => Ok(Method::QuasiOrth),
            other => Ok(Method::Cost(other.parse()?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Random,
    Pathological,
}

impl FromStr for InitKind {
    type Err = OicaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitKind::Random),
            "pathological" => Ok(InitKind::Pathological),
            other => Err(OicaError::Parse(format!("unknown init '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DistributionConfig {
    pub method: Method,
    pub init: InitKind,
    /// Row count for random init; ignored for pathological init (`M * n` rows).
    pub k: usize,
    pub n: usize,
    pub m_tiles: usize,
    pub sigma: f64,
    pub seed: u64,
    pub opts: OptimOptions,
}

#[derive(Debug, Clone)]
pub struct DistributionResult {
    pub initial: Basis,
    pub fin: Basis,
    pub trace: OptimTrace,
    pub summary: DistributionSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistributionSummary {
    pub method: String,
    pub init: InitKind,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    pub iterations: usize,
    pub termination: String,
    pub initial: AngleSummary,
    #[serde(rename = "final")]
    pub fin: AngleSummary,
}

pub fn initial_basis(cfg: &DistributionConfig) -> Basis {
    match cfg.init {
        InitKind::Random => random_uniform_init(cfg.k, cfg.n, cfg.seed),
        InitKind::Pathological => pathological_init(PathologicalInit {
            n: cfg.n,
            m_tiles: cfg.m_tiles,
            noise_sigma: cfg.sigma,
            seed: cfg.seed,
        }),
    }
}

/// Optimize the pure degeneracy cost (no data term) and summarize angles.
pub fn run_distribution(cfg: &DistributionConfig) -> Result<DistributionResult> {
    let w0 = initial_basis(cfg);
    let (fin, trace) = match cfg.method {
        Method::Cost(kind) => minimize(&kind, &w0, &cfg.opts)?,
        Method::QuasiOrth => run_quasi_orth(&w0, cfg.opts.max_iters)?,
    };
    let summary = DistributionSummary {
        method: cfg.method.name().to_string(),
        init: cfg.init,
        k: w0.k(),
        n: w0.n(),
        seed: cfg.seed,
        iterations: trace.rows.len().saturating_sub(1),
        termination: trace.termination.to_string(),
        initial: summarize_angles(&w0.folded_angles()),
        fin: summarize_angles(&fin.folded_angles()),
    };
    Ok(DistributionResult {
        initial: w0,
        fin,
        trace,
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub num_patches: usize,
    pub whiten: WhiteningKind,
    pub floor: EigenFloor,
    pub cost: CostKind,
    pub lambda: f64,
    /// Defaults to four times the patch dimension when `None`.
    pub k: Option<usize>,
    pub seed: u64,
    pub opts: OptimOptions,
    pub parallelism: Parallelism,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub basis: Basis,
    pub trace: OptimTrace,
    pub whitening: WhiteningTransform,
    pub data: DataMatrix,
    pub summary: TrainSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub cost: String,
    pub lambda: f64,
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub iterations: usize,
    pub termination: String,
    pub final_objective: f64,
    pub reconstruction_error: f64,
    pub max_norm_deviation: f64,
    pub angles: AngleSummary,
}

/// Patches, whitening, then minimization of cost plus sparsity prior.
pub fn run_train(image: &Image, cfg: &TrainConfig) -> Result<TrainResult> {
    let raw = extract_patches(image, cfg.patch_size, cfg.num_patches, cfg.seed)?;
    let whitening = fit_whitening(&raw, cfg.whiten, cfg.floor)?;
    let data = whitening.apply(&raw)?;
    let n = data.n();
    let k = cfg.k.unwrap_or(4 * n);
    let w0 = random_uniform_init(k, n, cfg.seed.wrapping_add(1));
    let objective = IcaObjective::new(cfg.cost, cfg.lambda, data.clone())?.with_parallelism(cfg.parallelism);
    let (basis, trace) = minimize(&objective, &w0, &cfg.opts)?;
    let summary = TrainSummary {
        cost: cfg.cost.to_string(),
        lambda: cfg.lambda,
        k,
        n,
        m: data.m(),
        iterations: trace.rows.len().saturating_sub(1),
        termination: trace.termination.to_string(),
        final_objective: trace.final_row().objective,
        reconstruction_error: reconstruction_error(basis.view(), &data),
        max_norm_deviation: basis.max_norm_deviation(),
        angles: summarize_angles(&basis.folded_angles()),
    };
    Ok(TrainResult {
        basis,
        trace,
        whitening,
        data,
        summary,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RecoverConfig {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub lambda: f64,
    pub whiten: WhiteningKind,
    pub floor: EigenFloor,
    /// Use `A = I` in place of a random mixing matrix.
    pub identity_mixing: bool,
    pub opts: OptimOptions,
    pub parallelism: Parallelism,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoverSummary {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub lambda: f64,
    pub amari_index: f64,
    pub iterations: usize,
    pub termination: String,
}

/// Complete ICA with the L2 cost on whitened synthetic mixtures, scored by the
/// Amari index of `W V A` (`V` the whitening matrix).
pub fn run_recover(cfg: &RecoverConfig) -> Result<(RecoverSummary, Basis, OptimTrace)> {
    let problem = if cfg.identity_mixing {
        synth_sources_with_mixing(Array2::eye(cfg.n), cfg.m, cfg.seed)?
    } else {
        synth_sources(cfg.n, cfg.m, cfg.seed)?
    };
    let x = problem.mixed;
    let whitening = fit_whitening(&x, cfg.whiten, cfg.floor)?;
    let white = whitening.apply(&x)?;
    let objective = IcaObjective::new(CostKind::L2, cfg.lambda, white)?.with_parallelism(cfg.parallelism);
    let w0 = random_uniform_init(cfg.n, cfg.n, cfg.seed.wrapping_add(1));
    let (basis, trace) = minimize(&objective, &w0, &cfg.opts)?;
    let unmix = basis.as_array().dot(&whitening.matrix);
    let amari = amari_index(&unmix, &problem.mixing)?;
    Ok((
        RecoverSummary {
            n: cfg.n,
            m: cfg.m,
            seed: cfg.seed,
            lambda: cfg.lambda,
            amari_index: amari,
            iterations: trace.rows.len().saturating_sub(1),
            termination: trace.termination.to_string(),
        },
        basis,
        trace,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceRow {
    pub n: usize,
    pub m_tiles: usize,
    pub trials: usize,
    pub max_delta: f64,
}

/// Rotation invariance of the cost under subset rotations of exact tiled
/// configurations, for every `(n, M)` pair.
pub fn run_invariance(
    dims: &[usize],
    tiles: &[usize],
    trials: usize,
    kind: CostKind,
    seed: u64,
    tol: f64,
    mode: Parallelism,
) -> Result<(Vec<InvarianceRow>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for &n in dims {
        for &m_tiles in tiles {
            let s = seed.wrapping_add((n * 100 + m_tiles) as u64 * 1000);
            let basis = pathological_init(PathologicalInit {
                n,
                m_tiles,
                noise_sigma: 0.0,
                seed: s,
            });
            let rep = rotation_invariance_check(&basis, n, m_tiles, trials, kind, s + 1, mode)?;
            if !(rep.max_delta < tol) {
                violations.push(format!(
                    "invariance n={n} M={m_tiles}: max |dC| = {:e} >= {tol:e}",
                    rep.max_delta
                ));
            }
            rows.push(InvarianceRow {
                n,
                m_tiles,
                trials,
                max_delta: rep.max_delta,
            });
        }
    }
    Ok((rows, violations))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanTarget {
    Pathological,
    Random,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalRow {
    pub target: ScanTarget,
    pub trial: usize,
    pub row_index: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CriticalConfig {
    pub n: usize,
    pub m_tiles: usize,
    pub trials: usize,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub eps_count: usize,
    pub seed: u64,
    pub kind: CostKind,
    /// Accepted slope half-width around 2 (pathological) and 1 (random).
    pub slope_tol: f64,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        Self {
            n: 4,
            m_tiles: 2,
            trials: 20,
            eps_lo: 1e-5,
            eps_hi: 1e-2,
            eps_count: 10,
            seed: 0,
            kind: CostKind::L2,
            slope_tol: 0.1,
        }
    }
}

/// Log-log slope of the cost change under single-row rotations, at exact
/// tiled configurations and at random bases.
pub fn run_critical(cfg: &CriticalConfig) -> Result<(Vec<CriticalRow>, Vec<String>)> {
    let eps = log_spaced(cfg.eps_lo, cfg.eps_hi, cfg.eps_count);
    let k = cfg.n * cfg.m_tiles;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for trial in 0..cfg.trials {
        let s = cfg.seed.wrapping_add(trial as u64 * 7919);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let row_index = rng.random_range(0..k);
        let path = pathological_init(PathologicalInit {
            n: cfg.n,
            m_tiles: cfg.m_tiles,
            noise_sigma: 0.0,
            seed: s,
        });
        let scan = critical_point_scan(&path, cfg.n, cfg.m_tiles, row_index, s + 1, &eps, cfg.kind)?;
        if !((scan.slope - 2.0).abs() <= cfg.slope_tol) {
            violations.push(format!("critical trial {trial}: pathological slope {:.4}", scan.slope));
        }
        rows.push(CriticalRow {
            target: ScanTarget::Pathological,
            trial,
            row_index,
            slope: scan.slope,
        });
        let random = random_uniform_init(k, cfg.n, s + 2);
        let scan = perturbation_scan(&random, row_index, s + 3, &eps, cfg.kind)?;
        if !((scan.slope - 1.0).abs() <= cfg.slope_tol) {
            violations.push(format!("critical trial {trial}: random slope {:.4}", scan.slope));
        }
        rows.push(CriticalRow {
            target: ScanTarget::Random,
            trial,
            row_index,
            slope: scan.slope,
        });
    }
    Ok((rows, violations))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileFit {
    pub cost: String,
    pub region: String,
    pub coefficient: f64,
    pub exponent: f64,
    pub r2: f64,
    pub table: Vec<(f64, f64)>,
}

/// Power-law fits of the angular gradient for every cost. Near zero the
/// exponent must be near 1 (near 3 for L4); near one the magnitude must grow
/// for the regularized costs.
pub fn run_gradprofile(eps: f64, region: ProfileRegion, samples: usize) -> Result<(Vec<ProfileFit>, Vec<String>)> {
    let mut fits = Vec::new();
    let mut violations = Vec::new();
    for kind in CostKind::all(eps) {
        let table = gradient_profile(kind, region, samples)?;
        let (c, p, r2) = fit_power_law(&table);
        match region {
            ProfileRegion::NearZero => {
                let range = if kind == CostKind::L4 { (2.8, 3.2) } else { (0.9, 1.1) };
                if !(p >= range.0 && p <= range.1) {
                    violations.push(format!("{kind}: exponent {p:.4} outside [{}, {}]", range.0, range.1));
                }
            }
            ProfileRegion::NearOne => {
                if kind.eps().is_some() {
                    let mags: Vec<f64> = table.iter().map(|(_, g)| g.abs()).collect();
                    if mags.windows(2).any(|w| w[1] < w[0]) {
                        violations.push(format!("{kind}: gradient magnitude not increasing toward cos = 1"));
                    }
                }
            }
        }
        fits.push(ProfileFit {
            cost: kind.to_string(),
            region: match region {
                ProfileRegion::NearZero => "near_zero".into(),
                ProfileRegion::NearOne => "near_one".into(),
            },
            coefficient: c,
            exponent: p,
            r2,
            table,
        });
    }
    Ok((fits, violations))
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckRow {
    pub cost: String,
    pub trial: usize,
    pub k: usize,
    pub n: usize,
    pub max_rel_err: f64,
}

/// Analytic against finite-difference gradients on random bases with
/// `k <= max_k`, `n <= max_n`. Tolerance is `tol` for plain costs and
/// `tol_regularized` for Coulomb and RandomPrior.
#[allow(clippy::too_many_arguments)]
pub fn run_gradcheck(
    eps: f64,
    trials: usize,
    max_k: usize,
    max_n: usize,
    seed: u64,
    tol: f64,
    tol_regularized: f64,
    mode: Parallelism,
) -> Result<(Vec<GradCheckRow>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for kind in CostKind::all(eps) {
        let limit = if kind.eps().is_some() { tol_regularized } else { tol };
        let results = map_indexed(mode, trials, |t| -> Result<GradCheckRow> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let k = rng.random_range(2..=max_k.max(2));
            let n = rng.random_range(2..=max_n.max(2));
            let basis = random_uniform_init(k, n, rng.random());
            Ok(GradCheckRow {
                cost: kind.to_string(),
                trial: t,
                k,
                n,
                max_rel_err: grad_check(kind, &basis, 1e-4)?,
            })
        });
        for r in results {
            let r = r?;
            if !(r.max_rel_err < limit) {
                violations.push(format!(
                    "{} trial {} ({}x{}): relative error {:e} >= {limit:e}",
                    r.cost, r.trial, r.k, r.n, r.max_rel_err
                ));
            }
            rows.push(r);
        }
    }
    Ok((rows, violations))
}

pub fn run_check2d(points: usize, injected_error: f64) -> Vec<Check2dReport> {
    [PathKind::L2, PathKind::L4]
        .into_iter()
        .map(|kind| check_grid(kind, points, Tolerances::default(), injected_error))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GaborsSummary {
    pub elements: usize,
    pub patch_size: usize,
    pub fitted: usize,
    pub good_fits: usize,
    pub good_fraction: f64,
    pub mse_threshold: f64,
    pub median_mse: f64,
}

/// Fit a Gabor to every basis row. Rows must have square length.
pub fn run_gabors(
    basis: &Array2<f64>,
    threshold: f64,
    config: &GaborFitConfig,
    mode: Parallelism,
) -> Result<(Vec<ElementFit>, GaborsSummary)> {
    let n = basis.ncols();
    let size = (n as f64).sqrt().round() as usize;
    if size * size != n {
        return Err(OicaError::ShapeMismatch(format!("row length {n} is not a square")));
    }
    let fits = fit_basis(basis, size, config, mode)?;
    let mut mses: Vec<f64> = fits.iter().map(|f| f.best_mse).collect();
    mses.sort_by(f64::total_cmp);
    let good = mses.iter().filter(|&&m| m < threshold).count();
    let summary = GaborsSummary {
        elements: fits.len(),
        patch_size: size,
        fitted: fits.iter().filter(|f| f.fit.is_some()).count(),
        good_fits: good,
        good_fraction: good as f64 / fits.len().max(1) as f64,
        mse_threshold: threshold,
        median_mse: if mses.is_empty() { f64::NAN } else { quantile(&mses, 0.5) },
    };
    Ok((fits, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundTripRow {
    pub index: usize,
    pub mse: f64,
    pub freq_rel_err: f64,
    pub rot_err_deg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundTripSummary {
    pub count: usize,
    pub noise: f64,
    pub median_mse: f64,
    pub max_freq_rel_err: f64,
    pub max_rot_err_deg: f64,
}

/// Fit randomly drawn kernels (optionally with additive Gaussian noise) and
/// compare recovered frequency and orientation with the truth.
pub fn run_gabor_roundtrip(
    count: usize,
    size: usize,
    noise: f64,
    seed: u64,
    config: &GaborFitConfig,
    mode: Parallelism,
) -> Result<(Vec<RoundTripRow>, RoundTripSummary)> {
    let rows = map_indexed(mode, count, |i| -> Result<RoundTripRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let truth = random_params(size, &mut rng);
        let patch = gabor_kernel(&truth, size).mapv(|v| v + noise * rng.sample::<f64, _>(StandardNormal));
        let (mse, freq_rel_err, rot_err_deg) = match fit_gabor(&patch, config) {
            Ok(fit) => (
                fit.mse,
                (fit.params.frequency / truth.frequency - 1.0).abs(),
                orientation_distance(fit.params.phi, truth.phi).to_degrees(),
            ),
            Err(OicaError::FitDiverged { best_mse }) => (best_mse, f64::INFINITY, f64::INFINITY),
            Err(e) => return Err(e),
        };
        Ok(RoundTripRow {
            index: i,
            mse,
            freq_rel_err,
            rot_err_deg,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut mses: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    mses.sort_by(f64::total_cmp);
    let summary = RoundTripSummary {
        count,
        noise,
        median_mse: if mses.is_empty() { f64::NAN } else { quantile(&mses, 0.5) },
        max_freq_rel_err: rows.iter().map(|r| r.freq_rel_err).fold(0.0, f64::max),
        max_rot_err_deg: rows.iter().map(|r| r.rot_err_deg).fold(0.0, f64::max),
    };
    Ok((rows, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_angles() {
        let s = summarize_angles(&[10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!(s.pairs, 5);
        assert_eq!(s.min, 10.0);
        assert_eq!(s.median, 30.0);
        assert!((s.std - 200f64.sqrt()).abs() < 1e-12);
        assert!((s.p01 - 10.4).abs() < 1e-12);
    }

    #[test]
    fn histogram_bins() {
        let h = angle_histogram(&[0.0, 0.5, 89.9, 90.0, 180.0]);
        assert_eq!(h[0], 2);
        assert_eq!(h[89], 1);
        assert_eq!(h[90], 1);
        assert_eq!(h[179], 1);
        assert_eq!(h.iter().sum::<usize>(), 5);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("qo".parse::<Method>().unwrap(), Method::QuasiOrth);
        assert_eq!("l4".parse::<Method>().unwrap(), Method::Cost(CostKind::L4));
        assert!("nope".parse::<Method>().is_err());
        assert!("sideways".parse::<InitKind>().is_err());
    }

    #[test]
    fn small_distribution_run_is_deterministic() {
        let cfg = DistributionConfig {
            method: Method::Cost(CostKind::L4),
            init: InitKind::Random,
            k: 8,
            n: 4,
            m_tiles: 2,
            sigma: 0.05,
            seed: 5,
            opts: OptimOptions {
                max_iters: 200,
                ..OptimOptions::default()
            },
        };
        let a = run_distribution(&cfg).unwrap();
        let b = run_distribution(&cfg).unwrap();
        assert_eq!(a.fin, b.fin);
        assert!(a.summary.fin.min > a.summary.initial.min);
    }

    #[test]
    fn identity_mixing_recovers() {
        let cfg = RecoverConfig {
            n: 4,
            m: 20000,
            seed: 2,
            lambda: 0.5,
            whiten: WhiteningKind::Zca,
            floor: EigenFloor::default(),
            identity_mixing: true,
            opts: OptimOptions::default(),
            parallelism: Parallelism::default(),
        };
        let (s, _, _) = run_recover(&cfg).unwrap();
        assert!(s.amari_index < 0.05, "amari {}", s.amari_index);
    }

    #[test]
    fn recover_with_too_few_samples_is_rank_deficient() {
        let cfg = RecoverConfig {
            n: 8,
            m: 8,
            seed: 0,
            lambda: 0.5,
            whiten: WhiteningKind::Zca,
            floor: EigenFloor::default(),
            identity_mixing: false,
            opts: OptimOptions::default(),
            parallelism: Parallelism::Sequential,
        };
        assert!(matches!(run_recover(&cfg), Err(OicaError::RankDeficient(_))));
    }

    #[test]
    fn l4_profile_is_cubic() {
        let (fits, violations) = run_gradprofile(1e-6, ProfileRegion::NearZero, 50).unwrap();
        assert!(violations.is_empty(), "{violations:?}");
        assert_eq!(fits.len(), 4);
    }
}
