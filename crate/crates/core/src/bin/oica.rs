#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use oica::data::{read_pgm, synthetic_texture, EigenFloor, WhiteningKind};
use oica::experiments::{
    histogram_csv, run_check2d, run_critical, run_distribution, run_gabor_roundtrip, run_gabors, run_gradcheck,
    run_gradprofile, run_invariance, run_recover, run_train, CriticalConfig, DistributionConfig, InitKind, Method,
    RecoverConfig, TrainConfig,
};
use oica::gabor::{fits_to_csv, GaborFitConfig};
use oica::highdim::ProfileRegion;
use oica::io::{read_basis, write_atomic, write_basis, write_matrix, CsvTable};
use oica::parallel::{init_thread_pool, Parallelism};
use oica::{CostKind, OicaError, OptimOptions, Result};

#[derive(Parser, Debug)]
#[command(name = "oica", version, about = "Overcomplete ICA with degeneracy-control costs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// l2, l4, coulomb or rand_prior. Each subcommand has its own default.
    #[arg(long, global = true)]
    cost: Option<String>,
    /// Regularizer for coulomb and rand_prior.
    #[arg(long, global = true, default_value_t = 1e-6)]
    eps: f64,
    /// Weight of the sparsity prior.
    #[arg(long, global = true, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, global = true, default_value_t = 2000)]
    max_iters: usize,
    #[arg(long, global = true, default_value_t = 1e-7)]
    grad_tol: f64,
    /// Worker threads for data-parallel sections.
    #[arg(long, global = true, env = "OICA_THREADS")]
    threads: Option<usize>,
    /// Run every data-parallel section on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

impl Global {
    fn cost_or(&self, default: &str) -> Result<CostKind> {
        let kind: CostKind = self.cost.as_deref().unwrap_or(default).parse()?;
        let kind = kind.with_eps(self.eps);
        kind.validate()?;
        Ok(kind)
    }

    fn opts(&self) -> OptimOptions {
        OptimOptions {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            seed: self.seed,
            ..OptimOptions::default()
        }
    }

    fn mode(&self) -> Parallelism {
        if self.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::default()
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

#[derive(Args, Debug)]
struct DataFlags {
    #[arg(long, default_value_t = 8)]
    patch_size: usize,
    #[arg(long, default_value_t = 20000)]
    num_patches: usize,
    /// pca or zca.
    #[arg(long, default_value = "zca")]
    whiten: String,
    /// Eigenvalue floor relative to the largest eigenvalue.
    #[arg(long, default_value_t = 1e-6)]
    floor: f64,
    /// Interpret --floor as an absolute value.
    #[arg(long)]
    floor_absolute: bool,
}

impl DataFlags {
    fn whiten(&self) -> Result<WhiteningKind> {
        self.whiten.parse()
    }

    fn floor(&self) -> Result<EigenFloor> {
        if !(self.floor >= 0.0) {
            return Err(OicaError::Parse(format!("floor must be >= 0, got {}", self.floor)));
        }
        Ok(if self.floor_absolute {
            EigenFloor::Absolute(self.floor)
        } else {
            EigenFloor::Relative(self.floor)
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form checks of the 2D pathological path.
    Check2d {
        #[arg(long, default_value_t = 720)]
        grid_points: usize,
        /// Add this offset to the closed-form cost (negative control).
        #[arg(long, default_value_t = 0.0)]
        inject_error: f64,
    },
    /// Optimize a pure degeneracy cost and report angle distributions.
    Distribution {
        /// Use the quasi-orthogonality iteration in place of --cost.
        #[arg(long)]
        quasi_orth: bool,
        /// random or pathological.
        #[arg(long, default_value = "random")]
        init: String,
        #[arg(long, default_value_t = 128)]
        k: usize,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Overcompleteness of the pathological init.
        #[arg(long, default_value_t = 2)]
        tiles: usize,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
    },
    /// Learn an overcomplete basis from whitened image patches.
    Train {
        /// 8 or 16 bit PGM; the bundled synthetic texture is used when absent.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        texture_size: usize,
        /// Basis size; four times the patch dimension by default.
        #[arg(long)]
        k: Option<usize>,
        /// Also write the whitened data matrix.
        #[arg(long)]
        save_data: bool,
        #[command(flatten)]
        data: DataFlags,
    },
    /// Complete ICA on synthetic Laplacian mixtures.
    Recover {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 50000)]
        m: usize,
        /// Use the identity as mixing matrix.
        #[arg(long)]
        identity: bool,
        #[arg(long, default_value = "zca")]
        whiten: String,
        #[arg(long, default_value_t = 0.1)]
        max_amari: f64,
    },
    /// Cost change under rotations of one orthonormal subset.
    Invariance {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        tiles: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Slope of the cost change under small single-row rotations.
    Critical {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        tiles: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps_lo: f64,
        #[arg(long, default_value_t = 1e-2)]
        eps_hi: f64,
        #[arg(long, default_value_t = 10)]
        eps_count: usize,
        #[arg(long, default_value_t = 0.1)]
        slope_tol: f64,
    },
    /// Angular gradient of each cost near cos = 0 or cos = 1.
    Gradprofile {
        /// near_zero or near_one.
        #[arg(long, default_value = "near_zero")]
        region: String,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Fit Gabor kernels to basis elements, or to synthetic kernels.
    Gabors {
        /// Basis CSV; rows must have square length.
        #[arg(long, required_unless_present = "synthetic")]
        basis: Option<PathBuf>,
        /// Fit this many random synthetic kernels.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Normalized MSE counted as a good fit.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Analytic against finite-difference gradients on random bases.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 32)]
        max_k: usize,
        #[arg(long, default_value_t = 16)]
        max_n: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol_regularized: f64,
    },
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| OicaError::Parse(e.to_string()))?;
    write_atomic(path, format!("{text}\n").as_bytes())
}

fn run(cli: Cli) -> Result<Vec<String>> {
    let g = &cli.global;
    if let Some(t) = g.threads {
        init_thread_pool(t);
    }
    std::fs::create_dir_all(&g.out)?;
    let mode = g.mode();
    let mut violations = Vec::new();
    match &cli.command {
        Command::Check2d {
            grid_points,
            inject_error,
        } => {
            let reports = run_check2d(*grid_points, *inject_error);
            for r in &reports {
                r.to_csv().write(&g.path(&format!("check2d_{}.csv", r.kind.name())))?;
                violations.extend(r.violations.iter().map(|v| format!("{}: {v}", r.kind.name())));
            }
            #[derive(Serialize)]
            struct Summary<'a> {
                grid_points: usize,
                kind: &'a str,
                max_cost_err: f64,
                max_grad_err: f64,
                max_eig_err: f64,
                max_hess_err: f64,
                violations: usize,
            }
            let summary: Vec<Summary> = reports
                .iter()
                .map(|r| {
                    let max = |f: fn(&oica::analytic2d::Check2dRow) -> f64| r.rows.iter().map(f).fold(0.0, f64::max);
                    Summary {
                        grid_points: r.rows.len(),
                        kind: r.kind.name(),
                        max_cost_err: max(|row| (row.cost_closed - row.cost_numeric).abs()),
                        max_grad_err: max(|row| row.max_grad_err),
                        max_eig_err: max(|row| row.max_eig_err),
                        max_hess_err: max(|row| row.max_hess_err),
                        violations: r.violations.len(),
                    }
                })
                .collect();
            write_json(&g.path("check2d.json"), &summary)?;
        }
        Command::Distribution {
            quasi_orth,
            init,
            k,
            n,
            tiles,
            sigma,
        } => {
            let method = if *quasi_orth {
                Method::QuasiOrth
            } else {
                Method::Cost(g.cost_or("l4")?)
            };
            let init: InitKind = init.parse()?;
            let cfg = DistributionConfig {
                method,
                init,
                k: *k,
                n: *n,
                m_tiles: *tiles,
                sigma: *sigma,
                seed: g.seed,
                opts: g.opts(),
            };
            let res = run_distribution(&cfg)?;
            let init_name = match init {
                InitKind::Random => "random",
                InitKind::Pathological => "pathological",
            };
            let stem = format!("distribution_{}_{}_seed{}", method.name(), init_name, g.seed);
            histogram_csv(&res.initial.pairwise_angles(), &res.fin.pairwise_angles())
                .write(&g.path(&format!("{stem}_hist.csv")))?;
            res.trace.to_csv().write(&g.path(&format!("{stem}_trace.csv")))?;
            write_basis(&g.path(&format!("{stem}_basis.csv")), &res.fin)?;
            write_json(&g.path(&format!("{stem}.json")), &res.summary)?;
        }
        Command::Train {
            image,
            texture_size,
            k,
            save_data,
            data,
        } => {
            let img = match image {
                Some(p) => read_pgm(p)?,
                None => synthetic_texture(*texture_size, g.seed),
            };
            let cfg = TrainConfig {
                patch_size: data.patch_size,
                num_patches: data.num_patches,
                whiten: data.whiten()?,
                floor: data.floor()?,
                cost: g.cost_or("l4")?,
                lambda: g.lambda,
                k: *k,
                seed: g.seed,
                opts: g.opts(),
                parallelism: mode,
            };
            let res = run_train(&img, &cfg)?;
            write_basis(&g.path("train_basis.csv"), &res.basis)?;
            res.trace.to_csv().write(&g.path("train_trace.csv"))?;
            write_matrix(&g.path("train_whitening.csv"), &res.whitening.matrix)?;
            if *save_data {
                write_matrix(&g.path("train_data.csv"), &res.data.to_sample_rows())?;
            }
            write_json(&g.path("train.json"), &res.summary)?;
        }
        Command::Recover {
            n,
            m,
            identity,
            whiten,
            max_amari,
        } => {
            let cfg = RecoverConfig {
                n: *n,
                m: *m,
                seed: g.seed,
                lambda: g.lambda,
                whiten: whiten.parse()?,
                floor: EigenFloor::default(),
                identity_mixing: *identity,
                opts: g.opts(),
                parallelism: mode,
            };
            let (summary, basis, trace) = run_recover(&cfg)?;
            write_basis(&g.path("recover_basis.csv"), &basis)?;
            trace.to_csv().write(&g.path("recover_trace.csv"))?;
            write_json(&g.path("recover.json"), &summary)?;
            if !(summary.amari_index < *max_amari) {
                violations.push(format!("amari index {} >= {max_amari}", summary.amari_index));
            }
        }
        Command::Invariance {
            dims,
            tiles,
            trials,
            tol,
        } => {
            let kind = g.cost_or("l2")?;
            let (rows, v) = run_invariance(dims, tiles, *trials, kind, g.seed, *tol, mode)?;
            let mut t = CsvTable::new(&["n", "tiles", "trials", "max_delta"]);
            for r in &rows {
                t.push([r.n.to_string(), r.m_tiles.to_string(), r.trials.to_string(), r.max_delta.to_string()]);
            }
            t.write(&g.path("invariance.csv"))?;
            violations.extend(v);
        }
        Command::Critical {
            n,
            tiles,
            trials,
            eps_lo,
            eps_hi,
            eps_count,
            slope_tol,
        } => {
            let cfg = CriticalConfig {
                n: *n,
                m_tiles: *tiles,
                trials: *trials,
                eps_lo: *eps_lo,
                eps_hi: *eps_hi,
                eps_count: *eps_count,
                seed: g.seed,
                kind: g.cost_or("l2")?,
                slope_tol: *slope_tol,
            };
            let (rows, v) = run_critical(&cfg)?;
            let mut t = CsvTable::new(&["target", "trial", "row_index", "slope"]);
            for r in &rows {
                let target = match r.target {
                    oica::experiments::ScanTarget::Pathological => "pathological",
                    oica::experiments::ScanTarget::Random => "random",
                };
                t.push([target.to_string(), r.trial.to_string(), r.row_index.to_string(), r.slope.to_string()]);
            }
            t.write(&g.path("critical.csv"))?;
            violations.extend(v);
        }
        Command::Gradprofile { region, samples } => {
            let region: ProfileRegion = region.parse()?;
            let (fits, v) = run_gradprofile(g.eps, region, *samples)?;
            let name = fits.first().map(|f| f.region.clone()).unwrap_or_default();
            let mut t = CsvTable::new(&["cost", "cos_theta", "dc_dtheta"]);
            for f in &fits {
                for (c, d) in &f.table {
                    t.push([f.cost.clone(), c.to_string(), d.to_string()]);
                }
            }
            t.write(&g.path(&format!("gradprofile_{name}.csv")))?;
            #[derive(Serialize)]
            struct Fit<'a> {
                cost: &'a str,
                coefficient: f64,
                exponent: f64,
                r2: f64,
            }
            let summary: Vec<Fit> = fits
                .iter()
                .map(|f| Fit {
                    cost: &f.cost,
                    coefficient: f.coefficient,
                    exponent: f.exponent,
                    r2: f.r2,
                })
                .collect();
            write_json(&g.path(&format!("gradprofile_{name}.json")), &summary)?;
            violations.extend(v);
        }
        Command::Gabors {
            basis,
            synthetic,
            size,
            noise,
            threshold,
        } => {
            let config = GaborFitConfig::default();
            if let Some(count) = synthetic {
                let (rows, summary) = run_gabor_roundtrip(*count, *size, *noise, g.seed, &config, mode)?;
                let mut t = CsvTable::new(&["index", "mse", "freq_rel_err", "rot_err_deg"]);
                for r in &rows {
                    t.push([r.index.to_string(), r.mse.to_string(), r.freq_rel_err.to_string(), r.rot_err_deg.to_string()]);
                }
                t.write(&g.path("gabors_synthetic.csv"))?;
                write_json(&g.path("gabors_synthetic.json"), &summary)?;
            }
            if let Some(path) = basis {
                let b = read_basis(path)?;
                let (fits, summary) = run_gabors(b.as_array(), *threshold, &config, mode)?;
                fits_to_csv(&fits).write(&g.path("gabors.csv"))?;
                write_json(&g.path("gabors.json"), &summary)?;
            }
        }
        Command::Gradcheck {
            trials,
            max_k,
            max_n,
            tol,
            tol_regularized,
        } => {
            let (rows, v) = run_gradcheck(g.eps, *trials, *max_k, *max_n, g.seed, *tol, *tol_regularized, mode)?;
            let mut t = CsvTable::new(&["cost", "trial", "k", "n", "max_rel_err"]);
            for r in &rows {
                t.push([r.cost.clone(), r.trial.to_string(), r.k.to_string(), r.n.to_string(), r.max_rel_err.to_string()]);
            }
            t.write(&g.path("gradcheck.csv"))?;
            violations.extend(v);
        }
    }
    Ok(violations)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) if v.is_empty() => ExitCode::SUCCESS,
        Ok(v) => {
            for line in &v {
                eprintln!("violation: {line}");
            }
            eprintln!("{} tolerance violation(s)", v.len());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
