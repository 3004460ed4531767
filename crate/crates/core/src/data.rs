//! Data matrices, whitening, image patches, synthetic sources and the Amari
//! recovery index.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{OicaError, Result};
use crate::linalg::{condition_number, random_rotation, sym_eigh};

/// `n x m` samples, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    data: Array2<f64>,
}

impl DataMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(OicaError::InvalidBasis("data has non-finite entries".into()));
        }
        Ok(Self { data })
    }

    /// Build from a matrix holding one sample per row (the on-disk layout).
    pub fn from_sample_rows(rows: Array2<f64>) -> Result<Self> {
        Self::new(rows.reversed_axes().as_standard_layout().to_owned())
    }

    /// One sample per row, as persisted to CSV.
    pub fn to_sample_rows(&self) -> Array2<f64> {
        self.data.t().to_owned()
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn m(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    /// Sample mean per dimension.
    pub fn mean(&self) -> Array1<f64> {
        self.data
            .mean_axis(Axis(1))
            .unwrap_or_else(|| Array1::zeros(self.n()))
    }

    /// Empirical covariance (divides by `m`).
    pub fn covariance(&self) -> Array2<f64> {
        let centered = &self.data - &self.mean().insert_axis(Axis(1));
        centered.dot(&centered.t()) / self.m().max(1) as f64
    }
}

/// A 2-D grayscale image, row-major `height x width`.
pub type Image = Array2<f64>;

/// Sample `count` square patches at uniform random positions, flattened
/// row-major into the columns of the result.
pub fn extract_patches(image: &Image, patch_size: usize, count: usize, seed: u64) -> Result<DataMatrix> {
    let (h, w) = image.dim();
    if patch_size == 0 || h < patch_size || w < patch_size {
        return Err(OicaError::ImageTooSmall {
            width: w,
            height: h,
            patch: patch_size,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = patch_size * patch_size;
    let mut out = Array2::zeros((n, count));
    for c in 0..count {
        let r0 = rng.random_range(0..=h - patch_size);
        let c0 = rng.random_range(0..=w - patch_size);
        let patch = image.slice(s![r0..r0 + patch_size, c0..c0 + patch_size]);
        for (dst, src) in out.column_mut(c).iter_mut().zip(patch.iter()) {
            *dst = *src;
        }
    }
    DataMatrix::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WhiteningKind {
    Pca,
    Zca,
}

impl std::str::FromStr for WhiteningKind {
    type Err = OicaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(Self::Pca),
            "zca" => Ok(Self::Zca),
            other => Err(OicaError::Parse(format!("unknown whitening '{other}'"))),
        }
    }
}

/// Eigenvalue floor added before the inverse square root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigenFloor {
    Absolute(f64),
    /// Fraction of the largest eigenvalue.
    Relative(f64),
}

impl Default for EigenFloor {
    fn default() -> Self {
        EigenFloor::Relative(1e-6)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub mean: Array1<f64>,
    pub matrix: Array2<f64>,
    pub kind: WhiteningKind,
    pub floor: f64,
}

impl WhiteningTransform {
    pub fn apply(&self, x: &DataMatrix) -> Result<DataMatrix> {
        if x.n() != self.mean.len() {
            return Err(OicaError::ShapeMismatch(format!(
                "transform expects dimension {}, data has {}",
                self.mean.len(),
                x.n()
            )));
        }
        let centered = x.as_array() - &self.mean.view().insert_axis(Axis(1));
        DataMatrix::new(self.matrix.dot(&centered))
    }
}

/// Fit a PCA or ZCA whitening transform with global centering.
pub fn fit_whitening(x: &DataMatrix, kind: WhiteningKind, floor: EigenFloor) -> Result<WhiteningTransform> {
    let (n, m) = (x.n(), x.m());
    if m <= n {
        return Err(OicaError::RankDeficient(format!(
            "{m} samples cannot span {n} dimensions after centering"
        )));
    }
    let cov = x.covariance();
    let (vals, vecs) = sym_eigh(&cov);
    let max_eig = vals.iter().copied().fold(0.0, f64::max);
    let floor = match floor {
        EigenFloor::Absolute(f) => f,
        EigenFloor::Relative(f) => f * max_eig,
    };
    let tiny = vals.iter().filter(|&&v| v < floor.max(1e-12 * max_eig)).count();
    if tiny > n / 2 {
        return Err(OicaError::RankDeficient(format!(
            "{tiny} of {n} eigenvalues below floor {floor:e}"
        )));
    }
    let scale = vals.mapv(|v| 1.0 / (v.max(0.0) + floor).sqrt());
    let pca = &vecs.t() * &scale.view().insert_axis(Axis(1));
    let matrix = match kind {
        WhiteningKind::Pca => pca,
        WhiteningKind::Zca => vecs.dot(&pca),
    };
    Ok(WhiteningTransform {
        mean: x.mean(),
        matrix,
        kind,
        floor,
    })
}

/// Ground-truth mixing problem `X = A S`.
#[derive(Debug, Clone)]
pub struct SyntheticSources {
    pub sources: Array2<f64>,
    pub mixing: Array2<f64>,
    pub mixed: DataMatrix,
}

/// Laplacian(0, 1) sources mixed by a random matrix with condition number
/// below 20 (random rotations around singular values drawn from `[1, 5]`).
pub fn synth_sources(n: usize, m: usize, seed: u64) -> Result<SyntheticSources> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_rotation(n, &mut rng);
    let v = random_rotation(n, &mut rng);
    let sv = Array1::from_shape_fn(n, |_| rng.random_range(1.0..5.0));
    let mixing = (&u * &sv.view().insert_axis(Axis(0))).dot(&v.t());
    debug_assert!(condition_number(&mixing) < 20.0);
    synth_with_mixing(mixing, m, &mut rng)
}

/// Laplacian sources with a caller-supplied mixing matrix.
pub fn synth_sources_with_mixing(mixing: Array2<f64>, m: usize, seed: u64) -> Result<SyntheticSources> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth_with_mixing(mixing, m, &mut rng)
}

fn synth_with_mixing<R: Rng>(mixing: Array2<f64>, m: usize, rng: &mut R) -> Result<SyntheticSources> {
    let n = mixing.nrows();
    if n < 2 || mixing.ncols() != n {
        return Err(OicaError::ShapeMismatch("mixing must be square with n >= 2".into()));
    }
    let sources = Array2::from_shape_fn((n, m), |_| {
        let e: f64 = Exp1.sample(rng);
        if rng.random_bool(0.5) {
            e
        } else {
            -e
        }
    });
    let mixed = DataMatrix::new(mixing.dot(&sources))?;
    Ok(SyntheticSources {
        sources,
        mixing,
        mixed,
    })
}

/// Normalized Amari index of `P = W A`. Zero iff `P` is a scaled permutation,
/// one at most.
pub fn amari_index(w: &Array2<f64>, a: &Array2<f64>) -> Result<f64> {
    if w.ncols() != a.nrows() || w.nrows() != w.ncols() || a.nrows() != a.ncols() {
        return Err(OicaError::ShapeMismatch("amari index needs square W and A".into()));
    }
    amari_of_product(&w.dot(a))
}

pub fn amari_of_product(p: &Array2<f64>) -> Result<f64> {
    let n = p.nrows();
    if n < 2 {
        return Ok(0.0);
    }
    let abs = p.mapv(f64::abs);
    let mut total = 0.0;
    for row in abs.rows() {
        let max = row.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return Err(OicaError::Singular);
        }
        total += row.sum() / max - 1.0;
    }
    for col in abs.columns() {
        let max = col.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return Err(OicaError::Singular);
        }
        total += col.sum() / max - 1.0;
    }
    Ok(total / (2.0 * n as f64 * (n as f64 - 1.0)))
}

/// Read a PGM image (P2 plain or P5 raw, 8 or 16 bit) scaled to `[0, 1]`.
pub fn read_pgm(path: &Path) -> Result<Image> {
    parse_pgm(&std::fs::read(path)?)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(OicaError::Parse("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |t: String| -> Result<usize> {
        t.parse()
            .map_err(|_| OicaError::Parse(format!("bad PGM header field '{t}'")))
    };
    let width = num(token()?)?;
    let height = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(OicaError::Parse(format!("bad PGM maxval {maxval}")));
    }
    let count = width * height;
    let values: Vec<f64> = match magic.as_str() {
        "P2" => {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                v.push(num(token()?)? as f64);
            }
            v
        }
        "P5" => {
            // exactly one whitespace byte separates the header from the raster
            let start = pos + 1;
            let bpp = if maxval > 255 { 2 } else { 1 };
            let raster = bytes
                .get(start..start + count * bpp)
                .ok_or_else(|| OicaError::Parse("truncated PGM raster".into()))?;
            if bpp == 1 {
                raster.iter().map(|&b| b as f64).collect()
            } else {
                raster
                    .chunks(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                    .collect()
            }
        }
        other => return Err(OicaError::Parse(format!("unsupported image format '{other}'"))),
    };
    let img = Array2::from_shape_vec((height, width), values)
        .map_err(|e| OicaError::Parse(e.to_string()))?;
    Ok(img / maxval as f64)
}

/// Write an 8-bit raw PGM with values clamped from `[0, 1]`.
pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    let (h, w) = image.dim();
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(image.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    crate::io::write_atomic(path, &bytes)
}

/// Synthetic natural-image stand-in: sparse windowed oriented gratings
/// (edges and bars of random orientation, frequency and extent) on top of a
/// 1/f noise background, normalized to zero mean and unit variance.
pub fn synthetic_texture(size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = pink_noise(size, &mut rng) * 0.3;
    let strokes = size * size / 40;
    for _ in 0..strokes {
        let cy = rng.random_range(0.0..size as f64);
        let cx = rng.random_range(0.0..size as f64);
        let theta = rng.random_range(0.0..PI);
        let freq = rng.random_range(0.06..0.3);
        let phase = rng.random_range(0.0..2.0 * PI);
        let sigma_across: f64 = rng.random_range(1.0..3.0);
        let sigma_along = sigma_across * rng.random_range(1.5..4.0);
        let amp = rng.sample::<f64, _>(Exp1) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let reach = (3.0 * sigma_along).ceil() as isize;
        let (ct, st) = (theta.cos(), theta.sin());
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let y = cy as isize + dy;
                let x = cx as isize + dx;
                if y < 0 || x < 0 || y >= size as isize || x >= size as isize {
                    continue;
                }
                let (fy, fx) = (y as f64 - cy, x as f64 - cx);
                let u = fx * ct + fy * st;
                let v = -fx * st + fy * ct;
                let env = (-u * u / (2.0 * sigma_across * sigma_across)
                    - v * v / (2.0 * sigma_along * sigma_along))
                    .exp();
                img[[y as usize, x as usize]] += amp * env * (2.0 * PI * freq * u + phase).cos();
            }
        }
    }
    // Sensor-like white noise keeps every patch direction populated.
    let rough_std = img.std(0.0).max(1e-12);
    img.mapv_inplace(|v| v + 0.05 * rough_std * rng.sample::<f64, _>(StandardNormal));
    let mean = img.mean().unwrap_or(0.0);
    let std = img.mapv(|v| (v - mean).powi(2)).mean().unwrap_or(1.0).sqrt();
    img.mapv(|v| (v - mean) / std.max(1e-12))
}

/// Isotropic 1/f noise built from random-phase sinusoids on a frequency grid.
fn pink_noise<R: Rng>(size: usize, rng: &mut R) -> Image {
    let mut img = Array2::zeros((size, size));
    let components = 96;
    for _ in 0..components {
        let f = (rng.random_range((1.0f64 / size as f64).ln()..0.5f64.ln())).exp();
        let theta = rng.random_range(0.0..PI);
        let phase = rng.random_range(0.0..2.0 * PI);
        let amp = rng.sample::<f64, _>(StandardNormal) / (f * size as f64).max(1.0).sqrt();
        let (kx, ky) = (2.0 * PI * f * theta.cos(), 2.0 * PI * f * theta.sin());
        for ((y, x), v) in img.indexed_iter_mut() {
            *v += amp * (kx * x as f64 + ky * y as f64 + phase).cos();
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix_inverse;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn frob(a: &Array2<f64>) -> f64 {
        a.mapv(|v| v * v).sum().sqrt()
    }

    #[test]
    fn constant_image_gives_constant_patches() {
        let img = Array2::from_elem((20, 30), 0.25);
        let x = extract_patches(&img, 5, 10, 1).unwrap();
        assert_eq!(x.n(), 25);
        assert!(x.as_array().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn full_size_patch_equals_image() {
        let img = Array2::from_shape_fn((8, 8), |(r, c)| (r * 8 + c) as f64);
        let x = extract_patches(&img, 8, 3, 2).unwrap();
        for col in x.as_array().columns() {
            assert!(col.iter().zip(img.iter()).all(|(a, b)| a == b));
        }
    }

    #[test]
    fn patches_are_seeded() {
        let img = synthetic_texture(64, 3);
        assert_eq!(extract_patches(&img, 8, 50, 9).unwrap(), extract_patches(&img, 8, 50, 9).unwrap());
        assert_ne!(extract_patches(&img, 8, 50, 9).unwrap(), extract_patches(&img, 8, 50, 10).unwrap());
        assert!(matches!(
            extract_patches(&img, 65, 1, 0),
            Err(OicaError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn white_data_gives_identity_zca() {
        // exactly white 2-D sample set: the four signed unit vectors scaled by sqrt(2)
        let r = 2f64.sqrt();
        let x = DataMatrix::new(array![[r, -r, 0.0, 0.0], [0.0, 0.0, r, -r]]).unwrap();
        let t = fit_whitening(&x, WhiteningKind::Zca, EigenFloor::Absolute(0.0)).unwrap();
        assert!(frob(&(&t.matrix - &Array2::<f64>::eye(2))) < 1e-6);
    }

    #[test]
    fn diagonal_covariance_zca() {
        let x = DataMatrix::new(array![[2.0, -2.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]] * 2f64.sqrt()).unwrap();
        let t = fit_whitening(&x, WhiteningKind::Zca, EigenFloor::Absolute(0.0)).unwrap();
        assert_abs_diff_eq!(t.matrix[[0, 0]], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(t.matrix[[1, 1]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.matrix[[0, 1]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn whitened_patches_have_identity_covariance() {
        let img = synthetic_texture(128, 1);
        let x = extract_patches(&img, 8, 20000, 2).unwrap();
        for kind in [WhiteningKind::Pca, WhiteningKind::Zca] {
            let t = fit_whitening(&x, kind, EigenFloor::default()).unwrap();
            let white = t.apply(&x).unwrap();
            let cov = white.covariance();
            let mut worst: f64 = 0.0;
            for i in 0..64 {
                for j in 0..64 {
                    if i != j {
                        worst = worst.max(cov[[i, j]].abs());
                    }
                }
            }
            assert!(worst < 0.05, "{kind:?}: {worst}");
            if kind == WhiteningKind::Pca {
                continue;
            }
            let refit = fit_whitening(&white, kind, EigenFloor::Absolute(0.0)).unwrap();
            let dev = frob(&(&refit.matrix - &Array2::<f64>::eye(64))) / 8.0;
            assert!(dev < 0.05, "refit deviation {dev}");
        }
    }

    #[test]
    fn rank_deficient() {
        let x = DataMatrix::new(Array2::from_shape_fn((4, 4), |(i, j)| (i + j) as f64)).unwrap();
        assert!(matches!(
            fit_whitening(&x, WhiteningKind::Zca, EigenFloor::default()),
            Err(OicaError::RankDeficient(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = Array2::from_shape_fn((6, 100), |_| rng.sample::<f64, _>(StandardNormal));
        for r in 2..6 {
            let first = m.row(0).to_owned();
            m.row_mut(r).assign(&first);
        }
        assert!(fit_whitening(&DataMatrix::new(m).unwrap(), WhiteningKind::Pca, EigenFloor::default()).is_err());
    }

    #[test]
    fn sources_are_seeded_and_well_conditioned() {
        let a = synth_sources(5, 100, 7).unwrap();
        let b = synth_sources(5, 100, 7).unwrap();
        assert_eq!(a.mixed, b.mixed);
        assert!(condition_number(&a.mixing) < 20.0);
        let id = synth_sources_with_mixing(Array2::eye(3), 50, 1).unwrap();
        assert_eq!(id.mixed.as_array(), &id.sources);
    }

    #[test]
    fn amari_examples() {
        let perm = array![[0.0, 1.0, 0.0], [0.0, 0.0, -2.0], [3.0, 0.0, 0.0]];
        assert_abs_diff_eq!(amari_of_product(&perm).unwrap(), 0.0);
        // all-ones 2x2: each row and column contributes 2/1 - 1 = 1, total 4 / (2*2*1)
        assert_abs_diff_eq!(amari_of_product(&Array2::ones((2, 2))).unwrap(), 1.0);
        let a = synth_sources(4, 10, 3).unwrap().mixing;
        let w = matrix_inverse(&a).unwrap();
        assert!(amari_index(&w, &a).unwrap() < 1e-12);
        let scaled = &w * &array![[2.0], [-0.5], [3.0], [1.0]];
        assert_abs_diff_eq!(
            amari_index(&scaled, &a).unwrap(),
            amari_index(&w, &a).unwrap(),
            epsilon = 1e-12
        );
        assert!(matches!(amari_of_product(&Array2::zeros((2, 2))), Err(OicaError::Singular)));
    }

    #[test]
    fn pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Array2::from_shape_fn((3, 4), |(r, c)| (r * 4 + c) as f64 / 11.0);
        let path = dir.path().join("x.pgm");
        write_pgm(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert!((&back - &img).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b)) < 0.5 / 255.0 + 1e-12);

        let plain = b"P2\n# comment\n2 2\n65535\n0 65535\n32768 1\n";
        let p = parse_pgm(plain).unwrap();
        assert_abs_diff_eq!(p[[0, 1]], 1.0);
        let raw16 = [b"P5 1 1 65535\n".as_slice(), &[0x80, 0x00]].concat();
        assert_abs_diff_eq!(parse_pgm(&raw16).unwrap()[[0, 0]], 32768.0 / 65535.0);
        assert!(parse_pgm(b"P6 1 1 255\n\0").is_err());
    }
}
