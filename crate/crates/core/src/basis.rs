//! Basis matrices, Gram matrices and the degeneracy-cost selector.
//!
//! A [`Basis`] stores `k` basis elements of dimension `n` as the rows of a
//! `k x n` matrix. Angles are kept in radians internally; the human-facing
//! helpers return degrees.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{OicaError, Result};

/// Rows below this norm are treated as degenerate by the projection.
pub const ZERO_ROW_NORM: f64 = 1e-14;

/// Default regularizer for the singular costs.
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    data: Array2<f64>,
}

impl Basis {
    /// Wrap a `k x n` matrix. Requires `k >= 1`, `n >= 2` and finite entries.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (k, n) = data.dim();
        if k < 1 || n < 2 {
            return Err(OicaError::InvalidBasis(format!(
                "need k >= 1 and n >= 2, got {k}x{n}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(OicaError::InvalidBasis("non-finite entry".into()));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(OicaError::ShapeMismatch("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((k, n), flat)
            .map_err(|e| OicaError::ShapeMismatch(e.to_string()))?;
        Self::new(data)
    }

    /// Number of basis elements.
    pub fn k(&self) -> usize {
        self.data.nrows()
    }

    /// Ambient dimension.
    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub fn gram(&self) -> Gram {
        Gram(self.data.dot(&self.data.t()))
    }

    /// Divide every row by its Euclidean norm.
    pub fn project_rows_unit_norm(&self) -> Result<Basis> {
        let mut data = self.data.clone();
        normalize_rows_in_place(&mut data)?;
        Ok(Basis { data })
    }

    /// Largest deviation of a row norm from 1.
    pub fn max_norm_deviation(&self) -> f64 {
        self.data
            .axis_iter(Axis(0))
            .map(|r| (r.dot(&r).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Pairwise angles in degrees over unordered pairs `i < j`, ascending.
    pub fn pairwise_angles(&self) -> Vec<f64> {
        self.gram().pairwise_angles()
    }

    /// Pairwise angles folded onto `[0, 90]` degrees (`arccos |cos|`), ascending.
    /// Antiparallel rows count as degenerate.
    pub fn folded_angles(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .pairwise_angles()
            .into_iter()
            .map(|a| a.min(180.0 - a))
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    /// Smallest folded pairwise angle in degrees, or 90 for a single element.
    pub fn min_pairwise_angle(&self) -> f64 {
        self.gram().min_angle()
    }
}

/// Normalize rows of a raw matrix. Fails on rows with norm `<= ZERO_ROW_NORM`.
pub fn normalize_rows_in_place(data: &mut Array2<f64>) -> Result<()> {
    for (i, mut row) in data.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm > ZERO_ROW_NORM) {
            return Err(OicaError::ZeroRow { row: i, norm });
        }
        row /= norm;
    }
    Ok(())
}

/// `W W^T` for a basis `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram(pub Array2<f64>);

impl Gram {
    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]]
    }

    /// Cosine of the angle between rows `i` and `j`, clamped to `[-1, 1]`.
    pub fn cos(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]].clamp(-1.0, 1.0)
    }

    /// Angle between rows `i` and `j` in radians.
    pub fn angle(&self, i: usize, j: usize) -> f64 {
        self.cos(i, j).acos()
    }

    pub fn pairwise_angles(&self) -> Vec<f64> {
        let k = self.size();
        let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for i in 0..k {
            for j in (i + 1)..k {
                out.push(self.angle(i, j).to_degrees());
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn min_angle(&self) -> f64 {
        let k = self.size();
        let mut max_abs_cos: f64 = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                max_abs_cos = max_abs_cos.max(self.cos(i, j).abs());
            }
        }
        if k < 2 {
            90.0
        } else {
            max_abs_cos.acos().to_degrees()
        }
    }
}

/// Degeneracy-control mechanism applied to a basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostKind {
    L2,
    L4,
    Coulomb { eps: f64 },
    RandomPrior { eps: f64 },
}

impl CostKind {
    pub const ALL_NAMES: [&'static str; 4] = ["l2", "l4", "coulomb", "rand_prior"];

    /// All four costs, with `eps` for the regularized ones.
    pub fn all(eps: f64) -> [CostKind; 4] {
        [
            CostKind::L2,
            CostKind::L4,
            CostKind::Coulomb { eps },
            CostKind::RandomPrior { eps },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostKind::L2 => "l2",
            CostKind::L4 => "l4",
            CostKind::Coulomb { .. } => "coulomb",
            CostKind::RandomPrior { .. } => "rand_prior",
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match *self {
            CostKind::Coulomb { eps } | CostKind::RandomPrior { eps } => Some(eps),
            _ => None,
        }
    }

    /// Replace the regularizer; no-op for L2/L4.
    pub fn with_eps(self, eps: f64) -> Self {
        match self {
            CostKind::Coulomb { .. } => CostKind::Coulomb { eps },
            CostKind::RandomPrior { .. } => CostKind::RandomPrior { eps },
            other => other,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.eps() {
            Some(eps) if !(eps > 0.0) || !eps.is_finite() => Err(OicaError::InvalidEpsilon(eps)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostKind {
    type Err = OicaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l2" => Ok(CostKind::L2),
            "l4" => Ok(CostKind::L4),
            "coulomb" => Ok(CostKind::Coulomb { eps: DEFAULT_EPS }),
            "rand_prior" | "random_prior" => Ok(CostKind::RandomPrior { eps: DEFAULT_EPS }),
            other => Err(OicaError::Parse(format!(
                "unknown cost '{other}', expected one of {:?}",
                CostKind::ALL_NAMES
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn gram_of_identity_is_identity() {
        let b = Basis::new(Array2::eye(2)).unwrap();
        assert_eq!(b.gram().0, Array2::<f64>::eye(2));
    }

    #[test]
    fn gram_of_duplicated_row_is_all_ones() {
        let b = Basis::new(array![[1.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_eq!(b.gram().0, Array2::<f64>::ones((2, 2)));
    }

    #[test]
    fn gram_off_diagonal_is_cosine() {
        let t = PI / 3.0;
        let b = Basis::new(array![[1.0, 0.0], [t.cos(), t.sin()]]).unwrap();
        assert_abs_diff_eq!(b.gram().get(0, 1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn orthonormal_pair_angle() {
        let b = Basis::new(Array2::eye(2)).unwrap();
        let a = b.pairwise_angles();
        assert_eq!(a.len(), 1);
        assert_abs_diff_eq!(a[0], 90.0, epsilon = 1e-12);
    }

    #[test]
    fn pathological_angles() {
        let t2 = PI / 6.0;
        let angles = [0.0, PI / 2.0, t2, t2 + PI / 2.0];
        let rows: Vec<Vec<f64>> = angles.iter().map(|a| vec![a.cos(), a.sin()]).collect();
        let b = Basis::from_rows(&rows).unwrap();
        let got = b.pairwise_angles();
        let want = [30.0, 30.0, 60.0, 90.0, 90.0, 120.0];
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert_abs_diff_eq!(*g, w, epsilon = 1e-10);
        }
    }

    #[test]
    fn identical_rows_angle_zero() {
        let b = Basis::new(array![[0.6, 0.8], [0.6, 0.8]]).unwrap();
        assert_abs_diff_eq!(b.pairwise_angles()[0], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn projection_examples() {
        let b = Basis::new(array![[3.0, 4.0]]).unwrap();
        let p = b.project_rows_unit_norm().unwrap();
        assert_abs_diff_eq!(p.as_array()[[0, 0]], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.as_array()[[0, 1]], 0.8, epsilon = 1e-15);
        let again = p.project_rows_unit_norm().unwrap();
        assert_abs_diff_eq!(again.as_array()[[0, 0]], 0.6, epsilon = 1e-15);

        let zero = Basis::new(array![[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            zero.project_rows_unit_norm(),
            Err(OicaError::ZeroRow { row: 1, .. })
        ));
    }

    #[test]
    fn cost_kind_parsing() {
        assert_eq!("l2".parse::<CostKind>().unwrap(), CostKind::L2);
        assert_eq!("L4".parse::<CostKind>().unwrap(), CostKind::L4);
        assert_eq!(
            "coulomb".parse::<CostKind>().unwrap(),
            CostKind::Coulomb { eps: DEFAULT_EPS }
        );
        assert_eq!(
            "rand_prior".parse::<CostKind>().unwrap().with_eps(1e-3),
            CostKind::RandomPrior { eps: 1e-3 }
        );
        assert!("l3".parse::<CostKind>().is_err());
        assert!(CostKind::Coulomb { eps: 0.0 }.validate().is_err());
        assert!(CostKind::L2.validate().is_ok());
    }

    fn matrix_strategy(k: usize, n: usize) -> impl Strategy<Value = Array2<f64>> {
        prop::collection::vec(-1.0f64..1.0, k * n)
            .prop_filter("rows must be nonzero", move |v| {
                v.chunks(n).all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-3)
            })
            .prop_map(move |v| Array2::from_shape_vec((k, n), v).unwrap())
    }

    proptest! {
        #[test]
        fn projected_gram_has_unit_diagonal(m in matrix_strategy(5, 3)) {
            let b = Basis::new(m).unwrap().project_rows_unit_norm().unwrap();
            let g = b.gram();
            for i in 0..b.k() {
                prop_assert!((g.get(i, i) - 1.0).abs() < 1e-10);
                for j in 0..b.k() {
                    prop_assert!((g.get(i, j) - g.get(j, i)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn projection_is_idempotent(m in matrix_strategy(4, 4)) {
            let once = Basis::new(m).unwrap().project_rows_unit_norm().unwrap();
            let twice = once.project_rows_unit_norm().unwrap();
            let diff = (once.as_array() - twice.as_array()).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
            prop_assert!(diff < 1e-14);
        }

        #[test]
        fn angles_invariant_under_rotation(m in matrix_strategy(4, 2), phi in 0.0..(2.0 * PI)) {
            let b = Basis::new(m).unwrap().project_rows_unit_norm().unwrap();
            let rot = array![[phi.cos(), -phi.sin()], [phi.sin(), phi.cos()]];
            let rotated = Basis::new(b.as_array().dot(&rot.t())).unwrap();
            for (x, y) in b.pairwise_angles().iter().zip(rotated.pairwise_angles()) {
                // arccos is ill-conditioned at the ends of its range
                if x.min(y) < 1e-2 || x.max(y) > 180.0 - 1e-2 {
                    continue;
                }
                prop_assert!((x - y).abs() < 1e-8);
            }
        }
    }
}
