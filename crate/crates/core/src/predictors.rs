//! Reference-free matrix predictors of match quality.

use serde::{Deserialize, Serialize};

use crate::linalg::{max_weight_assignment, singular_values};
use crate::scalar::{mean_std, Scalar};
use crate::session::MatchingMatrix;

pub const PREDICTOR_NAMES: [&str; 11] = [
    "dominants",
    "norm_1",
    "norm_inf",
    "norm_frob",
    "sv1_ratio",
    "sv2_ratio",
    "avg_conf_nonzero",
    "std_conf_nonzero",
    "max_conf",
    "nonzero_ratio",
    "bmm_mass_ratio",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorVector<T> {
    /// Fraction of non-zero entries that are strict maxima of both their row and column.
    pub dominants: T,
    /// Entrywise L1 norm over `n * m`.
    pub norm_1: T,
    /// Largest absolute entry.
    pub norm_inf: T,
    /// Frobenius norm over `sqrt(n * m)`.
    pub norm_frob: T,
    pub sv1_ratio: T,
    pub sv2_ratio: T,
    pub avg_conf_nonzero: T,
    pub std_conf_nonzero: T,
    pub max_conf: T,
    pub nonzero_ratio: T,
    /// Weight of the best one-to-one assignment over the total mass.
    pub bmm_mass_ratio: T,
}

impl<T: Scalar> PredictorVector<T> {
    pub fn to_vec(&self) -> Vec<T> {
        vec![
            self.dominants,
            self.norm_1,
            self.norm_inf,
            self.norm_frob,
            self.sv1_ratio,
            self.sv2_ratio,
            self.avg_conf_nonzero,
            self.std_conf_nonzero,
            self.max_conf,
            self.nonzero_ratio,
            self.bmm_mass_ratio,
        ]
    }
}

/// Strict row-and-column maximum test for entry `(i, j)`.
fn is_dominant<T: Scalar>(m: &MatchingMatrix<T>, i: usize, j: usize) -> bool {
    let v = m.get(i, j);
    (0..m.cols()).all(|c| c == j || m.get(i, c) < v) && (0..m.rows()).all(|r| r == i || m.get(r, j) < v)
}

pub fn lrsm_features<T: Scalar>(matrix: &MatchingMatrix<T>) -> PredictorVector<T> {
    let (n, m) = (matrix.rows(), matrix.cols());
    let cells = T::of_usize(n * m);
    let nonzero: Vec<T> = matrix.values().iter().copied().filter(|&v| v > T::zero()).collect();
    let total: T = matrix.values().iter().copied().sum();

    let mut dominant = 0usize;
    for i in 0..n {
        for j in 0..m {
            if matrix.get(i, j) > T::zero() && is_dominant(matrix, i, j) {
                dominant += 1;
            }
        }
    }
    let ratio_of = |count: usize| {
        if nonzero.is_empty() {
            T::zero()
        } else {
            T::of_usize(count) / T::of_usize(nonzero.len())
        }
    };

    let sv = singular_values(matrix.values(), n, m);
    let sv_sum: T = sv.iter().copied().sum();
    let sv_ratio = |k: usize| {
        if sv_sum > T::zero() {
            sv.get(k).copied().unwrap_or_else(T::zero) / sv_sum
        } else {
            T::zero()
        }
    };

    let (avg, std) = mean_std(&nonzero);
    let frob = matrix.values().iter().map(|&v| v * v).sum::<T>().sqrt();
    let bmm_mass_ratio = if total > T::zero() {
        // rounding in the assignment sum can overshoot the total by an ulp
        (max_weight_assignment(matrix.values(), n, m).0 / total).min(T::one())
    } else {
        T::one()
    };

    PredictorVector {
        dominants: ratio_of(dominant),
        norm_1: total / cells,
        norm_inf: matrix.values().iter().map(|v| v.abs()).fold(T::zero(), T::max),
        norm_frob: frob / cells.sqrt(),
        sv1_ratio: sv_ratio(0),
        sv2_ratio: sv_ratio(1),
        avg_conf_nonzero: avg,
        std_conf_nonzero: std,
        max_conf: nonzero.iter().copied().fold(T::zero(), T::max),
        nonzero_ratio: T::of_usize(nonzero.len()) / cells,
        bmm_mass_ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{matrix_from_history, TaskSpec};
    use crate::testutil::worked_history;

    #[test]
    fn worked_matrix_predictors() {
        let m: MatchingMatrix<f64> = matrix_from_history(&worked_history(), &TaskSpec::new("po", 3, 4).unwrap()).unwrap();
        let p = lrsm_features(&m);
        // only (3,4) is a strict row and column maximum; (1,1) ties with (1,2)
        assert_eq!(p.dominants, 0.25);
        assert_eq!(p.nonzero_ratio, 4.0 / 12.0);
        assert_eq!(p.max_conf, 1.0);
        assert!((p.norm_1 - 2.45 / 12.0).abs() < 1e-12);
        // best assignment: (3,4)=1.0, (1,2)=0.5, (2,1)=0.45
        assert!((p.bmm_mass_ratio - 1.95 / 2.45).abs() < 1e-12);
    }

    #[test]
    fn identity_like_matrix_is_fully_dominant() {
        let mut m = MatchingMatrix::<f64>::zeros(3, 4);
        m.set(0, 2, 1.0);
        m.set(1, 0, 1.0);
        m.set(2, 3, 1.0);
        let p = lrsm_features(&m);
        assert_eq!(p.dominants, 1.0);
        assert!((p.sv1_ratio - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.bmm_mass_ratio, 1.0);
    }

    #[test]
    fn zero_matrix_degenerates() {
        let p = lrsm_features(&MatchingMatrix::<f64>::zeros(4, 5));
        let v = p.to_vec();
        assert_eq!(v[..10], [0.0; 10]);
        assert_eq!(p.bmm_mass_ratio, 1.0);
        assert_eq!(v.len(), PREDICTOR_NAMES.len());
    }
}
