//! Small dense kernels used by the matrix predictors.

use crate::scalar::Scalar;

/// Singular values of a row-major `rows x cols` matrix, descending, via one-sided
/// Jacobi rotations with a fixed cyclic sweep order.
pub fn singular_values<T: Scalar>(values: &[T], rows: usize, cols: usize) -> Vec<T> {
    assert_eq!(values.len(), rows * cols);
    // Orthogonalize the columns of the taller orientation.
    let (r, c, at): (usize, usize, Box<dyn Fn(usize, usize) -> T>) = if rows >= cols {
        (rows, cols, Box::new(|i, j| values[i * cols + j]))
    } else {
        (cols, rows, Box::new(|i, j| values[j * cols + i]))
    };
    // column-major working copy
    let mut u: Vec<Vec<T>> = (0..c).map(|j| (0..r).map(|i| at(i, j)).collect()).collect();
    let tol = T::of(1e-10).max(T::epsilon() * T::of(8.0));
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..r {
                    alpha = alpha + u[p][i] * u[p][i];
                    beta = beta + u[q][i] * u[q][i];
                    gamma = gamma + u[p][i] * u[q][i];
                }
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                for i in 0..r {
                    let up = u[p][i];
                    let uq = u[q][i];
                    u[p][i] = cs * up - sn * uq;
                    u[q][i] = sn * up + cs * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = u.iter().map(|col| col.iter().map(|&x| x * x).sum::<T>().sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("not NaN"));
    sv
}

/// Maximum-weight one-to-one assignment between rows and columns of a
/// non-negative `rows x cols` matrix (Hungarian method with potentials).
/// Returns the total weight and, per row, the assigned column if it is a real one.
pub fn max_weight_assignment<T: Scalar>(values: &[T], rows: usize, cols: usize) -> (T, Vec<Option<usize>>) {
    assert_eq!(values.len(), rows * cols);
    let n = rows.max(cols);
    if n == 0 {
        return (T::zero(), Vec::new());
    }
    let top = values.iter().copied().fold(T::zero(), T::max);
    let weight = |i: usize, j: usize| {
        if i < rows && j < cols {
            values[i * cols + j]
        } else {
            T::zero()
        }
    };
    // minimize top - w over the square padding; 1-based arrays with a sentinel at 0
    let cost = |i: usize, j: usize| top - weight(i - 1, j - 1);
    let inf = T::infinity();
    let mut pot_u = vec![T::zero(); n + 1];
    let mut pot_v = vec![T::zero(); n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - pot_u[i0] - pot_v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    pot_u[owner[j]] = pot_u[owner[j]] + delta;
                    pot_v[j] = pot_v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![None; rows];
    let mut total = T::zero();
    for j in 1..=n {
        let i = owner[j];
        if i >= 1 && i <= rows && j <= cols {
            assignment[i - 1] = Some(j - 1);
            total = total + weight(i - 1, j - 1);
        }
    }
    (total, assignment)
}
