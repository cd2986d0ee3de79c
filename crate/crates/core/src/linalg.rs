//! Small dense linear algebra on jets and plain floats.

use nalgebra::DMatrix;

use crate::jets::{EvalError, Jet2};

/// Solves `a x = b` for jet-valued `a` (row-major `n×n`) and `b`, with
/// partial pivoting on the values. Derivatives of the solution follow from
/// exact jet arithmetic.
pub(crate) fn solve_jets(a: &[Jet2], b: &[Jet2]) -> Result<Vec<Jet2>, EvalError> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .value()
                    .abs()
                    .total_cmp(&a[j * n + col].value().abs())
            })
            .expect("non-empty range");
        if a[piv * n + col].value() == 0.0 {
            return Err(EvalError::Singular("linear solve"));
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let inv = a[col * n + col].recip()?;
        for row in (col + 1)..n {
            let factor = &a[row * n + col] * &inv;
            if factor.value() == 0.0 && factor.is_constant() {
                continue;
            }
            for k in col..n {
                let t = &factor * &a[col * n + k];
                a[row * n + k] = &a[row * n + k] - &t;
            }
            let t = &factor * &b[col];
            b[row] = &b[row] - &t;
        }
    }
    let mut x: Vec<Jet2> = vec![Jet2::zero(b.first().map_or(0, Jet2::dim)); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for k in (row + 1)..n {
            let t = &a[row * n + k] * &x[k];
            acc = &acc - &t;
        }
        x[row] = acc.try_div(&a[row * n + row])?;
    }
    Ok(x)
}

pub(crate) fn to_matrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// 2-norm condition number; infinite for singular input.
pub(crate) fn condition_number(rows: usize, data: &[f64]) -> f64 {
    if rows == 0 {
        return 1.0;
    }
    let m = to_matrix(rows, rows, data);
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank and a kernel basis (as columns) of a `rows×cols` matrix.
/// Singular values at or below `rel_tol * max` count as zero.
pub(crate) fn rank_and_kernel(
    rows: usize,
    cols: usize,
    data: &[f64],
    rel_tol: f64,
) -> (usize, Vec<Vec<f64>>) {
    if cols == 0 {
        return (0, Vec::new());
    }
    // pad to a square matrix so the SVD yields a full set of right vectors
    let size = rows.max(cols);
    let mut padded = DMatrix::zeros(size, cols);
    for i in 0..rows {
        for j in 0..cols {
            padded[(i, j)] = data[i * cols + j];
        }
    }
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let thresh = if max < 1e-300 { f64::INFINITY } else { rel_tol * max };
    let mut rank = 0;
    let mut kernel = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if max >= 1e-300 && *s > thresh {
            rank += 1;
        } else {
            kernel.push(v_t.row(k).iter().cloned().collect());
        }
    }
    (rank, kernel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_solve_matches_direct() {
        // [[2, 1], [1, 3]] x = [1, 2] -> x = [1/5, 3/5]
        let a: Vec<Jet2> = [2.0, 1.0, 1.0, 3.0].iter().map(|&v| Jet2::constant(v, 1)).collect();
        let b = [Jet2::constant(1.0, 1), Jet2::constant(2.0, 1)];
        let x = solve_jets(&a, &b).unwrap();
        assert!((x[0].value() - 0.2).abs() < 1e-15);
        assert!((x[1].value() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn jet_solve_needs_pivoting() {
        let a: Vec<Jet2> = [0.0, 1.0, 1.0, 0.0].iter().map(|&v| Jet2::constant(v, 0)).collect();
        let b = [Jet2::constant(3.0, 0), Jet2::constant(4.0, 0)];
        let x = solve_jets(&a, &b).unwrap();
        assert_eq!((x[0].value(), x[1].value()), (4.0, 3.0));
        let z: Vec<Jet2> = vec![Jet2::constant(0.0, 0); 4];
        assert!(solve_jets(&z, &b).is_err());
    }

    #[test]
    fn kernel_of_wide_matrix() {
        let (rank, ker) = rank_and_kernel(1, 3, &[1.0, 0.0, 0.0], 1e-10);
        assert_eq!(rank, 1);
        assert_eq!(ker.len(), 2);
        for v in &ker {
            assert!(v[0].abs() < 1e-14);
        }
        let (rank, ker) = rank_and_kernel(2, 2, &[0.0; 4], 1e-10);
        assert_eq!((rank, ker.len()), (0, 2));
    }
}
