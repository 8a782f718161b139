//! Small dense linear algebra for normal-equation solves.
//!
//! Matrices are square, row-major, `d * d` flat slices. Dimensions here are
//! tiny (intercept plus three features), so plain Gaussian elimination with
//! partial pivoting is all that is needed.

use crate::num::Scalar;

/// `XᵀX` and `Xᵀy` for a design with rows `x` (already including any
/// intercept column).
pub fn normal_equations<T: Scalar>(x: &[Vec<T>], y: &[T]) -> (Vec<T>, Vec<T>) {
    let d = x.first().map_or(0, Vec::len);
    let mut gram = vec![T::zero(); d * d];
    let mut rhs = vec![T::zero(); d];
    for (row, &target) in x.iter().zip(y) {
        for i in 0..d {
            rhs[i] = rhs[i] + row[i] * target;
            for j in i..d {
                gram[i * d + j] = gram[i * d + j] + row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[i * d + j] = gram[j * d + i];
        }
    }
    (gram, rhs)
}

/// Solves `a · x = b`. Returns `None` when a pivot vanishes.
pub fn solve<T: Scalar>(a: &[T], b: &[T]) -> Option<Vec<T>> {
    let d = b.len();
    debug_assert_eq!(a.len(), d * d);
    let mut m: Vec<T> = a.to_vec();
    let mut rhs: Vec<T> = b.to_vec();
    let scale = a.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let tiny = scale * T::epsilon() * T::of_usize(d.max(1));

    for col in 0..d {
        let pivot_row =
            (col..d).max_by(|&r, &s| m[r * d + col].abs().partial_cmp(&m[s * d + col].abs()).unwrap()).unwrap();
        let pivot = m[pivot_row * d + col];
        if !(pivot.abs() > tiny) {
            return None;
        }
        if pivot_row != col {
            for k in 0..d {
                m.swap(col * d + k, pivot_row * d + k);
            }
            rhs.swap(col, pivot_row);
        }
        for r in col + 1..d {
            let factor = m[r * d + col] / pivot;
            if factor == T::zero() {
                continue;
            }
            for k in col..d {
                m[r * d + k] = m[r * d + k] - factor * m[col * d + k];
            }
            rhs[r] = rhs[r] - factor * rhs[col];
        }
    }

    let mut x = vec![T::zero(); d];
    for i in (0..d).rev() {
        let mut acc = rhs[i];
        for k in i + 1..d {
            acc = acc - m[i * d + k] * x[k];
        }
        x[i] = acc / m[i * d + i];
    }
    Some(x)
}

pub fn invert<T: Scalar>(a: &[T], d: usize) -> Option<Vec<T>> {
    let mut inv = vec![T::zero(); d * d];
    for j in 0..d {
        let mut e = vec![T::zero(); d];
        e[j] = T::one();
        let col = solve(a, &e)?;
        for i in 0..d {
            inv[i * d + j] = col[i];
        }
    }
    Some(inv)
}

fn norm_1<T: Scalar>(a: &[T], d: usize) -> T {
    (0..d).map(|j| (0..d).fold(T::zero(), |acc, i| acc + a[i * d + j].abs())).fold(T::zero(), T::max)
}

/// 1-norm condition number; infinite when `a` is singular.
pub fn condition_number<T: Scalar>(a: &[T], d: usize) -> T {
    match invert(a, d) {
        Some(inv) => norm_1(a, d) * norm_1(&inv, d),
        None => T::infinity(),
    }
}

pub fn trace<T: Scalar>(a: &[T], d: usize) -> T {
    (0..d).fold(T::zero(), |acc, i| acc + a[i * d + i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = [2.0f64, 1.0, 1.0, 3.0];
        let x = solve(&a, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn needs_pivoting() {
        let a = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(solve(&a, &[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn singular_is_none() {
        let a = [1.0f64, 2.0, 2.0, 4.0];
        assert!(solve(&a, &[1.0, 2.0]).is_none());
        assert!(condition_number(&a, 2).is_infinite());
    }

    #[test]
    fn identity_condition_is_one() {
        let a = [1.0f32, 0.0, 0.0, 1.0];
        assert_eq!(condition_number(&a, 2), 1.0);
        assert_eq!(trace(&a, 2), 2.0);
    }

    #[test]
    fn normal_equations_are_symmetric() {
        let x = vec![vec![1.0, 2.0, 3.0], vec![1.0, -1.0, 0.5], vec![1.0, 0.0, 4.0]];
        let (g, r) = normal_equations(&x, &[1.0, 2.0, 3.0]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g[i * 3 + j], g[j * 3 + i]);
            }
        }
        assert_eq!(r[0], 6.0);
        assert_eq!(g[0], 3.0);
    }
}
