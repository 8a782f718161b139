//! Ordinary least squares through the normal equations, with a ridge
//! fallback for numerically singular designs.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::num::Scalar;

/// Gram matrices with a 1-norm condition estimate above this are treated as
/// singular.
pub const SINGULAR_CONDITION: f64 = 1e12;
/// Ridge strength relative to `trace(XᵀX) / d`.
pub const RIDGE_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    EnergyJ,
    RuntimeS,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::EnergyJ, Target::RuntimeS];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::EnergyJ => "energy_j",
            Target::RuntimeS => "runtime_s",
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OlsError {
    /// Fewer rows than coefficients.
    Underdetermined { rows: usize, needed: usize },
    /// Singular Gram matrix and ridge disabled.
    Singular,
}

/// Fitted linear model `y = c0 + Σ c_i · x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct LinearModel<T> {
    /// Intercept first, then one coefficient per feature.
    pub coefficients: Vec<T>,
    pub feature_names: Vec<String>,
    pub target: Target,
    pub n_samples: usize,
    pub residual_sse: T,
    /// Ridge strength used, zero for a plain least-squares solve.
    #[serde(default = "zero_of")]
    pub ridge_lambda: T,
}

fn zero_of<T: Scalar>() -> T {
    T::zero()
}

impl<T: Scalar> LinearModel<T> {
    /// Intercept-only model; handy as a fixture.
    pub fn constant(target: Target, feature_names: &[&str], value: T) -> Self {
        let mut coefficients = vec![T::zero(); feature_names.len() + 1];
        coefficients[0] = value;
        Self {
            coefficients,
            feature_names: feature_names.iter().map(|s| (*s).to_owned()).collect(),
            target,
            n_samples: 0,
            residual_sse: T::zero(),
            ridge_lambda: T::zero(),
        }
    }

    pub fn evaluate(&self, features: &[T]) -> T {
        debug_assert_eq!(features.len() + 1, self.coefficients.len());
        self.coefficients[1..].iter().zip(features).fold(self.coefficients[0], |acc, (&c, &x)| acc + c * x)
    }

    /// Σ (prediction − observation)² for the given data.
    pub fn sse(&self, rows: &[Vec<T>], y: &[T]) -> T {
        rows.iter().zip(y).fold(T::zero(), |acc, (row, &obs)| {
            let r = self.evaluate(row) - obs;
            acc + r * r
        })
    }
}

fn with_intercept<T: Scalar>(rows: &[Vec<T>]) -> Vec<Vec<T>> {
    rows.iter().map(|r| std::iter::once(T::one()).chain(r.iter().copied()).collect()).collect()
}

/// Fits `y ≈ β0 + Xβ` by least squares. `rows` hold features only.
pub fn fit_ols<T: Scalar>(
    rows: &[Vec<T>],
    y: &[T],
    feature_names: &[&str],
    target: Target,
    ridge_fallback: bool,
) -> Result<LinearModel<T>, OlsError> {
    let d = feature_names.len() + 1;
    if rows.len() < d {
        return Err(OlsError::Underdetermined { rows: rows.len(), needed: d });
    }
    let design = with_intercept(rows);
    let (mut gram, rhs) = linalg::normal_equations(&design, y);

    let cond = linalg::condition_number(&gram, d);
    let mut ridge_lambda = T::zero();
    let singular = !(cond <= T::of(SINGULAR_CONDITION));
    let coefficients = if singular {
        if !ridge_fallback {
            return Err(OlsError::Singular);
        }
        ridge_lambda = T::of(RIDGE_SCALE) * linalg::trace(&gram, d) / T::of_usize(d);
        if ridge_lambda == T::zero() {
            ridge_lambda = T::of(RIDGE_SCALE);
        }
        for i in 0..d {
            gram[i * d + i] = gram[i * d + i] + ridge_lambda;
        }
        linalg::solve(&gram, &rhs).ok_or(OlsError::Singular)?
    } else {
        linalg::solve(&gram, &rhs).ok_or(OlsError::Singular)?
    };

    let mut model = LinearModel {
        coefficients,
        feature_names: feature_names.iter().map(|s| (*s).to_owned()).collect(),
        target,
        n_samples: rows.len(),
        residual_sse: T::zero(),
        ridge_lambda,
    };
    model.residual_sse = model.sse(rows, y);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAMES: [&str; 3] = ["cpu_req", "mem_req_mib", "iterations"];

    #[test]
    fn exact_affine_data_interpolates() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (i, it) in [500.0, 600.0, 750.0, 900.0, 1000.0].iter().enumerate() {
            let cpu = 1.0 + (i % 2) as f64;
            let mem = 256.0 * (1 + i / 2) as f64;
            rows.push(vec![cpu, mem, *it]);
            y.push(3.0 + 2.0 * it);
        }
        let m = fit_ols(&rows, &y, &NAMES, Target::RuntimeS, false).unwrap();
        assert!((m.coefficients[0] - 3.0).abs() < 1e-7);
        assert!(m.coefficients[1].abs() < 1e-9);
        assert!(m.coefficients[2].abs() < 1e-11);
        assert!((m.coefficients[3] - 2.0).abs() < 1e-12);
        assert!(m.residual_sse < 1e-12);
        assert_eq!(m.ridge_lambda, 0.0);
    }

    #[test]
    fn constant_features_absorb_into_intercept_with_ridge() {
        // cpu and mem never vary: the design is rank deficient, so the ridge
        // path engages, yet predictions remain exact.
        let rows: Vec<Vec<f64>> = [500.0, 700.0, 900.0, 1000.0].iter().map(|&it| vec![2.0, 512.0, it]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 + 2.0 * r[2]).collect();
        assert_eq!(fit_ols(&rows, &y, &NAMES, Target::RuntimeS, false).unwrap_err(), OlsError::Singular);
        let m = fit_ols(&rows, &y, &NAMES, Target::RuntimeS, true).unwrap();
        assert!(m.ridge_lambda > 0.0);
        for (r, obs) in rows.iter().zip(&y) {
            assert!((m.evaluate(r) - obs).abs() / obs < 1e-6);
        }
    }

    #[test]
    fn identical_rows_without_ridge_are_singular() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 6];
        let y = vec![1.0; 6];
        assert_eq!(fit_ols(&rows, &y, &NAMES, Target::EnergyJ, false).unwrap_err(), OlsError::Singular);
    }

    #[test]
    fn too_few_rows() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 3];
        assert_eq!(
            fit_ols(&rows, &[1.0; 3], &NAMES, Target::EnergyJ, true).unwrap_err(),
            OlsError::Underdetermined { rows: 3, needed: 4 }
        );
    }

    #[test]
    fn works_in_single_precision() {
        let rows: Vec<Vec<f32>> = (0..8).map(|i| vec![i as f32, (i * i % 5) as f32]).collect();
        let y: Vec<f32> = rows.iter().map(|r| 1.0 + 0.5 * r[0] - 2.0 * r[1]).collect();
        let m = fit_ols(&rows, &y, &["a", "b"], Target::EnergyJ, false).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-3);
        assert!((m.coefficients[1] - 0.5).abs() < 1e-3);
        assert!((m.coefficients[2] + 2.0).abs() < 1e-3);
    }
}
