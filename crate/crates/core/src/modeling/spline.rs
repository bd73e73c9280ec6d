use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ModelError;

const DEGREE: usize = 3;

/// Clamped cubic B-spline basis with interior knots at sample quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    pub variable: String,
    /// Full knot vector, boundary knots repeated `DEGREE + 1` times.
    pub knots: Vec<f64>,
    pub n_basis: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BSplineBasis {
    pub fn from_values(variable: &str, values: &[f64], n_basis: usize) -> Result<Self, ModelError> {
        if n_basis < DEGREE + 1 {
            return Err(ModelError::DegenerateKnots {
                variable: variable.into(),
                message: format!("basis size {n_basis} is below {}", DEGREE + 1),
            });
        }
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < n_basis {
            return Err(ModelError::DegenerateKnots {
                variable: variable.into(),
                message: format!("{} distinct values for {} basis functions", distinct.len(), n_basis),
            });
        }
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let n_interior = n_basis - DEGREE - 1;
        let interior: Vec<f64> = (1..=n_interior)
            .map(|i| quantile(&sorted, i as f64 / (n_interior + 1) as f64))
            .collect();
        let mut knots = vec![lo; DEGREE + 1];
        knots.extend(&interior);
        knots.extend(std::iter::repeat_n(hi, DEGREE + 1));
        if knots.windows(2).skip(DEGREE).take(n_interior + 1).any(|w| w[1] <= w[0]) {
            return Err(ModelError::DegenerateKnots {
                variable: variable.into(),
                message: format!("quantile knots are not strictly increasing: {:?}", interior),
            });
        }
        Ok(BSplineBasis {
            variable: variable.into(),
            knots,
            n_basis,
        })
    }

    pub fn lower(&self) -> f64 {
        self.knots[0]
    }

    pub fn upper(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// All basis functions at `x`; values outside the boundary knots are
    /// clamped to the boundary.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let t = &self.knots;
        let x = x.clamp(self.lower(), self.upper());
        // knot span: largest i with t[i] <= x < t[i+1], last span for x = upper
        let last = self.n_basis - 1;
        let mut span = DEGREE;
        while span < last && x >= t[span + 1] {
            span += 1;
        }
        // de Boor's triangular recursion for the DEGREE+1 nonzero functions
        let mut n = vec![0.0; DEGREE + 1];
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        let mut out = vec![0.0; self.n_basis];
        for (k, v) in n.into_iter().enumerate() {
            out[span - DEGREE + k] = v;
        }
        out
    }

    /// Second-difference penalty `D'D` over the retained functions (the
    /// first one is dropped for identifiability against the intercept).
    pub fn penalty(&self) -> DMatrix<f64> {
        let k = self.n_basis;
        let mut d = DMatrix::zeros(k - 2, k);
        for i in 0..k - 2 {
            d[(i, i)] = 1.0;
            d[(i, i + 1)] = -2.0;
            d[(i, i + 2)] = 1.0;
        }
        let full = d.transpose() * d;
        full.view((1, 1), (k - 1, k - 1)).into_owned()
    }
}

/// Largest absolute second difference of the coefficients of one smooth,
/// with the dropped first function contributing zero.
pub fn max_second_difference(coefs: &[f64]) -> f64 {
    let mut full = vec![0.0];
    full.extend_from_slice(coefs);
    full.windows(3)
        .map(|w| (w[0] - 2.0 * w[1] + w[2]).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> BSplineBasis {
        let xs: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 10.0 + 20.0).collect();
        BSplineBasis::from_values("x", &xs, 8).unwrap()
    }

    #[test]
    fn partition_of_unity_and_nonnegative() {
        let b = basis();
        for i in 0..=100 {
            let x = b.lower() + (b.upper() - b.lower()) * i as f64 / 100.0;
            let v = b.eval(x);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{x}");
            assert!(v.iter().all(|&e| e >= -1e-15));
        }
        assert_eq!(b.eval(b.upper())[7], 1.0);
        assert_eq!(b.eval(b.lower())[0], 1.0);
        assert_eq!(b.eval(-1e9), b.eval(b.lower()));
    }

    #[test]
    fn reproduces_linear_functions() {
        // Greville abscissae give the coefficients of the identity
        let b = basis();
        let g: Vec<f64> = (0..8).map(|i| b.knots[i + 1..i + 4].iter().sum::<f64>() / 3.0).collect();
        for x in [b.lower(), 15.0, 21.3, b.upper()] {
            let v = b.eval(x);
            let y: f64 = v.iter().zip(&g).map(|(a, c)| a * c).sum();
            assert!((y - x).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_knots_rejected() {
        let xs = vec![1.0, 1.0, 1.0, 2.0, 2.0, 3.0];
        assert!(matches!(
            BSplineBasis::from_values("x", &xs, 8),
            Err(ModelError::DegenerateKnots { .. })
        ));
    }

    #[test]
    fn penalty_shape() {
        let p = basis().penalty();
        assert_eq!(p.shape(), (7, 7));
        assert!((p.clone() - p.transpose()).amax() < 1e-15);
        assert_eq!(max_second_difference(&[1.0, 2.0, 3.0]), 0.0);
    }
}
