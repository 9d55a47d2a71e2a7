//! Dense LU helpers that fail loudly on (numerically) singular systems.

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a factorization is declared singular.
const PIVOT_TOL: f64 = 1e-14;

pub struct Factored {
    lu: LU<f64, Dyn, Dyn>,
}

impl Factored {
    pub fn new(m: &DMatrix<f64>, context: impl FnOnce() -> String) -> Result<Self> {
        let lu = m.clone().lu();
        let u = lu.u();
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let singular = (0..u.nrows()).any(|i| {
            let p = u[(i, i)];
            !p.is_finite() || p.abs() <= PIVOT_TOL * scale
        });
        if singular {
            return Err(Error::Singular { context: context() });
        }
        Ok(Self { lu })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(rhs).expect("factorization checked non-singular")
    }

    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(rhs).expect("factorization checked non-singular")
    }
}

pub fn solve(m: &DMatrix<f64>, rhs: &DVector<f64>, context: impl FnOnce() -> String) -> Result<DVector<f64>> {
    Ok(Factored::new(m, context)?.solve(rhs))
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    if v.iter().any(|x| x.is_nan()) {
        return f64::NAN;
    }
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
