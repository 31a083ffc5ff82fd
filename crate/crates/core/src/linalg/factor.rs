use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    Cholesky,
    Lu,
}

#[derive(Clone, Debug)]
enum Inner {
    Cholesky(Cholesky<f64, Dyn>),
    Lu { lu: LU<f64, Dyn, Dyn>, lu_t: LU<f64, Dyn, Dyn> },
}

/// A stored factorization of a real square matrix. Solves with `A` and `Aᵀ`
/// reuse it without refactorizing.
#[derive(Clone, Debug)]
pub struct Factorization {
    n: usize,
    inner: Inner,
}

impl Factorization {
    pub fn cholesky(a: DMatrix<f64>) -> Result<Self> {
        check_square(&a)?;
        let n = a.nrows();
        let chol = Cholesky::new(a)
            .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
        Ok(Factorization { n, inner: Inner::Cholesky(chol) })
    }

    pub fn lu(a: DMatrix<f64>) -> Result<Self> {
        check_square(&a)?;
        let n = a.nrows();
        let lu_t = LU::new(a.transpose());
        let lu = LU::new(a);
        if !lu.is_invertible() {
            return Err(Error::Singular("LU factorization found a zero pivot".into()));
        }
        Ok(Factorization { n, inner: Inner::Lu { lu, lu_t } })
    }

    pub fn kind(&self) -> FactorKind {
        match self.inner {
            Inner::Cholesky(_) => FactorKind::Cholesky,
            Inner::Lu { .. } => FactorKind::Lu,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_column_slice(b);
        let z = match &self.inner {
            Inner::Cholesky(c) => c.solve(&rhs),
            Inner::Lu { lu, .. } => lu.solve(&rhs).expect("invertibility checked at factorization"),
        };
        z.as_slice().to_vec()
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_column_slice(b);
        let z = match &self.inner {
            Inner::Cholesky(c) => c.solve(&rhs),
            Inner::Lu { lu_t, .. } => {
                lu_t.solve(&rhs).expect("invertibility checked at factorization")
            }
        };
        z.as_slice().to_vec()
    }
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!("cannot factorize {}x{} matrix", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("matrix has non-finite entries".into()));
    }
    Ok(())
}
