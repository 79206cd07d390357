//! Polynomial graph filters and the exact spectral-domain reference path.
//!
//! The recurrence-based filters never materialize polynomial matrices; the
//! eigendecomposition path exists to validate them and is deliberately dense
//! and small (n <= 64).

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::sparse::PropagationMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Monomial,
    Chebyshev,
}

/// Polynomial graph filter: alpha_i L^i (monomial) or theta_i T_i(L~)
/// (Chebyshev), coefficient i at index i.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFilter {
    pub coefficients: Vec<f64>,
    pub basis: Basis,
}

impl PolynomialFilter {
    pub fn chebyshev(coefficients: Vec<f64>) -> Self {
        Self { coefficients, basis: Basis::Chebyshev }
    }

    pub fn monomial(coefficients: Vec<f64>) -> Self {
        Self { coefficients, basis: Basis::Monomial }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.is_empty() {
            return Err(Error::Config("filter needs at least one coefficient".into()));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("filter coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Scalar evaluation p(lambda) in the filter's own basis.
    pub fn eval_scalar(&self, lambda: f64) -> f64 {
        match self.basis {
            Basis::Monomial => {
                let mut acc = 0.0;
                let mut pw = 1.0;
                for &c in &self.coefficients {
                    acc += c * pw;
                    pw *= lambda;
                }
                acc
            }
            Basis::Chebyshev => {
                let mut acc = self.coefficients[0];
                let (mut t_prev, mut t_cur) = (1.0, lambda);
                for (i, &c) in self.coefficients.iter().enumerate().skip(1) {
                    if i > 1 {
                        let t_next = 2.0 * lambda * t_cur - t_prev;
                        t_prev = t_cur;
                        t_cur = t_next;
                    }
                    acc += c * t_cur;
                }
                acc
            }
        }
    }
}

fn check_dims(prop: &PropagationMatrix, signal: &Array2<f64>) -> Result<()> {
    if prop.n() != signal.nrows() {
        return Err(Error::DimMismatch(format!(
            "operator is {0}x{0} but signal has {1} rows",
            prop.n(),
            signal.nrows()
        )));
    }
    Ok(())
}

/// Sum_i theta_i T_i(L~) x by the three-term recurrence, sparse products only.
pub fn chebyshev_apply(
    prop: &PropagationMatrix,
    filter: &PolynomialFilter,
    signal: &Array2<f64>,
) -> Result<Array2<f64>> {
    if filter.basis != Basis::Chebyshev {
        return Err(Error::BasisMismatch { expected: "Chebyshev", got: "Monomial" });
    }
    filter.validate()?;
    check_dims(prop, signal)?;
    let csr = prop.csr();
    let theta = &filter.coefficients;
    let mut acc = signal * theta[0];
    if theta.len() > 1 {
        let mut t_prev = signal.clone();
        let mut t_cur = csr.matmat(signal);
        acc = acc + &t_cur * theta[1];
        for &c in &theta[2..] {
            let t_next = csr.matmat(&t_cur) * 2.0 - &t_prev;
            acc = acc + &t_next * c;
            t_prev = t_cur;
            t_cur = t_next;
        }
    }
    Ok(acc)
}

/// Sum_i alpha_i L^i x via repeated sparse products.
pub fn monomial_apply(
    prop: &PropagationMatrix,
    filter: &PolynomialFilter,
    signal: &Array2<f64>,
) -> Result<Array2<f64>> {
    if filter.basis != Basis::Monomial {
        return Err(Error::BasisMismatch { expected: "Monomial", got: "Chebyshev" });
    }
    filter.validate()?;
    check_dims(prop, signal)?;
    let csr = prop.csr();
    let alpha = &filter.coefficients;
    let mut acc = signal * alpha[0];
    let mut power = signal.clone();
    for &c in &alpha[1..] {
        power = csr.matmat(&power);
        acc = acc + &power * c;
    }
    Ok(acc)
}

/// Dense eigendecomposition of a symmetric propagation matrix.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, column i paired with eigenvalue i.
    u: Array2<f64>,
}

impl SpectralDecomposition {
    /// Cyclic Jacobi on the dense form; enforced n <= 64.
    pub fn compute(prop: &PropagationMatrix) -> Result<Self> {
        let n = prop.n();
        if n > 64 {
            return Err(Error::TooLargeForDense(n));
        }
        let mut a = prop.to_dense();
        let mut u = Array2::<f64>::eye(n);
        let scale = a.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[[p, q]].abs();
                }
            }
            if off <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[[p, q]];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let app = a[[p, p]];
                    let aqq = a[[q, q]];
                    let tau = (aqq - app) / (2.0 * apq);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[[k, p]];
                        let akq = a[[k, q]];
                        a[[k, p]] = c * akp - s * akq;
                        a[[k, q]] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[[p, k]];
                        let aqk = a[[q, k]];
                        a[[p, k]] = c * apk - s * aqk;
                        a[[q, k]] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let ukp = u[[k, p]];
                        let ukq = u[[k, q]];
                        u[[k, p]] = c * ukp - s * ukq;
                        u[[k, q]] = s * ukp + c * ukq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| a[[i, i]]).collect();
        let mut u_sorted = Array2::<f64>::zeros((n, n));
        for (new_col, &old_col) in order.iter().enumerate() {
            u_sorted.column_mut(new_col).assign(&u.column(old_col));
        }
        Ok(Self { eigenvalues, u: u_sorted })
    }

    /// Decomposition from explicit parts (oracle/test use).
    pub fn from_parts(eigenvalues: Vec<f64>, u: Array2<f64>) -> Self {
        Self { eigenvalues, u }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Array2<f64> {
        &self.u
    }
}

/// Spectral convolution x *_G m = U (U^T x (.) U^T m), columnwise.
pub fn spectral_convolve(
    decomp: &SpectralDecomposition,
    signal: &Array2<f64>,
    kernel_signal: &Array1<f64>,
) -> Result<Array2<f64>> {
    let n = decomp.u.nrows();
    if signal.nrows() != n || kernel_signal.len() != n {
        return Err(Error::DimMismatch(format!(
            "eigenbasis has {} rows, signal {}, kernel {}",
            n,
            signal.nrows(),
            kernel_signal.len()
        )));
    }
    let ut = decomp.u.t();
    let x_hat = ut.dot(signal);
    let m_hat = ut.dot(kernel_signal);
    let mut prod = x_hat;
    for (mut row, &m) in prod.rows_mut().into_iter().zip(m_hat.iter()) {
        row.mapv_inplace(|v| v * m);
    }
    Ok(decomp.u.dot(&prod))
}

/// Reference filter application U diag(p(lambda_i)) U^T x; the independent
/// check for the recurrence-based paths.
pub fn spectral_filter_oracle(
    decomp: &SpectralDecomposition,
    filter: &PolynomialFilter,
    signal: &Array2<f64>,
) -> Result<Array2<f64>> {
    filter.validate()?;
    let n = decomp.u.nrows();
    if signal.nrows() != n {
        return Err(Error::DimMismatch(format!(
            "eigenbasis has {} rows, signal {}",
            n,
            signal.nrows()
        )));
    }
    let mut x_hat = decomp.u.t().dot(signal);
    for (mut row, &lambda) in x_hat.rows_mut().into_iter().zip(decomp.eigenvalues.iter()) {
        let p = filter.eval_scalar(lambda);
        row.mapv_inplace(|v| v * p);
    }
    Ok(decomp.u.dot(&x_hat))
}
