use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

/// Eigenvalues from the complex Schur form.
pub fn eigenvalues(m: &CMat) -> Vec<Complex64> {
    let schur = [1e-14, 1e-12, 1e-10]
        .iter()
        .find_map(|&eps| nalgebra::Schur::try_new(m.clone(), eps, 10_000))
        .expect("Schur iteration failed to converge");
    let (_, t) = schur.unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

pub fn max_real_eigenvalue(m: &CMat) -> Complex64 {
    eigenvalues(m)
        .into_iter()
        .fold(Complex64::new(f64::NEG_INFINITY, 0.0), |acc, z| if z.re > acc.re { z } else { acc })
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
