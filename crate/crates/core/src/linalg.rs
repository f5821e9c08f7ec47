//! Gaussian draws in precision form.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

/// Draw from `N(P^-1 b, P^-1)` given the precision `P` and the canonical
/// mean `b`. Returns `None` if `P` is not positive definite.
pub fn sample_canonical<R: Rng + ?Sized>(
    precision: DMatrix<f64>,
    b: &DVector<f64>,
    rng: &mut R,
) -> Option<(DVector<f64>, Cholesky<f64, Dyn>)> {
    let chol = Cholesky::new(precision)?;
    let mean = chol.solve(b);
    let z = DVector::from_fn(b.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    // P = L L', so L' v = z gives v ~ N(0, P^-1).
    let v = chol.l().transpose().solve_upper_triangular(&z)?;
    Some((mean + v, chol))
}

/// Draw from `N(0, P^-1)`.
pub fn sample_zero_mean<R: Rng + ?Sized>(
    precision: DMatrix<f64>,
    rng: &mut R,
) -> Option<DVector<f64>> {
    let n = precision.nrows();
    sample_canonical(precision, &DVector::zeros(n), rng).map(|(x, _)| x)
}

/// `x' A x` for symmetric `A`.
pub fn quad_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += a[(i, j)] * x[i];
        }
        total += col * x[j];
    }
    total
}
