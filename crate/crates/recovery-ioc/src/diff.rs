//! Central finite differences, used as the oracle against analytic
//! Jacobians and to form second-order terms in the Newton KKT solver.

use nalgebra::{DMatrix, DVector};

/// Step size scaled to the magnitude of the perturbed coordinate.
pub fn fd_step(coord: f64) -> f64 {
    1e-6 * (1.0 + coord.abs())
}

/// Central-difference Jacobian of `f: R^d -> R^p` at `z`.
pub fn central_jacobian<F>(f: F, z: &DVector<f64>, out_dim: usize) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let d = z.len();
    let mut jac = DMatrix::zeros(out_dim, d);
    for j in 0..d {
        let h = fd_step(z[j]);
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[j] += h;
        zm[j] -= h;
        let df = (f(&zp) - f(&zm)) / (2.0 * h);
        jac.set_column(j, &df);
    }
    jac
}

/// Central-difference gradient of a scalar function.
pub fn central_gradient<F>(f: F, z: &DVector<f64>) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let d = z.len();
    let mut g = DVector::zeros(d);
    for j in 0..d {
        let h = fd_step(z[j]);
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[j] += h;
        zm[j] -= h;
        g[j] = (f(&zp) - f(&zm)) / (2.0 * h);
    }
    g
}

/// Largest entrywise relative deviation between two matrices, measured
/// against the scale of `reference`.
pub fn relative_error(candidate: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.amax().max(1e-12);
    (candidate - reference).amax() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_of_linear_map_is_exact() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, -1.0, 0.5, 0.0, 4.0]);
        let f = |z: &DVector<f64>| &a * z;
        let z = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let jac = central_jacobian(f, &z, 2);
        assert!(relative_error(&jac, &a) < 1e-9);
    }

    #[test]
    fn gradient_of_quadratic() {
        let f = |z: &DVector<f64>| z[0] * z[0] + 3.0 * z[1];
        let z = DVector::from_vec(vec![2.0, -1.0]);
        let g = central_gradient(f, &z);
        assert!((g[0] - 4.0).abs() < 1e-7);
        assert!((g[1] - 3.0).abs() < 1e-7);
    }
}
