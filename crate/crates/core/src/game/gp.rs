//! Log-Gaussian-process resource maps.

use super::GameError;
use crate::rng;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

/// Row-major `J x J` grid.
pub type Grid = Vec<Vec<f64>>;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-2;

/// Symmetric square root `V diag(sqrt(lambda)) V^T` of a covariance matrix,
/// adding diagonal jitter until no eigenvalue is meaningfully negative.
fn symmetric_sqrt(k: &DMatrix<f64>) -> Result<DMatrix<f64>, GameError> {
    let scale = k.diagonal().max().max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    loop {
        let mut a = k.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter * scale;
        }
        let eig = SymmetricEigen::new(a);
        let min = eig.eigenvalues.min();
        if eig.eigenvalues.iter().all(|v| v.is_finite()) && min >= -1e-12 * scale {
            let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            let v = &eig.eigenvectors;
            return Ok(v * DMatrix::from_diagonal(&roots) * v.transpose());
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX {
            return Err(GameError::NumericalFailure(format!(
                "covariance not positive semidefinite (min eigenvalue {min})"
            )));
        }
    }
}

/// Two independent log-GP draws over a `J x J` grid with a squared-exponential
/// kernel `sigma^2 exp(-d^2 / (2 l^2))`.
pub fn sample_gp_maps(
    j: usize,
    length_scale: f64,
    sigma: f64,
    seed: u64,
) -> Result<(Grid, Grid), GameError> {
    if j == 0 || !(length_scale > 0.0) || !(sigma > 0.0) {
        return Err(GameError::BadParameter(format!(
            "need J >= 1, length scale > 0, sigma > 0 (got {j}, {length_scale}, {sigma})"
        )));
    }
    let n = j * j;
    let coords: Vec<(f64, f64)> = (0..n).map(|i| ((i / j) as f64, (i % j) as f64)).collect();
    let k = DMatrix::from_fn(n, n, |a, b| {
        let dx = coords[a].0 - coords[b].0;
        let dy = coords[a].1 - coords[b].1;
        sigma * sigma * (-(dx * dx + dy * dy) / (2.0 * length_scale * length_scale)).exp()
    });
    let root = symmetric_sqrt(&k)?;
    let mut r = rng::stream(seed, rng::streams::GP_MAPS);
    let mut draw = || -> Grid {
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
        let field = &root * z;
        (0..j)
            .map(|row| (0..j).map(|col| field[row * j + col].exp()).collect())
            .collect()
    };
    let a = draw();
    let b = draw();
    Ok((a, b))
}
