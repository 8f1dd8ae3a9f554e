//! Deterministic quadrature helpers: trapezoid time grids and
//! Gauss-Hermite rules for Gaussian coordinate integrals.

use nalgebra::DMatrix;

use crate::error::{OulabError, Result};

/// Uniform grid of `nodes` points on [a, b].
pub fn uniform_grid(a: f64, b: f64, nodes: usize) -> Vec<f64> {
    assert!(nodes >= 2);
    let h = (b - a) / (nodes - 1) as f64;
    (0..nodes).map(|i| a + h * i as f64).collect()
}

/// Logarithmically spaced grid of `nodes` points on [a, b], a, b > 0.
pub fn log_grid(a: f64, b: f64, nodes: usize) -> Vec<f64> {
    assert!(nodes >= 2 && a > 0.0 && b > 0.0);
    let (la, lb) = (a.ln(), b.ln());
    let h = (lb - la) / (nodes - 1) as f64;
    (0..nodes).map(|i| (la + h * i as f64).exp()).collect()
}

/// Trapezoid rule over an arbitrary sorted grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(OulabError::EmptyTimeGrid);
    }
    if grid.len() != values.len() {
        return Err(OulabError::Shape { expected: grid.len(), got: values.len() });
    }
    if grid.len() == 1 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for i in 1..grid.len() {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
    }
    Ok(acc)
}

/// Trapezoid weights for a sorted grid, so that sum(w_i f_i) is the rule.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = grid[i] - grid[i - 1];
        w[i - 1] += 0.5 * h;
        w[i] += 0.5 * h;
    }
    w
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for the standard
/// normal weight, i.e. sum(w_i f(z_i)) ~ E[f(Z)], Z ~ N(0,1).
///
/// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite
/// polynomials (zero diagonal, off-diagonal sqrt(k)).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let nodes = pairs.iter().map(|p| p.0).collect();
    let weights = pairs.iter().map(|p| p.1).collect();
    (nodes, weights)
}

/// Quadrature method for Gaussian expectations over the sample coordinate.
#[derive(Debug, Clone)]
pub enum QuadratureSpec {
    /// Plain Monte Carlo with `m` draws from N_Q, seeded.
    MonteCarlo { m: usize, seed: u64 },
    /// Tensor-product Gauss-Hermite over the first `retained_modes`
    /// coordinates; integrands must be based on those coordinates.
    GaussHermite { nodes_per_mode: usize, retained_modes: usize },
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            QuadratureSpec::MonteCarlo { m, .. } => {
                if *m == 0 {
                    return Err(OulabError::EmptyBatch);
                }
            }
            QuadratureSpec::GaussHermite { nodes_per_mode, retained_modes } => {
                // Tensor grid budget.
                if *retained_modes > 6 || *nodes_per_mode > 20 || *nodes_per_mode == 0 {
                    return Err(OulabError::Config(format!(
                        "gauss-hermite limited to <= 6 retained modes with <= 20 nodes per mode, \
                         got {retained_modes} modes x {nodes_per_mode} nodes"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Tensor-product Gauss-Hermite grid over `dims` standard-normal coordinates.
/// Returns (points, weights) with points stored row-major dims-at-a-time.
pub fn gauss_hermite_tensor(nodes_per_mode: usize, dims: usize) -> (Vec<f64>, Vec<f64>) {
    let (z, w) = gauss_hermite(nodes_per_mode);
    if dims == 0 {
        return (vec![], vec![1.0]);
    }
    let total = nodes_per_mode.pow(dims as u32);
    let mut points = Vec::with_capacity(total * dims);
    let mut weights = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rest = idx;
        let mut weight = 1.0;
        for _ in 0..dims {
            let i = rest % nodes_per_mode;
            rest /= nodes_per_mode;
            points.push(z[i]);
            weight *= w[i];
        }
        weights.push(weight);
    }
    (points, weights)
}
