//! Deterministic loss functions with analytic gradients for the simulators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A differentiable objective driven by a stream of example ids.
pub trait SimProblem {
    fn dim(&self) -> usize;

    /// Loss of example `example` at `theta`; writes the gradient into `grad`.
    fn loss_grad(&self, theta: &[f64], example: u64, grad: &mut [f64]) -> f64;

    /// Example used at (1-based) `step`.
    fn example_at(&self, _step: u64) -> u64 {
        0
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

/// Constant loss.
#[derive(Clone, Debug)]
pub struct ZeroGradient {
    pub dim: usize,
}

impl SimProblem for ZeroGradient {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss_grad(&self, _theta: &[f64], _example: u64, grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        0.0
    }
}

/// `loss_e(theta) = 0.5 * (theta - c_e)^T A (theta - c_e)` with a symmetric
/// matrix `A` and one center per example. Examples cycle through the stream.
#[derive(Clone, Debug)]
pub struct Quadratic {
    dim: usize,
    /// Row-major `dim x dim`.
    matrix: Vec<f64>,
    centers: Vec<Vec<f64>>,
}

impl Quadratic {
    pub fn new(matrix: Vec<f64>, centers: Vec<Vec<f64>>) -> Self {
        let dim = centers.first().map(Vec::len).unwrap_or(0);
        assert_eq!(matrix.len(), dim * dim, "matrix must be dim x dim");
        assert!(centers.iter().all(|c| c.len() == dim), "center dimension mismatch");
        Quadratic { dim, matrix, centers }
    }

    /// `0.5 * scale * |theta|^2` around the origin.
    pub fn isotropic(dim: usize, scale: f64) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = scale;
        }
        Quadratic::new(matrix, vec![vec![0.0; dim]])
    }

    /// Random positive-definite `A = B^T B / dim + min_eig * I` and
    /// `n_examples` Gaussian centers.
    pub fn random(dim: usize, n_examples: usize, min_eig: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..dim * dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let dot: f64 = (0..dim).map(|k| b[k * dim + i] * b[k * dim + j]).sum();
                matrix[i * dim + j] = dot / dim as f64 + if i == j { min_eig } else { 0.0 };
            }
        }
        let centers = (0..n_examples.max(1))
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Quadratic::new(matrix, centers)
    }

    pub fn n_examples(&self) -> usize {
        self.centers.len()
    }
}

impl SimProblem for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss_grad(&self, theta: &[f64], example: u64, grad: &mut [f64]) -> f64 {
        let c = &self.centers[example as usize % self.centers.len()];
        let d = self.dim;
        let mut loss = 0.0;
        for i in 0..d {
            let row = &self.matrix[i * d..(i + 1) * d];
            let g: f64 = row.iter().zip(theta.iter().zip(c)).map(|(a, (t, ci))| a * (t - ci)).sum();
            grad[i] = g;
            loss += 0.5 * (theta[i] - c[i]) * g;
        }
        loss
    }

    fn example_at(&self, step: u64) -> u64 {
        (step - 1) % self.centers.len() as u64
    }
}

/// Largest relative mismatch between analytic gradients and central finite
/// differences over `points` random points. Relative to `max(|g|, 1)`.
pub fn gradient_check<P: SimProblem + ?Sized>(problem: &P, points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = problem.dim();
    let mut grad = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut worst = 0.0f64;
    for p in 0..points {
        let example = p as u64;
        let mut theta: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        problem.loss_grad(&theta, example, &mut grad);
        for i in 0..d {
            let h = 1e-5 * theta[i].abs().max(1.0);
            let orig = theta[i];
            theta[i] = orig + h;
            let up = problem.loss_grad(&theta, example, &mut scratch);
            theta[i] = orig - h;
            let down = problem.loss_grad(&theta, example, &mut scratch);
            theta[i] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / grad[i].abs().max(1.0));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradients_match_finite_differences() {
        let q = Quadratic::random(12, 5, 0.1, 3);
        assert!(gradient_check(&q, 100, 9) < 1e-5);
    }

    #[test]
    fn isotropic_loss() {
        let q = Quadratic::isotropic(1, 1.0);
        let mut g = [0.0];
        let l = q.loss_grad(&[2.0], 0, &mut g);
        assert_eq!(l, 2.0);
        assert_eq!(g[0], 2.0);
    }
}
