use rand::Rng;
use rand_distr::StandardNormal;

use super::hvp::LinearOperator;
use super::SolverConfig;
use crate::linalg::{dot, norm};
use crate::rng::{rng_from_seed, derive_seed, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct PowerResult {
    /// Rayleigh quotient at the final iterate.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Rayleigh quotient after every iteration.
    pub history: Vec<f64>,
}

fn random_unit(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm(&g);
    g.iter_mut().for_each(|v| *v /= n);
    g
}

/// Power iteration `g <- Hg / |Hg|` from a seeded random start, stopping
/// when the (sign-aligned) iterate moves less than `power_tol`.
pub fn power_iteration<O: LinearOperator + ?Sized>(op: &O, config: &SolverConfig) -> PowerResult {
    let dim = op.dim();
    let mut restarts = 0u64;
    let mut g = random_unit(dim, derive_seed(config.power_seed, Stream::PowerStart, restarts));
    let mut history = Vec::new();
    let mut hg = op.apply(&g);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.power_max_iter {
        let n = norm(&hg);
        if n == 0.0 {
            restarts += 1;
            if restarts >= 2 {
                return PowerResult {
                    value: 0.0,
                    iterations,
                    converged: true,
                    history,
                };
            }
            g = random_unit(dim, derive_seed(config.power_seed, Stream::PowerStart, restarts));
            hg = op.apply(&g);
            continue;
        }
        let mut next: Vec<f64> = hg.iter().map(|v| v / n).collect();
        if dot(&next, &g) < 0.0 {
            next.iter_mut().for_each(|v| *v = -*v);
        }
        let step: f64 = next.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        g = next;
        hg = op.apply(&g);
        history.push(dot(&g, &hg) / dot(&g, &g));
        iterations += 1;
        if step < config.power_tol {
            converged = true;
            break;
        }
    }
    let value = dot(&g, &hg) / dot(&g, &g);
    PowerResult {
        value,
        iterations,
        converged,
        history,
    }
}

/// Largest eigenvalue of a symmetric PSD operator, which is its spectral norm.
pub fn hessian_norm_power<O: LinearOperator + ?Sized>(op: &O, config: &SolverConfig) -> f64 {
    power_iteration(op, config).value
}
