use super::hvp::LinearOperator;
use super::SolverConfig;
use crate::error::{ChefError, Result};
use crate::linalg::{all_finite, axpy, dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// `|(H + damping I) x - g| / |g|`
    pub residual_ratio: f64,
    pub converged: bool,
}

/// Solves `(H + damping I) x = g` by conjugate gradients from `x = 0`.
pub fn cg_solve<O: LinearOperator + ?Sized>(op: &O, g: &[f64], config: &SolverConfig) -> Result<CgResult> {
    let n = g.len();
    let g_norm = norm(g);
    if g_norm == 0.0 {
        return Ok(CgResult {
            solution: vec![0.0; n],
            iterations: 0,
            residual_ratio: 0.0,
            converged: true,
        });
    }
    let apply = |v: &[f64]| {
        let mut out = op.apply(v);
        if config.cg_damping != 0.0 {
            axpy(config.cg_damping, v, &mut out);
        }
        out
    };
    let mut x = vec![0.0; n];
    let mut r = g.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < config.cg_max_iter && rr.sqrt() / g_norm > config.cg_tol {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            if pap.is_finite() {
                // operator is not positive definite along p; stop here
                break;
            }
            return Err(ChefError::Numerical(format!("non-finite curvature at CG iteration {iterations}")));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
        iterations += 1;
        if !all_finite(&x) {
            return Err(ChefError::Numerical(format!("non-finite CG iterate at iteration {iterations}")));
        }
    }
    // true residual rather than the recurrence
    let hx = apply(&x);
    let residual: Vec<f64> = g.iter().zip(&hx).map(|(a, b)| a - b).collect();
    let residual_ratio = norm(&residual) / g_norm;
    Ok(CgResult {
        solution: x,
        iterations,
        residual_ratio,
        converged: residual_ratio <= config.cg_tol.max(rr.sqrt() / g_norm),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DiagonalOperator;

    #[test]
    fn identity_returns_rhs() {
        let op = DiagonalOperator(vec![1.0; 5]);
        let g = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        let r = cg_solve(&op, &g, &SolverConfig::default()).unwrap();
        assert_eq!(r.solution, g);
        assert!(r.converged);
    }

    #[test]
    fn zero_rhs_is_free() {
        let op = DiagonalOperator(vec![2.0; 3]);
        let r = cg_solve(&op, &[0.0; 3], &SolverConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.solution, vec![0.0; 3]);
    }

    #[test]
    fn distinct_eigenvalues_converge_in_dim_steps() {
        let eig: Vec<f64> = (1..=12).map(|i| i as f64).collect();
        let op = DiagonalOperator(eig.clone());
        let g: Vec<f64> = (0..12).map(|i| 1.0 + i as f64 * 0.1).collect();
        let cfg = SolverConfig {
            cg_tol: 1e-10,
            ..SolverConfig::default()
        };
        let r = cg_solve(&op, &g, &cfg).unwrap();
        assert!(r.iterations <= 12, "{}", r.iterations);
        assert!(r.residual_ratio <= 1e-10);
    }

    #[test]
    fn damping_shifts_the_system() {
        let op = DiagonalOperator(vec![1.0, 3.0]);
        let cfg = SolverConfig {
            cg_damping: 1.0,
            ..SolverConfig::default()
        };
        let r = cg_solve(&op, &[2.0, 4.0], &cfg).unwrap();
        assert!((r.solution[0] - 1.0).abs() < 1e-10);
        assert!((r.solution[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let op = DiagonalOperator(vec![1.0, f64::NAN]);
        assert!(cg_solve(&op, &[1.0, 1.0], &SolverConfig::default()).is_err());
    }
}
