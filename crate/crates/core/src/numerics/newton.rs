use super::hvp::HvpOperator;
use super::{cg_solve, SolverConfig};
use crate::dataio::Dataset;
use crate::error::{ChefError, Result};
use crate::linalg::{dot, norm};
use crate::model::{objective, objective_grad, ModelParams};

/// Minimizes the training objective by Newton-CG with backtracking, starting
/// from `init` (or zeros). Converges quadratically near the optimum, so it
/// serves as the "exact retraining" reference.
pub fn newton_fit(
    dataset: &Dataset,
    gamma: f64,
    lambda: f64,
    init: Option<&ModelParams>,
    grad_tol: f64,
) -> Result<ModelParams> {
    let mut params = match init {
        Some(p) => p.clone(),
        None => ModelParams::for_dataset(dataset, lambda),
    };
    let solver = SolverConfig {
        cg_tol: 1e-12,
        cg_max_iter: 10 * params.len().max(50),
        ..SolverConfig::default()
    };
    let mut f = objective(&params, dataset, gamma);
    for _ in 0..100 {
        let g = objective_grad(&params, dataset, gamma);
        if norm(&g) <= grad_tol {
            return Ok(params);
        }
        let step = {
            let op = HvpOperator::objective(&params, dataset, gamma);
            cg_solve(&op, &g, &solver)?.solution
        };
        let slope = -dot(&g, &step);
        let mut t = 1.0;
        loop {
            let w: Vec<f64> = params.weights.iter().zip(&step).map(|(w, s)| w - t * s).collect();
            let cand = ModelParams::from_weights(w, params.num_classes, params.dim, lambda)?;
            let fc = objective(&cand, dataset, gamma);
            // near the optimum the objective stops resolving the decrease, so
            // a full step that shrinks the gradient is accepted as well
            let accept = fc <= f + 1e-4 * t * slope
                || t < 1e-10
                || (t == 1.0 && norm(&objective_grad(&cand, dataset, gamma)) < norm(&g));
            if accept {
                params = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
    }
    let g = objective_grad(&params, dataset, gamma);
    if norm(&g) <= grad_tol * 1e3 {
        Ok(params)
    } else {
        Err(ChefError::Numerical(format!(
            "Newton solve stalled at gradient norm {:e}",
            norm(&g)
        )))
    }
}
