//! Hessian-vector products for the softmax objective, power-method spectral
//! norms, conjugate-gradient solves, dense assembly for small-scale oracles
//! and a Newton solver used as an exact-retraining reference.

mod cg;
mod dense;
mod hvp;
mod newton;
mod power;

pub use cg::{cg_solve, CgResult};
pub use dense::{dense_hessian, DenseMatrix, DenseTarget, MAX_DENSE_DIM};
pub use hvp::{loss_hvp, DiagonalOperator, HvpOperator, HvpSource, LinearOperator};
pub use newton::newton_fit;
pub use power::{hessian_norm_power, power_iteration, PowerResult};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub cg_damping: f64,
    pub power_tol: f64,
    pub power_max_iter: usize,
    pub power_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cg_tol: 1e-8,
            cg_max_iter: 200,
            cg_damping: 0.0,
            power_tol: 1e-7,
            power_max_iter: 1000,
            power_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if !(self.cg_tol > 0.0 && self.power_tol > 0.0) || self.cg_damping < 0.0 {
            return Err(crate::error::ChefError::Argument(
                "solver tolerances must be positive and damping non-negative".into(),
            ));
        }
        Ok(())
    }
}
