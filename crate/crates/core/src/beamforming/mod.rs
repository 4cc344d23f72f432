//! Digital, analog and tri-hybrid beamformers.

pub mod comm;
pub mod hybrid;
pub mod power;
pub mod radar;

use serde::{Deserialize, Serialize};

pub use comm::{sum_rate, wmmse_precoder, WmmseSolution};
pub use hybrid::{
    connectivity_mask, hybrid_factorize, BeamformingStack, Connectivity, ConnectivityMask,
    HybridFactorization,
};
pub use power::{power_consumption, PowerModel};
pub use radar::{mvdr_receive_filter, scnr, scnr_transmit_beamformer, ScnrSolution, SensingModel};

use crate::error::{Error, Result};

/// Iteration cap and stopping tolerance shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-9,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("solver.max_iters", "must be >= 1"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(
                "solver.tol",
                format!("must be > 0, got {}", self.tol),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    FullyDigital,
    TriHybrid {
        n_rf: usize,
        connectivity: Connectivity,
    },
}

impl Architecture {
    pub fn mask(&self, num_elements: usize) -> Result<Option<ConnectivityMask>> {
        match *self {
            Architecture::FullyDigital => Ok(None),
            Architecture::TriHybrid { n_rf, connectivity } => {
                connectivity_mask(connectivity, num_elements, n_rf).map(Some)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Architecture::FullyDigital => "fully_digital".into(),
            Architecture::TriHybrid { n_rf, connectivity } => {
                format!(
                    "tri_hybrid_{}_{n_rf}",
                    serde_json::to_value(connectivity)
                        .unwrap()
                        .as_str()
                        .unwrap()
                )
            }
        }
    }
}
