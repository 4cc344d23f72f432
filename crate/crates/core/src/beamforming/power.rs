//! Static hardware power model.

use serde::{Deserialize, Serialize};

use super::hybrid::ConnectivityMask;
use crate::error::{Error, Result};

/// Per-component consumption in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerModel {
    pub rf_chain: f64,
    pub phase_shifter: f64,
    pub ra_switch: f64,
    pub static_power: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            rf_chain: 0.25,
            phase_shifter: 0.03,
            ra_switch: 0.005,
            static_power: 0.5,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("power_model.rf_chain", self.rf_chain),
            ("power_model.phase_shifter", self.phase_shifter),
            ("power_model.ra_switch", self.ra_switch),
            ("power_model.static_power", self.static_power),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        Ok(())
    }

    /// One RF chain and one mode switch per element.
    pub fn fully_digital(&self, num_elements: usize) -> f64 {
        self.static_power + num_elements as f64 * (self.rf_chain + self.ra_switch)
    }

    pub fn tri_hybrid(&self, mask: &ConnectivityMask) -> f64 {
        self.static_power
            + mask.num_rf() as f64 * self.rf_chain
            + mask.count_ones() as f64 * self.phase_shifter
            + mask.num_elements() as f64 * self.ra_switch
    }
}

/// Consumption of `arch` on an `N`-element array; `mask` is required for the
/// tri-hybrid layout and ignored otherwise.
pub fn power_consumption(
    model: &PowerModel,
    num_elements: usize,
    mask: Option<&ConnectivityMask>,
) -> f64 {
    match mask {
        None => model.fully_digital(num_elements),
        Some(m) => model.tri_hybrid(m),
    }
}
