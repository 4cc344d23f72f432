//! Analog phase-shifter layer: connectivity masks and the hybrid
//! factorization `F ~ F_RF F_BB`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SolverSettings;
use crate::em::ModeAssignment;
use crate::error::{Error, Result};
use crate::linalg::{c, is_finite_mat, least_squares, CMat};

/// Dynamic-connected layouts are re-optimized every this many iterations.
pub const DYNAMIC_REASSIGN_PERIOD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Fully,
    Sub,
    Dynamic,
}

/// Binary `N x N_RF` map of which phase shifters exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityMask {
    kind: Connectivity,
    num_elements: usize,
    num_rf: usize,
    /// Row-major `N x N_RF`.
    bits: Vec<bool>,
}

impl ConnectivityMask {
    pub fn new(kind: Connectivity, num_elements: usize, num_rf: usize) -> Result<Self> {
        if num_rf == 0 || num_rf > num_elements {
            return Err(Error::invalid(
                "n_rf",
                format!("need 1 <= N_RF <= N, got N_RF={num_rf}, N={num_elements}"),
            ));
        }
        let mut bits = vec![false; num_elements * num_rf];
        match kind {
            Connectivity::Fully => bits.fill(true),
            Connectivity::Sub => {
                if !num_elements.is_multiple_of(num_rf) {
                    return Err(Error::invalid(
                        "n_rf",
                        format!("sub-connected layout needs N divisible by N_RF, {num_elements} mod {num_rf} != 0"),
                    ));
                }
                let block = num_elements / num_rf;
                for i in 0..num_elements {
                    bits[i * num_rf + i / block] = true;
                }
            }
            Connectivity::Dynamic => {
                // contiguous balanced blocks; equals the sub layout when N_RF divides N
                for i in 0..num_elements {
                    bits[i * num_rf + i * num_rf / num_elements] = true;
                }
            }
        }
        Ok(Self {
            kind,
            num_elements,
            num_rf,
            bits,
        })
    }

    pub fn kind(&self) -> Connectivity {
        self.kind
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn num_rf(&self) -> usize {
        self.num_rf
    }

    pub fn get(&self, element: usize, chain: usize) -> bool {
        self.bits[element * self.num_rf + chain]
    }

    /// Number of phase shifters.
    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.num_elements)
            .map(|i| (0..self.num_rf).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }

    fn connect_only(&mut self, element: usize, chain: usize) {
        for j in 0..self.num_rf {
            self.bits[element * self.num_rf + j] = j == chain;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits.len() != self.num_elements * self.num_rf {
            return Err(Error::Dimension("mask size disagrees with N x N_RF".into()));
        }
        match self.kind {
            Connectivity::Fully => {
                if !self.bits.iter().all(|b| *b) {
                    return Err(Error::invalid(
                        "mask",
                        "fully-connected mask must be all ones",
                    ));
                }
            }
            Connectivity::Sub => {
                if *self != Self::new(Connectivity::Sub, self.num_elements, self.num_rf)? {
                    return Err(Error::invalid(
                        "mask",
                        "sub-connected mask must be block diagonal",
                    ));
                }
            }
            Connectivity::Dynamic => {
                for i in 0..self.num_elements {
                    let ones = (0..self.num_rf).filter(|&j| self.get(i, j)).count();
                    if ones != 1 {
                        return Err(Error::invalid(
                            "mask",
                            format!("element {i} has {ones} connections, expected 1"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn connectivity_mask(
    kind: Connectivity,
    num_elements: usize,
    num_rf: usize,
) -> Result<ConnectivityMask> {
    ConnectivityMask::new(kind, num_elements, num_rf)
}

#[derive(Debug, Clone)]
pub struct HybridFactorization {
    pub f_rf: CMat,
    pub f_bb: CMat,
    /// Final mask; differs from the input only for dynamic connectivity.
    pub mask: ConnectivityMask,
    /// `||F_target - F_RF F_BB||_F` of the converged fit, before the final
    /// power rescaling.
    pub residual: f64,
    pub trace: Vec<f64>,
}

fn dft_init(mask: &ConnectivityMask) -> CMat {
    let n = mask.num_elements();
    CMat::from_fn(n, mask.num_rf(), |i, j| {
        if mask.get(i, j) {
            Complex64::from_polar(1.0, -2.0 * PI * (i * j) as f64 / n as f64)
        } else {
            c(0.0)
        }
    })
}

fn unit_phase(z: Complex64) -> Option<Complex64> {
    let r = z.norm();
    (r > 0.0 && r.is_finite()).then(|| z / r)
}

/// Exact per-entry phase updates (Gauss-Seidel over each element's
/// connections). With a single connection this is the phase of
/// `(F_target F_BB^H)[i, j]`.
fn update_phases(target: &CMat, f_rf: &mut CMat, f_bb: &CMat, mask: &ConnectivityMask) {
    let k = target.ncols();
    for i in 0..mask.num_elements() {
        let mut err: Vec<Complex64> = (0..k)
            .map(|col| {
                target[(i, col)]
                    - (0..mask.num_rf())
                        .map(|j| f_rf[(i, j)] * f_bb[(j, col)])
                        .sum::<Complex64>()
            })
            .collect();
        for j in 0..mask.num_rf() {
            if !mask.get(i, j) {
                continue;
            }
            for col in 0..k {
                err[col] += f_rf[(i, j)] * f_bb[(j, col)];
            }
            let corr: Complex64 = (0..k).map(|col| err[col] * f_bb[(j, col)].conj()).sum();
            if let Some(x) = unit_phase(corr) {
                f_rf[(i, j)] = x;
            }
            for col in 0..k {
                err[col] -= f_rf[(i, j)] * f_bb[(j, col)];
            }
        }
    }
}

/// Moves each element to the RF chain that best fits its target row,
/// `argmin_j min_phi ||t_i - e^{i phi} b_j||`.
fn reassign(target: &CMat, f_rf: &mut CMat, f_bb: &CMat, mask: &mut ConnectivityMask) {
    let k = target.ncols();
    for i in 0..mask.num_elements() {
        let t_norm: f64 = (0..k).map(|col| target[(i, col)].norm_sqr()).sum();
        let mut best: Option<(f64, usize, Complex64)> = None;
        for j in 0..mask.num_rf() {
            let corr: Complex64 = (0..k)
                .map(|col| target[(i, col)] * f_bb[(j, col)].conj())
                .sum();
            let b_norm: f64 = (0..k).map(|col| f_bb[(j, col)].norm_sqr()).sum();
            let cost = t_norm + b_norm - 2.0 * corr.norm();
            if best.is_none_or(|(bc, _, _)| cost < bc) {
                best = Some((cost, j, unit_phase(corr).unwrap_or(c(1.0))));
            }
        }
        let (_, chain, phase) = best.expect("at least one chain");
        // keep the current connection unless another one is strictly better
        let current = (0..mask.num_rf())
            .find(|&j| mask.get(i, j))
            .unwrap_or(chain);
        let cur_err: f64 = (0..k)
            .map(|col| (target[(i, col)] - f_rf[(i, current)] * f_bb[(current, col)]).norm_sqr())
            .sum();
        let new_err: f64 = (0..k)
            .map(|col| (target[(i, col)] - phase * f_bb[(chain, col)]).norm_sqr())
            .sum();
        if new_err < cur_err {
            mask.connect_only(i, chain);
            for j in 0..mask.num_rf() {
                f_rf[(i, j)] = if j == chain { phase } else { c(0.0) };
            }
        }
    }
}

/// Alternating least-squares / phase-projection fit of `target` (`N x K`)
/// by `F_RF F_BB`, with `F_RF` unit-modulus on the mask. The result is scaled
/// to `||F_RF F_BB||_F^2 = power`.
pub fn hybrid_factorize(
    target: &CMat,
    mask: &ConnectivityMask,
    power: f64,
    settings: &SolverSettings,
) -> Result<HybridFactorization> {
    mask.validate()?;
    if target.nrows() != mask.num_elements() {
        return Err(Error::Dimension(format!(
            "target has {} rows, mask has {} elements",
            target.nrows(),
            mask.num_elements()
        )));
    }
    if !is_finite_mat(target) {
        return Err(Error::NonFinite("factorization target"));
    }
    if !(power > 0.0) {
        return Err(Error::invalid("power", "must be > 0"));
    }
    let mut mask = mask.clone();
    let mut f_rf = dft_init(&mask);
    let target_norm = target.norm();
    if target_norm == 0.0 {
        return Ok(HybridFactorization {
            f_bb: CMat::zeros(mask.num_rf(), target.ncols()),
            f_rf,
            mask,
            residual: 0.0,
            trace: vec![0.0],
        });
    }

    let mut f_bb = least_squares(&f_rf, target)?;
    let mut residual = (target - &f_rf * &f_bb).norm();
    let mut trace = vec![residual];
    for iter in 1..=settings.max_iters {
        if mask.kind() == Connectivity::Dynamic && iter % DYNAMIC_REASSIGN_PERIOD == 0 {
            reassign(target, &mut f_rf, &f_bb, &mut mask);
        }
        update_phases(target, &mut f_rf, &f_bb, &mask);
        f_bb = least_squares(&f_rf, target)?;
        let next = (target - &f_rf * &f_bb).norm();
        let delta = residual - next;
        residual = next;
        trace.push(residual);
        if residual <= 1e-14 * target_norm {
            break;
        }
        let periodic = mask.kind() == Connectivity::Dynamic && iter < DYNAMIC_REASSIGN_PERIOD * 4;
        if delta.abs() <= settings.tol * target_norm && !periodic {
            break;
        }
    }
    let achieved = (&f_rf * &f_bb).norm_squared();
    if achieved > 0.0 {
        f_bb *= c((power / achieved).sqrt());
    }
    Ok(HybridFactorization {
        f_rf,
        f_bb,
        mask,
        residual,
        trace,
    })
}

/// Mode assignment plus analog and digital precoders.
#[derive(Debug, Clone)]
pub struct BeamformingStack {
    pub modes: ModeAssignment,
    pub f_rf: CMat,
    pub f_bb: CMat,
    pub mask: Option<ConnectivityMask>,
    pub power_budget: f64,
}

impl BeamformingStack {
    /// Fully-digital stack: identity analog layer.
    pub fn fully_digital(modes: ModeAssignment, precoder: CMat, power_budget: f64) -> Self {
        let n = precoder.nrows();
        Self {
            modes,
            f_rf: CMat::identity(n, n),
            f_bb: precoder,
            mask: None,
            power_budget,
        }
    }

    pub fn effective_precoder(&self) -> CMat {
        &self.f_rf * &self.f_bb
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.effective_precoder().norm_squared();
        if p > self.power_budget + 1e-9 {
            return Err(Error::invalid(
                "power",
                format!("stack radiates {p}, budget {}", self.power_budget),
            ));
        }
        if let Some(mask) = &self.mask {
            mask.validate()?;
            if self.f_rf.shape() != (mask.num_elements(), mask.num_rf()) {
                return Err(Error::Dimension("F_RF shape disagrees with mask".into()));
            }
            for i in 0..mask.num_elements() {
                for j in 0..mask.num_rf() {
                    let v = self.f_rf[(i, j)];
                    let ok = if mask.get(i, j) {
                        (v.norm() - 1.0).abs() < 1e-12
                    } else {
                        v == c(0.0)
                    };
                    if !ok {
                        return Err(Error::invalid(
                            "f_rf",
                            format!("entry ({i},{j}) violates the mask"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
