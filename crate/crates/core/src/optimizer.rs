//! Discrete EM-mode search wrapped around the continuous beamformers.
//!
//! Every candidate mode assignment is scored by synthesizing its channels and
//! running the matching continuous solver to convergence. Candidates are only
//! accepted on strict improvement, so traces never decrease.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::beamforming::{
    hybrid_factorize, mvdr_receive_filter, power_consumption, scnr, scnr_transmit_beamformer,
    sum_rate, wmmse_precoder, Architecture, BeamformingStack, PowerModel, SensingModel,
    SolverSettings,
};
use crate::em::{ModeAssignment, ModeScope};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::scenario::Scenario;

/// Largest search space [`exhaustive_mode_search`] will enumerate.
pub const EXHAUSTIVE_GUARD: u128 = 100_000;

/// Relative margin a candidate must clear to replace the incumbent.
const IMPROVEMENT_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    CommSumRate,
    RadarScnr,
}

impl ObjectiveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectiveKind::CommSumRate => "comm_sum_rate",
            ObjectiveKind::RadarScnr => "radar_scnr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub kind: ObjectiveKind,
    /// Transmit power budget, watts.
    pub power: f64,
    /// Receiver noise power, watts.
    pub noise: f64,
    pub settings: SolverSettings,
}

impl Objective {
    pub fn new(kind: ObjectiveKind, power: f64, noise: f64) -> Self {
        Self {
            kind,
            power,
            noise,
            settings: SolverSettings::default(),
        }
    }

    /// Objective using the scenario's own power budget and noise.
    pub fn for_scenario(kind: ObjectiveKind, scenario: &Scenario) -> Self {
        Self::new(kind, scenario.power, scenario.noise)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::invalid("power", "must be > 0"));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise", "must be > 0"));
        }
        self.settings.validate()
    }
}

/// Converged continuous solution for one mode assignment.
#[derive(Debug, Clone)]
pub enum Beamformer {
    /// `N x K` precoder.
    Comm(CMat),
    /// Transmit beamformer and MVDR receive filter.
    Radar { f: CVec, w: CVec },
}

impl Beamformer {
    /// Transmit side as an `N x streams` matrix.
    pub fn precoder(&self) -> CMat {
        match self {
            Beamformer::Comm(f) => f.clone(),
            Beamformer::Radar { f, .. } => CMat::from_column_slice(f.len(), 1, f.as_slice()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub beamformer: Beamformer,
    pub iterations: usize,
}

/// Objective value of `modes` from a cold start. Deterministic in
/// `(scenario, modes)`.
pub fn evaluate(objective: &Objective, scenario: &Scenario, modes: &ModeAssignment) -> Result<f64> {
    evaluate_from(objective, scenario, modes, None).map(|e| e.value)
}

/// Like [`evaluate`], starting the continuous solver from `warm`.
pub fn evaluate_from(
    objective: &Objective,
    scenario: &Scenario,
    modes: &ModeAssignment,
    warm: Option<&Beamformer>,
) -> Result<Evaluation> {
    match objective.kind {
        ObjectiveKind::CommSumRate => {
            let h = scenario.comm_channel(modes)?;
            let warm = match warm {
                Some(Beamformer::Comm(f)) => Some(f),
                _ => None,
            };
            let sol = wmmse_precoder(
                &h,
                objective.power,
                objective.noise,
                &objective.settings,
                warm,
            )?;
            Ok(Evaluation {
                value: sol.rate,
                beamformer: Beamformer::Comm(sol.precoder),
                iterations: sol.iterations,
            })
        }
        ObjectiveKind::RadarScnr => {
            let (h_t, h_c) = scenario.sensing_channels(modes)?;
            let refl: Vec<f64> = scenario.clutter.iter().map(|c| c.reflectivity).collect();
            let model = SensingModel {
                h_target: &h_t,
                target_reflectivity: scenario.target.reflectivity,
                h_clutter: &h_c,
                clutter_reflectivity: &refl,
                noise: objective.noise,
            };
            let warm = match warm {
                Some(Beamformer::Radar { f, .. }) => Some(f),
                _ => None,
            };
            let sol = scnr_transmit_beamformer(&model, objective.power, &objective.settings, warm)?;
            Ok(Evaluation {
                value: sol.scnr,
                beamformer: Beamformer::Radar { f: sol.f, w: sol.w },
                iterations: sol.iterations,
            })
        }
    }
}

/// Objective achieved by an explicit transmit precoder (no re-optimization of
/// the transmit side; the radar receive filter is the MVDR filter).
pub fn evaluate_precoder(
    objective: &Objective,
    scenario: &Scenario,
    modes: &ModeAssignment,
    precoder: &CMat,
) -> Result<f64> {
    match objective.kind {
        ObjectiveKind::CommSumRate => {
            sum_rate(&scenario.comm_channel(modes)?, precoder, objective.noise)
        }
        ObjectiveKind::RadarScnr => {
            if precoder.ncols() != 1 {
                return Err(Error::Dimension(
                    "radar precoder must have one column".into(),
                ));
            }
            let f: CVec = precoder.column(0).into_owned();
            let (h_t, h_c) = scenario.sensing_channels(modes)?;
            let refl: Vec<f64> = scenario.clutter.iter().map(|c| c.reflectivity).collect();
            let model = SensingModel {
                h_target: &h_t,
                target_reflectivity: scenario.target.reflectivity,
                h_clutter: &h_c,
                clutter_reflectivity: &refl,
                noise: objective.noise,
            };
            let w = mvdr_receive_filter(&model, &f)?;
            if w.norm_squared() == 0.0 {
                return Ok(0.0);
            }
            scnr(&model, &f, &w)
        }
    }
}

/// Per-element modes allowed by a search: the product of the listed pattern
/// and polarization indices, pattern-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub patterns: Vec<usize>,
    pub polarizations: Vec<usize>,
    pub scope: ModeScope,
}

impl SearchSpace {
    pub fn new(patterns: Vec<usize>, polarizations: Vec<usize>, scope: ModeScope) -> Self {
        Self {
            patterns,
            polarizations,
            scope,
        }
    }

    /// A single fixed array-wide mode.
    pub fn fixed(pattern: usize, polarization: usize) -> Self {
        Self::new(vec![pattern], vec![polarization], ModeScope::ArrayUniform)
    }

    /// `(pattern, polarization)` of element mode `i`.
    pub fn mode(&self, i: usize) -> (usize, usize) {
        let q = self.polarizations.len();
        (self.patterns[i / q], self.polarizations[i % q])
    }

    pub fn modes_per_element(&self) -> usize {
        self.patterns.len() * self.polarizations.len()
    }

    /// Number of assignments for an `n`-element array, saturating.
    pub fn size(&self, n: usize) -> u128 {
        let m = self.modes_per_element() as u128;
        match self.scope {
            ModeScope::ArrayUniform => m,
            ModeScope::PerElement => {
                let mut s: u128 = 1;
                for _ in 0..n {
                    s = s.saturating_mul(m);
                }
                s
            }
        }
    }

    fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.patterns.is_empty() || self.polarizations.is_empty() {
            return Err(Error::invalid(
                "search_space",
                "needs at least one pattern and one polarization",
            ));
        }
        for &p in &self.patterns {
            scenario.codebook.pattern(p)?;
        }
        for &q in &self.polarizations {
            scenario.codebook.polarization(q)?;
        }
        Ok(())
    }

    /// Assignment for a mixed-radix index; element 0 is the most significant
    /// digit.
    fn assignment(&self, n: usize, mut index: u128) -> ModeAssignment {
        let m = self.modes_per_element() as u128;
        match self.scope {
            ModeScope::ArrayUniform => {
                let (p, q) = self.mode(index as usize);
                ModeAssignment::uniform(n, p, q)
            }
            ModeScope::PerElement => {
                let mut pat = vec![0; n];
                let mut pol = vec![0; n];
                for e in (0..n).rev() {
                    let (p, q) = self.mode((index % m) as usize);
                    pat[e] = p;
                    pol[e] = q;
                    index /= m;
                }
                ModeAssignment::per_element(pat, pol)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub cycle: usize,
    pub value: f64,
}

/// Outcome of a mode search. Everything except `wall_time` is reproducible
/// bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub best_modes: ModeAssignment,
    pub best_value: f64,
    /// Continuous solves performed, warm or cold.
    pub evaluations: usize,
    pub trace: Vec<TracePoint>,
    /// Seconds.
    pub wall_time: f64,
}

impl SolveReport {
    /// Equality ignoring `wall_time`.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.best_modes == other.best_modes
            && self.best_value.to_bits() == other.best_value.to_bits()
            && self.evaluations == other.evaluations
            && self.trace.len() == other.trace.len()
            && self
                .trace
                .iter()
                .zip(&other.trace)
                .all(|(a, b)| a.cycle == b.cycle && a.value.to_bits() == b.value.to_bits())
    }
}

fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + IMPROVEMENT_MARGIN * incumbent.abs()
}

struct Search {
    report: SolveReport,
    best: Evaluation,
}

fn exhaustive(objective: &Objective, scenario: &Scenario, space: &SearchSpace) -> Result<Search> {
    objective.validate()?;
    space.validate(scenario)?;
    let n = scenario.num_elements();
    let size = space.size(n);
    if size > EXHAUSTIVE_GUARD {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: EXHAUSTIVE_GUARD,
        });
    }
    let start = Instant::now();
    let mut best: Option<(ModeAssignment, Evaluation)> = None;
    for index in 0..size {
        let modes = space.assignment(n, index);
        let eval = evaluate_from(objective, scenario, &modes, None)?;
        // strict comparison keeps the first (lowest-index) maximizer
        if best.as_ref().is_none_or(|(_, b)| eval.value > b.value) {
            best = Some((modes, eval));
        }
    }
    let (best_modes, best) = best.expect("search space is non-empty");
    Ok(Search {
        report: SolveReport {
            best_modes,
            best_value: best.value,
            evaluations: size as usize,
            trace: vec![TracePoint {
                cycle: 0,
                value: best.value,
            }],
            wall_time: start.elapsed().as_secs_f64(),
        },
        best,
    })
}

/// Exact argmax over every assignment in `space`. Ties go to the earliest
/// assignment in enumeration order.
pub fn exhaustive_mode_search(
    objective: &Objective,
    scenario: &Scenario,
    space: &SearchSpace,
) -> Result<SolveReport> {
    exhaustive(objective, scenario, space).map(|s| s.report)
}

fn coordinate_ascent(
    objective: &Objective,
    scenario: &Scenario,
    space: &SearchSpace,
    init: ModeAssignment,
    start_eval: Evaluation,
    max_cycles: usize,
) -> Result<Search> {
    let start = Instant::now();
    let n = scenario.num_elements();
    let mut modes = init;
    modes.scope = ModeScope::PerElement;
    let mut best = start_eval;
    let mut evaluations = 0;
    let mut trace = vec![TracePoint {
        cycle: 0,
        value: best.value,
    }];
    for cycle in 1..=max_cycles {
        let mut moved = false;
        for e in 0..n {
            let current = (modes.pattern_idx[e], modes.polar_idx[e]);
            let mut cand_best: Option<(usize, Evaluation)> = None;
            for i in 0..space.modes_per_element() {
                let (p, q) = space.mode(i);
                if (p, q) == current {
                    continue;
                }
                let mut trial = modes.clone();
                trial.pattern_idx[e] = p;
                trial.polar_idx[e] = q;
                let eval = evaluate_from(objective, scenario, &trial, Some(&best.beamformer))?;
                evaluations += 1;
                if cand_best.as_ref().is_none_or(|(_, b)| eval.value > b.value) {
                    cand_best = Some((i, eval));
                }
            }
            if let Some((i, eval)) = cand_best {
                if improves(eval.value, best.value) {
                    let (p, q) = space.mode(i);
                    modes.pattern_idx[e] = p;
                    modes.polar_idx[e] = q;
                    best = eval;
                    moved = true;
                }
            }
        }
        trace.push(TracePoint {
            cycle,
            value: best.value,
        });
        if !moved {
            break;
        }
    }
    Ok(Search {
        report: SolveReport {
            best_modes: modes,
            best_value: best.value,
            evaluations,
            trace,
            wall_time: start.elapsed().as_secs_f64(),
        },
        best,
    })
}

/// Per-element coordinate ascent from `init`: each element in ascending
/// order tries every other mode of `space` with the rest held fixed, and
/// moves to the best one if it strictly improves the objective. Stops after
/// a cycle without moves or after `max_cycles` cycles.
///
/// Candidate solves are warm-started from the incumbent's beamformer. The
/// cold evaluation of `init` is counted as one evaluation.
pub fn coordinate_ascent_modes(
    objective: &Objective,
    scenario: &Scenario,
    space: &SearchSpace,
    init: &ModeAssignment,
    max_cycles: usize,
) -> Result<SolveReport> {
    objective.validate()?;
    space.validate(scenario)?;
    init.validate(&scenario.codebook, scenario.num_elements())?;
    let first = evaluate_from(objective, scenario, init, None)?;
    let mut s = coordinate_ascent(objective, scenario, space, init.clone(), first, max_cycles)?;
    s.report.evaluations += 1;
    Ok(s.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointOptions {
    /// Enumerate the whole space when it holds at most this many assignments.
    pub exhaustive_limit: u64,
    pub max_cycles: usize,
    pub power_model: PowerModel,
}

impl Default for JointOptions {
    fn default() -> Self {
        Self {
            exhaustive_limit: 64,
            max_cycles: 20,
            power_model: PowerModel::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JointSolution {
    pub report: SolveReport,
    pub stack: BeamformingStack,
    /// Objective of the fully-digital solution for the selected modes.
    pub pre_factor_value: f64,
    /// Objective through the realized stack; equals `pre_factor_value` for a
    /// fully-digital architecture.
    pub value: f64,
    pub factorization_residual: Option<f64>,
    pub power_w: f64,
}

/// Mode search followed, for tri-hybrid arrays, by factorization of the
/// digital solution onto the phase-shifter network.
///
/// Small spaces are enumerated. Otherwise every array-uniform assignment is
/// scored first and per-element coordinate ascent starts from the best of
/// them, so the result is never below any fixed array-wide mode of `space`.
pub fn joint_optimize(
    objective: &Objective,
    scenario: &Scenario,
    arch: &Architecture,
    space: &SearchSpace,
    options: &JointOptions,
) -> Result<JointSolution> {
    objective.validate()?;
    options.power_model.validate()?;
    let n = scenario.num_elements();
    let mask = arch.mask(n)?;
    let start = Instant::now();
    let search = if space.size(n) <= (options.exhaustive_limit as u128).min(EXHAUSTIVE_GUARD) {
        exhaustive(objective, scenario, space)?
    } else {
        let uniform = SearchSpace {
            scope: ModeScope::ArrayUniform,
            ..space.clone()
        };
        let coarse = exhaustive(objective, scenario, &uniform)?;
        if space.scope == ModeScope::ArrayUniform {
            coarse
        } else {
            let mut fine = coordinate_ascent(
                objective,
                scenario,
                space,
                coarse.report.best_modes.clone(),
                coarse.best,
                options.max_cycles,
            )?;
            fine.report.evaluations += coarse.report.evaluations;
            fine
        }
    };
    let Search { mut report, best } = search;
    report.wall_time = start.elapsed().as_secs_f64();

    let digital = best.beamformer.precoder();
    let (stack, value, residual) = match &mask {
        None => (
            BeamformingStack::fully_digital(report.best_modes.clone(), digital, objective.power),
            best.value,
            None,
        ),
        Some(mask) => {
            let fac = hybrid_factorize(&digital, mask, objective.power, &objective.settings)?;
            let stack = BeamformingStack {
                modes: report.best_modes.clone(),
                f_rf: fac.f_rf,
                f_bb: fac.f_bb,
                mask: Some(fac.mask),
                power_budget: objective.power,
            };
            let value = evaluate_precoder(
                objective,
                scenario,
                &stack.modes,
                &stack.effective_precoder(),
            )?;
            (stack, value, Some(fac.residual))
        }
    };
    let power_w = power_consumption(&options.power_model, n, stack.mask.as_ref());
    Ok(JointSolution {
        report,
        stack,
        pre_factor_value: best.value,
        value,
        factorization_residual: residual,
        power_w,
    })
}
