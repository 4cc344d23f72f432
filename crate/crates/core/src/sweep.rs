//! Monte Carlo sweeps over target angle and array size, with CSV output and
//! quartile aggregates.
//!
//! Every (grid point, seed) pair is an independent task. For a given seed
//! the nuisance draws (users, clutter, scattering) are shared by all grid
//! points, so curves compare like with like.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamforming::Architecture;
use crate::em::{ModeCodebook, ModeScope, PatternKind};
use crate::error::{Error, Result};
use crate::optimizer::{joint_optimize, JointOptions, Objective, ObjectiveKind, SearchSpace};
use crate::scenario::{sample_positions, Scenario, ScenarioConfig, PINNED_RADIUS};

pub const CSV_HEADER: [&str; 8] = [
    "sweep",
    "seed",
    "arch",
    "objective",
    "value",
    "evals",
    "pre_factor_value",
    "power_w",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Angle,
    Antennas,
}

/// Which EM degrees of freedom the reconfigurable array may switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeFamily {
    Pattern,
    Polarization,
    Joint,
}

/// A compared array configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Switchable radiation patterns, horizontal polarization.
    PatternRa,
    /// Fixed directional pattern on every element.
    Da,
    /// Fixed omnidirectional pattern on every element.
    Oa,
    /// Switchable polarization, omnidirectional pattern.
    PolarizationRa,
    FixedPolarization,
    /// Patterns and polarizations both switchable.
    Ra,
    /// Omnidirectional, horizontally polarized, digital beamforming only.
    Conventional,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::PatternRa => "pattern_ra",
            Scheme::Da => "da",
            Scheme::Oa => "oa",
            Scheme::PolarizationRa => "polarization_ra",
            Scheme::FixedPolarization => "fixed_polarization",
            Scheme::Ra => "ra",
            Scheme::Conventional => "conventional",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub family: ModeFamily,
    /// Degrees for angle sweeps, element counts for antenna sweeps.
    pub grid: Vec<f64>,
    pub seeds_per_point: usize,
    pub objective: ObjectiveKind,
    pub architectures: Vec<Architecture>,
    pub scope: ModeScope,
    /// Pattern of the directional baseline; [`default_da_pattern`] when
    /// absent.
    pub da_pattern: Option<usize>,
    pub options: JointOptions,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self::angle(ModeFamily::Pattern)
    }
}

impl SweepSpec {
    /// 25 angles from -60 to 60 degrees, 50 seeds, radar objective.
    pub fn angle(family: ModeFamily) -> Self {
        Self {
            kind: SweepKind::Angle,
            family,
            grid: (0..25).map(|i| -60.0 + 5.0 * i as f64).collect(),
            seeds_per_point: 50,
            objective: ObjectiveKind::RadarScnr,
            architectures: vec![Architecture::FullyDigital],
            scope: ModeScope::PerElement,
            da_pattern: None,
            options: JointOptions::default(),
        }
    }

    /// `N` in {2, 4, 8, 16, 32}, joint pattern and polarization search.
    pub fn antennas() -> Self {
        Self {
            kind: SweepKind::Antennas,
            family: ModeFamily::Joint,
            grid: vec![2.0, 4.0, 8.0, 16.0, 32.0],
            ..Self::angle(ModeFamily::Joint)
        }
    }

    pub fn schemes(&self) -> Vec<Scheme> {
        match (self.kind, self.family) {
            (SweepKind::Antennas, _) => vec![Scheme::Ra, Scheme::Conventional],
            (SweepKind::Angle, ModeFamily::Pattern) => {
                vec![Scheme::PatternRa, Scheme::Da, Scheme::Oa]
            }
            (SweepKind::Angle, ModeFamily::Polarization) => {
                vec![Scheme::PolarizationRa, Scheme::FixedPolarization]
            }
            (SweepKind::Angle, ModeFamily::Joint) => vec![Scheme::Ra, Scheme::Conventional],
        }
    }

    /// Column label of a scheme under an architecture.
    pub fn arch_label(&self, scheme: Scheme, arch: &Architecture) -> String {
        match arch {
            Architecture::FullyDigital => scheme.label().to_string(),
            other => format!("{}+{}", scheme.label(), other.label()),
        }
    }

    pub fn diagnostics(&self) -> Vec<crate::scenario::Diagnostic> {
        use crate::scenario::Diagnostic;
        let mut out = Vec::new();
        if self.grid.is_empty() {
            out.push(Diagnostic::new("sweep.grid", "must not be empty"));
        }
        if !self.grid.windows(2).all(|w| w[0] < w[1]) {
            out.push(Diagnostic::new("sweep.grid", "must be strictly increasing"));
        }
        if self.grid.iter().any(|g| !g.is_finite()) {
            out.push(Diagnostic::new("sweep.grid", "must be finite"));
        }
        if self.kind == SweepKind::Antennas
            && self.grid.iter().any(|g| *g < 1.0 || g.fract() != 0.0)
        {
            out.push(Diagnostic::new(
                "sweep.grid",
                "antenna counts must be positive integers",
            ));
        }
        if self.kind == SweepKind::Angle && self.grid.iter().any(|g| g.abs() > 90.0) {
            out.push(Diagnostic::new(
                "sweep.grid",
                "angles must lie within [-90, 90] degrees",
            ));
        }
        if self.seeds_per_point < 1 {
            out.push(Diagnostic::new("sweep.seeds_per_point", "must be >= 1"));
        }
        if self.architectures.is_empty() {
            out.push(Diagnostic::new("sweep.architectures", "must not be empty"));
        }
        if self.options.max_cycles < 1 {
            out.push(Diagnostic::new("sweep.options.max_cycles", "must be >= 1"));
        }
        for arch in &self.architectures {
            if let Architecture::TriHybrid { n_rf, connectivity } = *arch {
                let sizes: Vec<usize> = match self.kind {
                    SweepKind::Antennas => self.grid.iter().map(|g| *g as usize).collect(),
                    SweepKind::Angle => vec![],
                };
                for n in sizes {
                    if let Err(e) = crate::beamforming::connectivity_mask(connectivity, n, n_rf) {
                        out.push(Diagnostic::new(
                            "sweep.architectures",
                            format!("N={n}: {e}"),
                        ));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep: f64,
    pub seed: usize,
    pub arch: String,
    pub objective: String,
    pub value: f64,
    pub evals: usize,
    pub pre_factor_value: f64,
    pub power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    /// Grid actually run, including any inserted aligned point.
    pub grid: Vec<f64>,
    /// Grid angle where the target sits on the first clutter source.
    pub aligned_deg: Option<f64>,
    /// Clutter directions held fixed across the sweep, degrees.
    pub fixed_clutter_deg: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

/// RNG of seed `index` under master seed `master`. Stream 0 is reserved for
/// draws shared by every seed.
pub fn seed_rng(master: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64 + 1);
    rng
}

fn shared_rng(master: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(0);
    rng
}

/// Searchable directional pattern with boresight nearest broadside, lowest
/// index on ties. Keeping the baseline inside the reconfigurable search
/// space makes "reconfigurable >= directional" hold row by row.
pub fn default_da_pattern(codebook: &ModeCodebook) -> Option<usize> {
    codebook
        .searchable_patterns()
        .into_iter()
        .filter(|&i| codebook.patterns()[i].kind() == PatternKind::Directional)
        .fold(None, |best: Option<usize>, i| {
            let d = codebook.patterns()[i].boresight_deg().abs();
            match best {
                Some(b) if codebook.patterns()[b].boresight_deg().abs() <= d => Some(b),
                _ => Some(i),
            }
        })
}

fn search_space(spec: &SweepSpec, scheme: Scheme, scenario: &Scenario) -> Result<SearchSpace> {
    let cb = &scenario.codebook;
    let omni = cb
        .omni_index()
        .ok_or_else(|| Error::invalid("codebook", "no omnidirectional pattern"))?;
    let all_pols: Vec<usize> = (0..cb.polarizations().len()).collect();
    Ok(match scheme {
        Scheme::PatternRa => SearchSpace::new(cb.searchable_patterns(), vec![0], spec.scope),
        Scheme::PolarizationRa => SearchSpace::new(vec![omni], all_pols, spec.scope),
        Scheme::Ra => SearchSpace::new(cb.searchable_patterns(), all_pols, spec.scope),
        Scheme::Da => {
            let da = match spec.da_pattern {
                Some(p) => p,
                None => default_da_pattern(cb)
                    .ok_or_else(|| Error::invalid("codebook", "no directional pattern"))?,
            };
            cb.pattern(da)?;
            SearchSpace::fixed(da, 0)
        }
        Scheme::Oa | Scheme::FixedPolarization | Scheme::Conventional => {
            SearchSpace::fixed(omni, 0)
        }
    })
}

fn run_point(
    spec: &SweepSpec,
    scenario: &Scenario,
    sweep: f64,
    seed: usize,
) -> Result<Vec<SweepRow>> {
    let objective = Objective::for_scenario(spec.objective, scenario);
    let mut rows = Vec::new();
    for scheme in spec.schemes() {
        let space = search_space(spec, scheme, scenario)?;
        for arch in &spec.architectures {
            let sol = joint_optimize(&objective, scenario, arch, &space, &spec.options)?;
            rows.push(SweepRow {
                sweep,
                seed,
                arch: spec.arch_label(scheme, arch),
                objective: spec.objective.as_str().to_string(),
                value: sol.value,
                evals: sol.report.evaluations,
                pre_factor_value: sol.pre_factor_value,
                power_w: sol.power_w,
            });
        }
    }
    Ok(rows)
}

fn check(config: &ScenarioConfig, spec: &SweepSpec) -> Result<()> {
    config.validate()?;
    if let Some(d) = spec.diagnostics().into_iter().next() {
        return Err(Error::Invalid {
            field: d.field,
            reason: d.message,
        });
    }
    Ok(())
}

fn collect(
    tasks: Vec<(f64, usize)>,
    f: impl Fn(f64, usize) -> Result<Vec<SweepRow>> + Sync,
) -> Result<Vec<SweepRow>> {
    let chunks: Vec<Result<Vec<SweepRow>>> = tasks
        .into_par_iter()
        .map(|(g, s)| {
            f(g, s).map_err(|e| Error::AtGridPoint {
                value: g,
                seed: s,
                source: Box::new(e),
            })
        })
        .collect();
    let mut rows = Vec::new();
    for c in chunks {
        rows.extend(c?);
    }
    Ok(rows)
}

/// Target (radar) or user 0 (communication) pinned at each grid angle and
/// [`PINNED_RADIUS`].
///
/// With the polarization family the clutter directions are drawn once and
/// held fixed for every seed, and the first clutter direction is added to
/// the grid as the aligned point.
pub fn sweep_angle(config: &ScenarioConfig, spec: &SweepSpec) -> Result<SweepResult> {
    check(config, spec)?;
    if spec.kind != SweepKind::Angle {
        return Err(Error::invalid(
            "sweep.kind",
            "sweep_angle needs kind = angle",
        ));
    }
    if spec.objective == ObjectiveKind::CommSumRate && config.num_users == 0 {
        return Err(Error::invalid(
            "num_users",
            "communication sweep needs a user to probe",
        ));
    }
    let codebook = config.load_codebook()?;
    let fixed_clutter = if spec.family == ModeFamily::Polarization {
        sample_positions(config, config.num_clutter, &mut shared_rng(config.seed))
    } else {
        Vec::new()
    };
    let mut grid = spec.grid.clone();
    let aligned = fixed_clutter.first().map(|&(_, theta)| theta);
    let aligned_deg = aligned.map(f64::to_degrees);
    if let Some(a) = aligned_deg {
        if !grid.contains(&a) {
            grid.push(a);
            grid.sort_by(f64::total_cmp);
        }
    }
    let scenarios = (0..spec.seeds_per_point)
        .map(|s| {
            let mut rng = seed_rng(config.seed, s);
            let mut sc = Scenario::sample(config, codebook.clone(), s as u64, &mut rng)?;
            for (c, &(r, theta)) in sc.clutter.iter_mut().zip(&fixed_clutter) {
                c.r = r;
                c.theta = theta;
            }
            Ok(sc)
        })
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(f64, usize)> = grid
        .iter()
        .flat_map(|&g| (0..spec.seeds_per_point).map(move |s| (g, s)))
        .collect();
    let rows = collect(tasks, |g, s| {
        let theta = match (aligned, aligned_deg) {
            (Some(t), Some(d)) if d == g => t,
            _ => g.to_radians(),
        };
        let sc = scenarios[s].clone();
        let sc = match spec.objective {
            ObjectiveKind::RadarScnr => sc.with_target_at(PINNED_RADIUS, theta),
            ObjectiveKind::CommSumRate => sc.with_user_at(0, PINNED_RADIUS, theta)?,
        };
        run_point(spec, &sc, g, s)
    })?;
    Ok(SweepResult {
        kind: SweepKind::Angle,
        grid,
        aligned_deg,
        fixed_clutter_deg: fixed_clutter.iter().map(|p| p.1.to_degrees()).collect(),
        rows,
    })
}

/// Same draws for every array size; only `N` changes along the grid.
pub fn sweep_antennas(config: &ScenarioConfig, spec: &SweepSpec) -> Result<SweepResult> {
    check(config, spec)?;
    if spec.kind != SweepKind::Antennas {
        return Err(Error::invalid(
            "sweep.kind",
            "sweep_antennas needs kind = antennas",
        ));
    }
    let codebook = config.load_codebook()?;
    let tasks: Vec<(f64, usize)> = spec
        .grid
        .iter()
        .flat_map(|&g| (0..spec.seeds_per_point).map(move |s| (g, s)))
        .collect();
    let rows = collect(tasks, |g, s| {
        let cfg = ScenarioConfig {
            num_elements: g as usize,
            ..config.clone()
        };
        let mut rng = seed_rng(config.seed, s);
        let sc = Scenario::sample(&cfg, codebook.clone(), s as u64, &mut rng)?;
        run_point(spec, &sc, g, s)
    })?;
    Ok(SweepResult {
        kind: SweepKind::Antennas,
        grid: spec.grid.clone(),
        aligned_deg: None,
        fixed_clutter_deg: Vec::new(),
        rows,
    })
}

pub fn run_sweep(config: &ScenarioConfig, spec: &SweepSpec) -> Result<SweepResult> {
    match spec.kind {
        SweepKind::Angle => sweep_angle(config, spec),
        SweepKind::Antennas => sweep_antennas(config, spec),
    }
}

/// Linear-interpolation sample quantile (type 7). `sorted` must be ascending
/// and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sweep: f64,
    pub arch: String,
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl SweepResult {
    /// Values of one column label at one grid point, in seed order.
    pub fn values(&self, sweep: f64, arch: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.sweep == sweep && r.arch == arch)
            .map(|r| r.value)
            .collect()
    }

    pub fn arch_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.arch) {
                out.push(r.arch.clone());
            }
        }
        out
    }

    /// Median and quartiles per (grid point, column label).
    pub fn aggregates(&self) -> Vec<AggregateRow> {
        let mut out = Vec::new();
        for &g in &self.grid {
            for arch in self.arch_labels() {
                let mut v = self.values(g, &arch);
                if v.is_empty() {
                    continue;
                }
                v.sort_by(f64::total_cmp);
                out.push(AggregateRow {
                    sweep: g,
                    count: v.len(),
                    q1: quantile(&v, 0.25),
                    median: quantile(&v, 0.5),
                    q3: quantile(&v, 0.75),
                    arch,
                });
            }
        }
        out
    }

    /// Median curve of one column label over the grid.
    pub fn median_curve(&self, arch: &str) -> Vec<f64> {
        self.grid
            .iter()
            .map(|&g| {
                let mut v = self.values(g, arch);
                v.sort_by(f64::total_cmp);
                if v.is_empty() {
                    f64::NAN
                } else {
                    quantile(&v, 0.5)
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(CSV_HEADER)?;
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_aggregates_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in self.aggregates() {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Array-size savings of `ra` against `conventional`; see
    /// [`AntennaReport`].
    pub fn antenna_report(&self, ra: &str, conventional: &str, tolerance: f64) -> AntennaReport {
        let ra_med = self.median_curve(ra);
        let conv_med = self.median_curve(conventional);
        let mut matches = Vec::new();
        for (i, &n_ra) in self.grid.iter().enumerate() {
            for (j, &n_conv) in self.grid.iter().enumerate() {
                if n_conv > n_ra && ra_med[i] >= (1.0 - tolerance) * conv_med[j] {
                    matches.push(AntennaMatch {
                        n_ra: n_ra as usize,
                        n_conventional: n_conv as usize,
                        ra_median: ra_med[i],
                        conventional_median: conv_med[j],
                    });
                }
            }
        }
        let best_ratio = matches
            .iter()
            .map(|m| m.n_ra as f64 / m.n_conventional as f64)
            .fold(None, |acc: Option<f64>, r| {
                Some(acc.map_or(r, |a| a.min(r)))
            });
        let smallest_n_ra_at_quarter = matches
            .iter()
            .filter(|m| m.n_conventional == 4 * m.n_ra)
            .map(|m| m.n_ra)
            .min();
        AntennaReport {
            tolerance,
            ra_median: ra_med,
            conventional_median: conv_med,
            matches,
            best_ratio,
            smallest_n_ra_at_quarter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaMatch {
    pub n_ra: usize,
    pub n_conventional: usize,
    pub ra_median: f64,
    pub conventional_median: f64,
}

/// Pairs of array sizes where the reconfigurable array's median reaches the
/// conventional median of a larger array, up to a relative `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaReport {
    pub tolerance: f64,
    pub ra_median: Vec<f64>,
    pub conventional_median: Vec<f64>,
    pub matches: Vec<AntennaMatch>,
    /// Smallest `N_RA / N_conventional` over all matches.
    pub best_ratio: Option<f64>,
    /// Smallest `N_RA` matching the conventional array of `4 N_RA` elements.
    pub smallest_n_ra_at_quarter: Option<usize>,
}
