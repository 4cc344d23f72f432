//! Run configuration file: scenario, optional sweep, single-solve settings
//! and output location.

use std::path::{Path, PathBuf};

use ra_core::beamforming::{connectivity_mask, Architecture, Connectivity};
use ra_core::em::ModeScope;
use ra_core::optimizer::{JointOptions, ObjectiveKind};
use ra_core::scenario::{Diagnostic, ScenarioConfig};
use ra_core::sweep::{ModeFamily, SweepKind, SweepSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Settings of a single joint optimization (no sweep).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub objective: ObjectiveKind,
    pub family: ModeFamily,
    pub scope: ModeScope,
    pub architecture: Architecture,
    pub options: JointOptions,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveKind::RadarScnr,
            family: ModeFamily::Pattern,
            scope: ModeScope::PerElement,
            architecture: Architecture::FullyDigital,
            options: JointOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory receiving the CSV tables and the metadata sidecar.
    pub output: PathBuf,
    /// Worker threads; all available cores when absent.
    pub parallel: Option<usize>,
    pub scenario: ScenarioConfig,
    pub solve: SolveConfig,
    /// Present for sweeps, absent for a single solve.
    pub sweep: Option<SweepSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output: PathBuf::from("rasim-out"),
            parallel: None,
            scenario: ScenarioConfig::default(),
            solve: SolveConfig::default(),
            sweep: None,
        }
    }
}

/// Sweep selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SweepChoice {
    /// Target angle, pattern-RA vs DA vs OA.
    Angle,
    /// Target angle, polarization-RA vs fixed polarization.
    Polarization,
    /// Array size, RA vs conventional.
    Antennas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ArchChoice {
    FullyDigital,
    TriHybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ObjectiveChoice {
    CommSumRate,
    RadarScnr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ConnectivityChoice {
    Fully,
    Sub,
    Dynamic,
}

/// Command-line overrides; each one replaces the matching config field.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Master random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run a sweep instead of a single solve
    #[arg(long, value_enum)]
    pub sweep: Option<SweepChoice>,
    /// Objective to maximize
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveChoice>,
    /// Beamforming architecture
    #[arg(long, value_enum)]
    pub arch: Option<ArchChoice>,
    /// RF chains of the tri-hybrid architecture
    #[arg(long)]
    pub nrf: Option<usize>,
    /// Phase-shifter connectivity of the tri-hybrid architecture
    #[arg(long, value_enum)]
    pub connectivity: Option<ConnectivityChoice>,
    /// Monte Carlo seeds per sweep point
    #[arg(long)]
    pub seeds_per_point: Option<usize>,
    /// Worker threads (1 runs sequentially)
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always representable")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.scenario.seed = seed;
        }
        if let Some(choice) = o.sweep {
            let (kind, family) = match choice {
                SweepChoice::Angle => (SweepKind::Angle, ModeFamily::Pattern),
                SweepChoice::Polarization => (SweepKind::Angle, ModeFamily::Polarization),
                SweepChoice::Antennas => (SweepKind::Antennas, ModeFamily::Joint),
            };
            let keep = matches!(&self.sweep, Some(s) if s.kind == kind && s.family == family);
            if !keep {
                let mut spec = match kind {
                    SweepKind::Angle => SweepSpec::angle(family),
                    SweepKind::Antennas => SweepSpec::antennas(),
                };
                spec.objective = self.solve.objective;
                self.sweep = Some(spec);
            }
        }
        if let Some(obj) = o.objective {
            let kind = match obj {
                ObjectiveChoice::CommSumRate => ObjectiveKind::CommSumRate,
                ObjectiveChoice::RadarScnr => ObjectiveKind::RadarScnr,
            };
            self.solve.objective = kind;
            if let Some(s) = &mut self.sweep {
                s.objective = kind;
            }
        }
        if o.arch.is_some() || o.nrf.is_some() || o.connectivity.is_some() {
            let (cur_nrf, cur_conn) = match self.solve.architecture {
                Architecture::TriHybrid { n_rf, connectivity } => (n_rf, connectivity),
                Architecture::FullyDigital => (2, Connectivity::Fully),
            };
            let tri = match o.arch {
                Some(ArchChoice::TriHybrid) => true,
                Some(ArchChoice::FullyDigital) => false,
                None => true,
            };
            let arch = if tri {
                Architecture::TriHybrid {
                    n_rf: o.nrf.unwrap_or(cur_nrf),
                    connectivity: match o.connectivity {
                        Some(ConnectivityChoice::Fully) => Connectivity::Fully,
                        Some(ConnectivityChoice::Sub) => Connectivity::Sub,
                        Some(ConnectivityChoice::Dynamic) => Connectivity::Dynamic,
                        None => cur_conn,
                    },
                }
            } else {
                Architecture::FullyDigital
            };
            self.solve.architecture = arch;
            if let Some(s) = &mut self.sweep {
                s.architectures = vec![arch];
            }
        }
        if let Some(n) = o.seeds_per_point {
            if let Some(s) = &mut self.sweep {
                s.seeds_per_point = n;
            }
        }
        if let Some(p) = o.parallel {
            self.parallel = Some(p);
        }
        if let Some(out) = &o.output {
            self.output = out.clone();
        }
    }

    /// Every violated invariant of the configuration.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out: Vec<Diagnostic> = self
            .scenario
            .diagnostics()
            .into_iter()
            .map(|d| Diagnostic::new(format!("scenario.{}", d.field), d.message))
            .collect();
        if self.parallel == Some(0) {
            out.push(Diagnostic::new("parallel", "must be >= 1"));
        }
        if self.output.as_os_str().is_empty() {
            out.push(Diagnostic::new("output", "must not be empty"));
        }
        let n = self.scenario.num_elements;
        if let Some(d) = arch_diagnostic("solve.architecture", &self.solve.architecture, n) {
            out.push(d);
        }
        if self.solve.options.max_cycles == 0 {
            out.push(Diagnostic::new("solve.options.max_cycles", "must be >= 1"));
        }
        if let Err(e) = self.solve.options.power_model.validate() {
            out.push(Diagnostic::new("solve.options.power_model", e.to_string()));
        }
        if let Some(s) = &self.sweep {
            out.extend(s.diagnostics());
            if s.kind == SweepKind::Angle {
                for a in &s.architectures {
                    out.extend(arch_diagnostic("sweep.architectures", a, n));
                }
            }
            if let Err(e) = s.options.power_model.validate() {
                out.push(Diagnostic::new("sweep.options.power_model", e.to_string()));
            }
        }
        if let Some(p) = &self.scenario.codebook {
            if !p.exists() {
                out.push(Diagnostic::new(
                    "scenario.codebook",
                    format!("file {} does not exist", p.display()),
                ));
            }
        }
        out
    }
}

fn arch_diagnostic(field: &str, arch: &Architecture, n: usize) -> Option<Diagnostic> {
    match *arch {
        Architecture::FullyDigital => None,
        Architecture::TriHybrid { n_rf, connectivity } => connectivity_mask(connectivity, n, n_rf)
            .err()
            .map(|e| Diagnostic::new(field, e.to_string())),
    }
}
