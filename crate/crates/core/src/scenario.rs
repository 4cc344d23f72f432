//! Seeded case-study scenarios: an annular sector holding communication
//! users, one radar target and strong clutter reflectors around the array.

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    comm_channel, complex_gaussian, sample_depolarization, sensing_channel, ChannelSet, CommUser,
    DepolarizationProfile, EntityRole, PathLossParams, PropagationPath, SensingEntity,
};
use crate::em::{ArrayGeometry, ModeAssignment, ModeCodebook};
use crate::error::{Error, Result};

/// Radius at which swept targets and probed users are pinned, meters.
pub const PINNED_RADIUS: f64 = 45.0;

/// One failed invariant of a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_elements: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    pub num_users: usize,
    pub num_clutter: usize,
    pub num_paths: usize,
    pub angle_range_deg: [f64; 2],
    pub radius_range: [f64; 2],
    pub path_loss: PathLossParams,
    /// Transmit power budget, watts.
    pub power: f64,
    /// Receiver noise power, watts.
    pub noise: f64,
    pub target_reflectivity_db: f64,
    pub clutter_reflectivity_db: f64,
    /// Cross-polar to co-polar variance ratio of the depolarization matrices.
    pub cross_polar_ratio: f64,
    /// Laplacian scale of the non-line-of-sight path offsets.
    pub angular_spread_deg: f64,
    /// Path offsets are redrawn until they fall inside this bound.
    pub angular_truncation_deg: f64,
    /// Mean power drop per path index.
    pub path_decay_db: f64,
    /// Codebook file; the built-in codebook when absent.
    pub codebook: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_elements: 8,
            spacing: 0.5,
            num_users: 2,
            num_clutter: 2,
            num_paths: 5,
            angle_range_deg: [-60.0, 60.0],
            radius_range: [30.0, 60.0],
            path_loss: PathLossParams::default(),
            power: 1.0,
            noise: 1e-11,
            target_reflectivity_db: 0.0,
            clutter_reflectivity_db: 10.0,
            cross_polar_ratio: 0.3,
            angular_spread_deg: 10.0,
            angular_truncation_deg: 30.0,
            path_decay_db: 3.0,
            codebook: None,
            seed: 0,
        }
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ScenarioConfig {
    /// Every violated invariant, in field order. Empty when valid.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut check = |ok: bool, field: &str, msg: String| {
            if !ok {
                out.push(Diagnostic::new(field, msg));
            }
        };
        check(
            self.num_elements >= 1,
            "num_elements",
            "must be >= 1".into(),
        );
        check(
            self.spacing > 0.0 && self.spacing.is_finite(),
            "spacing",
            format!("must be > 0, got {}", self.spacing),
        );
        check(
            self.num_paths >= 1,
            "num_paths",
            "must be >= 1 (line of sight)".into(),
        );
        let [a0, a1] = self.angle_range_deg;
        check(
            a0.is_finite() && a1.is_finite() && a0 <= a1,
            "angle_range_deg",
            format!("range ordering requires lower <= upper, got [{a0}, {a1}]"),
        );
        check(
            a0 >= -90.0 && a1 <= 90.0,
            "angle_range_deg",
            format!("must lie within [-90, 90], got [{a0}, {a1}]"),
        );
        let [r0, r1] = self.radius_range;
        check(
            r0.is_finite() && r1.is_finite() && r0 <= r1,
            "radius_range",
            format!("range ordering requires inner <= outer, got [{r0}, {r1}]"),
        );
        check(
            r0 > 0.0,
            "radius_range",
            format!("inner radius must be > 0, got {r0}"),
        );
        if let Err(e) = self.path_loss.validate() {
            check(false, "path_loss", e.to_string());
        }
        check(
            self.power > 0.0 && self.power.is_finite(),
            "power",
            format!("must be > 0, got {}", self.power),
        );
        check(
            self.noise > 0.0 && self.noise.is_finite(),
            "noise",
            format!("must be > 0, got {}", self.noise),
        );
        check(
            self.target_reflectivity_db.is_finite(),
            "target_reflectivity_db",
            "must be finite".into(),
        );
        check(
            self.clutter_reflectivity_db.is_finite(),
            "clutter_reflectivity_db",
            "must be finite".into(),
        );
        check(
            self.cross_polar_ratio >= 0.0 && self.cross_polar_ratio.is_finite(),
            "cross_polar_ratio",
            format!("must be >= 0, got {}", self.cross_polar_ratio),
        );
        check(
            self.angular_spread_deg > 0.0 && self.angular_spread_deg.is_finite(),
            "angular_spread_deg",
            format!("must be > 0, got {}", self.angular_spread_deg),
        );
        check(
            self.angular_truncation_deg > 0.0 && self.angular_truncation_deg.is_finite(),
            "angular_truncation_deg",
            format!("must be > 0, got {}", self.angular_truncation_deg),
        );
        check(
            self.path_decay_db >= 0.0 && self.path_decay_db.is_finite(),
            "path_decay_db",
            format!("must be >= 0, got {}", self.path_decay_db),
        );
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.diagnostics().into_iter().next() {
            None => Ok(()),
            Some(d) => Err(Error::Invalid {
                field: d.field,
                reason: d.message,
            }),
        }
    }

    pub fn load_codebook(&self) -> Result<ModeCodebook> {
        match &self.codebook {
            Some(p) => ModeCodebook::load(p),
            None => Ok(ModeCodebook::default_codebook()),
        }
    }
}

/// Draws `(r, theta)` uniformly over the annular sector: `theta` uniform on
/// the angle range, `r` with density proportional to `r`.
pub fn sample_positions<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    count: usize,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    (0..count).map(|_| sample_position(config, rng)).collect()
}

fn sample_position<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> (f64, f64) {
    let [a0, a1] = config.angle_range_deg;
    let [r0, r1] = config.radius_range;
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let theta = (a0 + (a1 - a0) * u).to_radians();
    let r = (r0 * r0 + (r1 * r1 - r0 * r0) * v).sqrt();
    (r.clamp(r0, r1), theta)
}

/// Laplacian offset with scale `b`, redrawn until `|x| <= bound`.
fn truncated_laplace<R: Rng + ?Sized>(rng: &mut R, b: f64, bound: f64) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let x = -b * u.signum() * (1.0 - 2.0 * u.abs()).ln();
        if x.is_finite() && x.abs() <= bound {
            return x;
        }
    }
}

/// Geometric multipath: a line-of-sight path plus Laplacian angular offsets,
/// exponentially decaying mean powers normalized to one.
fn sample_paths<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    theta: f64,
    profile: &DepolarizationProfile,
    rng: &mut R,
) -> Vec<PropagationPath> {
    let raw: Vec<f64> = (0..config.num_paths)
        .map(|l| db_to_linear(-config.path_decay_db * l as f64))
        .collect();
    let total: f64 = raw.iter().sum();
    let b = config.angular_spread_deg.to_radians();
    let bound = config.angular_truncation_deg.to_radians();
    raw.iter()
        .enumerate()
        .map(|(l, p)| {
            let offset = if l == 0 {
                0.0
            } else {
                truncated_laplace(rng, b, bound)
            };
            PropagationPath {
                gain: complex_gaussian(rng, p / total),
                angle: (theta + offset).clamp(-PI / 2.0, PI / 2.0),
                depolarization: sample_depolarization(rng, profile),
            }
        })
        .collect()
}

/// A realized scenario: the array, every propagation draw and the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub codebook: ModeCodebook,
    pub users: Vec<CommUser>,
    /// Codebook polarization index of each user's receive antenna.
    pub user_polar_idx: Vec<usize>,
    pub target: SensingEntity,
    pub clutter: Vec<SensingEntity>,
    pub path_loss: PathLossParams,
    pub power: f64,
    pub noise: f64,
    pub seed: u64,
}

/// Builds the scenario of `config.seed`.
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    let codebook = config.load_codebook()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Scenario::sample(config, codebook, config.seed, &mut rng)
}

impl Scenario {
    /// Draws users, target and clutter from `rng` in that order.
    pub fn sample<R: Rng + ?Sized>(
        config: &ScenarioConfig,
        codebook: ModeCodebook,
        seed: u64,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let geometry = ArrayGeometry::new(config.num_elements, config.spacing)?;
        let profile = DepolarizationProfile::with_xpd(config.cross_polar_ratio)?;
        let n_pol = codebook.polarizations().len();
        let mut users = Vec::with_capacity(config.num_users);
        let mut user_polar_idx = Vec::with_capacity(config.num_users);
        for _ in 0..config.num_users {
            let (r, theta) = sample_position(config, rng);
            let paths = sample_paths(config, theta, &profile, rng);
            let q = rng.random_range(0..n_pol);
            users.push(CommUser {
                r,
                theta,
                paths,
                rx_polar: codebook.polarization(q)?.clone(),
            });
            user_polar_idx.push(q);
        }
        let (r, theta) = sample_position(config, rng);
        let target = SensingEntity {
            role: EntityRole::Target,
            r,
            theta,
            reflectivity: db_to_linear(config.target_reflectivity_db),
            scattering: sample_depolarization(rng, &profile),
        };
        let clutter = (0..config.num_clutter)
            .map(|_| {
                let (r, theta) = sample_position(config, rng);
                SensingEntity {
                    role: EntityRole::Clutter,
                    r,
                    theta,
                    reflectivity: db_to_linear(config.clutter_reflectivity_db),
                    scattering: sample_depolarization(rng, &profile),
                }
            })
            .collect();
        Ok(Self {
            geometry,
            codebook,
            users,
            user_polar_idx,
            target,
            clutter,
            path_loss: config.path_loss,
            power: config.power,
            noise: config.noise,
            seed,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.geometry.num_elements()
    }

    /// Moves the target to `(r, theta)` keeping its scattering matrix.
    pub fn with_target_at(mut self, r: f64, theta: f64) -> Self {
        self.target.r = r;
        self.target.theta = theta;
        self
    }

    /// Moves user `k` to `(r, theta)` keeping its multipath offsets.
    pub fn with_user_at(mut self, k: usize, r: f64, theta: f64) -> Result<Self> {
        let len = self.users.len();
        let user = self.users.get_mut(k).ok_or(Error::OutOfRange {
            what: "user",
            index: k,
            len,
        })?;
        *user = user.relocated(r, theta);
        Ok(self)
    }

    pub fn comm_channel(&self, modes: &ModeAssignment) -> Result<DMatrix<Complex64>> {
        comm_channel(
            &self.geometry,
            &self.codebook,
            modes,
            &self.users,
            &self.path_loss,
        )
    }

    /// Target and clutter round-trip channels; transmit and receive use the
    /// same element modes.
    pub fn sensing_channels(
        &self,
        modes: &ModeAssignment,
    ) -> Result<(DMatrix<Complex64>, Vec<DMatrix<Complex64>>)> {
        let h = |e: &SensingEntity| {
            sensing_channel(
                &self.geometry,
                &self.codebook,
                modes,
                modes,
                e,
                &self.path_loss,
            )
        };
        let target = h(&self.target)?;
        let clutter = self.clutter.iter().map(h).collect::<Result<Vec<_>>>()?;
        Ok((target, clutter))
    }

    pub fn channels(&self, modes: &ModeAssignment) -> Result<ChannelSet> {
        let h_comm = if self.users.is_empty() {
            DMatrix::zeros(0, self.num_elements())
        } else {
            self.comm_channel(modes)?
        };
        let (h_target, h_clutter) = self.sensing_channels(modes)?;
        let set = ChannelSet {
            h_comm,
            h_target,
            h_clutter,
            target_reflectivity: self.target.reflectivity,
            clutter_reflectivity: self.clutter.iter().map(|c| c.reflectivity).collect(),
            noise: self.noise,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn record(&self) -> ScenarioRecord {
        let entity = |e: &SensingEntity| EntityRecord {
            r: e.r,
            theta_deg: e.theta.to_degrees(),
            reflectivity_db: 10.0 * e.reflectivity.log10(),
        };
        ScenarioRecord {
            seed: self.seed,
            num_elements: self.num_elements(),
            spacing: self.geometry.spacing(),
            power: self.power,
            noise: self.noise,
            users: self
                .users
                .iter()
                .zip(&self.user_polar_idx)
                .map(|(u, &q)| UserRecord {
                    r: u.r,
                    theta_deg: u.theta.to_degrees(),
                    rx_polarization: q,
                    path_angles_deg: u.paths.iter().map(|p| p.angle.to_degrees()).collect(),
                    path_powers: u.paths.iter().map(|p| p.gain.norm_sqr()).collect(),
                })
                .collect(),
            target: entity(&self.target),
            clutter: self.clutter.iter().map(entity).collect(),
        }
    }
}

/// Human-readable summary of a [`Scenario`]: meters, degrees and dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub seed: u64,
    pub num_elements: usize,
    pub spacing: f64,
    pub power: f64,
    pub noise: f64,
    pub users: Vec<UserRecord>,
    pub target: EntityRecord,
    pub clutter: Vec<EntityRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub r: f64,
    pub theta_deg: f64,
    pub rx_polarization: usize,
    pub path_angles_deg: Vec<f64>,
    pub path_powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub r: f64,
    pub theta_deg: f64,
    pub reflectivity_db: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_stay_in_annulus() {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (r, theta) in sample_positions(&cfg, 10_000, &mut rng) {
            assert!((30.0..=60.0).contains(&r));
            assert!(theta.abs() <= PI / 3.0 + 1e-15);
        }
    }

    #[test]
    fn radius_second_moment_is_area_uniform() {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = sample_positions(&cfg, 100_000, &mut rng);
        let m2 = pts.iter().map(|(r, _)| r * r).sum::<f64>() / pts.len() as f64;
        assert!((m2 / 2250.0 - 1.0).abs() < 0.01, "{m2}");
    }

    #[test]
    fn degenerate_radius() {
        let cfg = ScenarioConfig {
            radius_range: [40.0, 40.0],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(sample_positions(&cfg, 100, &mut rng)
            .iter()
            .all(|(r, _)| *r == 40.0));
    }

    #[test]
    fn laplace_offsets_are_bounded_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..50_000)
            .map(|_| truncated_laplace(&mut rng, 10.0, 30.0))
            .collect();
        assert!(xs.iter().all(|x| x.abs() <= 30.0));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.2);
        // mean |x| of a Laplace(b) truncated at T: b - T e^{-T/b} / (1 - e^{-T/b})
        let e = (-3.0f64).exp();
        let want = 10.0 - 30.0 * e / (1.0 - e);
        let got = xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64;
        assert!((got / want - 1.0).abs() < 0.02, "{got} vs {want}");
    }

    #[test]
    fn build_is_deterministic_and_sized() {
        let cfg = ScenarioConfig {
            seed: 11,
            ..Default::default()
        };
        let a = build_scenario(&cfg).unwrap();
        let b = build_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        let modes = ModeAssignment::uniform(8, 0, 0);
        assert_eq!(a.comm_channel(&modes).unwrap().shape(), (2, 8));
        assert_eq!(a.clutter.len(), 2);
        assert_eq!(a.users[0].paths.len(), 5);
        let powers: f64 = a.users[0].paths.iter().map(|p| p.gain.norm_sqr()).sum();
        assert!(powers > 0.0);
    }

    #[test]
    fn no_clutter() {
        let cfg = ScenarioConfig {
            num_clutter: 0,
            ..Default::default()
        };
        let s = build_scenario(&cfg).unwrap();
        assert!(s.clutter.is_empty());
        let (_, c) = s
            .sensing_channels(&ModeAssignment::uniform(8, 0, 0))
            .unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn diagnostics_name_the_field() {
        let cfg = ScenarioConfig {
            radius_range: [60.0, 30.0],
            ..Default::default()
        };
        let d = cfg.diagnostics();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "radius_range");
        assert!(d[0].message.contains("ordering"));
        assert!(ScenarioConfig::default().diagnostics().is_empty());
    }
}
