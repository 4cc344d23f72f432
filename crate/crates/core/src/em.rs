//! Array geometry, discrete radiation-pattern and polarization codebooks, and
//! the per-element complex response that every channel is built from.
//!
//! A reconfigurable element has a small set of discrete EM modes. Each mode is
//! a pair `(pattern, polarization)`: the pattern scales the element's far-field
//! amplitude as a function of azimuth, the polarization is a unit Jones vector
//! in the horizontal/vertical basis.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{DVector, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of azimuth samples stored per pattern, covering `[-pi, pi]` with both
/// endpoints (half-degree spacing).
pub const PATTERN_GRID_LEN: usize = 721;

/// Gain outside a directional pattern's support window (-80 dB).
pub const PATTERN_FLOOR: f64 = 1e-4;

/// Tolerance on the mean radiated power of a normalized pattern.
pub const NORMALIZATION_TOL: f64 = 1e-6;

const JONES_NORM_TOL: f64 = 1e-12;

/// Uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    num_elements: usize,
    /// Element spacing in wavelengths.
    spacing: f64,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, spacing: f64) -> Result<Self> {
        if num_elements == 0 {
            return Err(Error::invalid("num_elements", "must be at least 1"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid("spacing", "must be positive and finite"));
        }
        Ok(Self {
            num_elements,
            spacing,
        })
    }

    /// Half-wavelength ULA.
    pub fn half_wavelength(num_elements: usize) -> Result<Self> {
        Self::new(num_elements, 0.5)
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Phase of element `n` toward azimuth `theta`.
    #[inline]
    pub fn element_phase(&self, n: usize, theta: f64) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * self.spacing * n as f64 * theta.sin())
    }
}

/// ULA response `a(theta)`, element `n` equal to `exp(i 2 pi d n sin(theta))`.
pub fn steering_vector(geom: &ArrayGeometry, theta: f64) -> DVector<Complex64> {
    DVector::from_fn(geom.num_elements, |n, _| geom.element_phase(n, theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Omni,
    Directional,
}

/// Amplitude radiation pattern tabulated on a uniform azimuth grid.
///
/// Construction guarantees unit mean radiated power, so all patterns of a
/// codebook are compared at equal total power.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationPattern {
    kind: PatternKind,
    boresight_deg: f64,
    exponent: f64,
    norm_const: f64,
    internal: bool,
    samples: Vec<f64>,
}

/// Azimuth of grid sample `i`.
pub fn grid_angle(i: usize) -> f64 {
    -PI + i as f64 * grid_step()
}

fn grid_step() -> f64 {
    2.0 * PI / (PATTERN_GRID_LEN - 1) as f64
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t >= PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Trapezoidal estimate of `(1/2pi) * integral |g|^2` over the grid.
pub fn mean_radiated_power(samples: &[f64]) -> f64 {
    let h = grid_step();
    let last = samples.len().saturating_sub(1);
    let sum: f64 = samples
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let w = if i == 0 || i == last { 0.5 } else { 1.0 };
            w * g * g
        })
        .sum();
    sum * h / (2.0 * PI)
}

/// Window scale `s` such that `cos^q(s * x)` has its half-power points at
/// `x = +-beamwidth/2`.
pub fn window_scale_for_beamwidth(exponent: f64, beamwidth: f64) -> f64 {
    (0.5f64).powf(1.0 / (2.0 * exponent)).acos() / (beamwidth / 2.0)
}

impl RadiationPattern {
    pub fn omni() -> Self {
        Self {
            kind: PatternKind::Omni,
            boresight_deg: 0.0,
            exponent: 0.0,
            norm_const: 1.0,
            internal: false,
            samples: vec![1.0; PATTERN_GRID_LEN],
        }
    }

    /// Truncated cosine-power pattern `c * cos^q(s (theta - boresight))` inside
    /// `|theta - boresight| <= pi / (2 s)`, floor elsewhere, with `c` chosen for
    /// unit mean radiated power on the sample grid.
    pub fn cosine_power(boresight_deg: f64, exponent: f64, window_scale: f64) -> Result<Self> {
        if !(exponent >= 0.0 && exponent.is_finite()) {
            return Err(Error::invalid("exponent", "must be finite and >= 0"));
        }
        if !(window_scale > 0.0 && window_scale.is_finite()) {
            return Err(Error::invalid("window_scale", "must be positive"));
        }
        let boresight = boresight_deg.to_radians();
        let half_window = PI / (2.0 * window_scale);
        let raw: Vec<Option<f64>> = (0..PATTERN_GRID_LEN)
            .map(|i| {
                let off = wrap_angle(grid_angle(i) - boresight);
                (off.abs() <= half_window)
                    .then(|| (window_scale * off).cos().max(0.0).powf(exponent))
            })
            .collect();

        // c^2 * inside + floor^2 * outside = 1
        let inside: Vec<f64> = raw.iter().map(|r| r.unwrap_or(0.0)).collect();
        let outside: Vec<f64> = raw
            .iter()
            .map(|r| if r.is_some() { 0.0 } else { 1.0 })
            .collect();
        let a = mean_radiated_power(&inside);
        let b = mean_radiated_power(&outside);
        let c2 = (1.0 - PATTERN_FLOOR * PATTERN_FLOOR * b) / a;
        if !(c2 > 0.0 && c2.is_finite()) {
            return Err(Error::invalid(
                "window_scale",
                "pattern cannot be normalized",
            ));
        }
        let c = c2.sqrt();
        let samples = raw
            .iter()
            .map(|r| match r {
                Some(v) => c * v,
                None => PATTERN_FLOOR,
            })
            .collect();
        Ok(Self {
            kind: PatternKind::Directional,
            boresight_deg,
            exponent,
            norm_const: c,
            internal: false,
            samples,
        })
    }

    /// Rebuild a pattern from stored samples. Rejects patterns that are not
    /// normalized to unit mean radiated power.
    pub fn from_samples(
        kind: PatternKind,
        boresight_deg: f64,
        exponent: f64,
        norm_const: f64,
        samples: Vec<f64>,
    ) -> Result<Self> {
        if samples.len() != PATTERN_GRID_LEN {
            return Err(Error::Dimension(format!(
                "pattern has {} samples, expected {PATTERN_GRID_LEN}",
                samples.len()
            )));
        }
        if samples.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::invalid("samples", "gains must be finite and >= 0"));
        }
        if kind == PatternKind::Omni && samples.iter().any(|&g| g != 1.0) {
            return Err(Error::invalid(
                "samples",
                "omni pattern must be identically 1",
            ));
        }
        let measured = mean_radiated_power(&samples);
        if (measured - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Unnormalized { index: 0, measured });
        }
        Ok(Self {
            kind,
            boresight_deg,
            exponent,
            norm_const,
            internal: false,
            samples,
        })
    }

    pub fn with_internal(mut self, internal: bool) -> Self {
        self.internal = internal;
        self
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn boresight_deg(&self) -> f64 {
        self.boresight_deg
    }

    pub fn boresight(&self) -> f64 {
        self.boresight_deg.to_radians()
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Peak amplitude gain of a directional pattern, 1 for omni.
    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// Baseline-only pattern, excluded from reconfigurable searches.
    pub fn is_internal(&self) -> bool {
        self.internal
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean_radiated_power(&self) -> f64 {
        mean_radiated_power(&self.samples)
    }

    /// Linear amplitude gain toward `theta`, linearly interpolated between grid
    /// samples.
    pub fn gain(&self, theta: f64) -> f64 {
        if self.kind == PatternKind::Omni {
            return 1.0;
        }
        let x = (wrap_angle(theta) + PI) / grid_step();
        let i = (x.floor() as usize).min(PATTERN_GRID_LEN - 2);
        let frac = x - i as f64;
        if frac == 0.0 {
            return self.samples[i];
        }
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }
}

/// Linear amplitude gain of `pattern` toward `theta`.
pub fn pattern_gain(pattern: &RadiationPattern, theta: f64) -> f64 {
    pattern.gain(theta)
}

/// Unit Jones vector in the (horizontal, vertical) basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationState {
    label: String,
    jones: Vector2<Complex64>,
}

impl PolarizationState {
    pub fn new(label: impl Into<String>, h: Complex64, v: Complex64) -> Result<Self> {
        let norm = (h.norm_sqr() + v.norm_sqr()).sqrt();
        if (norm - 1.0).abs() > JONES_NORM_TOL {
            return Err(Error::invalid("jones", format!("norm {norm} is not 1")));
        }
        Ok(Self {
            label: label.into(),
            jones: Vector2::new(h, v),
        })
    }

    pub fn horizontal() -> Self {
        Self::unchecked("H", Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn vertical() -> Self {
        Self::unchecked("V", Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    }

    pub fn slant45() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        Self::unchecked("slant45", Complex64::new(r, 0.0), Complex64::new(r, 0.0))
    }

    pub fn rhcp() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        Self::unchecked("RHCP", Complex64::new(r, 0.0), Complex64::new(0.0, -r))
    }

    fn unchecked(label: &str, h: Complex64, v: Complex64) -> Self {
        Self {
            label: label.to_string(),
            jones: Vector2::new(h, v),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn jones(&self) -> &Vector2<Complex64> {
        &self.jones
    }
}

/// `rx^H S tx`.
pub fn polarization_coupling(
    rx: &PolarizationState,
    scattering: &Matrix2<Complex64>,
    tx: &PolarizationState,
) -> Complex64 {
    let s_tx = scattering * tx.jones;
    rx.jones[0].conj() * s_tx[0] + rx.jones[1].conj() * s_tx[1]
}

/// Discrete EM modes available to every element.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCodebook {
    patterns: Vec<RadiationPattern>,
    polarizations: Vec<PolarizationState>,
}

/// Default codebook parameters: cosine power and -3 dB beamwidth (degrees).
pub const DEFAULT_EXPONENT: f64 = 4.0;
pub const DEFAULT_BEAMWIDTH_DEG: f64 = 40.0;
pub const DEFAULT_BORESIGHTS_DEG: [f64; 6] = [-50.0, -30.0, -10.0, 10.0, 30.0, 50.0];

impl ModeCodebook {
    pub fn new(
        patterns: Vec<RadiationPattern>,
        polarizations: Vec<PolarizationState>,
    ) -> Result<Self> {
        if patterns.iter().all(|p| p.is_internal()) {
            return Err(Error::invalid(
                "patterns",
                "need at least one searchable pattern",
            ));
        }
        if polarizations.is_empty() {
            return Err(Error::invalid("polarizations", "need at least one state"));
        }
        Ok(Self {
            patterns,
            polarizations,
        })
    }

    /// Omni plus six directional patterns, the broadside directional pattern
    /// used only by the fixed-directional baseline, and H / V / slant-45 /
    /// RHCP polarizations.
    pub fn default_codebook() -> Self {
        let s = window_scale_for_beamwidth(DEFAULT_EXPONENT, DEFAULT_BEAMWIDTH_DEG.to_radians());
        let mut patterns = vec![RadiationPattern::omni()];
        for b in DEFAULT_BORESIGHTS_DEG {
            patterns.push(
                RadiationPattern::cosine_power(b, DEFAULT_EXPONENT, s).expect("default pattern"),
            );
        }
        patterns.push(
            RadiationPattern::cosine_power(0.0, DEFAULT_EXPONENT, s)
                .expect("default pattern")
                .with_internal(true),
        );
        let polarizations = vec![
            PolarizationState::horizontal(),
            PolarizationState::vertical(),
            PolarizationState::slant45(),
            PolarizationState::rhcp(),
        ];
        Self {
            patterns,
            polarizations,
        }
    }

    pub fn patterns(&self) -> &[RadiationPattern] {
        &self.patterns
    }

    pub fn polarizations(&self) -> &[PolarizationState] {
        &self.polarizations
    }

    pub fn pattern(&self, idx: usize) -> Result<&RadiationPattern> {
        self.patterns.get(idx).ok_or(Error::OutOfRange {
            what: "pattern",
            index: idx,
            len: self.patterns.len(),
        })
    }

    pub fn polarization(&self, idx: usize) -> Result<&PolarizationState> {
        self.polarizations.get(idx).ok_or(Error::OutOfRange {
            what: "polarization",
            index: idx,
            len: self.polarizations.len(),
        })
    }

    /// Indices of patterns a reconfigurable element may select.
    pub fn searchable_patterns(&self) -> Vec<usize> {
        (0..self.patterns.len())
            .filter(|&i| !self.patterns[i].is_internal())
            .collect()
    }

    /// First omni pattern.
    pub fn omni_index(&self) -> Option<usize> {
        self.patterns
            .iter()
            .position(|p| p.kind == PatternKind::Omni)
    }

    /// First internal (baseline-only) pattern.
    pub fn internal_index(&self) -> Option<usize> {
        self.patterns.iter().position(|p| p.internal)
    }

    /// Codebook restricted to a subset of patterns, in the given order.
    pub fn with_patterns(&self, indices: &[usize]) -> Result<Self> {
        let patterns = indices
            .iter()
            .map(|&i| self.pattern(i).cloned())
            .collect::<Result<Vec<_>>>()?;
        Self::new(patterns, self.polarizations.clone())
    }

    pub fn to_file(&self) -> CodebookFile {
        CodebookFile {
            patterns: self
                .patterns
                .iter()
                .map(|p| PatternEntry {
                    kind: p.kind,
                    boresight_deg: p.boresight_deg,
                    exponent: p.exponent,
                    norm_const: p.norm_const,
                    internal: p.internal,
                    samples: p.samples.clone(),
                })
                .collect(),
            polarizations: self
                .polarizations
                .iter()
                .map(|s| PolarizationEntry {
                    label: s.label.clone(),
                    jones: [ComplexPair::from(s.jones[0]), ComplexPair::from(s.jones[1])],
                })
                .collect(),
        }
    }

    pub fn from_file(file: &CodebookFile) -> Result<Self> {
        let mut patterns = Vec::with_capacity(file.patterns.len());
        for (index, p) in file.patterns.iter().enumerate() {
            let pat = RadiationPattern::from_samples(
                p.kind,
                p.boresight_deg,
                p.exponent,
                p.norm_const,
                p.samples.clone(),
            )
            .map_err(|e| match e {
                Error::Unnormalized { measured, .. } => Error::Unnormalized { index, measured },
                other => other,
            })?;
            patterns.push(pat.with_internal(p.internal));
        }
        let polarizations = file
            .polarizations
            .iter()
            .map(|e| PolarizationState::new(e.label.clone(), e.jones[0].into(), e.jones[1].into()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(patterns, polarizations)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(&CodebookFile::load(path)?)
    }
}

impl Default for ModeCodebook {
    fn default() -> Self {
        Self::default_codebook()
    }
}

/// On-disk codebook layout. Floats are written in shortest round-trip form,
/// so reloading reproduces every sample bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookFile {
    pub patterns: Vec<PatternEntry>,
    pub polarizations: Vec<PolarizationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEntry {
    pub kind: PatternKind,
    pub boresight_deg: f64,
    pub exponent: f64,
    #[serde(default = "one")]
    pub norm_const: f64,
    #[serde(default)]
    pub internal: bool,
    pub samples: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationEntry {
    #[serde(default)]
    pub label: String,
    pub jones: [ComplexPair; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPair {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexPair {
    fn from(c: Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

impl From<ComplexPair> for Complex64 {
    fn from(c: ComplexPair) -> Self {
        Complex64::new(c.re, c.im)
    }
}

/// Result of checking one stored pattern's normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationCheck {
    pub index: usize,
    pub measured: f64,
    pub passed: bool,
}

impl CodebookFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Mean radiated power of every stored pattern against unit power.
    pub fn check_normalization(&self) -> Vec<NormalizationCheck> {
        self.patterns
            .iter()
            .enumerate()
            .map(|(index, p)| {
                let measured = mean_radiated_power(&p.samples);
                NormalizationCheck {
                    index,
                    measured,
                    passed: p.samples.len() == PATTERN_GRID_LEN
                        && (measured - 1.0).abs() <= NORMALIZATION_TOL,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeScope {
    PerElement,
    ArrayUniform,
}

/// Per-element pattern and polarization indices into a [`ModeCodebook`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeAssignment {
    pub pattern_idx: Vec<usize>,
    pub polar_idx: Vec<usize>,
    pub scope: ModeScope,
}

impl ModeAssignment {
    pub fn uniform(n: usize, pattern: usize, polar: usize) -> Self {
        Self {
            pattern_idx: vec![pattern; n],
            polar_idx: vec![polar; n],
            scope: ModeScope::ArrayUniform,
        }
    }

    pub fn per_element(pattern_idx: Vec<usize>, polar_idx: Vec<usize>) -> Self {
        Self {
            pattern_idx,
            polar_idx,
            scope: ModeScope::PerElement,
        }
    }

    pub fn len(&self) -> usize {
        self.pattern_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pattern_idx.is_empty()
    }

    pub fn validate(&self, codebook: &ModeCodebook, num_elements: usize) -> Result<()> {
        if self.pattern_idx.len() != num_elements || self.polar_idx.len() != num_elements {
            return Err(Error::Dimension(format!(
                "assignment covers {}/{} elements, array has {num_elements}",
                self.pattern_idx.len(),
                self.polar_idx.len()
            )));
        }
        for &p in &self.pattern_idx {
            codebook.pattern(p)?;
        }
        for &q in &self.polar_idx {
            codebook.polarization(q)?;
        }
        if self.scope == ModeScope::ArrayUniform {
            let same = |v: &[usize]| v.windows(2).all(|w| w[0] == w[1]);
            if !same(&self.pattern_idx) || !same(&self.polar_idx) {
                return Err(Error::invalid(
                    "scope",
                    "array_uniform assignment has differing entries",
                ));
            }
        }
        Ok(())
    }
}

/// `pattern_gain(pattern of n, theta) * a_n(theta)`.
pub fn element_response(
    geom: &ArrayGeometry,
    codebook: &ModeCodebook,
    assignment: &ModeAssignment,
    n: usize,
    theta: f64,
) -> Result<Complex64> {
    if n >= geom.num_elements() {
        return Err(Error::OutOfRange {
            what: "element",
            index: n,
            len: geom.num_elements(),
        });
    }
    let p = *assignment.pattern_idx.get(n).ok_or(Error::OutOfRange {
        what: "element",
        index: n,
        len: assignment.len(),
    })?;
    Ok(geom.element_phase(n, theta) * codebook.pattern(p)?.gain(theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn steering_examples() {
        let g4 = ArrayGeometry::half_wavelength(4).unwrap();
        for v in steering_vector(&g4, 0.0).iter() {
            assert_eq!(*v, c(1.0, 0.0));
        }
        let g2 = ArrayGeometry::half_wavelength(2).unwrap();
        let a = steering_vector(&g2, PI / 2.0);
        assert!((a[1] - c(-1.0, 0.0)).norm() < 1e-12);
        let g3 = ArrayGeometry::half_wavelength(3).unwrap();
        let a = steering_vector(&g3, PI / 6.0);
        let want = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)];
        for (x, y) in a.iter().zip(want) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn geometry_rejects_bad_input() {
        assert!(ArrayGeometry::new(0, 0.5).is_err());
        assert!(ArrayGeometry::new(4, 0.0).is_err());
        assert!(ArrayGeometry::new(4, f64::NAN).is_err());
    }

    #[test]
    fn omni_gain_is_one() {
        let p = RadiationPattern::omni();
        for t in [-3.0, -1.0, 0.0, 0.3, 2.9] {
            assert_eq!(pattern_gain(&p, t), 1.0);
        }
    }

    #[test]
    fn directional_boresight_gain_is_norm_const() {
        // independent quadrature of cos^(2q) over the support window
        let q = 4.0;
        let s = window_scale_for_beamwidth(q, 40f64.to_radians());
        let half = PI / (2.0 * s);
        let m = 200_000;
        let h = 2.0 * half / m as f64;
        let mut integral = 0.0;
        for i in 0..=m {
            let x = -half + i as f64 * h;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            integral += w * (s * x).cos().powf(2.0 * q);
        }
        integral *= h;
        let outside = 2.0 * PI - 2.0 * half;
        let c_oracle = ((2.0 * PI - PATTERN_FLOOR * PATTERN_FLOOR * outside) / integral).sqrt();

        let p = RadiationPattern::cosine_power(0.0, q, s).unwrap();
        let g0 = pattern_gain(&p, 0.0);
        assert!(g0 > 1.0);
        assert_eq!(g0, p.norm_const());
        // grid quadrature vs fine quadrature
        assert_relative_eq!(g0, c_oracle, max_relative = 1e-3);
    }

    #[test]
    fn directional_floor_outside_window() {
        let s = window_scale_for_beamwidth(4.0, 40f64.to_radians());
        let p = RadiationPattern::cosine_power(0.0, 4.0, s).unwrap();
        assert_eq!(pattern_gain(&p, 150f64.to_radians()), PATTERN_FLOOR);
        assert_eq!(pattern_gain(&p, -PI), PATTERN_FLOOR);
    }

    #[test]
    fn half_power_at_half_beamwidth() {
        let s = window_scale_for_beamwidth(4.0, 40f64.to_radians());
        let p = RadiationPattern::cosine_power(30.0, 4.0, s).unwrap();
        let peak = p.gain(30f64.to_radians());
        let edge = p.gain(50f64.to_radians());
        assert_relative_eq!((edge / peak).powi(2), 0.5, max_relative = 1e-9);
    }

    #[test]
    fn default_codebook_is_normalized() {
        let cb = ModeCodebook::default_codebook();
        assert_eq!(cb.patterns().len(), 8);
        assert_eq!(cb.searchable_patterns().len(), 7);
        assert_eq!(cb.polarizations().len(), 4);
        for p in cb.patterns() {
            assert!((p.mean_radiated_power() - 1.0).abs() <= NORMALIZATION_TOL);
            assert!(p.samples().iter().all(|&g| g >= 0.0));
        }
        assert_eq!(cb.internal_index(), Some(7));
        assert_eq!(cb.pattern(7).unwrap().boresight_deg(), 0.0);
    }

    #[test]
    fn unnormalized_pattern_rejected() {
        let samples = vec![2.0; PATTERN_GRID_LEN];
        let err = RadiationPattern::from_samples(PatternKind::Directional, 0.0, 1.0, 2.0, samples)
            .unwrap_err();
        assert!(matches!(err, Error::Unnormalized { .. }));
    }

    #[test]
    fn coupling_examples() {
        let i2 = Matrix2::identity();
        let h = PolarizationState::horizontal();
        let v = PolarizationState::vertical();
        let s45 = PolarizationState::slant45();
        assert_eq!(polarization_coupling(&h, &i2, &h), c(1.0, 0.0));
        assert_eq!(polarization_coupling(&h, &i2, &v), c(0.0, 0.0));
        assert!(
            (polarization_coupling(&s45, &i2, &h) - c(std::f64::consts::FRAC_1_SQRT_2, 0.0)).norm()
                < 1e-15
        );
    }

    #[test]
    fn polarization_norm_checked() {
        assert!(PolarizationState::new("bad", c(1.0, 0.0), c(1.0, 0.0)).is_err());
        for s in ModeCodebook::default_codebook().polarizations() {
            assert!((s.jones().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn element_response_examples() {
        let g = ArrayGeometry::half_wavelength(4).unwrap();
        let cb = ModeCodebook::default_codebook();
        let omni = ModeAssignment::uniform(4, 0, 0);
        for n in 0..4 {
            assert_eq!(
                element_response(&g, &cb, &omni, n, 0.0).unwrap(),
                c(1.0, 0.0)
            );
        }
        // element 0 on the 30 degree pattern, probed at 30 degrees
        let mut a = ModeAssignment::per_element(vec![0; 4], vec![0; 4]);
        a.pattern_idx[0] = 5;
        let r = element_response(&g, &cb, &a, 0, 30f64.to_radians()).unwrap();
        assert_eq!(r.im, 0.0);
        assert_eq!(r.re, cb.pattern(5).unwrap().norm_const());
        assert!(element_response(&g, &cb, &omni, 4, 0.0).is_err());
    }

    #[test]
    fn omni_element_responses_stack_to_steering_vector() {
        let g = ArrayGeometry::half_wavelength(6).unwrap();
        let cb = ModeCodebook::default_codebook();
        let omni = ModeAssignment::uniform(6, 0, 2);
        for theta in [-1.2, -0.4, 0.0, 0.7, 1.5] {
            let a = steering_vector(&g, theta);
            for n in 0..6 {
                assert_eq!(element_response(&g, &cb, &omni, n, theta).unwrap(), a[n]);
            }
        }
    }

    #[test]
    fn assignment_validation() {
        let cb = ModeCodebook::default_codebook();
        assert!(ModeAssignment::uniform(3, 0, 0).validate(&cb, 3).is_ok());
        assert!(ModeAssignment::uniform(3, 8, 0).validate(&cb, 3).is_err());
        assert!(ModeAssignment::uniform(3, 0, 4).validate(&cb, 3).is_err());
        assert!(ModeAssignment::uniform(3, 0, 0).validate(&cb, 4).is_err());
        let mut bad = ModeAssignment::uniform(3, 0, 0);
        bad.pattern_idx[1] = 2;
        assert!(bad.validate(&cb, 3).is_err());
    }

    #[test]
    fn codebook_file_roundtrip_is_bit_exact() {
        let cb = ModeCodebook::default_codebook();
        let text = serde_json::to_string_pretty(&cb.to_file()).unwrap();
        let back: CodebookFile = serde_json::from_str(&text).unwrap();
        let cb2 = ModeCodebook::from_file(&back).unwrap();
        for (a, b) in cb.patterns().iter().zip(cb2.patterns()) {
            for (x, y) in a.samples().iter().zip(b.samples()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(cb, cb2);
    }

    #[test]
    fn corrupted_sample_fails_check_for_that_pattern_only() {
        let mut file = ModeCodebook::default_codebook().to_file();
        file.patterns[3].samples[360] *= 5.0;
        let checks = file.check_normalization();
        let failed: Vec<usize> = checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.index)
            .collect();
        assert_eq!(failed, vec![3]);
        assert!(matches!(
            ModeCodebook::from_file(&file),
            Err(Error::Unnormalized { index: 3, .. })
        ));
    }

    #[test]
    fn wrap_angle_range() {
        for t in [-7.0, -PI, -1.0, 0.0, PI, 4.0, 10.0] {
            let w = wrap_angle(t);
            assert!((-PI..PI).contains(&w), "{t} -> {w}");
        }
    }
}
