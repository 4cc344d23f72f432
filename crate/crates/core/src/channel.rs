//! Channel synthesis: geometric multipath downlink channels for the
//! communication users and monostatic line-of-sight round-trip channels for
//! the radar target and clutter.
//!
//! The path-loss formula yields a *power* gain `alpha`. A one-way link carries
//! amplitude `sqrt(alpha)`, a monostatic round trip carries amplitude `alpha`
//! (power `alpha^2`).

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::em::{ArrayGeometry, ModeAssignment, ModeCodebook, PolarizationState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    /// Reference loss at `d0`, dB.
    pub c0_db: f64,
    /// Reference distance, meters.
    pub d0: f64,
    /// Path-loss exponent.
    pub kappa: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            c0_db: 30.0,
            d0: 1.0,
            kappa: 2.2,
        }
    }
}

impl PathLossParams {
    pub fn new(c0_db: f64, d0: f64, kappa: f64) -> Result<Self> {
        let p = Self { c0_db, d0, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.c0_db.is_finite() {
            return Err(Error::invalid("c0_db", "must be finite"));
        }
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return Err(Error::invalid("d0", "must be > 0"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", "must be > 0"));
        }
        Ok(())
    }

    /// `10^(-C0/10) * (r/D0)^(-kappa)`.
    pub fn gain(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid(
                "r",
                format!("distance must be > 0, got {r}"),
            ));
        }
        Ok(10f64.powf(-self.c0_db / 10.0) * (r / self.d0).powf(-self.kappa))
    }
}

pub fn path_loss(params: &PathLossParams, r: f64) -> Result<f64> {
    params.gain(r)
}

/// Variances of the co-polar (diagonal) and cross-polar (off-diagonal)
/// entries of a random depolarization matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepolarizationProfile {
    pub co_polar: f64,
    pub cross_polar: f64,
}

impl DepolarizationProfile {
    pub fn new(co_polar: f64, cross_polar: f64) -> Result<Self> {
        if !(co_polar >= 0.0
            && cross_polar >= 0.0
            && co_polar.is_finite()
            && cross_polar.is_finite())
        {
            return Err(Error::invalid(
                "depolarization",
                "variances must be finite and >= 0",
            ));
        }
        Ok(Self {
            co_polar,
            cross_polar,
        })
    }

    /// Unit co-polar variance, cross-polar variance `chi`.
    pub fn with_xpd(chi: f64) -> Result<Self> {
        Self::new(1.0, chi)
    }
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Zero-mean complex Gaussian 2x2 scattering matrix with i.i.d. entries.
pub fn sample_depolarization<R: Rng + ?Sized>(
    rng: &mut R,
    profile: &DepolarizationProfile,
) -> Matrix2<Complex64> {
    let hh = complex_gaussian(rng, profile.co_polar);
    let hv = complex_gaussian(rng, profile.cross_polar);
    let vh = complex_gaussian(rng, profile.cross_polar);
    let vv = complex_gaussian(rng, profile.co_polar);
    Matrix2::new(hh, hv, vh, vv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationPath {
    pub gain: Complex64,
    /// Departure azimuth at the array, radians.
    pub angle: f64,
    pub depolarization: Matrix2<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommUser {
    pub r: f64,
    pub theta: f64,
    pub paths: Vec<PropagationPath>,
    pub rx_polar: PolarizationState,
}

impl CommUser {
    /// Same user moved to `(r, theta)`; path angles keep their offsets from
    /// the line-of-sight direction.
    pub fn relocated(&self, r: f64, theta: f64) -> Self {
        let shift = theta - self.theta;
        let mut user = self.clone();
        user.r = r;
        user.theta = theta;
        for p in &mut user.paths {
            p.angle =
                (p.angle + shift).clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
        }
        user
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityRole {
    Target,
    Clutter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingEntity {
    pub role: EntityRole,
    pub r: f64,
    pub theta: f64,
    /// Radar cross-section as a linear power reflectivity.
    pub reflectivity: f64,
    pub scattering: Matrix2<Complex64>,
}

impl SensingEntity {
    pub fn validate(&self) -> Result<()> {
        if !(self.reflectivity > 0.0 && self.reflectivity.is_finite()) {
            return Err(Error::invalid("reflectivity", "must be > 0"));
        }
        if !(self.r > 0.0 && self.r.is_finite() && self.theta.is_finite()) {
            return Err(Error::invalid("position", "r must be > 0 and theta finite"));
        }
        Ok(())
    }
}

/// Per-element transmit vector `g_n(theta) a_n(theta) p_n` for every element.
fn element_jones(
    geom: &ArrayGeometry,
    codebook: &ModeCodebook,
    assign: &ModeAssignment,
    theta: f64,
    conjugate_polar: bool,
) -> Result<Vec<Vector2<Complex64>>> {
    (0..geom.num_elements())
        .map(|n| {
            let g = codebook.pattern(assign.pattern_idx[n])?.gain(theta);
            let p = codebook.polarization(assign.polar_idx[n])?.jones();
            let p = if conjugate_polar {
                p.map(|c| c.conj())
            } else {
                *p
            };
            Ok(p * (geom.element_phase(n, theta) * g))
        })
        .collect()
}

/// `K x N` downlink matrix. Row `k`, column `n` is
/// `sqrt(alpha_k) * sum_l beta_kl * (rx_k^H Psi_kl p_n) * g_n(theta_kl) a_n(theta_kl)`.
pub fn comm_channel(
    geom: &ArrayGeometry,
    codebook: &ModeCodebook,
    assign: &ModeAssignment,
    users: &[CommUser],
    params: &PathLossParams,
) -> Result<DMatrix<Complex64>> {
    if users.is_empty() {
        return Err(Error::Dimension("no communication users".into()));
    }
    assign.validate(codebook, geom.num_elements())?;
    let n_el = geom.num_elements();
    let mut h = DMatrix::zeros(users.len(), n_el);
    for (k, user) in users.iter().enumerate() {
        let amp = params.gain(user.r)?.sqrt();
        let rx = user.rx_polar.jones().map(|c| c.conj());
        for path in &user.paths {
            let rx_s = path.depolarization.transpose() * rx;
            let tx = element_jones(geom, codebook, assign, path.angle, false)?;
            for (n, t) in tx.iter().enumerate() {
                h[(k, n)] += path.gain * (rx_s[0] * t[0] + rx_s[1] * t[1]);
            }
        }
        for n in 0..n_el {
            h[(k, n)] *= amp;
        }
    }
    Ok(h)
}

/// `N x N` monostatic round-trip matrix toward one reflector:
/// `H[m,n] = alpha(r) (p_m^H S p_n) g_m(theta) g_n(theta) e^{i 2 pi d (m+n) sin theta}`.
pub fn sensing_channel(
    geom: &ArrayGeometry,
    codebook: &ModeCodebook,
    assign_tx: &ModeAssignment,
    assign_rx: &ModeAssignment,
    entity: &SensingEntity,
    params: &PathLossParams,
) -> Result<DMatrix<Complex64>> {
    entity.validate()?;
    assign_tx.validate(codebook, geom.num_elements())?;
    assign_rx.validate(codebook, geom.num_elements())?;
    let alpha = params.gain(entity.r)?;
    let tx = element_jones(geom, codebook, assign_tx, entity.theta, false)?;
    let rx = element_jones(geom, codebook, assign_rx, entity.theta, true)?;
    let s = &entity.scattering;
    let n = geom.num_elements();
    let st: Vec<Vector2<Complex64>> = tx.iter().map(|t| s * t).collect();
    Ok(DMatrix::from_fn(n, n, |m, k| {
        alpha * (rx[m][0] * st[k][0] + rx[m][1] * st[k][1])
    }))
}

/// Every channel an objective needs for one mode assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h_comm: DMatrix<Complex64>,
    pub h_target: DMatrix<Complex64>,
    pub h_clutter: Vec<DMatrix<Complex64>>,
    pub target_reflectivity: f64,
    pub clutter_reflectivity: Vec<f64>,
    pub noise: f64,
}

impl ChannelSet {
    pub fn validate(&self) -> Result<()> {
        let n = self.h_target.nrows();
        if self.h_target.ncols() != n || self.h_comm.ncols() != n {
            return Err(Error::Dimension(
                "channel matrices disagree on element count".into(),
            ));
        }
        if self.h_clutter.len() != self.clutter_reflectivity.len() {
            return Err(Error::Dimension(
                "clutter matrices and reflectivities differ in count".into(),
            ));
        }
        if self.h_clutter.iter().any(|c| c.shape() != (n, n)) {
            return Err(Error::Dimension("clutter matrix is not N x N".into()));
        }
        let finite =
            |m: &DMatrix<Complex64>| m.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if !finite(&self.h_comm) || !finite(&self.h_target) || !self.h_clutter.iter().all(finite) {
            return Err(Error::NonFinite("channel set"));
        }
        if !(self.noise > 0.0) {
            return Err(Error::invalid("noise", "must be > 0"));
        }
        Ok(())
    }

    /// Writes every matrix in the dump format, comm first, then target, then
    /// clutter in order.
    pub fn write_dump<W: Write>(&self, w: &mut W) -> Result<()> {
        write_matrix_dump(w, "h_comm", &self.h_comm)?;
        write_matrix_dump(w, "h_target", &self.h_target)?;
        for (i, c) in self.h_clutter.iter().enumerate() {
            write_matrix_dump(w, &format!("h_clutter_{i}"), c)?;
        }
        Ok(())
    }
}

/// Text dump: a `# name rows cols` header, then one line per row holding
/// `re im` pairs in column order.
pub fn write_matrix_dump<W: Write>(w: &mut W, name: &str, m: &DMatrix<Complex64>) -> Result<()> {
    writeln!(w, "# {name} {} {}", m.nrows(), m.ncols())?;
    let mut line = String::new();
    for r in 0..m.nrows() {
        line.clear();
        for c in 0..m.ncols() {
            if c > 0 {
                line.push(' ');
            }
            let v = m[(r, c)];
            write!(line, "{:?} {:?}", v.re, v.im).expect("string write");
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads every matrix from a dump produced by [`write_matrix_dump`].
pub fn read_matrix_dump<R: BufRead>(r: R) -> Result<Vec<(String, DMatrix<Complex64>)>> {
    let mut out = Vec::new();
    let mut lines = r.lines();
    while let Some(line) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let header: Vec<&str> = line.trim_start_matches('#').split_whitespace().collect();
        if !line.starts_with('#') || header.len() != 3 {
            return Err(Error::invalid(
                "matrix dump",
                format!("bad header line {line:?}"),
            ));
        }
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::invalid("matrix dump", format!("bad dimension {s:?}: {e}")))
        };
        let (rows, cols) = (parse_dim(header[1])?, parse_dim(header[2])?);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = lines
                .next()
                .ok_or_else(|| Error::invalid("matrix dump", "truncated matrix"))??;
            let vals = row
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::invalid("matrix dump", e.to_string()))?;
            if vals.len() != 2 * cols {
                return Err(Error::invalid("matrix dump", "row length mismatch"));
            }
            data.extend(vals.chunks(2).map(|p| Complex64::new(p[0], p[1])));
        }
        out.push((
            header[0].to_string(),
            DMatrix::from_row_slice(rows, cols, &data),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::steering_vector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn path_loss_examples() {
        let p = PathLossParams::default();
        assert!((path_loss(&p, 1.0).unwrap() - 1e-3).abs() < 1e-18);
        assert!((path_loss(&p, 10.0).unwrap() / 6.309_573_444_801_932e-6 - 1.0).abs() < 1e-12);
        // 1e-3 * 30^-2.2, evaluated with 40-digit arithmetic
        assert!((path_loss(&p, 30.0).unwrap() / 5.627_729_823_467_98e-7 - 1.0).abs() < 1e-12);
        assert!(path_loss(&p, 0.0).is_err());
        assert!(path_loss(&p, -3.0).is_err());
    }

    #[test]
    fn path_loss_monotone() {
        let p = PathLossParams::default();
        let mut prev = f64::INFINITY;
        for i in 1..200 {
            let g = p.gain(i as f64 * 0.5).unwrap();
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn depolarization_zero_profile_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = sample_depolarization(&mut rng, &DepolarizationProfile::new(0.0, 0.0).unwrap());
        assert_eq!(z, Matrix2::zeros());
        let prof = DepolarizationProfile::with_xpd(0.3).unwrap();
        let a = sample_depolarization(&mut ChaCha8Rng::seed_from_u64(9), &prof);
        let b = sample_depolarization(&mut ChaCha8Rng::seed_from_u64(9), &prof);
        assert_eq!(a, b);
    }

    #[test]
    fn depolarization_second_moments() {
        let prof = DepolarizationProfile::with_xpd(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut acc = [0.0f64; 4];
        let mut mean = [c(0.0, 0.0); 4];
        for _ in 0..n {
            let s = sample_depolarization(&mut rng, &prof);
            for (i, v) in s.iter().enumerate() {
                acc[i] += v.norm_sqr();
                mean[i] += v;
            }
        }
        // column-major: (0,0), (1,0), (0,1), (1,1)
        let want = [1.0, 0.3, 0.3, 1.0];
        for i in 0..4 {
            let m2 = acc[i] / n as f64;
            assert!((m2 / want[i] - 1.0).abs() < 0.03, "entry {i}: {m2}");
            assert!((mean[i] / n as f64).norm() < 0.02);
        }
    }

    fn los_user(
        theta: f64,
        r: f64,
        polar: PolarizationState,
        depol: Matrix2<Complex64>,
    ) -> CommUser {
        CommUser {
            r,
            theta,
            paths: vec![PropagationPath {
                gain: c(0.6, -0.8),
                angle: theta,
                depolarization: depol,
            }],
            rx_polar: polar,
        }
    }

    #[test]
    fn comm_single_los_path_is_scaled_steering_vector() {
        let g = ArrayGeometry::half_wavelength(5).unwrap();
        let cb = ModeCodebook::default_codebook();
        let pl = PathLossParams::default();
        let theta = 0.4;
        let user = los_user(
            theta,
            40.0,
            PolarizationState::horizontal(),
            Matrix2::identity(),
        );
        let h = comm_channel(&g, &cb, &ModeAssignment::uniform(5, 0, 0), &[user], &pl).unwrap();
        let a = steering_vector(&g, theta);
        let amp = pl.gain(40.0).unwrap().sqrt();
        for n in 0..5 {
            assert!((h[(0, n)] - a[n] * c(0.6, -0.8) * amp).norm() < 1e-12 * amp);
        }
    }

    #[test]
    fn comm_orthogonal_polarizations_give_zero_row() {
        let g = ArrayGeometry::half_wavelength(4).unwrap();
        let cb = ModeCodebook::default_codebook();
        let user = los_user(
            0.2,
            35.0,
            PolarizationState::vertical(),
            Matrix2::identity(),
        );
        let h = comm_channel(
            &g,
            &cb,
            &ModeAssignment::uniform(4, 3, 0),
            &[user],
            &PathLossParams::default(),
        )
        .unwrap();
        assert!(h.iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn comm_rejects_empty_users_and_bad_assignment() {
        let g = ArrayGeometry::half_wavelength(4).unwrap();
        let cb = ModeCodebook::default_codebook();
        let pl = PathLossParams::default();
        assert!(comm_channel(&g, &cb, &ModeAssignment::uniform(4, 0, 0), &[], &pl).is_err());
        let user = los_user(
            0.2,
            35.0,
            PolarizationState::vertical(),
            Matrix2::identity(),
        );
        assert!(comm_channel(&g, &cb, &ModeAssignment::uniform(3, 0, 0), &[user], &pl).is_err());
    }

    fn entity(theta: f64, s: Matrix2<Complex64>) -> SensingEntity {
        SensingEntity {
            role: EntityRole::Target,
            r: 45.0,
            theta,
            reflectivity: 1.0,
            scattering: s,
        }
    }

    #[test]
    fn sensing_omni_identity_is_rank_one_outer_product() {
        let g = ArrayGeometry::half_wavelength(4).unwrap();
        let cb = ModeCodebook::default_codebook();
        let pl = PathLossParams::default();
        let m = ModeAssignment::uniform(4, 0, 0);
        let theta = -0.3;
        let h = sensing_channel(&g, &cb, &m, &m, &entity(theta, Matrix2::identity()), &pl).unwrap();
        let a = steering_vector(&g, theta);
        let alpha = pl.gain(45.0).unwrap();
        let want = &a * a.transpose() * c(alpha, 0.0);
        assert!((h - want).norm() < 1e-12 * alpha);

        let h0 = sensing_channel(&g, &cb, &m, &m, &entity(0.0, Matrix2::identity()), &pl).unwrap();
        assert!(h0
            .iter()
            .all(|v| (v - c(alpha, 0.0)).norm() < 1e-15 * alpha));
    }

    #[test]
    fn sensing_per_element_polar_mix_matches_diagonal_factorization() {
        // rank-one S = x y^H separates into diag(p_m^H x) a a^T diag(y^H p_n)
        let g = ArrayGeometry::half_wavelength(4).unwrap();
        let cb = ModeCodebook::default_codebook();
        let pl = PathLossParams::default();
        let x = Vector2::new(c(0.3, 0.2), c(-0.5, 0.9));
        let y = Vector2::new(c(1.1, -0.4), c(0.2, 0.7));
        let s = x * y.adjoint();
        let tx = ModeAssignment::per_element(vec![0; 4], vec![0, 1, 2, 3]);
        let rx = ModeAssignment::per_element(vec![0; 4], vec![3, 2, 0, 1]);
        let theta = 0.5;
        let h = sensing_channel(&g, &cb, &tx, &rx, &entity(theta, s), &pl).unwrap();
        let a = steering_vector(&g, theta);
        let alpha = pl.gain(45.0).unwrap();
        let pols = cb.polarizations();
        let d_rx = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(4, |m, _| {
            pols[rx.polar_idx[m]].jones().dotc(&x)
        }));
        let d_tx = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(4, |n, _| {
            y.dotc(pols[tx.polar_idx[n]].jones())
        }));
        let want = d_rx * (&a * a.transpose()) * d_tx * c(alpha, 0.0);
        assert!((h - want).norm() < 1e-12 * alpha);
    }

    #[test]
    fn dump_roundtrip() {
        let m = DMatrix::from_fn(2, 3, |r, k| c(r as f64 + 0.1, -(k as f64) * 1e-7));
        let mut buf = Vec::new();
        write_matrix_dump(&mut buf, "x", &m).unwrap();
        let back = read_matrix_dump(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].0, "x");
        assert_eq!(back[0].1, m);
    }
}
