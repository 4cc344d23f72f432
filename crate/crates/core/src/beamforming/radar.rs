//! Monostatic radar with signal-dependent clutter: SCNR, the MVDR receive
//! filter and the alternating transmit/receive design.

use super::SolverSettings;
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{
    c, is_finite_mat, normalize_phase, principal_right_singular_vector,
    solve_identity_plus_low_rank, CMat, CVec,
};

/// Borrowed view of the sensing side of a [`ChannelSet`].
#[derive(Debug, Clone, Copy)]
pub struct SensingModel<'a> {
    pub h_target: &'a CMat,
    pub target_reflectivity: f64,
    pub h_clutter: &'a [CMat],
    pub clutter_reflectivity: &'a [f64],
    pub noise: f64,
}

impl<'a> SensingModel<'a> {
    pub fn from_channels(ch: &'a ChannelSet) -> Self {
        Self {
            h_target: &ch.h_target,
            target_reflectivity: ch.target_reflectivity,
            h_clutter: &ch.h_clutter,
            clutter_reflectivity: &ch.clutter_reflectivity,
            noise: ch.noise,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.h_target.nrows()
    }

    fn check(&self) -> Result<()> {
        let n = self.num_elements();
        if self.h_target.ncols() != n {
            return Err(Error::Dimension("target channel is not square".into()));
        }
        if self.h_clutter.len() != self.clutter_reflectivity.len() {
            return Err(Error::Dimension(
                "clutter matrices and reflectivities differ in count".into(),
            ));
        }
        if self.h_clutter.iter().any(|h| h.shape() != (n, n)) {
            return Err(Error::Dimension("clutter channel is not N x N".into()));
        }
        if !is_finite_mat(self.h_target) || !self.h_clutter.iter().all(is_finite_mat) {
            return Err(Error::NonFinite("sensing channel"));
        }
        if !(self.noise > 0.0) {
            return Err(Error::invalid("noise", "must be > 0"));
        }
        Ok(())
    }

    fn check_vec(&self, v: &CVec, name: &'static str) -> Result<()> {
        if v.len() != self.num_elements() {
            return Err(Error::Dimension(format!(
                "{name} has {} entries, expected {}",
                v.len(),
                self.num_elements()
            )));
        }
        Ok(())
    }
}

/// `s_t |w^H H_t f|^2 / (sum_c s_c |w^H H_c f|^2 + noise ||w||^2)`.
pub fn scnr(model: &SensingModel<'_>, f: &CVec, w: &CVec) -> Result<f64> {
    model.check()?;
    model.check_vec(f, "transmit beamformer")?;
    model.check_vec(w, "receive filter")?;
    let wn = w.norm_squared();
    if wn == 0.0 {
        return Err(Error::invalid("w", "receive filter is zero"));
    }
    let num = model.target_reflectivity * w.dotc(&(model.h_target * f)).norm_sqr();
    let clutter: f64 = model
        .h_clutter
        .iter()
        .zip(model.clutter_reflectivity)
        .map(|(h, s)| s * w.dotc(&(h * f)).norm_sqr())
        .sum();
    Ok(num / (clutter + model.noise * wn))
}

/// SCNR-optimal receive filter `Q^-1 H_t f` with
/// `Q = sum_c s_c (H_c f)(H_c f)^H + noise I`.
pub fn mvdr_receive_filter(model: &SensingModel<'_>, f: &CVec) -> Result<CVec> {
    model.check()?;
    model.check_vec(f, "transmit beamformer")?;
    let u = model.h_target * f;
    let dirs: Vec<CVec> = model.h_clutter.iter().map(|h| h * f).collect();
    solve_identity_plus_low_rank(model.noise, &dirs, model.clutter_reflectivity, &u)
}

#[derive(Debug, Clone)]
pub struct ScnrSolution {
    pub f: CVec,
    pub w: CVec,
    pub scnr: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Alternates the MVDR receive filter with the transmit beamformer that
/// maximizes SCNR for the current filter under `||f||^2 = power`.
///
/// With the filter fixed the transmit problem is a generalized Rayleigh
/// quotient whose numerator is rank one, so the principal generalized
/// eigenvector is `B^-1 H_t^H w`.
pub fn scnr_transmit_beamformer(
    model: &SensingModel<'_>,
    power: f64,
    settings: &SolverSettings,
    warm_start: Option<&CVec>,
) -> Result<ScnrSolution> {
    model.check()?;
    if !(power > 0.0) {
        return Err(Error::invalid("power", "must be > 0"));
    }
    let n = model.num_elements();
    let mut f = match warm_start {
        Some(f0)
            if f0.len() == n && f0.norm_squared() > 0.0 && crate::linalg::is_finite_vec(f0) =>
        {
            f0.clone()
        }
        _ => principal_right_singular_vector(model.h_target).unwrap_or_else(|| {
            let mut e = CVec::zeros(n);
            e[0] = c(1.0);
            e
        }),
    };
    f *= c((power / f.norm_squared()).sqrt());
    normalize_phase(&mut f);

    let st = model.target_reflectivity;
    let mut w = mvdr_receive_filter(model, &f)?;
    let mut value = st * (model.h_target * &f).dotc(&w).re;
    let mut trace = vec![value];
    let mut iterations = 0;
    for _ in 0..settings.max_iters {
        iterations += 1;
        let cvec = model.h_target.adjoint() * &w;
        if cvec.norm_squared() == 0.0 {
            break;
        }
        let dirs: Vec<CVec> = model.h_clutter.iter().map(|h| h.adjoint() * &w).collect();
        let loading = model.noise * w.norm_squared() / power;
        let mut next_f =
            solve_identity_plus_low_rank(loading, &dirs, model.clutter_reflectivity, &cvec)?;
        let nf = next_f.norm_squared();
        if !(nf > 0.0 && nf.is_finite()) {
            return Err(Error::Solver("transmit eigenvector solve failed".into()));
        }
        next_f *= c((power / nf).sqrt());
        normalize_phase(&mut next_f);
        let next_w = mvdr_receive_filter(model, &next_f)?;
        let next_value = st * (model.h_target * &next_f).dotc(&next_w).re;
        if !next_value.is_finite() {
            return Err(Error::Solver("non-finite SCNR".into()));
        }
        let improved = next_value >= value;
        let delta = next_value - value;
        if improved {
            f = next_f;
            w = next_w;
            value = next_value;
        }
        trace.push(value);
        if !improved || delta.abs() <= settings.tol * value.abs() {
            break;
        }
    }
    Ok(ScnrSolution {
        f,
        w,
        scnr: value,
        trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{steering_vector, ArrayGeometry};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> CVec {
        CVec::from_fn(n, |_, _| crate::channel::complex_gaussian(rng, 1.0))
    }

    fn model<'a>(ht: &'a CMat, hc: &'a [CMat], sc: &'a [f64], noise: f64) -> SensingModel<'a> {
        SensingModel {
            h_target: ht,
            target_reflectivity: 1.5,
            h_clutter: hc,
            clutter_reflectivity: sc,
            noise,
        }
    }

    #[test]
    fn scnr_rank_one_no_clutter() {
        let n = 6;
        let g = ArrayGeometry::half_wavelength(n).unwrap();
        let a = steering_vector(&g, 0.37);
        let ht = &a * a.transpose();
        let m = model(&ht, &[], &[], 0.2);
        let p: f64 = 3.0;
        let f = a.map(|x| x.conj()) * c(p.sqrt() / a.norm());
        let v = scnr(&m, &f, &a).unwrap();
        // s_t * P * N^2 / noise
        let want = 1.5 * p * (n * n) as f64 / 0.2;
        assert!((v / want - 1.0).abs() < 1e-12);
        let v10 = scnr(&m, &f, &(&a * c(10.0))).unwrap();
        assert!((v10 / v - 1.0).abs() < 1e-14);
        assert!(scnr(&m, &f, &CVec::zeros(n)).is_err());
    }

    #[test]
    fn scnr_zero_for_f_in_null_space() {
        let n = 4;
        let g = ArrayGeometry::half_wavelength(n).unwrap();
        let a = steering_vector(&g, 0.1);
        let b = steering_vector(&g, -0.6);
        let ht = &a * b.transpose();
        // f orthogonal to conj(b), the only right singular direction
        let mut f = CVec::zeros(n);
        f[0] = b[1];
        f[1] = -b[0];
        let m = model(&ht, &[], &[], 1.0);
        assert!(scnr(&m, &f, &a).unwrap() < 1e-28);
    }

    #[test]
    fn mvdr_without_clutter_is_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ht = CMat::from_fn(5, 5, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let f = rand_vec(5, &mut rng);
        let m = model(&ht, &[], &[], 0.5);
        let w = mvdr_receive_filter(&m, &f).unwrap();
        let u = &ht * &f;
        assert!((w * c(0.5) - u).norm() < 1e-12);
    }

    #[test]
    fn mvdr_single_aligned_clutter_matches_sherman_morrison() {
        // H_c f = beta u: SCNR = s_t |u|^2 / (noise + s_c |beta|^2 |u|^2)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let ht = CMat::from_fn(n, n, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
        let beta = Complex64::new(0.4, -0.7);
        let hc = vec![&ht * beta];
        let sc = [10.0];
        let f = rand_vec(n, &mut rng);
        let m = model(&ht, &hc, &sc, 0.3);
        let w = mvdr_receive_filter(&m, &f).unwrap();
        let u2 = (&ht * &f).norm_squared();
        let want = 1.5 * u2 / (0.3 + 10.0 * beta.norm_sqr() * u2);
        assert!((scnr(&m, &f, &w).unwrap() / want - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mvdr_beats_random_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 5;
        for _ in 0..10 {
            let ht = CMat::from_fn(n, n, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
            let hc: Vec<CMat> = (0..2)
                .map(|_| {
                    CMat::from_fn(n, n, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0))
                })
                .collect();
            let sc = [4.0, 9.0];
            let f = rand_vec(n, &mut rng);
            let m = model(&ht, &hc, &sc, 0.1);
            let best = scnr(&m, &f, &mvdr_receive_filter(&m, &f).unwrap()).unwrap();
            for _ in 0..1000 {
                let w = rand_vec(n, &mut rng);
                assert!(scnr(&m, &f, &w).unwrap() <= best * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn alternating_rank_one_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 6;
        let a = rand_vec(n, &mut rng);
        let b = rand_vec(n, &mut rng);
        let ht = &a * b.transpose();
        let m = model(&ht, &[], &[], 0.05);
        let p = 2.0;
        let sol = scnr_transmit_beamformer(&m, p, &SolverSettings::default(), None).unwrap();
        let want = 1.5 * p * a.norm_squared() * b.norm_squared() / 0.05;
        assert!((sol.scnr / want - 1.0).abs() < 1e-10);
        let mut fb = b.map(|x| x.conj()) * c(p.sqrt() / b.norm());
        normalize_phase(&mut fb);
        assert!((&sol.f - fb).norm() < 1e-9);
        let wn = &sol.w / c(sol.w.norm());
        assert!((wn.dotc(&a).norm() / a.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn clutter_orthogonal_to_target_costs_nothing() {
        // N=4 half-wavelength: sin(theta_c) - sin(theta_t) = 1/2 gives orthogonal steering
        let g = ArrayGeometry::half_wavelength(4).unwrap();
        let at = steering_vector(&g, 0.0);
        let ac = steering_vector(&g, (0.5f64).asin());
        assert!(ac.dotc(&at).norm() < 1e-12);
        let ht = &at * at.transpose();
        let hc = vec![&ac * ac.transpose()];
        let sc = [10.0];
        let with = model(&ht, &hc, &sc, 0.01);
        let without = model(&ht, &[], &[], 0.01);
        let s = SolverSettings::default();
        let a = scnr_transmit_beamformer(&with, 1.0, &s, None).unwrap().scnr;
        let b = scnr_transmit_beamformer(&without, 1.0, &s, None)
            .unwrap()
            .scnr;
        assert!((a / b - 1.0).abs() < 1e-6);
    }

    /// Exhaustive search over unit f in C^2 (modulo global phase), each with
    /// its optimal receive filter evaluated by an explicit 2x2 inverse.
    #[test]
    fn alternating_beats_sphere_grid_n2() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..5 {
            let ht = CMat::from_fn(2, 2, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
            let hc = vec![CMat::from_fn(2, 2, |_, _| {
                crate::channel::complex_gaussian(&mut rng, 1.0)
            })];
            let sc = [5.0];
            let noise = 0.2;
            let m = model(&ht, &hc, &sc, noise);
            let sol = scnr_transmit_beamformer(&m, 1.0, &SolverSettings::default(), None).unwrap();
            let mut best: f64 = 0.0;
            for i in 0..100 {
                let t = std::f64::consts::FRAC_PI_2 * i as f64 / 99.0;
                for j in 0..100 {
                    let phi = 2.0 * std::f64::consts::PI * j as f64 / 100.0;
                    let f = CVec::from_vec(vec![c(t.cos()), Complex64::from_polar(t.sin(), phi)]);
                    let u = &ht * &f;
                    let d = &hc[0] * &f;
                    let q = &d * d.adjoint() * c(sc[0]) + CMat::identity(2, 2) * c(noise);
                    let det = q[(0, 0)] * q[(1, 1)] - q[(0, 1)] * q[(1, 0)];
                    let qi =
                        CMat::from_row_slice(2, 2, &[q[(1, 1)], -q[(0, 1)], -q[(1, 0)], q[(0, 0)]])
                            / det;
                    let v = 1.5 * u.dotc(&(qi * &u)).re;
                    best = best.max(v);
                }
            }
            let gap_db = 10.0 * (best / sol.scnr).log10();
            assert!(gap_db <= 0.01, "grid beats alternating by {gap_db} dB");
        }
    }

    #[test]
    fn alternating_trace_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 6;
        for _ in 0..50 {
            let ht = CMat::from_fn(n, n, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0));
            let hc: Vec<CMat> = (0..2)
                .map(|_| {
                    CMat::from_fn(n, n, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0))
                })
                .collect();
            let sc = [10.0, 10.0];
            let m = model(&ht, &hc, &sc, 0.01);
            let sol = scnr_transmit_beamformer(&m, 1.0, &SolverSettings::default(), None).unwrap();
            for w in sol.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
            }
            assert!((sol.f.norm_squared() - 1.0).abs() < 1e-9);
            assert!((scnr(&m, &sol.f, &sol.w).unwrap() / sol.scnr - 1.0).abs() < 1e-9);
        }
    }
}
