//! Multi-user downlink: sum-rate and the WMMSE precoder.

use super::SolverSettings;
use crate::error::{Error, Result};
use crate::linalg::{c, is_finite_mat, CMat};
use nalgebra::DMatrix;

/// `sum_k log2(1 + |h_k f_k|^2 / (sum_{j != k} |h_k f_j|^2 + noise))`, where
/// `h_k` is row `k` of `h` and `f_j` column `j` of `precoder`.
pub fn sum_rate(h: &CMat, precoder: &CMat, noise: f64) -> Result<f64> {
    if !(noise > 0.0) {
        return Err(Error::invalid("noise", "must be > 0"));
    }
    if h.ncols() != precoder.nrows() || h.nrows() != precoder.ncols() {
        return Err(Error::Dimension(format!(
            "channel {}x{} vs precoder {}x{}",
            h.nrows(),
            h.ncols(),
            precoder.nrows(),
            precoder.ncols()
        )));
    }
    let g = h * precoder;
    Ok(rate_from_gains(&g, noise))
}

fn rate_from_gains(g: &CMat, noise: f64) -> f64 {
    (0..g.nrows())
        .map(|k| {
            let total: f64 = g.row(k).iter().map(|x| x.norm_sqr()).sum();
            let sig = g[(k, k)].norm_sqr();
            (1.0 + sig / (total - sig + noise)).log2()
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct WmmseSolution {
    /// `N x K`, total power equal to the budget.
    pub precoder: CMat,
    pub rate: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

const MAX_EXTRAPOLATION: f64 = 1e9;

fn scale_to_power(v: &mut CMat, power: f64) -> bool {
    let p = v.norm_squared();
    if p > 0.0 && p.is_finite() {
        *v *= c((power / p).sqrt());
        true
    } else {
        false
    }
}

/// Maximum-ratio columns, falling back to unit vectors for silent users.
fn mrt_init(h: &CMat, power: f64) -> CMat {
    let (k, n) = h.shape();
    let mut v = DMatrix::from_fn(n, k, |i, j| h[(j, i)].conj());
    for j in 0..k {
        let norm = v.column(j).norm();
        if norm > 0.0 {
            v.column_mut(j).unscale_mut(norm);
        } else {
            v.column_mut(j).fill(c(0.0));
            v[(j % n, j)] = c(1.0);
        }
    }
    scale_to_power(&mut v, power);
    v
}

/// Regularized zero-forcing, `H^H (H H^H + K noise / P I)^-1`, scaled to
/// the budget. Falls back to maximum ratio if the solve fails.
fn rzf_init(h: &CMat, power: f64, noise: f64) -> CMat {
    let k = h.nrows();
    let reg = CMat::identity(k, k) * c(k as f64 * noise / power);
    let mut v = match (h * h.adjoint() + reg).lu().solve(&CMat::identity(k, k)) {
        Some(inv) => h.adjoint() * inv,
        None => return mrt_init(h, power),
    };
    if !is_finite_mat(&v) || !scale_to_power(&mut v, power) {
        return mrt_init(h, power);
    }
    v
}

/// Weighted MMSE sum-rate maximization under a total power budget.
///
/// Every iterate is rescaled to the full budget, which never lowers the sum
/// rate, so the rate trace is non-decreasing. The transmit update is solved in
/// the `K x K` user space: `V = H^H (D H H^H + mu I)^-1 Y`, with `mu` found by
/// bisection whenever the unconstrained update overshoots the budget.
pub fn wmmse_precoder(
    h: &CMat,
    power: f64,
    noise: f64,
    settings: &SolverSettings,
    warm_start: Option<&CMat>,
) -> Result<WmmseSolution> {
    if !is_finite_mat(h) {
        return Err(Error::NonFinite("channel"));
    }
    if !(power > 0.0) {
        return Err(Error::invalid("power", "must be > 0"));
    }
    if !(noise > 0.0) {
        return Err(Error::invalid("noise", "must be > 0"));
    }
    let (k, n) = h.shape();
    // Sum-rate has several stationary points; at high SNR some have a user
    // switched off. Each start is run to convergence and the best rate kept.
    let mut starts = vec![mrt_init(h, power), rzf_init(h, power, noise)];
    if let Some(w) = warm_start {
        if w.shape() == (n, k) && is_finite_mat(w) && w.norm_squared() > 0.0 {
            let mut w = w.clone();
            scale_to_power(&mut w, power);
            starts.push(w);
        }
    }
    let mut best: Option<WmmseSolution> = None;
    let mut iterations = 0;
    for v in starts {
        let sol = wmmse_from(h, v, power, noise, settings)?;
        iterations += sol.iterations;
        if best.as_ref().is_none_or(|b| sol.rate > b.rate) {
            best = Some(sol);
        }
    }
    let mut best = best.expect("at least two starts");
    best.iterations = iterations;
    Ok(best)
}

fn wmmse_from(
    h: &CMat,
    mut v: CMat,
    power: f64,
    noise: f64,
    settings: &SolverSettings,
) -> Result<WmmseSolution> {
    let k = h.nrows();
    let mut rate = rate_from_gains(&(h * &v), noise);
    let mut trace = vec![rate];
    if h.iter().all(|x| x.norm_sqr() == 0.0) {
        return Ok(WmmseSolution {
            precoder: v,
            rate,
            trace,
            iterations: 0,
        });
    }

    let hh = h.adjoint();
    let gram = h * &hh;
    let mut iterations = 0;
    let mut step = 1.0;
    for _ in 0..settings.max_iters {
        iterations += 1;
        let g = h * &v;
        let mut d = vec![0.0; k];
        let mut y = CMat::zeros(k, k);
        for user in 0..k {
            let total: f64 = g.row(user).iter().map(|x| x.norm_sqr()).sum::<f64>() + noise;
            let u = g[(user, user)] / total;
            let mse = 1.0 - g[(user, user)].norm_sqr() / total;
            let w = 1.0 / mse.max(1e-300);
            d[user] = w * u.norm_sqr();
            y[(user, user)] = u * w;
        }
        let dg = DMatrix::from_fn(k, k, |i, j| gram[(i, j)] * d[i]);
        let mut next = match transmit_update(&hh, &gram, &dg, &y, power) {
            Some(x) => x,
            None => break,
        };
        if !scale_to_power(&mut next, power) {
            break;
        }
        let mut next_rate = rate_from_gains(&(h * &next), noise);
        if !next_rate.is_finite() {
            return Err(Error::Solver("WMMSE produced a non-finite rate".into()));
        }
        // Safeguarded extrapolation of the per-user power split. At high SNR
        // plain WMMSE moves power between users very slowly; the longer step
        // keeps the new beam directions and is used only when it raises the
        // rate.
        if next_rate >= rate {
            if let Some(ext) = extrapolate_powers(&v, &next, step, power) {
                let r = rate_from_gains(&(h * &ext), noise);
                if r.is_finite() && r > next_rate {
                    next = ext;
                    next_rate = r;
                    step = (2.0 * step).min(MAX_EXTRAPOLATION);
                } else {
                    step = (0.5 * step).max(1.0);
                }
            }
        }
        let improved = next_rate >= rate;
        let delta = next_rate - rate;
        if improved {
            v = next;
            rate = next_rate;
        }
        trace.push(rate);
        if !improved || delta.abs() < settings.tol {
            break;
        }
    }
    Ok(WmmseSolution {
        precoder: v,
        rate,
        trace,
        iterations,
    })
}

/// `next` with column powers moved `step` further along `next - prev`,
/// clamped at zero and rescaled to the budget.
fn extrapolate_powers(prev: &CMat, next: &CMat, step: f64, power: f64) -> Option<CMat> {
    let mut out = next.clone();
    for j in 0..next.ncols() {
        let p0 = prev.column(j).norm_squared();
        let p1 = next.column(j).norm_squared();
        if p1 <= 0.0 {
            continue;
        }
        let target = (p1 + step * (p1 - p0)).max(0.0);
        out.column_mut(j).scale_mut((target / p1).sqrt());
    }
    scale_to_power(&mut out, power).then_some(out)
}

fn precoder_for(hh: &CMat, dg: &CMat, y: &CMat, mu: f64) -> Option<CMat> {
    let k = dg.nrows();
    let m = dg + CMat::identity(k, k) * c(mu);
    let sol = m.lu().solve(y)?;
    let v = hh * sol;
    is_finite_mat(&v).then_some(v)
}

fn transmit_update(hh: &CMat, gram: &CMat, dg: &CMat, y: &CMat, power: f64) -> Option<CMat> {
    let power_of = |v: &CMat| v.norm_squared();
    if let Some(v) = precoder_for(hh, dg, y, 0.0) {
        if power_of(&v) <= power {
            return Some(v);
        }
    }
    let scale = gram.norm().max(1e-300);
    let mut lo = 0.0;
    let mut hi = scale.max((power_of(&(hh * y)) / power).sqrt()).max(1e-300);
    let mut best = None;
    for _ in 0..200 {
        match precoder_for(hh, dg, y, hi) {
            Some(v) if power_of(&v) <= power => {
                best = Some(v);
                break;
            }
            _ => {
                lo = hi;
                hi *= 2.0;
            }
        }
    }
    let mut best = best?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match precoder_for(hh, dg, y, mid) {
            Some(v) if power_of(&v) <= power => {
                hi = mid;
                best = v;
            }
            _ => lo = mid,
        }
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(rows, cols, |_, _| {
            crate::channel::complex_gaussian(&mut rng, 1.0)
        })
    }

    /// Direct SINR evaluation, written independently of `sum_rate`.
    fn sinr_oracle(h: &CMat, f: &CMat, noise: f64) -> f64 {
        let k = h.nrows();
        let mut total = 0.0;
        for user in 0..k {
            let mut sig = 0.0;
            let mut interf = 0.0;
            for j in 0..k {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..h.ncols() {
                    acc += h[(user, n)] * f[(n, j)];
                }
                if j == user {
                    sig = acc.norm_sqr();
                } else {
                    interf += acc.norm_sqr();
                }
            }
            total += (1.0 + sig / (interf + noise)).ln() / std::f64::consts::LN_2;
        }
        total
    }

    #[test]
    fn sum_rate_scalar() {
        let h = CMat::from_element(1, 1, c(1.0));
        assert_eq!(sum_rate(&h, &h, 1.0).unwrap(), 1.0);
        assert!(sum_rate(&h, &h, 0.0).is_err());
        assert!(sum_rate(&h, &CMat::zeros(2, 1), 1.0).is_err());
    }

    #[test]
    fn sum_rate_without_interference() {
        let h = CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(2.0)]);
        let f = CMat::from_row_slice(2, 2, &[c(3.0), c(0.0), c(0.0), c(0.5)]);
        let r = sum_rate(&h, &f, 0.5).unwrap();
        let want = (1.0f64 + 9.0 / 0.5).log2() + (1.0f64 + 1.0 / 0.5).log2();
        assert!((r - want).abs() < 1e-12);
    }

    #[test]
    fn sum_rate_matches_oracle() {
        for seed in 0..20 {
            let h = rand_mat(3, 5, seed);
            let f = rand_mat(5, 3, seed + 100);
            let r = sum_rate(&h, &f, 0.7).unwrap();
            assert!((r - sinr_oracle(&h, &f, 0.7)).abs() < 1e-12);
        }
    }

    #[test]
    fn wmmse_single_user_is_capacity() {
        let s = SolverSettings::default();
        for seed in 0..20 {
            let h = rand_mat(1, 6, seed);
            let sol = wmmse_precoder(&h, 2.0, 0.1, &s, None).unwrap();
            let want = (1.0 + 2.0 * h.norm_squared() / 0.1).log2();
            assert!((sol.rate / want - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn wmmse_orthogonal_users_split_power() {
        let h = CMat::from_row_slice(2, 3, &[c(1.0), c(0.0), c(0.0), c(0.0), c(1.0), c(0.0)]);
        let sol = wmmse_precoder(&h, 4.0, 0.5, &SolverSettings::default(), None).unwrap();
        let want = 2.0 * (1.0f64 + 2.0 / 0.5).log2();
        assert!((sol.rate - want).abs() < 1e-6, "{} vs {}", sol.rate, want);
        assert!((sol.precoder.norm_squared() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn wmmse_zero_channel() {
        let sol = wmmse_precoder(
            &CMat::zeros(2, 4),
            1.0,
            1.0,
            &SolverSettings::default(),
            None,
        )
        .unwrap();
        assert_eq!(sol.rate, 0.0);
        assert!(sol.precoder.norm_squared() <= 1.0 + 1e-9);
    }

    #[test]
    fn wmmse_converges_at_high_snr() {
        // correlated users far above the noise floor: the optimal power split
        // is far from the regularized zero-forcing start
        let loose = SolverSettings::default();
        let tight = SolverSettings {
            max_iters: 100_000,
            tol: 1e-14,
        };
        for seed in 0..20 {
            let mut h = rand_mat(2, 2, seed) * c(1e-3);
            for j in 0..2 {
                let x = h[(0, j)];
                h[(1, j)] += x * 2.0;
            }
            let a = wmmse_precoder(&h, 1.0, 1e-11, &loose, None).unwrap();
            let b = wmmse_precoder(&h, 1.0, 1e-11, &tight, None).unwrap();
            assert!(
                a.rate >= b.rate * (1.0 - 1e-6),
                "{seed}: {} vs {}",
                a.rate,
                b.rate
            );
        }
    }

    #[test]
    fn wmmse_rejects_non_finite() {
        let mut h = rand_mat(2, 2, 1);
        h[(0, 0)] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(
            wmmse_precoder(&h, 1.0, 1.0, &SolverSettings::default(), None),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn wmmse_monotone_and_power_tight() {
        let s = SolverSettings::default();
        for seed in 0..100 {
            let h = rand_mat(3, 4, seed);
            let sol = wmmse_precoder(&h, 1.5, 0.05, &s, None).unwrap();
            for w in sol.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
            assert!((sol.precoder.norm_squared() - 1.5).abs() < 1e-9);
            assert!((sum_rate(&h, &sol.precoder, 0.05).unwrap() - sol.rate).abs() < 1e-9);
        }
    }

    #[test]
    fn wmmse_beats_mrt() {
        let s = SolverSettings::default();
        for seed in 0..20 {
            let h = rand_mat(2, 4, seed);
            let mrt = mrt_init(&h, 1.0);
            let sol = wmmse_precoder(&h, 1.0, 0.01, &s, None).unwrap();
            assert!(sol.rate >= sum_rate(&h, &mrt, 0.01).unwrap() - 1e-12);
        }
    }
}
