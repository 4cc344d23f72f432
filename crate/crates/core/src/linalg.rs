//! Small complex linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub(crate) fn is_finite_mat(m: &CMat) -> bool {
    m.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

pub(crate) fn is_finite_vec(v: &CVec) -> bool {
    v.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// Rotates `v` so its first component with magnitude above `1e-300` is real
/// and positive.
pub fn normalize_phase(v: &mut CVec) {
    if let Some(first) = v.iter().find(|x| x.norm() > 1e-300).copied() {
        let rot = first.conj() / first.norm();
        for x in v.iter_mut() {
            *x *= rot;
        }
    }
}

/// Solves `(beta I + sum_c w_c d_c d_c^H) x = b` through the `C x C`
/// Woodbury system. Requires `beta > 0` and `w_c > 0`.
pub fn solve_identity_plus_low_rank(
    beta: f64,
    dirs: &[CVec],
    weights: &[f64],
    rhs: &CVec,
) -> Result<CVec> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Solver(format!(
            "diagonal loading {beta} is not positive"
        )));
    }
    let active: Vec<usize> = (0..dirs.len()).filter(|&i| weights[i] > 0.0).collect();
    if active.is_empty() {
        return Ok(rhs / c(beta));
    }
    let k = active.len();
    // (beta I + D W D^H)^-1 = (1/beta) [I - D (beta W^-1 + D^H D)^-1 D^H]
    let mut m = CMat::zeros(k, k);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            m[(a, b)] = dirs[i].dotc(&dirs[j]);
        }
        m[(a, a)] += c(beta / weights[i]);
    }
    let proj = CVec::from_fn(k, |a, _| dirs[active[a]].dotc(rhs));
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Solver("low-rank system is not positive definite".into()))?;
    let coef = chol.solve(&proj);
    let mut x = rhs.clone();
    for (a, &i) in active.iter().enumerate() {
        x.axpy(-coef[a], &dirs[i], c(1.0));
    }
    let x = x / c(beta);
    if !is_finite_vec(&x) {
        return Err(Error::Solver("non-finite low-rank solve".into()));
    }
    Ok(x)
}

/// Dominant right singular vector of `m` by power iteration on `m^H m`,
/// phase-normalized. `None` for the zero matrix.
pub fn principal_right_singular_vector(m: &CMat) -> Option<CVec> {
    let (best_row, norm) = (0..m.nrows())
        .map(|r| (r, m.row(r).norm()))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if norm == 0.0 {
        return None;
    }
    let mut x: CVec = m.row(best_row).adjoint();
    x /= c(x.norm());
    let mh = m.adjoint();
    for _ in 0..500 {
        let mut y = &mh * (m * &x);
        let ny = y.norm();
        if ny == 0.0 {
            break;
        }
        y /= c(ny);
        normalize_phase(&mut y);
        let delta = (&y - &x).norm();
        x = y;
        if delta < 1e-14 {
            break;
        }
    }
    normalize_phase(&mut x);
    Some(x)
}

/// Least-squares solution of `a x = b` through the SVD pseudo-inverse.
pub fn least_squares(a: &CMat, b: &CMat) -> Result<CMat> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = smax * 1e-12 * a.nrows().max(a.ncols()) as f64;
    if smax == 0.0 {
        return Ok(CMat::zeros(a.ncols(), b.ncols()));
    }
    svd.solve(b, eps).map_err(|e| Error::Solver(e.to_string()))
}
