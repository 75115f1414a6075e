//! Dense linear-algebra helpers: operator norms, spectra, and the small
//! fitting routines used by the study operations.

use nalgebra::{DMatrix, DVector};

/// Size above which operator norms switch from dense factorizations to power
/// iteration.
const DENSE_NORM_LIMIT: usize = 2048;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Spectral norm: symmetric matrices through the (robust) dense symmetric
/// eigensolver; everything else, and anything above the dense limit (2048),
/// through power iteration on `AᵀA`.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows().max(a.ncols());
    if n == 0 {
        return 0.0;
    }
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    if n <= DENSE_NORM_LIMIT && is_symmetric(a, 1e-12 * scale) {
        a.clone().symmetric_eigen().eigenvalues.amax()
    } else {
        power_norm(a)
    }
}

/// Singular values, descending: absolute eigenvalues for symmetric input,
/// one-sided Jacobi otherwise.
pub fn singular_values_desc(a: &DMatrix<f64>) -> Vec<f64> {
    let scale = a.amax();
    let mut s: Vec<f64> = if a.is_square() && is_symmetric(a, 1e-12 * scale.max(1e-300)) {
        a.clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|l| l.abs())
            .collect()
    } else {
        jacobi_svd(a).1
    };
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Leading singular pair `(σ₁, u₁)`.
pub fn leading_singular_pair(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let scale = a.amax();
    if a.is_square() && is_symmetric(a, 1e-12 * scale.max(1e-300)) {
        let eig = a.clone().symmetric_eigen();
        let mut best = 0usize;
        for k in 1..eig.eigenvalues.len() {
            if eig.eigenvalues[k].abs() > eig.eigenvalues[best].abs() {
                best = k;
            }
        }
        (
            eig.eigenvalues[best].abs(),
            eig.eigenvectors.column(best).into_owned(),
        )
    } else {
        let (u, s, _) = jacobi_svd(a);
        (s[0], u.column(0).into_owned())
    }
}

/// Condition number σ_max/σ_min.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values_desc(a);
    let smin = *s.last().unwrap();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        s[0] / smin
    }
}

/// One-sided Jacobi SVD, `A ≈ U·Diag(σ)·Vᵀ` with `σ` descending. Slower
/// than bidiagonalization but robust on degenerate spectra, which the
/// truncation paths depend on.
pub fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    if a.nrows() < a.ncols() {
        let (v, s, u) = jacobi_svd(&a.transpose());
        return (u, s, v);
    }
    let n = a.ncols();
    let mut w = a.clone();
    let mut v = DMatrix::identity(n, n);
    let tol = 1e-15;
    for _sweep in 0..64 {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let ci = w.column(i).into_owned();
                let cj = w.column(j).into_owned();
                let app = ci.dot(&ci);
                let aqq = cj.dot(&cj);
                let apq = ci.dot(&cj);
                if apq.abs() <= tol * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for r in 0..w.nrows() {
                    let wi = w[(r, i)];
                    let wj = w[(r, j)];
                    w[(r, i)] = c * wi - sn * wj;
                    w[(r, j)] = sn * wi + c * wj;
                }
                for r in 0..n {
                    let vi = v[(r, i)];
                    let vj = v[(r, j)];
                    v[(r, i)] = c * vi - sn * vj;
                    v[(r, j)] = sn * vi + c * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|k| w.column(k).norm()).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap());
    let mut u = DMatrix::zeros(a.nrows(), n);
    let mut vv = DMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (slot, &k) in order.iter().enumerate() {
        let s = norms[k];
        sigma.push(s);
        if s > 0.0 {
            let col = w.column(k) / s;
            u.set_column(slot, &col);
        }
        vv.set_column(slot, &v.column(k));
    }
    (u, sigma, vv)
}

/// Power iteration on `AᵀA` (tolerance 1e-10, at most 10⁴ iterations).
pub fn power_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.7391).sin());
    v /= v.norm();
    let mut last = 0.0f64;
    for _ in 0..POWER_MAX_ITERS {
        let w = a.transpose() * (a * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        let est = norm.sqrt();
        if (est - last).abs() <= POWER_TOL * est.max(1.0) {
            return est;
        }
        last = est;
    }
    last
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly).1
}

/// Ordinary least squares `y ≈ a + b x`; returns `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let a = (sy - b * sx) / n;
    (a, b)
}

/// Power-law fit `y ≈ c·x^e` minimizing the squared error in linear space
/// (Gauss–Newton, seeded from the log-log fit). Returns `(c, e)`.
///
/// This weights the asymptotic regime more heavily than a log-log fit, which
/// is the right estimator when the claim under test is about growth order.
pub fn power_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (la, e0) = {
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
        linear_fit(&lx, &ly)
    };
    let mut c = la.exp();
    let mut e = e0;
    for _ in 0..200 {
        // residual r_i = y_i - c x^e; jacobian columns d/dc = x^e, d/de = c x^e ln x
        let mut jtj = [0.0f64; 4];
        let mut jtr = [0.0f64; 2];
        for (&x, &y) in xs.iter().zip(ys) {
            let xe = x.powf(e);
            let r = y - c * xe;
            let j0 = xe;
            let j1 = c * xe * x.ln();
            jtj[0] += j0 * j0;
            jtj[1] += j0 * j1;
            jtj[2] += j1 * j0;
            jtj[3] += j1 * j1;
            jtr[0] += j0 * r;
            jtr[1] += j1 * r;
        }
        let det = jtj[0] * jtj[3] - jtj[1] * jtj[2];
        if det.abs() < 1e-300 {
            break;
        }
        let dc = (jtr[0] * jtj[3] - jtj[1] * jtr[1]) / det;
        let de = (jtj[0] * jtr[1] - jtr[0] * jtj[2]) / det;
        c += dc;
        e += de;
        if dc.abs() <= 1e-12 * c.abs().max(1e-12) && de.abs() <= 1e-12 {
            break;
        }
    }
    (c, e)
}

/// AIC of a 2-parameter model with Gaussian residuals.
fn aic(rss: f64, n: usize) -> f64 {
    n as f64 * (rss / n as f64).max(1e-300).ln() + 4.0
}

/// Compares `y = a + b ln x` against `y = c x^e` on the same data, with
/// residuals taken in `y`-space for both. Returns `(aic_log, aic_power)`;
/// lower wins.
pub fn aic_log_vs_power(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let (a, b) = linear_fit(&lx, ys);
    let rss_log: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let p = a + b * x.ln();
            (y - p) * (y - p)
        })
        .sum();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (lc, e) = linear_fit(&lx, &ly);
    let c = lc.exp();
    let rss_pow: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let p = c * x.powf(e);
            (y - p) * (y - p)
        })
        .sum();
    (aic(rss_log, xs.len()), aic(rss_pow, xs.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_of_symmetric_matches_svd() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let svd = a.clone().svd(false, false);
        assert!((operator_norm(&a) - svd.singular_values.max()).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_agrees_with_dense() {
        let n = 40;
        let a = DMatrix::from_fn(n, n, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()));
        let dense = operator_norm(&a);
        assert!((power_norm(&a) - dense).abs() < 1e-8 * dense);
    }

    #[test]
    fn power_fit_recovers_exact_law() {
        let xs: Vec<f64> = (1..8).map(|k| (1 << k) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x.powf(0.85)).collect();
        let (c, e) = power_fit(&xs, &ys);
        assert!((c - 2.5).abs() < 1e-8 && (e - 0.85).abs() < 1e-10);
    }

    #[test]
    fn jacobi_svd_handles_degenerate_spectra() {
        // rank-1 all-ones: the exact singular value is n
        let n = 32;
        let a = DMatrix::from_element(n, n, 1.0);
        let (u, s, v) = jacobi_svd(&a);
        assert!((s[0] - n as f64).abs() < 1e-10);
        assert!(s[1] < 1e-10);
        let recon = &u * DMatrix::from_diagonal(&DVector::from_vec(s.clone())) * v.transpose();
        assert!((recon - &a).amax() < 1e-10);

        // generic matrix agrees with the symmetric eigensolver route
        let b = DMatrix::from_fn(16, 16, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let (u, s, v) = jacobi_svd(&b);
        let recon = &u * DMatrix::from_diagonal(&DVector::from_vec(s.clone())) * v.transpose();
        assert!((recon - &b).amax() < 1e-12);
        assert!((operator_norm(&(&b * b.transpose())).sqrt() - s[0]).abs() < 1e-10);
    }

    #[test]
    fn aic_prefers_true_model() {
        let xs: Vec<f64> = (4..10).map(|k| (1 << k) as f64).collect();
        let log_data: Vec<f64> = xs.iter().map(|x| 3.0 + 2.0 * x.ln()).collect();
        let (al, ap) = aic_log_vs_power(&xs, &log_data);
        assert!(al < ap);
        let pow_data: Vec<f64> = xs.iter().map(|x| 0.3 * x.powf(1.2)).collect();
        let (al, ap) = aic_log_vs_power(&xs, &pow_data);
        assert!(ap < al);
    }
}
