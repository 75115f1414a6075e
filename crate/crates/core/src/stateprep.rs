//! Classical simulation of the two state-preparation procedures: smooth
//! functions through their sparse Fourier coefficients, and arbitrary unit
//! vectors through magnitude-level sets. Each returns the prepared state and
//! the post-selection success probability.

use nalgebra::{Complex, DVector};

use crate::blockenc::ResourceTally;
use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Prepared state and the analytic success probability of its post-selection.
#[derive(Clone, Debug)]
pub struct PrepResult {
    pub state: DVector<C64>,
    pub success_prob: f64,
    pub resources: ResourceTally,
}

/// Prepares `|g⟩` for `g(x_j) = Σ_{|n| ≤ p} c_n e^{2πinj/N}` by loading the
/// `d = 2p+1` Fourier coefficients (success `(Σ|c_j/ĉ|²)/d`) and applying
/// the Fourier synthesis, which is unitary.
///
/// `coeffs` is ordered `c_{-p}, …, c_0, …, c_p` and must have odd length.
pub fn prep_smooth_fourier(coeffs: &[C64], n: usize) -> Result<PrepResult> {
    let d = coeffs.len();
    if d == 0 || d.is_multiple_of(2) {
        return Err(Error::invalid(
            "coefficients must be ordered c_{-p}..c_p with odd length",
        ));
    }
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { n });
    }
    if d > n {
        return Err(Error::TooManyCoefficients { len: d, slots: n });
    }
    let p = (d - 1) / 2;
    let c_hat = coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if c_hat == 0.0 {
        return Err(Error::ZeroVector);
    }
    let success: f64 = coeffs
        .iter()
        .map(|c| (c.norm() / c_hat).powi(2))
        .sum::<f64>()
        / d as f64;

    // Fourier synthesis of the wrapped coefficient vector
    let mut g = DVector::from_element(n, C64::new(0.0, 0.0));
    for j in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for (idx, &c) in coeffs.iter().enumerate() {
            let freq = idx as i64 - p as i64;
            let phase = 2.0 * std::f64::consts::PI * freq as f64 * j as f64 / n as f64;
            acc += c * C64::new(phase.cos(), phase.sin());
        }
        g[j] = acc;
    }
    let norm = g.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    g /= C64::new(norm, 0.0);
    Ok(PrepResult {
        state: g,
        success_prob: success,
        resources: ResourceTally {
            oracle_queries: [("O_c".to_string(), 2u64)].into_iter().collect(),
            elementary_gate_order: "O(log^2 N)".to_string(),
            extra_ancillas: 0,
        },
    })
}

/// Recovers the `|n| ≤ p` Fourier coefficients of a length-`N` state;
/// inverse of the synthesis in [`prep_smooth_fourier`] up to the dropped
/// global normalization.
pub fn fourier_coefficients(state: &DVector<C64>, p: usize) -> Vec<C64> {
    let n = state.len();
    let mut out = Vec::with_capacity(2 * p + 1);
    for idx in 0..(2 * p + 1) {
        let freq = idx as i64 - p as i64;
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            let phase = -2.0 * std::f64::consts::PI * freq as f64 * j as f64 / n as f64;
            acc += state[j] * C64::new(phase.cos(), phase.sin());
        }
        out.push(acc / n as f64);
    }
    out
}

/// Magnitude level of an amplitude: `2^{-(ℓ+1)} < |x| ≤ 2^{-ℓ}` with the
/// finest level `L-1` absorbing everything at or below `2^{-(L-1)}`,
/// including exact zeros.
pub fn amplitude_level(x: f64, depth: usize) -> usize {
    let a = x.abs();
    let mut level = 0usize;
    while level + 1 < depth && a <= (2f64).powi(-(level as i32 + 1)) {
        level += 1;
    }
    level
}

/// An invertible enumeration of the level sets; `row(level, k)` returns the
/// index of the `k`-th member of `I_level`.
pub trait LevelIndex {
    fn row(&self, level: usize, k: usize) -> Option<usize>;
}

struct BuiltinIndex {
    sets: Vec<Vec<usize>>,
}

impl LevelIndex for BuiltinIndex {
    fn row(&self, level: usize, k: usize) -> Option<usize> {
        self.sets.get(level).and_then(|s| s.get(k)).copied()
    }
}

/// Statistics of a magnitude-level preparation.
#[derive(Clone, Debug)]
pub struct MagnitudePrep {
    pub result: PrepResult,
    pub beta_sq: f64,
    pub level_counts: Vec<usize>,
}

/// Prepares a unit vector exactly through its magnitude-level sets; the
/// success probability is `1/(L β²)` with `β² = Σ_ℓ n_ℓ 2^{-2ℓ} ≤ 8`.
pub fn prep_magnitude_hier(x: &DVector<f64>) -> Result<MagnitudePrep> {
    let n = x.len();
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::NotPowerOfTwo { n });
    }
    let depth = n.trailing_zeros() as usize;
    let sets = level_sets(x, depth);
    let index = BuiltinIndex { sets };
    prep_magnitude_with_index(x, &index)
}

/// Same as [`prep_magnitude_hier`] with a caller-supplied index function;
/// its invertibility (each index enumerated exactly once) is checked
/// exhaustively.
pub fn prep_magnitude_with_index(
    x: &DVector<f64>,
    index: &dyn LevelIndex,
) -> Result<MagnitudePrep> {
    let n = x.len();
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::NotPowerOfTwo { n });
    }
    if (x.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::BoundViolated {
            what: "input state norm".to_string(),
            bound: 1.0,
            actual: x.norm(),
        });
    }
    let depth = n.trailing_zeros() as usize;

    let mut seen = vec![false; n];
    let mut level_counts = vec![0usize; depth];
    for (level, count) in level_counts.iter_mut().enumerate() {
        let mut k = 0usize;
        while let Some(i) = index.row(level, k) {
            if i >= n {
                return Err(Error::IndexCollision {
                    detail: format!("index {i} out of range at level {level}"),
                });
            }
            if seen[i] {
                return Err(Error::IndexCollision {
                    detail: format!("index {i} enumerated twice (level {level})"),
                });
            }
            if amplitude_level(x[i], depth) != level {
                return Err(Error::IndexCollision {
                    detail: format!("index {i} listed at level {level} but belongs elsewhere"),
                });
            }
            seen[i] = true;
            k += 1;
        }
        *count = k;
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::IndexCollision {
            detail: "level sets do not cover every index".to_string(),
        });
    }

    let beta_sq: f64 = level_counts
        .iter()
        .enumerate()
        .map(|(l, &c)| c as f64 * (2f64).powi(-2 * l as i32))
        .sum();
    let success = 1.0 / (depth as f64 * beta_sq);
    let state = DVector::from_fn(n, |i, _| C64::new(x[i], 0.0));
    Ok(MagnitudePrep {
        result: PrepResult {
            state,
            success_prob: success,
            resources: ResourceTally {
                oracle_queries: [("O_x".to_string(), 2u64), ("O_index".to_string(), 2)]
                    .into_iter()
                    .collect(),
                elementary_gate_order: "O(log N log log N)".to_string(),
                extra_ancillas: 0,
            },
        },
        beta_sq,
        level_counts,
    })
}

fn level_sets(x: &DVector<f64>, depth: usize) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); depth];
    for i in 0..x.len() {
        sets[amplitude_level(x[i], depth)].push(i);
    }
    sets
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn fourier_constant_function() {
        let res = prep_smooth_fourier(&[c(1.0)], 8).unwrap();
        assert_relative_eq!(res.success_prob, 1.0);
        let expect = 1.0 / (8f64).sqrt();
        for j in 0..8 {
            assert!((res.state[j] - c(expect)).norm() < 1e-12);
        }
    }

    #[test]
    fn fourier_cosine() {
        // cos x: c_{-1} = c_1 = 1/2, d = 3 slots
        let res = prep_smooth_fourier(&[c(0.5), c(0.0), c(0.5)], 16).unwrap();
        assert_relative_eq!(res.success_prob, 2.0 / 3.0, epsilon = 1e-12);
        let mut target = DVector::from_fn(16, |j, _| {
            c((2.0 * std::f64::consts::PI * j as f64 / 16.0).cos())
        });
        let nrm = target.norm();
        target /= c(nrm);
        for j in 0..16 {
            assert!((res.state[j] - target[j]).norm() < 1e-10);
        }
    }

    #[test]
    fn fourier_three_coefficient_success() {
        let res = prep_smooth_fourier(&[c(0.5), c(0.9), c(0.5)], 64).unwrap();
        let expect = (0.81 + 0.25 + 0.25) / (0.81 * 3.0);
        assert_relative_eq!(res.success_prob, expect, epsilon = 1e-12);
        assert!(res.success_prob > 0.25, "success stays Omega(1)");
    }

    #[test]
    fn fourier_errors() {
        assert!(prep_smooth_fourier(&[c(1.0); 9], 8).is_err()); // d > N
        assert!(prep_smooth_fourier(&[c(1.0), c(1.0)], 8).is_err()); // even length
        assert!(prep_smooth_fourier(&[c(0.0)], 8).is_err()); // zero vector
    }

    #[test]
    fn fourier_roundtrip_recovers_coefficients() {
        let coeffs = [c(0.3), c(-0.2), c(0.8), c(0.1), c(0.25)];
        let n = 64;
        let res = prep_smooth_fourier(&coeffs, n).unwrap();
        // undo the normalization: synthesize the unnormalized g to get scale
        let raw: f64 = {
            let mut norm2 = 0.0;
            for j in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for (idx, &cv) in coeffs.iter().enumerate() {
                    let freq = idx as i64 - 2;
                    let phase = 2.0 * std::f64::consts::PI * freq as f64 * j as f64 / n as f64;
                    acc += cv * C64::new(phase.cos(), phase.sin());
                }
                norm2 += acc.norm_sqr();
            }
            norm2.sqrt()
        };
        let recovered = fourier_coefficients(&res.state, 2);
        for (r, &orig) in recovered.iter().zip(&coeffs) {
            assert!((r * raw - orig).norm() < 1e-12);
        }
    }

    #[test]
    fn magnitude_basis_vector() {
        let n = 8;
        let x = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let prep = prep_magnitude_hier(&x).unwrap();
        // one entry at level 0, seven zeros in the tail level
        assert_eq!(prep.level_counts, vec![1, 0, 7]);
        assert_relative_eq!(prep.beta_sq, 1.0 + 7.0 / 16.0);
        assert!(prep.result.success_prob >= 1.0 / 6.0);
        for i in 0..n {
            assert!((prep.result.state[i] - C64::new(x[i], 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn magnitude_uniform_vector() {
        let n = 16;
        let x = DVector::from_element(n, 0.25);
        let prep = prep_magnitude_hier(&x).unwrap();
        // |x_i| = 2^-2 sits exactly on the closed upper boundary of level 2
        assert_eq!(prep.level_counts[2], 16);
        assert_relative_eq!(prep.beta_sq, 1.0);
        assert_relative_eq!(prep.result.success_prob, 0.25);
    }

    #[test]
    fn magnitude_preserves_signs() {
        let mut x = DVector::from_element(8, (1.0 / 8f64).sqrt());
        x[3] = -x[3];
        let prep = prep_magnitude_hier(&x).unwrap();
        assert!((prep.result.state[3].re - x[3]).abs() < 1e-14);
    }

    #[test]
    fn magnitude_bound_on_random_states() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100);
        for &n in &[8usize, 64, 1024] {
            for _ in 0..50 {
                let mut x = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                let norm = x.norm();
                x /= norm;
                let prep = prep_magnitude_hier(&x).unwrap();
                assert!(prep.beta_sq <= 8.0, "beta^2 = {}", prep.beta_sq);
                let floor = 1.0 / (8.0 * (n as f64).log2());
                assert!(prep.result.success_prob >= floor);
                // output fidelity
                let mut overlap = 0.0;
                for i in 0..n {
                    overlap += prep.result.state[i].re * x[i];
                }
                assert!(overlap >= 1.0 - 1e-10);
            }
        }
    }

    #[test]
    fn magnitude_rejects_bad_index() {
        struct Colliding;
        impl LevelIndex for Colliding {
            fn row(&self, level: usize, k: usize) -> Option<usize> {
                (level == 0 && k < 2).then_some(0)
            }
        }
        let x = DVector::from_fn(4, |i, _| if i == 0 { 1.0 } else { 0.0 });
        assert!(matches!(
            prep_magnitude_with_index(&x, &Colliding),
            Err(Error::IndexCollision { .. })
        ));

        let unnormalized = DVector::from_element(4, 1.0);
        assert!(prep_magnitude_hier(&unnormalized).is_err());
    }
}
