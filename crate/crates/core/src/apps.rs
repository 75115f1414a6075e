//! End-to-end experiments: fast-multipole potential computation, integral
//! equation collocation systems, query-complexity estimation, and the
//! condition-number and singular-spectrum studies.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::blockenc::BlockEncoding;
use crate::config::dense_cap;
use crate::error::{Error, Result};
use crate::hierenc::encode_hierarchical;
use crate::hsplit::{adaptive_mesh, hierarchical_split, pad_to_power_of_two, HSplit, Variant};
use crate::kernels::{EntryOracle, Kernel, PointSet};
use crate::linalg::{condition_number, leading_singular_pair, operator_norm, singular_values_desc};

/// Result of the fast-multipole potential computation.
#[derive(Debug)]
pub struct QfmmResult {
    /// Raw potentials `Φ_i = Σ_j m_j k(x_i, x_j)`.
    pub potential: DVector<f64>,
    /// Normalized output state `Φ/‖Φ‖`.
    pub state: DVector<f64>,
    /// Post-selection probability `‖Φ/(α‖m‖)‖²`.
    pub success_prob: f64,
    pub alpha: f64,
    /// Entry-oracle queries of the underlying encoding (always 2).
    pub kernel_queries: u64,
    /// Expected amplitude-amplified repetitions, `⌈1/√prob⌉`.
    pub repetitions: u64,
    pub encoding: BlockEncoding,
}

/// Computes all pairwise Coulomb potentials through the hierarchical
/// encoding's block evaluator. Non-uniform inputs are meshed first and the
/// mesh is padded to a power of two with zero-mass sites.
pub fn qfmm_potential(points: &PointSet, eps: f64) -> Result<QfmmResult> {
    if points.dim() != 1 {
        return Err(Error::UnsupportedVariant {
            variant: "qfmm".to_string(),
            what: "2D point sets".to_string(),
        });
    }
    let meshed = match points.uniform_spacing() {
        Some(_) => points.clone(),
        None => {
            let mut min_gap = f64::INFINITY;
            for i in 1..points.len() {
                min_gap = min_gap.min(points.coord_1d(i) - points.coord_1d(i - 1));
            }
            adaptive_mesh(points, min_gap)?
        }
    };
    let meshed = pad_to_power_of_two(&meshed)?;
    let n = meshed.len();
    if n > dense_cap() {
        return Err(Error::DenseCapExceeded {
            n,
            cap: dense_cap(),
        });
    }
    let masses = DVector::from_fn(n, |i, _| meshed.masses().map_or(1.0, |m| m[i]));
    if masses.iter().map(|m| m.abs()).sum::<f64>() == 0.0 {
        return Err(Error::ZeroVector);
    }

    let kernel = Kernel::PolyDecay {
        p: 1.0,
        self_interaction: 0.0,
    };
    let oracle = EntryOracle::new(kernel, meshed.clone());
    let split = hierarchical_split(&meshed, Variant::Plain1D, None)?;
    let enc = encode_hierarchical(&oracle, &split, eps)?;
    let k = enc.represented();
    let potential = &k * &masses;
    let pot_norm = potential.norm();
    let state = if pot_norm > 0.0 {
        &potential / pot_norm
    } else {
        potential.clone()
    };
    let success = (pot_norm / (enc.alpha * masses.norm())).powi(2);
    Ok(QfmmResult {
        potential,
        state,
        success_prob: success,
        alpha: enc.alpha,
        kernel_queries: enc.resources.query_count("O_k"),
        repetitions: (1.0 / success.sqrt()).ceil() as u64,
        encoding: enc,
    })
}

/// Brute-force `O(N²)` reference for the potentials.
pub fn potential_direct(points: &PointSet) -> DVector<f64> {
    let n = points.len();
    DVector::from_fn(n, |i, _| {
        let mut acc = 0.0;
        for j in 0..n {
            if j != i {
                let m = points.masses().map_or(1.0, |ms| ms[j]);
                acc += m / points.distance(i, j);
            }
        }
        acc
    })
}

/// The collocation system `(I + K) f = g` of the thin-ring integral
/// equation, with its cyclic splitting attached.
pub struct CollocationSystem {
    pub kernel: Kernel,
    pub k: DMatrix<f64>,
    pub system: DMatrix<f64>,
    pub k_norm: f64,
    /// `(1 + ‖K‖)/(1 - ‖K‖)`, when `‖K‖ < 1`.
    pub kappa_bound: Option<f64>,
    pub split: HSplit,
}

pub fn collocation_system(n: usize, p: f64, lambda: f64) -> Result<CollocationSystem> {
    if !(0.0..=2.0).contains(&p) || p <= 0.0 {
        return Err(Error::invalid(
            "collocation exponent must satisfy 0 < p <= 2",
        ));
    }
    let kernel = Kernel::Collocation {
        p,
        lambda,
        panels: n,
    };
    let points = PointSet::grid_1d(n);
    let oracle = EntryOracle::new(kernel.clone(), points.clone());
    let k = DMatrix::from_fn(n, n, |i, j| oracle.eval_exact(i, j).unwrap());
    let k_norm = operator_norm(&k);
    let system = DMatrix::identity(n, n) + &k;
    let split = hierarchical_split(&points, Variant::Cyclic, None)?;
    let kappa_bound = (k_norm < 1.0).then(|| (1.0 + k_norm) / (1.0 - k_norm));
    Ok(CollocationSystem {
        kernel,
        k,
        system,
        k_norm,
        kappa_bound,
        split,
    })
}

/// Direct dense solve with iterative refinement; the classical ground truth.
pub fn solve_reference(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let lu = a.clone().full_piv_lu();
    let mut x = lu.solve(b).ok_or(Error::SingularSystem)?;
    for _ in 0..3 {
        let r = b - a * &x;
        if r.norm() <= 1e-14 * b.norm() {
            break;
        }
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    let residual = (b - a * &x).norm() / b.norm().max(f64::MIN_POSITIVE);
    if residual > 1e-8 {
        return Err(Error::SingularSystem);
    }
    Ok(x)
}

/// Query mode of [`query_complexity`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryMode {
    Forward,
    Inverse,
}

/// Query-count estimate in units of the `c = 1` convention:
/// `(α/‖A‖)·κ` forward, `(α/‖A‖)·κ·ln(1/ε)` for inversion.
pub fn query_complexity(alpha: f64, a_norm: f64, kappa: f64, eps: f64, mode: QueryMode) -> f64 {
    let base = alpha / a_norm * kappa;
    match mode {
        QueryMode::Forward => base,
        QueryMode::Inverse => base * (1.0 / eps).ln(),
    }
}

/// One row of the method-comparison table.
#[derive(Clone, Debug)]
pub struct ComplexityRow {
    pub method: String,
    pub n: usize,
    pub alpha: f64,
    pub norm: f64,
    pub kappa: f64,
    pub forward_units: f64,
    pub inverse_units: f64,
}

/// Formula-level comparison of the hierarchical, naive-dense, and
/// QRAM-style (`α = ‖A‖_F`) encodings at fixed `κ` and `ε`.
pub fn complexity_table(
    kernel: &Kernel,
    ns: &[usize],
    kappa: f64,
    eps: f64,
) -> Result<Vec<ComplexityRow>> {
    let mut rows = Vec::new();
    for &n in ns {
        let points = PointSet::grid_1d(n);
        let oracle = EntryOracle::new(kernel.clone(), points);
        let k = crate::kernels::assemble_dense(&oracle)?;
        let norm = operator_norm(&k);
        let frob = k.iter().map(|v| v * v).sum::<f64>().sqrt();
        let methods = [
            (
                "hierarchical",
                crate::hierenc::normalization_factor(kernel, n, 1)?,
            ),
            ("naive", n as f64 * oracle.scale()),
            ("qram", frob),
        ];
        for (name, alpha) in methods {
            rows.push(ComplexityRow {
                method: name.to_string(),
                n,
                alpha,
                norm,
                kappa,
                forward_units: query_complexity(alpha, norm, kappa, eps, QueryMode::Forward),
                inverse_units: query_complexity(alpha, norm, kappa, eps, QueryMode::Inverse),
            });
        }
    }
    Ok(rows)
}

/// One cell of the condition-number study.
#[derive(Clone, Debug)]
pub struct CondRow {
    pub kernel: String,
    pub n: usize,
    pub kappa: f64,
}

/// `κ(N)` per kernel over the size grid, via dense factorizations; cells
/// are independent and evaluated in parallel.
pub fn condition_study(kernels: &[(String, Kernel)], ns: &[usize]) -> Result<Vec<CondRow>> {
    let cells: Vec<(usize, usize)> = (0..kernels.len())
        .flat_map(|ki| ns.iter().enumerate().map(move |(ni, _)| (ki, ni)))
        .collect();
    let mut rows: Vec<CondRow> = cells
        .par_iter()
        .map(|&(ki, ni)| {
            let (name, kernel) = &kernels[ki];
            let n = ns[ni];
            let oracle = EntryOracle::new(kernel.clone(), PointSet::grid_1d(n));
            let k = crate::kernels::assemble_dense(&oracle)?;
            Ok(CondRow {
                kernel: name.clone(),
                n,
                kappa: condition_number(&k),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|a| (a.kernel.clone(), a.n));
    Ok(rows)
}

/// Full singular spectrum of a kernel matrix with its numerical rank and
/// the overlap of the leading singular vector with the uniform vector.
#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub sigmas: Vec<f64>,
    /// Count of singular values above `1e-10 · σ₁`.
    pub numerical_rank: usize,
    /// `⟨v₁, uniform⟩²`.
    pub uniform_overlap: f64,
}

pub fn singular_spectrum(kernel: &Kernel, points: &PointSet) -> Result<SpectrumResult> {
    let oracle = EntryOracle::new(kernel.clone(), points.clone());
    let k = crate::kernels::assemble_dense(&oracle)?;
    let sigmas = singular_values_desc(&k);
    let threshold = 1e-10 * sigmas[0];
    let numerical_rank = sigmas.iter().filter(|&&s| s > threshold).count();
    let (_, v1) = leading_singular_pair(&k);
    let n = k.nrows();
    let overlap: f64 = v1.iter().sum::<f64>() / (n as f64).sqrt();
    Ok(SpectrumResult {
        sigmas,
        numerical_rank,
        uniform_overlap: overlap * overlap,
    })
}
