//! Kernel functions, their decay metadata, and the classical stand-in for the
//! quantum entry oracle.
//!
//! All kernels are displacement kernels `k(x, x') = k(x - x')` evaluated on a
//! [`PointSet`]. The [`EntryOracle`] models `O_k : |i⟩|j⟩|0^b⟩ ↦
//! |i⟩|j⟩|k̃(x_i, x_j)⟩` as round-to-nearest fixed point with `b` bits
//! relative to a declared scale; its error is folded into the block-encoding
//! error ledgers downstream.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{dense_cap, DEFAULT_ORACLE_BITS};
use crate::error::{Error, Result};
use crate::hsplit::grid_coords_2d;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Derivative rule `(q, x, c) ↦ ∂^q_{x'} k(x, x')|_{x'=c}` for custom kernels.
pub type DerivFn = Arc<dyn Fn(usize, f64, f64) -> f64 + Send + Sync>;

/// Decay class declared by custom kernels so they can ride the hierarchical
/// paths; kernels without one are restricted to the naive encodings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayClass {
    Poly { p: f64 },
    Exp { q: f64, poly_order: f64 },
}

/// A pairwise kernel with its decay metadata.
#[derive(Clone)]
pub enum Kernel {
    /// `k(x, x') = C` on the diagonal, `‖x - x'‖^{-p}` otherwise.
    PolyDecay { p: f64, self_interaction: f64 },
    /// `k(x, x') = ‖x - x'‖^{-p} G(‖x - x'‖)` with `|G| ≤ bound`.
    GeneralizedPolyDecay {
        p: f64,
        self_interaction: f64,
        bound: f64,
        modulator: ScalarFn,
    },
    /// `k(x, x') = e^{-‖x-x'‖^q} ‖x-x'‖^k` (Laplace `q=1,k=0`, Gaussian `q=2,k=0`).
    ExpDecay {
        q: f64,
        poly_order: f64,
        self_interaction: f64,
    },
    /// `k(x, x') = ln ‖x - x'‖`, zero on the diagonal.
    Log,
    /// `k(x, x') = sqrt(c² + ‖x - x'‖²)`.
    Multiquadric { offset: f64 },
    /// Collocation entries of the thin-ring integral equation:
    /// `λ²/(N (2 sin(π|i-j|/N))^p)` away from the diagonal band, an
    /// eight-sub-panel midpoint quadrature on it.
    Collocation { p: f64, lambda: f64, panels: usize },
    /// `k(x, x') = |x - x' + c|^{-p}`; the singularity sits on the band
    /// `x' = x + c` and those entries evaluate to zero.
    ShiftedPolyDecay { p: f64, offset: i64 },
    /// `k(x, x') = | ‖x - x'‖ - c |^{-p}`; singular band `‖x-x'‖ = c`.
    SkewPolyDecay { p: f64, offset: i64 },
    /// Caller-supplied radial kernel `f(r)`, optionally with a Taylor
    /// derivative rule and a decay class.
    Custom {
        name: String,
        f: ScalarFn,
        deriv: Option<DerivFn>,
        decay: Option<DecayClass>,
    },
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Kernel::{}", self.family_name())
    }
}

impl Kernel {
    pub fn family_name(&self) -> &'static str {
        match self {
            Kernel::PolyDecay { .. } => "PolyDecay",
            Kernel::GeneralizedPolyDecay { .. } => "GeneralizedPolyDecay",
            Kernel::ExpDecay { .. } => "ExpDecay",
            Kernel::Log => "Log",
            Kernel::Multiquadric { .. } => "Multiquadric",
            Kernel::Collocation { .. } => "Collocation",
            Kernel::ShiftedPolyDecay { .. } => "ShiftedPolyDecay",
            Kernel::SkewPolyDecay { .. } => "SkewPolyDecay",
            Kernel::Custom { .. } => "Custom",
        }
    }

    /// Kernel value as a function of the signed displacement `d = x_i - x_j`.
    pub fn eval_diff(&self, d: f64) -> f64 {
        match self {
            Kernel::PolyDecay {
                p,
                self_interaction,
            } => {
                if d == 0.0 {
                    *self_interaction
                } else {
                    d.abs().powf(-p)
                }
            }
            Kernel::GeneralizedPolyDecay {
                p,
                self_interaction,
                modulator,
                ..
            } => {
                if d == 0.0 {
                    *self_interaction
                } else {
                    d.abs().powf(-p) * modulator(d.abs())
                }
            }
            Kernel::ExpDecay {
                q,
                poly_order,
                self_interaction,
            } => {
                if d == 0.0 {
                    *self_interaction
                } else {
                    let r = d.abs();
                    (-r.powf(*q)).exp() * r.powf(*poly_order)
                }
            }
            Kernel::Log => {
                if d == 0.0 {
                    0.0
                } else {
                    d.abs().ln()
                }
            }
            Kernel::Multiquadric { offset } => (offset * offset + d * d).sqrt(),
            Kernel::Collocation { p, lambda, panels } => collocation_entry(*p, *lambda, *panels, d),
            Kernel::ShiftedPolyDecay { p, offset } => {
                let u = d + *offset as f64;
                if u == 0.0 {
                    0.0
                } else {
                    u.abs().powf(-p)
                }
            }
            Kernel::SkewPolyDecay { p, offset } => {
                let u = d.abs() - *offset as f64;
                if u == 0.0 {
                    0.0
                } else {
                    u.abs().powf(-p)
                }
            }
            Kernel::Custom { f, .. } => f(d.abs()),
        }
    }

    /// Kernel value at (nonnegative) distance `r`; valid for the symmetric
    /// displacement families and used by the 2D paths.
    pub fn eval_dist(&self, r: f64) -> f64 {
        self.eval_diff(r)
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, Kernel::ShiftedPolyDecay { .. })
    }

    /// Decay class for the hierarchical level bounds, if the family has one.
    pub fn decay_class(&self) -> Option<DecayClass> {
        match self {
            Kernel::PolyDecay { p, .. }
            | Kernel::GeneralizedPolyDecay { p, .. }
            | Kernel::ShiftedPolyDecay { p, .. }
            | Kernel::SkewPolyDecay { p, .. } => Some(DecayClass::Poly { p: *p }),
            Kernel::ExpDecay { q, poly_order, .. } => Some(DecayClass::Exp {
                q: *q,
                poly_order: *poly_order,
            }),
            Kernel::Collocation { p, .. } => Some(DecayClass::Poly { p: *p }),
            Kernel::Custom { decay, .. } => *decay,
            _ => None,
        }
    }

    /// Self-interaction value `k(x, x)`.
    pub fn diagonal(&self) -> f64 {
        self.eval_diff(0.0)
    }

    /// A-priori bound on `max_{ij} |k(x_i, x_j)|` over a point set, used as
    /// the oracle's fixed-point scale.
    pub fn max_entry_bound(&self, points: &PointSet) -> f64 {
        let diag = self.diagonal().abs();
        match points.min_max_distance() {
            Some((dmin, dmax)) => {
                let probe = match self {
                    // growing kernels peak at the far end
                    Kernel::Log | Kernel::Multiquadric { .. } => self.eval_dist(dmax).abs(),
                    Kernel::Custom { decay: None, .. } => {
                        // no decay metadata: scan both ends
                        self.eval_dist(dmax).abs().max(self.eval_dist(dmin).abs())
                    }
                    Kernel::SkewPolyDecay { .. } | Kernel::ShiftedPolyDecay { .. } => 1.0,
                    _ => self.eval_dist(dmin).abs(),
                };
                diag.max(probe).max(f64::MIN_POSITIVE)
            }
            None => diag.max(f64::MIN_POSITIVE),
        }
    }
}

/// Smallest integer `t` with `q t - k > 1`, then `t!`; the exponential-kernel
/// level bounds are `t! · 2^{-(L-ℓ)(qt-k)}`.
pub fn exp_decay_order(q: f64, poly_order: f64) -> (u64, f64) {
    let mut t = ((poly_order + 1.0) / q).floor() as i64 + 1;
    if t < 1 {
        t = 1;
    }
    while q * t as f64 - poly_order <= 1.0 {
        t += 1;
    }
    let mut fact = 1.0f64;
    for i in 2..=t {
        fact *= i as f64;
    }
    (t as u64, fact)
}

/// Admissible-block entry bound at level `ℓ` of an `L`-level hierarchy on the
/// unit-spaced grid: `2^{-(L-ℓ)p}` for polynomial decay,
/// `t! 2^{-(L-ℓ)(qt-k)}` for exponential decay, the closed collocation
/// formula for the thin-ring kernel.
pub fn level_max_entry(kernel: &Kernel, level: usize, depth: usize) -> Result<f64> {
    if level < 2 || level > depth {
        return Err(Error::LevelOutOfRange { level });
    }
    let gap = (depth - level) as f64;
    match kernel {
        Kernel::PolyDecay { p, .. }
        | Kernel::ShiftedPolyDecay { p, .. }
        | Kernel::SkewPolyDecay { p, .. } => Ok((2f64).powf(-gap * p)),
        Kernel::GeneralizedPolyDecay { p, bound, .. } => Ok(bound * (2f64).powf(-gap * p)),
        Kernel::ExpDecay { q, poly_order, .. } => {
            let (t, fact) = exp_decay_order(*q, *poly_order);
            Ok(fact * (2f64).powf(-gap * (q * t as f64 - poly_order)))
        }
        Kernel::Collocation { p, lambda, panels } => {
            let m = 1usize << (depth - level);
            let chord = 2.0 * (std::f64::consts::PI * m as f64 / *panels as f64).sin();
            Ok(lambda * lambda / (*panels as f64 * chord.powf(*p)))
        }
        Kernel::Custom {
            decay: Some(DecayClass::Poly { p }),
            ..
        } => Ok((2f64).powf(-gap * p)),
        Kernel::Custom {
            decay: Some(DecayClass::Exp { q, poly_order }),
            ..
        } => {
            let (t, fact) = exp_decay_order(*q, *poly_order);
            Ok(fact * (2f64).powf(-gap * (q * t as f64 - poly_order)))
        }
        _ => Err(Error::UnsupportedFamily {
            family: kernel.family_name().to_string(),
            op: "level_max_entry".to_string(),
        }),
    }
}

fn collocation_entry(p: f64, lambda: f64, panels: usize, d: f64) -> f64 {
    let n = panels as f64;
    let delta = d.round() as i64;
    let dc = delta
        .rem_euclid(panels as i64)
        .min((-delta).rem_euclid(panels as i64));
    if dc > 1 {
        let chord = 2.0 * (std::f64::consts::PI * delta as f64 / n).sin().abs();
        lambda * lambda / (n * chord.powf(p))
    } else {
        // one level of panel subdivision: eight sub-panels, midpoint rule
        let mut sum = 0.0;
        for k in 0..8 {
            let t = (k as f64 + 0.5) / 8.0;
            let sep = delta as f64 + 0.5 - t;
            let chord = 2.0 * (std::f64::consts::PI * sep / n).sin().abs();
            sum += chord.powf(-p);
        }
        lambda * lambda / (n * 8.0) * sum
    }
}

/// Point locations (1D line or 2D grid) with optional masses.
///
/// 2D grids are stored in the vectorized ordering of the hierarchical index
/// map, so clusters are contiguous index ranges in both dimensions.
#[derive(Clone, Debug)]
pub struct PointSet {
    coords: Coords,
    masses: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
enum Coords {
    OneD(Vec<f64>),
    TwoD { side: usize, pts: Vec<(f64, f64)> },
}

impl PointSet {
    /// Unit-spaced 1D grid `x_i = i`.
    pub fn grid_1d(n: usize) -> Self {
        Self::grid_1d_scaled(n, 1.0)
    }

    /// 1D grid `x_i = i·h`.
    pub fn grid_1d_scaled(n: usize, h: f64) -> Self {
        PointSet {
            coords: Coords::OneD((0..n).map(|i| i as f64 * h).collect()),
            masses: None,
        }
    }

    /// Sorted 1D coordinates; must be strictly increasing.
    pub fn from_coords_1d(mut coords: Vec<f64>) -> Result<Self> {
        coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in coords.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::MinSeparation {
                    detail: format!(
                        "coordinates {} and {} are not pairwise distinct",
                        w[0], w[1]
                    ),
                });
            }
        }
        Ok(PointSet {
            coords: Coords::OneD(coords),
            masses: None,
        })
    }

    /// Unit-spaced `side × side` grid, vectorized by the hierarchical index
    /// map.
    pub fn grid_2d(side: usize) -> Result<Self> {
        if !side.is_power_of_two() {
            return Err(Error::NotPowerOfTwo { n: side });
        }
        let depth = side.trailing_zeros() as usize;
        let n = side * side;
        let pts = (0..n)
            .map(|m| {
                let (i, j) = grid_coords_2d(m, depth);
                (i as f64, j as f64)
            })
            .collect();
        Ok(PointSet {
            coords: Coords::TwoD { side, pts },
            masses: None,
        })
    }

    pub fn with_masses(mut self, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: masses.len(),
            });
        }
        self.masses = Some(masses);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        match &self.coords {
            Coords::OneD(v) => v.len(),
            Coords::TwoD { pts, .. } => pts.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match &self.coords {
            Coords::OneD(_) => 1,
            Coords::TwoD { .. } => 2,
        }
    }

    /// 2D grid side (errors in 1D).
    pub fn side(&self) -> Option<usize> {
        match &self.coords {
            Coords::OneD(_) => None,
            Coords::TwoD { side, .. } => Some(*side),
        }
    }

    /// `L = ceil(log2 N)` in 1D, `log2(side)` in 2D.
    pub fn hierarchy_depth(&self) -> usize {
        match &self.coords {
            Coords::OneD(v) => {
                let n = v.len().max(1);
                (usize::BITS - (n - 1).leading_zeros()) as usize
            }
            Coords::TwoD { side, .. } => side.trailing_zeros() as usize,
        }
    }

    pub fn coord_1d(&self, i: usize) -> f64 {
        match &self.coords {
            Coords::OneD(v) => v[i],
            Coords::TwoD { .. } => panic!("coord_1d on a 2D point set"),
        }
    }

    pub fn masses(&self) -> Option<&[f64]> {
        self.masses.as_deref()
    }

    /// Signed displacement `x_i - x_j` (1D only).
    pub fn diff(&self, i: usize, j: usize) -> f64 {
        match &self.coords {
            Coords::OneD(v) => v[i] - v[j],
            Coords::TwoD { .. } => panic!("diff on a 2D point set"),
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match &self.coords {
            Coords::OneD(v) => (v[i] - v[j]).abs(),
            Coords::TwoD { pts, .. } => {
                let (xi, yi) = pts[i];
                let (xj, yj) = pts[j];
                ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt()
            }
        }
    }

    /// Uniform spacing if the 1D coordinates form an arithmetic grid (2D
    /// grids are unit-spaced by construction).
    pub fn uniform_spacing(&self) -> Option<f64> {
        match &self.coords {
            Coords::OneD(v) => {
                if v.len() < 2 {
                    return Some(1.0);
                }
                let h = v[1] - v[0];
                let ok = v
                    .windows(2)
                    .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h.abs().max(1.0));
                ok.then_some(h)
            }
            Coords::TwoD { .. } => Some(1.0),
        }
    }

    fn min_max_distance(&self) -> Option<(f64, f64)> {
        match &self.coords {
            Coords::OneD(v) => {
                if v.len() < 2 {
                    return None;
                }
                let mut dmin = f64::INFINITY;
                for w in v.windows(2) {
                    dmin = dmin.min(w[1] - w[0]);
                }
                Some((dmin, v[v.len() - 1] - v[0]))
            }
            Coords::TwoD { side, .. } => {
                if *side < 2 {
                    return None;
                }
                let diag = std::f64::consts::SQRT_2 * (*side as f64 - 1.0);
                Some((1.0, diag))
            }
        }
    }
}

/// Classical stand-in for the entry oracle `O_k`: deterministic fixed-point
/// evaluation with `bits` bits relative to a declared scale.
#[derive(Clone, Debug)]
pub struct EntryOracle {
    kernel: Kernel,
    points: PointSet,
    bits: u32,
    scale: f64,
}

impl EntryOracle {
    pub fn new(kernel: Kernel, points: PointSet) -> Self {
        Self::with_bits(kernel, points, DEFAULT_ORACLE_BITS)
    }

    pub fn with_bits(kernel: Kernel, points: PointSet, bits: u32) -> Self {
        let scale = kernel.max_entry_bound(&points);
        EntryOracle {
            kernel,
            points,
            bits,
            scale,
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Fixed-point scale of the oracle output register.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn check_index(&self, i: usize, j: usize) -> Result<()> {
        let n = self.n();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, size: n });
        }
        if j >= n {
            return Err(Error::IndexOutOfRange { index: j, size: n });
        }
        Ok(())
    }

    pub fn eval_exact(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i, j)?;
        Ok(self.eval_exact_unchecked(i, j))
    }

    pub(crate) fn eval_exact_unchecked(&self, i: usize, j: usize) -> f64 {
        if self.points.dim() == 1 {
            self.kernel.eval_diff(self.points.diff(i, j))
        } else {
            if i == j {
                return self.kernel.diagonal();
            }
            self.kernel.eval_dist(self.points.distance(i, j))
        }
    }

    /// Quantized entry, `b`-bit fixed point at the oracle scale.
    pub fn eval(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i, j)?;
        Ok(quantize(
            self.eval_exact_unchecked(i, j),
            self.scale,
            self.bits,
        ))
    }

    /// Quantized entry at a caller-chosen scale (the conditioned query
    /// `k(x_i, x_j)/k_max^{(ℓ)}` of the hierarchical construction).
    pub fn eval_scaled(&self, i: usize, j: usize, scale: f64) -> Result<f64> {
        self.check_index(i, j)?;
        Ok(quantize(self.eval_exact_unchecked(i, j), scale, self.bits))
    }
}

pub(crate) fn quantize(value: f64, scale: f64, bits: u32) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let steps = (2f64).powi(bits as i32);
    (value / scale * steps).round() / steps * scale
}

/// Full matrix `K[i][j] = eval(i, j)`; the reference oracle for every
/// equivalence test. Refuses sizes above the dense cap.
pub fn assemble_dense(oracle: &EntryOracle) -> Result<DMatrix<f64>> {
    let n = oracle.n();
    let cap = dense_cap();
    if n > cap {
        return Err(Error::DenseCapExceeded { n, cap });
    }
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = oracle.eval(i, j)?;
        }
    }
    Ok(k)
}

/// JSON description of a kernel, `{family, p, C, q, k, c, lambda,
/// domain_scale, ...}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub self_interaction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_scale: Option<f64>,
    /// Named built-in for `family = "Custom"` (currently `polyharmonic`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Selects the skew-diagonal form of the shifted kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<bool>,
}

impl KernelSpec {
    pub fn poly(p: f64) -> Self {
        KernelSpec {
            family: "PolyDecay".into(),
            p: Some(p),
            self_interaction: None,
            q: None,
            k: None,
            c: None,
            lambda: None,
            bound: None,
            domain_scale: None,
            name: None,
            skew: None,
        }
    }

    /// Instantiates the kernel and its (1D) grid of `n` points.
    pub fn build(&self, n: usize) -> Result<(Kernel, PointSet)> {
        let scale = self.domain_scale.unwrap_or(1.0);
        if scale <= 0.0 {
            return Err(Error::invalid("domain_scale must be positive"));
        }
        let points = PointSet::grid_1d_scaled(n, scale);
        let kernel = self.kernel(n)?;
        Ok((kernel, points))
    }

    pub fn kernel(&self, n: usize) -> Result<Kernel> {
        let c_self = self.self_interaction.unwrap_or(0.0);
        if c_self.abs() > 1.0 {
            return Err(Error::invalid("self-interaction |C| must be <= 1"));
        }
        let need_p = || self.p.ok_or_else(|| Error::invalid("missing field p"));
        match self.family.as_str() {
            "PolyDecay" => {
                let p = need_p()?;
                match (self.c, self.skew.unwrap_or(false)) {
                    (Some(c), false) if c != 0.0 => Ok(Kernel::ShiftedPolyDecay {
                        p,
                        offset: c as i64,
                    }),
                    (Some(c), true) => Ok(Kernel::SkewPolyDecay {
                        p,
                        offset: c as i64,
                    }),
                    _ => Ok(Kernel::PolyDecay {
                        p,
                        self_interaction: c_self,
                    }),
                }
            }
            "GeneralizedPolyDecay" => {
                let p = need_p()?;
                let bound = self.bound.unwrap_or(1.0);
                // default modulator: 1/sqrt(1 + r^2), bounded by 1
                Ok(Kernel::GeneralizedPolyDecay {
                    p,
                    self_interaction: c_self,
                    bound,
                    modulator: Arc::new(move |r: f64| bound / (1.0 + r * r).sqrt()),
                })
            }
            "ExpDecay" => Ok(Kernel::ExpDecay {
                q: self.q.ok_or_else(|| Error::invalid("missing field q"))?,
                poly_order: self.k.unwrap_or(0.0),
                self_interaction: c_self,
            }),
            "Log" => Ok(Kernel::Log),
            "Multiquadric" => Ok(Kernel::Multiquadric {
                offset: self.c.unwrap_or(0.25),
            }),
            "Collocation" => {
                let p = need_p()?;
                let lambda = self.lambda.unwrap_or(1.0 / n as f64);
                Ok(Kernel::Collocation {
                    p,
                    lambda,
                    panels: n,
                })
            }
            "Custom" => match self.name.as_deref() {
                Some("polyharmonic") => {
                    let p = self.p.unwrap_or(2.0);
                    Ok(Kernel::Custom {
                        name: "polyharmonic".into(),
                        f: Arc::new(move |r: f64| if r == 0.0 { 0.0 } else { r.powf(p) * r.ln() }),
                        deriv: None,
                        decay: None,
                    })
                }
                other => Err(Error::invalid(format!(
                    "unknown custom kernel name {:?}; expected \"polyharmonic\"",
                    other
                ))),
            },
            other => Err(Error::invalid(format!("unknown kernel family {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn poly_oracle(n: usize, p: f64, c: f64) -> EntryOracle {
        EntryOracle::new(
            Kernel::PolyDecay {
                p,
                self_interaction: c,
            },
            PointSet::grid_1d(n),
        )
    }

    #[test]
    fn eval_poly_decay_grid() {
        let o = poly_oracle(8, 1.0, 0.0);
        assert_relative_eq!(o.eval(0, 4).unwrap(), 0.25, max_relative = 1e-13);
        assert_eq!(o.eval(3, 3).unwrap(), 0.0);
        assert!(o.eval(0, 9).is_err());
    }

    #[test]
    fn eval_collocation_formula() {
        let n = 8;
        let lambda = 1.0 / n as f64;
        let o = EntryOracle::new(
            Kernel::Collocation {
                p: 1.0,
                lambda,
                panels: n,
            },
            PointSet::grid_1d(n),
        );
        // 2 sin(pi*4/8) = 2, so entry = lambda^2 / 16
        assert_relative_eq!(
            o.eval(0, 4).unwrap(),
            lambda * lambda / 16.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn level_entry_bounds() {
        let k = Kernel::PolyDecay {
            p: 2.0,
            self_interaction: 0.0,
        };
        assert_relative_eq!(level_max_entry(&k, 4, 10).unwrap(), (2f64).powi(-12));
        assert_relative_eq!(level_max_entry(&k, 10, 10).unwrap(), 1.0);
        let laplace = Kernel::ExpDecay {
            q: 1.0,
            poly_order: 0.0,
            self_interaction: 0.0,
        };
        assert_relative_eq!(
            level_max_entry(&laplace, 6, 8).unwrap(),
            2.0 * (2f64).powi(-4)
        );
        assert!(matches!(
            level_max_entry(&k, 1, 10),
            Err(Error::LevelOutOfRange { .. })
        ));
        assert!(level_max_entry(&Kernel::Log, 3, 8).is_err());
    }

    #[test]
    fn dense_assembly_examples() {
        let o = poly_oracle(2, 1.0, 0.0);
        let k = assemble_dense(&o).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));

        let o = poly_oracle(4, 1.0, 0.0);
        let k = assemble_dense(&o).unwrap();
        for (j, expect) in [0.0, 1.0, 0.5, 1.0 / 3.0].iter().enumerate() {
            assert_relative_eq!(k[(0, j)], *expect, max_relative = 1e-13);
        }

        let o = EntryOracle::new(Kernel::Log, PointSet::grid_1d(4));
        let k = assemble_dense(&o).unwrap();
        assert_relative_eq!(k[(0, 2)], (2f64).ln(), max_relative = 1e-12);
    }

    #[test]
    fn dense_assembly_respects_cap() {
        let o = poly_oracle(dense_cap() + 1, 1.0, 0.0);
        assert!(matches!(
            assemble_dense(&o),
            Err(Error::DenseCapExceeded { .. })
        ));
    }

    #[test]
    fn symmetry_of_assembled_kernels() {
        for kernel in [
            Kernel::PolyDecay {
                p: 1.5,
                self_interaction: 0.5,
            },
            Kernel::ExpDecay {
                q: 2.0,
                poly_order: 1.0,
                self_interaction: 0.0,
            },
            Kernel::Log,
            Kernel::Multiquadric { offset: 0.25 },
            Kernel::Collocation {
                p: 1.0,
                lambda: 1.0 / 16.0,
                panels: 16,
            },
        ] {
            let o = EntryOracle::new(kernel, PointSet::grid_1d(16));
            let k = assemble_dense(&o).unwrap();
            assert_eq!(k, k.transpose(), "family {}", o.kernel().family_name());
        }
    }

    #[test]
    fn quantization_error_is_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let o = poly_oracle(64, 1.3, 0.25);
        let tol = (2f64).powi(-(o.bits() as i32)) * o.scale();
        for _ in 0..10_000 {
            let i = rng.random_range(0..64);
            let j = rng.random_range(0..64);
            let err = (o.eval(i, j).unwrap() - o.eval_exact(i, j).unwrap()).abs();
            assert!(err < tol, "quantization error {err} exceeds {tol}");
        }
    }

    #[test]
    fn level_bound_consistency_brute_force() {
        // every admissible block's max entry stays below the level bound
        use crate::hsplit::{hierarchical_split, Variant};
        for p in [0.7, 1.0, 2.0] {
            let kernel = Kernel::PolyDecay {
                p,
                self_interaction: 0.0,
            };
            let points = PointSet::grid_1d(256);
            let oracle = EntryOracle::new(kernel.clone(), points.clone());
            let split = hierarchical_split(&points, Variant::Plain1D, None).unwrap();
            let quant = (2f64).powi(-(oracle.bits() as i32));
            for level in &split.levels {
                let cap = level_max_entry(&kernel, level.level, split.depth).unwrap();
                for block in &level.blocks {
                    for (i, j) in split.block_entries(block) {
                        let v = oracle.eval(i, j).unwrap().abs();
                        assert!(
                            v <= cap + quant,
                            "entry {v} above cap {cap} at level {}",
                            level.level
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_spec_roundtrip() {
        let spec: KernelSpec =
            serde_json::from_str(r#"{"family":"PolyDecay","p":2.0,"C":0.0}"#).unwrap();
        let (kernel, points) = spec.build(16).unwrap();
        assert_eq!(kernel.family_name(), "PolyDecay");
        assert_eq!(points.len(), 16);
        assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"PolyDecay","nope":1}"#).is_err());
    }
}
