//! Level partitions, admissibility, and the hierarchical decomposition
//! `K = Σ_ℓ K^(ℓ) + K_ad`.
//!
//! The admissible levels run from `ℓ = 2` (coarsest) to `ℓ = L`; a block at
//! level `ℓ` pairs clusters at index distance `≥ 2` whose parents at level
//! `ℓ-1` are neighbors, so every matrix entry is covered exactly once by an
//! admissible block or by the adjacent (near-diagonal) part. Four variants
//! are supported: plain 1D, cyclic (indices wrap mod `N`), row-shifted (the
//! hierarchy translated horizontally by `c`) and skew-shifted (upper and
//! lower triangles shifted in opposite directions), plus the uniform 2D grid
//! splitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::PointSet;

/// Default admissibility parameter: `η = 2` in 1D, `1/√2` with the diameter
/// convention in 2D.
pub fn default_eta(dim: usize) -> f64 {
    if dim == 2 {
        std::f64::consts::FRAC_1_SQRT_2
    } else {
        2.0
    }
}

/// 2D grid site `(i, j)` to vectorized index: base-4 digits `f(i_ℓ, j_ℓ)`
/// with `f(0,0)=0, f(0,1)=1, f(1,0)=3, f(1,1)=2`.
pub fn grid_index_2d(i: usize, j: usize, depth: usize) -> usize {
    let mut m = 0usize;
    for l in (0..depth).rev() {
        let ib = (i >> l) & 1;
        let jb = (j >> l) & 1;
        let f = match (ib, jb) {
            (0, 0) => 0,
            (0, 1) => 1,
            (1, 0) => 3,
            _ => 2,
        };
        m = m * 4 + f;
    }
    m
}

/// Inverse of [`grid_index_2d`].
pub fn grid_coords_2d(m: usize, depth: usize) -> (usize, usize) {
    let mut i = 0usize;
    let mut j = 0usize;
    for l in (0..depth).rev() {
        let digit = (m >> (2 * l)) & 3;
        let (ib, jb) = match digit {
            0 => (0, 0),
            1 => (0, 1),
            3 => (1, 0),
            _ => (1, 1),
        };
        i = (i << 1) | ib;
        j = (j << 1) | jb;
    }
    (i, j)
}

/// A cluster of the level-`ℓ` partition: a contiguous index range with its
/// center and radius.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub level: usize,
    pub index: usize,
    pub members: std::ops::Range<usize>,
    pub center: (f64, f64),
    pub radius: f64,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.members.end - self.members.start
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Partition `P^(ℓ)` of the point set: `2^ℓ` clusters in 1D, `4^ℓ` in 2D.
/// `P^(0)` is the whole set, `P^(L)` the singletons.
pub fn build_partition(n: usize, level: usize, points: &PointSet) -> Result<Vec<Cluster>> {
    if points.len() != n {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: n,
        });
    }
    match points.dim() {
        1 => {
            if !n.is_power_of_two() {
                return Err(Error::NotPowerOfTwo { n });
            }
            let depth = n.trailing_zeros() as usize;
            if level > depth {
                return Err(Error::invalid(format!(
                    "level {level} exceeds depth {depth}"
                )));
            }
            let m = n >> level;
            Ok((0..(1usize << level))
                .map(|idx| cluster_1d(points, level, idx, idx * m..(idx + 1) * m))
                .collect())
        }
        _ => {
            let side = points.side().expect("2D point set");
            let depth = side.trailing_zeros() as usize;
            if level > depth {
                return Err(Error::invalid(format!(
                    "level {level} exceeds depth {depth}"
                )));
            }
            let m = 1usize << (2 * (depth - level));
            Ok((0..(1usize << (2 * level)))
                .map(|idx| cluster_generic(points, level, idx, idx * m..(idx + 1) * m))
                .collect())
        }
    }
}

fn cluster_1d(
    points: &PointSet,
    level: usize,
    index: usize,
    members: std::ops::Range<usize>,
) -> Cluster {
    let mut sum = 0.0;
    for i in members.clone() {
        sum += points.coord_1d(i);
    }
    let c = sum / members.len() as f64;
    let mut r = 0.0f64;
    for i in members.clone() {
        r = r.max((points.coord_1d(i) - c).abs());
    }
    Cluster {
        level,
        index,
        members,
        center: (c, 0.0),
        radius: r,
    }
}

fn cluster_generic(
    points: &PointSet,
    level: usize,
    index: usize,
    members: std::ops::Range<usize>,
) -> Cluster {
    // 2D: mean position and max deviation across members
    let n = members.len() as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    let side = points.side().expect("2D point set");
    let depth = side.trailing_zeros() as usize;
    for m in members.clone() {
        let (i, j) = grid_coords_2d(m, depth);
        cx += i as f64;
        cy += j as f64;
    }
    cx /= n;
    cy /= n;
    let mut r = 0.0f64;
    for m in members.clone() {
        let (i, j) = grid_coords_2d(m, depth);
        r = r.max(((i as f64 - cx).powi(2) + (j as f64 - cy).powi(2)).sqrt());
    }
    Cluster {
        level,
        index,
        members,
        center: (cx, cy),
        radius: r,
    }
}

/// Literal admissibility test `η · max{r_σ, r_ρ} ≤ dist(σ, ρ)` on cluster
/// data, with the cluster distance taken over member coordinates.
pub fn is_admissible(a: &Cluster, b: &Cluster, points: &PointSet, eta: f64) -> bool {
    let dist = cluster_distance(a, b, points);
    eta * a.radius.max(b.radius) <= dist && !(a.index == b.index && a.level == b.level)
}

fn cluster_distance(a: &Cluster, b: &Cluster, points: &PointSet) -> f64 {
    if points.dim() == 1 {
        // contiguous sorted ranges: distance realized at the facing ends
        if a.members.end <= b.members.start {
            points.coord_1d(b.members.start) - points.coord_1d(a.members.end - 1)
        } else if b.members.end <= a.members.start {
            points.coord_1d(a.members.start) - points.coord_1d(b.members.end - 1)
        } else {
            0.0
        }
    } else {
        let mut best = f64::INFINITY;
        for i in a.members.clone() {
            for j in b.members.clone() {
                best = best.min(points.distance(i, j));
            }
        }
        if a.members == b.members {
            0.0
        } else {
            best
        }
    }
}

/// Splitting variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Plain1D,
    Cyclic,
    ShiftedRow(i64),
    ShiftedSkew(i64),
    Uniform2D,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Plain1D => "plain",
            Variant::Cyclic => "cyclic",
            Variant::ShiftedRow(_) => "shifted_row",
            Variant::ShiftedSkew(_) => "shifted_skew",
            Variant::Uniform2D => "uniform2d",
        }
    }

    pub fn shift(&self) -> i64 {
        match self {
            Variant::ShiftedRow(c) | Variant::ShiftedSkew(c) => *c,
            _ => 0,
        }
    }
}

/// Which triangle a skew-shifted block lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrianglePart {
    Full,
    Upper,
    Lower,
}

/// An admissible block: a (row cluster, column cluster) pair at one level.
/// For shifted variants the column index lives on the translated grid and
/// may be negative; for 2D both indices are vectorized cluster ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdmissibleBlock {
    pub level: usize,
    pub row: i64,
    pub col: i64,
    pub part: TrianglePart,
}

#[derive(Clone, Debug)]
pub struct LevelBlocks {
    pub level: usize,
    pub blocks: Vec<AdmissibleBlock>,
}

/// Where an entry of the matrix lands in the decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coverage {
    Adjacent,
    Level(usize),
}

/// The hierarchical decomposition `K = Σ_ℓ K^(ℓ) + K_ad`.
#[derive(Clone, Debug)]
pub struct HSplit {
    pub variant: Variant,
    pub n: usize,
    pub depth: usize,
    /// 2D grid side (0 for 1D variants).
    pub side: usize,
    pub eta: f64,
    /// Set when a non-default η was requested; such splits come from the
    /// literal definition-level scan and may have different sparsity.
    pub experimental_eta: bool,
    pub levels: Vec<LevelBlocks>,
    pub adjacent_bandwidth: usize,
}

impl HSplit {
    pub fn shift(&self) -> i64 {
        self.variant.shift()
    }

    /// Row index range of a block.
    pub fn block_rows(&self, b: &AdmissibleBlock) -> std::ops::Range<usize> {
        let m = self.cluster_width(b.level);
        let start = b.row as usize * m;
        start..start + m
    }

    /// Column index range of a block, clipped to the matrix (shifted blocks
    /// can stick out at either edge).
    pub fn block_cols(&self, b: &AdmissibleBlock) -> std::ops::Range<usize> {
        let m = self.cluster_width(b.level) as i64;
        let offset = match (self.variant, b.part) {
            (Variant::ShiftedRow(c), _) => c,
            (Variant::ShiftedSkew(c), TrianglePart::Upper) => c,
            (Variant::ShiftedSkew(c), TrianglePart::Lower) => -c,
            _ => 0,
        };
        let lo = (b.col * m + offset).clamp(0, self.n as i64) as usize;
        let hi = ((b.col + 1) * m + offset).clamp(0, self.n as i64) as usize;
        lo..hi
    }

    fn cluster_width(&self, level: usize) -> usize {
        if self.variant == Variant::Uniform2D {
            1usize << (2 * (self.depth - level))
        } else {
            self.n >> level
        }
    }

    /// All matrix entries of a block (respecting triangle clipping).
    pub fn block_entries(&self, b: &AdmissibleBlock) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in self.block_rows(b) {
            for j in self.block_cols(b) {
                match b.part {
                    TrianglePart::Full => out.push((i, j)),
                    TrianglePart::Upper => {
                        if j >= i {
                            out.push((i, j));
                        }
                    }
                    TrianglePart::Lower => {
                        if j < i {
                            out.push((i, j));
                        }
                    }
                }
            }
        }
        out
    }

    /// Assigns an entry to its admissible level or to the adjacent part.
    /// This is the per-entry view of the block lists; the two agree exactly.
    pub fn level_of(&self, i: usize, j: usize) -> Coverage {
        match self.variant {
            Variant::Plain1D => self.level_of_line(i as i64, j as i64),
            Variant::ShiftedRow(c) => self.level_of_line(i as i64, j as i64 - c),
            Variant::ShiftedSkew(c) => {
                if j >= i {
                    self.level_of_line(i as i64, j as i64 - c)
                } else {
                    self.level_of_line(i as i64, j as i64 + c)
                }
            }
            Variant::Cyclic => {
                let n = self.n as i64;
                let d = (i as i64 - j as i64)
                    .rem_euclid(n)
                    .min((j as i64 - i as i64).rem_euclid(n));
                if d <= 1 {
                    return Coverage::Adjacent;
                }
                for level in 2..=self.depth {
                    let ring = 1i64 << level;
                    let a = (i >> (self.depth - level)) as i64;
                    let b = (j >> (self.depth - level)) as i64;
                    let dd = (a - b).rem_euclid(ring).min((b - a).rem_euclid(ring));
                    if dd >= 2 {
                        return Coverage::Level(level);
                    }
                }
                Coverage::Adjacent
            }
            Variant::Uniform2D => {
                let (i1, j1) = grid_coords_2d(i, self.depth);
                let (i2, j2) = grid_coords_2d(j, self.depth);
                let di = (i1 as i64 - i2 as i64).abs();
                let dj = (j1 as i64 - j2 as i64).abs();
                if di.max(dj) <= 1 {
                    return Coverage::Adjacent;
                }
                for level in 2..=self.depth {
                    let s = self.depth - level;
                    let di = ((i1 >> s) as i64 - (i2 >> s) as i64).abs();
                    let dj = ((j1 >> s) as i64 - (j2 >> s) as i64).abs();
                    if di.max(dj) >= 2 {
                        return Coverage::Level(level);
                    }
                }
                Coverage::Adjacent
            }
        }
    }

    /// Plain-line coverage on the (possibly translated) infinite grid. The
    /// shifted hierarchies extend one level coarser than 2: once the offset
    /// reaches N/2, cluster pairs at width N/2 become admissible (the plain
    /// split never populates that level).
    fn level_of_line(&self, i: i64, jt: i64) -> Coverage {
        if (i - jt).abs() <= 1 {
            return Coverage::Adjacent;
        }
        for level in 1..=self.depth {
            let m = (self.n >> level) as i64;
            if (i.div_euclid(m) - jt.div_euclid(m)).abs() >= 2 {
                return Coverage::Level(level);
            }
        }
        Coverage::Adjacent
    }

    /// Columns of the adjacent part in row `i`, ascending.
    pub fn adjacent_cols(&self, i: usize) -> Vec<usize> {
        let n = self.n as i64;
        let ii = i as i64;
        let mut cols: Vec<i64> = match self.variant {
            Variant::Plain1D => (-1..=1).map(|d| ii + d).collect(),
            Variant::Cyclic => (-1..=1).map(|d| (ii + d).rem_euclid(n)).collect(),
            Variant::ShiftedRow(c) => (-1..=1).map(|d| ii + c + d).collect(),
            Variant::ShiftedSkew(c) => {
                let mut v: Vec<i64> = (-1..=1).map(|d| ii + c + d).filter(|&j| j >= ii).collect();
                v.extend((-1..=1).map(|d| ii - c + d).filter(|&j| j < ii));
                v
            }
            Variant::Uniform2D => {
                let (gi, gj) = grid_coords_2d(i, self.depth);
                let side = self.side as i64;
                let mut v = Vec::with_capacity(9);
                for di in -1..=1i64 {
                    for dj in -1..=1i64 {
                        let ni = gi as i64 + di;
                        let nj = gj as i64 + dj;
                        if (0..side).contains(&ni) && (0..side).contains(&nj) {
                            v.push(grid_index_2d(ni as usize, nj as usize, self.depth) as i64);
                        }
                    }
                }
                v
            }
        };
        cols.retain(|&j| (0..n).contains(&j));
        cols.sort_unstable();
        cols.dedup();
        cols.into_iter().map(|j| j as usize).collect()
    }

    /// Measured (row, column) block sparsity at one level.
    pub fn block_sparsity(&self, level: usize) -> Result<(usize, usize)> {
        if level < 1 || level > self.depth {
            return Err(Error::LevelOutOfRange { level });
        }
        let blocks = match self.levels.iter().find(|l| l.level == level) {
            Some(l) => &l.blocks,
            None => return Ok((0, 0)),
        };
        let mut rows = std::collections::BTreeMap::new();
        let mut cols = std::collections::BTreeMap::new();
        for b in blocks {
            *rows.entry((b.row, b.part)).or_insert(0usize) += 1;
            *cols.entry((b.col, b.part)).or_insert(0usize) += 1;
        }
        Ok((
            rows.values().copied().max().unwrap_or(0),
            cols.values().copied().max().unwrap_or(0),
        ))
    }

    /// Exhaustive tiling check: every entry covered exactly once by the block
    /// lists plus the adjacent part, and consistently with `level_of`.
    pub fn verify_tiling(&self) -> Result<()> {
        let n = self.n;
        let mut seen = vec![0u8; n * n];
        for lv in &self.levels {
            for b in &lv.blocks {
                for (i, j) in self.block_entries(b) {
                    seen[i * n + j] += 1;
                    if self.level_of(i, j) != Coverage::Level(lv.level) {
                        return Err(Error::invalid(format!(
                            "entry ({i},{j}) assigned to level {} but level_of disagrees",
                            lv.level
                        )));
                    }
                }
            }
        }
        for i in 0..n {
            for j in self.adjacent_cols(i) {
                seen[i * n + j] += 1;
                if self.level_of(i, j) != Coverage::Adjacent {
                    return Err(Error::invalid(format!(
                        "entry ({i},{j}) in adjacent part but level_of disagrees"
                    )));
                }
            }
        }
        if let Some(pos) = seen.iter().position(|&c| c != 1) {
            return Err(Error::invalid(format!(
                "entry ({}, {}) covered {} times",
                pos / n,
                pos % n,
                seen[pos]
            )));
        }
        Ok(())
    }
}

/// Builds the hierarchical decomposition for a uniform point set.
/// `eta = None` selects the variant default (2 in 1D, 1/√2 in 2D); other
/// values are accepted for the plain variant only and flagged experimental.
pub fn hierarchical_split(points: &PointSet, variant: Variant, eta: Option<f64>) -> Result<HSplit> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("empty point set"));
    }
    let dim = points.dim();
    if dim == 2 && variant != Variant::Uniform2D {
        return Err(Error::UnsupportedVariant {
            variant: variant.name().to_string(),
            what: "2D point sets".to_string(),
        });
    }
    if dim == 1 && variant == Variant::Uniform2D {
        return Err(Error::UnsupportedVariant {
            variant: variant.name().to_string(),
            what: "1D point sets".to_string(),
        });
    }
    if points.uniform_spacing().is_none() {
        return Err(Error::MinSeparation {
            detail: "points are not uniformly spaced; apply adaptive_mesh first".to_string(),
        });
    }
    let eta_default = default_eta(dim);
    let eta_val = eta.unwrap_or(eta_default);
    let experimental = (eta_val - eta_default).abs() > 1e-12;
    if experimental && variant != Variant::Plain1D {
        return Err(Error::UnsupportedVariant {
            variant: variant.name().to_string(),
            what: format!("non-default eta {eta_val}"),
        });
    }

    if let Variant::ShiftedRow(c) | Variant::ShiftedSkew(c) = variant {
        if c.unsigned_abs() as usize >= n {
            return Err(Error::invalid(format!(
                "shift offset {c} must satisfy |c| < N = {n}"
            )));
        }
    }

    if variant == Variant::Uniform2D {
        return build_2d(points);
    }
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { n });
    }
    let depth = n.trailing_zeros() as usize;

    if experimental {
        return build_experimental_1d(points, eta_val, depth);
    }

    let mut levels = Vec::new();
    let coarsest = match variant {
        Variant::ShiftedRow(_) | Variant::ShiftedSkew(_) => 1usize,
        _ => 2,
    };
    for level in coarsest..=depth {
        let clusters = 1i64 << level;
        let mut blocks = Vec::new();
        match variant {
            Variant::Plain1D => {
                // beyond the coarsest level, the parent constraint limits
                // candidates to |i - j| <= 3
                for i in 0..clusters {
                    if level < 2 {
                        break;
                    }
                    let (jlo, jhi) = if level == 2 {
                        (0, clusters - 1)
                    } else {
                        ((i - 3).max(0), (i + 3).min(clusters - 1))
                    };
                    for j in jlo..=jhi {
                        if (i - j).abs() >= 2 && (level == 2 || (i / 2 - j / 2).abs() <= 1) {
                            blocks.push(AdmissibleBlock {
                                level,
                                row: i,
                                col: j,
                                part: TrianglePart::Full,
                            });
                        }
                    }
                }
            }
            Variant::Cyclic => {
                let ring = clusters;
                let cyc = |a: i64, b: i64, ring: i64| {
                    (a - b).rem_euclid(ring).min((b - a).rem_euclid(ring))
                };
                for i in 0..clusters {
                    let mut candidates: Vec<i64> = if level == 2 {
                        (0..clusters).collect()
                    } else {
                        (-3..=3i64).map(|d| (i + d).rem_euclid(ring)).collect()
                    };
                    candidates.sort_unstable();
                    candidates.dedup();
                    for j in candidates {
                        if cyc(i, j, ring) >= 2 && (level == 2 || cyc(i / 2, j / 2, ring / 2) <= 1)
                        {
                            blocks.push(AdmissibleBlock {
                                level,
                                row: i,
                                col: j,
                                part: TrianglePart::Full,
                            });
                        }
                    }
                }
            }
            Variant::ShiftedRow(c) => {
                collect_shifted_blocks(level, n, c, TrianglePart::Full, &mut blocks);
            }
            Variant::ShiftedSkew(c) => {
                collect_shifted_blocks(level, n, c, TrianglePart::Upper, &mut blocks);
                collect_shifted_blocks(level, n, -c, TrianglePart::Lower, &mut blocks);
            }
            Variant::Uniform2D => unreachable!(),
        }
        blocks.sort_by_key(|b| (b.row, b.col, b.part as u8));
        if !blocks.is_empty() {
            levels.push(LevelBlocks { level, blocks });
        }
    }

    let adjacent_bandwidth = match variant {
        Variant::ShiftedSkew(c) if c.abs() >= 2 => 6,
        Variant::ShiftedSkew(c) if c.abs() == 1 => 5,
        _ => 3,
    };
    let split = HSplit {
        variant,
        n,
        depth,
        side: 0,
        eta: eta_val,
        experimental_eta: false,
        levels,
        adjacent_bandwidth,
    };
    prune_empty(split)
}

/// Shifted blocks live on the translated column grid; enumerate the cluster
/// indices whose clipped column range is nonempty.
fn collect_shifted_blocks(
    level: usize,
    n: usize,
    c: i64,
    part: TrianglePart,
    out: &mut Vec<AdmissibleBlock>,
) {
    let m = (n >> level) as i64;
    let lo = (-c).div_euclid(m) - 1;
    let hi = (n as i64 - c).div_euclid(m) + 1;
    let rows = 1i64 << level;
    for i in 0..rows {
        // beyond the coarsest level, candidates sit within |i - jt| <= 3
        let (jlo, jhi) = if level == 1 {
            (lo, hi)
        } else {
            ((i - 3).max(lo), (i + 3).min(hi))
        };
        for jt in jlo..=jhi {
            if (i - jt).abs() >= 2
                && (level == 1 || (i.div_euclid(2) - jt.div_euclid(2)).abs() <= 1)
            {
                let b = AdmissibleBlock {
                    level,
                    row: i,
                    col: jt,
                    part,
                };
                let col_lo = (jt * m + c).clamp(0, n as i64);
                let col_hi = ((jt + 1) * m + c).clamp(0, n as i64);
                if col_lo >= col_hi {
                    continue;
                }
                // triangle clipping can empty a block entirely
                let row_lo = i * m;
                let row_hi = (i + 1) * m;
                let nonempty = match part {
                    TrianglePart::Full => true,
                    TrianglePart::Upper => col_hi > row_lo,
                    TrianglePart::Lower => col_lo < row_hi - 1,
                };
                if nonempty {
                    out.push(b);
                }
            }
        }
    }
}

fn build_2d(points: &PointSet) -> Result<HSplit> {
    let side = points.side().expect("2D point set");
    if !side.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { n: side });
    }
    let depth = side.trailing_zeros() as usize;
    let n = side * side;
    let mut levels = Vec::new();
    for level in 2..=depth {
        let clusters = 1i64 << level;
        let mut blocks = Vec::new();
        for i1 in 0..clusters {
            for j1 in 0..clusters {
                let candidates: Vec<(i64, i64)> = if level == 2 {
                    (0..clusters)
                        .flat_map(|a| (0..clusters).map(move |b| (a, b)))
                        .collect()
                } else {
                    let mut v = Vec::new();
                    for pi in (i1 / 2 - 1)..=(i1 / 2 + 1) {
                        for pj in (j1 / 2 - 1)..=(j1 / 2 + 1) {
                            for a in (2 * pi)..(2 * pi + 2) {
                                for b in (2 * pj)..(2 * pj + 2) {
                                    if (0..clusters).contains(&a) && (0..clusters).contains(&b) {
                                        v.push((a, b));
                                    }
                                }
                            }
                        }
                    }
                    v
                };
                for (i2, j2) in candidates {
                    let admissible = (i1 - i2).abs().max((j1 - j2).abs()) >= 2;
                    let parent_near =
                        level == 2 || (i1 / 2 - i2 / 2).abs().max((j1 / 2 - j2 / 2).abs()) <= 1;
                    if admissible && parent_near {
                        blocks.push(AdmissibleBlock {
                            level,
                            row: grid_index_2d(i1 as usize, j1 as usize, level) as i64,
                            col: grid_index_2d(i2 as usize, j2 as usize, level) as i64,
                            part: TrianglePart::Full,
                        });
                    }
                }
            }
        }
        blocks.sort_by_key(|b| (b.row, b.col));
        blocks.dedup();
        if !blocks.is_empty() {
            levels.push(LevelBlocks { level, blocks });
        }
    }
    prune_empty(HSplit {
        variant: Variant::Uniform2D,
        n,
        depth,
        side,
        eta: default_eta(2),
        experimental_eta: false,
        levels,
        adjacent_bandwidth: 9,
    })
}

/// Literal definition-level construction for non-default η (plain 1D).
fn build_experimental_1d(points: &PointSet, eta: f64, depth: usize) -> Result<HSplit> {
    let n = points.len();
    let mut levels = Vec::new();
    let mut partitions = Vec::new();
    for level in 0..=depth {
        partitions.push(build_partition(n, level, points)?);
    }
    for level in 2..=depth {
        let clusters = &partitions[level];
        let mut blocks = Vec::new();
        for a in clusters {
            for b in clusters {
                if !is_admissible(a, b, points, eta) {
                    continue;
                }
                // covered at a coarser level?
                let mut covered = false;
                for coarse in 2..level {
                    let pa = &partitions[coarse][a.index >> (level - coarse)];
                    let pb = &partitions[coarse][b.index >> (level - coarse)];
                    if is_admissible(pa, pb, points, eta) {
                        covered = true;
                        break;
                    }
                }
                if !covered {
                    blocks.push(AdmissibleBlock {
                        level,
                        row: a.index as i64,
                        col: b.index as i64,
                        part: TrianglePart::Full,
                    });
                }
            }
        }
        blocks.sort_by_key(|b| (b.row, b.col));
        if !blocks.is_empty() {
            levels.push(LevelBlocks { level, blocks });
        }
    }
    // the adjacent part is whatever no level claimed; bandwidth measured
    let mut bw = 0usize;
    for i in 0..n {
        let mut count = 0usize;
        for j in 0..n {
            let covered = levels.iter().any(|lv| {
                lv.blocks.iter().any(|b| {
                    let m = n >> lv.level;
                    (b.row as usize * m..(b.row as usize + 1) * m).contains(&i)
                        && (b.col as usize * m..(b.col as usize + 1) * m).contains(&j)
                })
            });
            if !covered {
                count += 1;
            }
        }
        bw = bw.max(count);
    }
    Ok(HSplit {
        variant: Variant::Plain1D,
        n,
        depth,
        side: 0,
        eta,
        experimental_eta: true,
        levels,
        adjacent_bandwidth: bw,
    })
}

fn prune_empty(mut split: HSplit) -> Result<HSplit> {
    split.levels.retain(|l| !l.blocks.is_empty());
    Ok(split)
}

/// Rescales scattered points onto a unit-spacing integer mesh; original
/// points map to their nearest sites (carrying their masses), added sites
/// carry zero mass.
pub fn adaptive_mesh(points: &PointSet, min_sep: f64) -> Result<PointSet> {
    if points.dim() != 1 {
        return Err(Error::UnsupportedVariant {
            variant: "adaptive_mesh".into(),
            what: "2D point sets".into(),
        });
    }
    if min_sep <= 0.0 {
        return Err(Error::MinSeparation {
            detail: "min_sep must be positive".into(),
        });
    }
    let n = points.len();
    for i in 1..n {
        let gap = points.coord_1d(i) - points.coord_1d(i - 1);
        if gap < min_sep {
            return Err(Error::MinSeparation {
                detail: format!(
                    "gap {gap} between points {} and {} is below min_sep {min_sep}",
                    i - 1,
                    i
                ),
            });
        }
    }
    let origin = points.coord_1d(0);
    let scale = 1.0 / min_sep;
    let mut sites = Vec::with_capacity(n);
    for i in 0..n {
        let s = ((points.coord_1d(i) - origin) * scale + 0.5).floor() as usize;
        sites.push(s);
    }
    for w in sites.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::MinSeparation {
                detail: format!("points collide on mesh site {}", w[0]),
            });
        }
    }
    let mesh_size = sites.last().copied().unwrap_or(0) + 1;
    let mut masses = vec![0.0; mesh_size];
    let source = points.masses();
    for (idx, &s) in sites.iter().enumerate() {
        masses[s] = source.map_or(1.0, |m| m[idx]);
    }
    PointSet::grid_1d(mesh_size).with_masses(masses)
}

/// Extends a uniform mesh to the next power-of-two size with zero-mass sites.
pub fn pad_to_power_of_two(points: &PointSet) -> Result<PointSet> {
    let n = points.len();
    if n.is_power_of_two() {
        return Ok(points.clone());
    }
    let h = points
        .uniform_spacing()
        .ok_or_else(|| Error::MinSeparation {
            detail: "padding requires a uniform mesh".into(),
        })?;
    let target = n.next_power_of_two();
    let mut masses = vec![0.0; target];
    if let Some(m) = points.masses() {
        masses[..n].copy_from_slice(m);
    } else {
        for v in masses.iter_mut().take(n) {
            *v = 1.0;
        }
    }
    PointSet::grid_1d_scaled(target, h).with_masses(masses)
}

// --- serialization -----------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LevelRepr {
    level: usize,
    blocks: Vec<[i64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parts: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct SplitRepr {
    variant: String,
    n: usize,
    #[serde(rename = "L")]
    depth: usize,
    #[serde(default)]
    side: usize,
    #[serde(default)]
    shift: i64,
    #[serde(default)]
    eta: Option<f64>,
    levels: Vec<LevelRepr>,
    adjacent_bandwidth: usize,
}

impl Serialize for HSplit {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let levels = self
            .levels
            .iter()
            .map(|l| {
                let needs_parts = l.blocks.iter().any(|b| b.part != TrianglePart::Full);
                LevelRepr {
                    level: l.level,
                    blocks: l.blocks.iter().map(|b| [b.row, b.col]).collect(),
                    parts: needs_parts.then(|| {
                        l.blocks
                            .iter()
                            .map(|b| match b.part {
                                TrianglePart::Full => 'f',
                                TrianglePart::Upper => 'u',
                                TrianglePart::Lower => 'l',
                            })
                            .collect()
                    }),
                }
            })
            .collect();
        SplitRepr {
            variant: self.variant.name().to_string(),
            n: self.n,
            depth: self.depth,
            side: self.side,
            shift: self.shift(),
            eta: Some(self.eta),
            levels,
            adjacent_bandwidth: self.adjacent_bandwidth,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for HSplit {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = SplitRepr::deserialize(de)?;
        let variant = match repr.variant.as_str() {
            "plain" => Variant::Plain1D,
            "cyclic" => Variant::Cyclic,
            "shifted_row" => Variant::ShiftedRow(repr.shift),
            "shifted_skew" => Variant::ShiftedSkew(repr.shift),
            "uniform2d" => Variant::Uniform2D,
            other => {
                return Err(serde::de::Error::custom(format!("unknown variant {other}")));
            }
        };
        let levels = repr
            .levels
            .into_iter()
            .map(|l| {
                let parts: Vec<TrianglePart> = match &l.parts {
                    Some(s) => s
                        .chars()
                        .map(|c| match c {
                            'u' => TrianglePart::Upper,
                            'l' => TrianglePart::Lower,
                            _ => TrianglePart::Full,
                        })
                        .collect(),
                    None => vec![TrianglePart::Full; l.blocks.len()],
                };
                LevelBlocks {
                    level: l.level,
                    blocks: l
                        .blocks
                        .iter()
                        .zip(parts)
                        .map(|(b, part)| AdmissibleBlock {
                            level: l.level,
                            row: b[0],
                            col: b[1],
                            part,
                        })
                        .collect(),
                }
            })
            .collect();
        let eta = repr
            .eta
            .unwrap_or(default_eta(if variant == Variant::Uniform2D {
                2
            } else {
                1
            }));
        Ok(HSplit {
            variant,
            n: repr.n,
            depth: repr.depth,
            side: repr.side,
            eta,
            experimental_eta: false,
            levels,
            adjacent_bandwidth: repr.adjacent_bandwidth,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn partitions_match_examples() {
        let pts = PointSet::grid_1d(8);
        let cl = build_partition(8, 1, &pts).unwrap();
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].members, 0..4);
        assert_eq!(cl[1].members, 4..8);

        let cl = build_partition(8, 3, &pts).unwrap();
        assert_eq!(cl.len(), 8);
        assert!(cl.iter().all(|c| c.len() == 1));

        let pts = PointSet::grid_1d(16);
        let cl = build_partition(16, 2, &pts).unwrap();
        assert_eq!(cl[0].members, 0..4);
        assert_relative_eq!(cl[0].center.0, 1.5);
        assert_relative_eq!(cl[0].radius, 1.5);

        assert!(build_partition(12, 1, &PointSet::grid_1d(12)).is_err());
    }

    #[test]
    fn partitions_2d_have_quadtree_counts() {
        let pts = PointSet::grid_2d(8).unwrap();
        for level in 0..=3usize {
            let clusters = build_partition(64, level, &pts).unwrap();
            assert_eq!(clusters.len(), 1 << (2 * level));
            assert!(clusters.iter().all(|c| c.len() == 64 >> (2 * level)));
        }
        let singles = build_partition(64, 3, &pts).unwrap();
        assert!(singles.iter().all(|c| c.radius == 0.0));
    }

    #[test]
    fn admissibility_examples() {
        let pts = PointSet::grid_1d(16);
        let cl = build_partition(16, 2, &pts).unwrap();
        assert!(is_admissible(&cl[0], &cl[2], &pts, 2.0)); // dist 5 >= 2*1.5
        assert!(!is_admissible(&cl[0], &cl[1], &pts, 2.0)); // dist 1 < 3
        assert!(!is_admissible(&cl[0], &cl[0], &pts, 2.0));
    }

    #[test]
    fn plain_split_structure() {
        let pts = PointSet::grid_1d(16);
        let split = hierarchical_split(&pts, Variant::Plain1D, None).unwrap();
        let level2 = split.levels.iter().find(|l| l.level == 2).unwrap();
        assert_eq!(level2.blocks.len(), 6);
        let pairs: Vec<(i64, i64)> = level2.blocks.iter().map(|b| (b.row, b.col)).collect();
        assert_eq!(pairs, vec![(0, 2), (0, 3), (1, 3), (2, 0), (3, 0), (3, 1)]);
        assert!(split.levels.len() <= split.depth - 1);
        split.verify_tiling().unwrap();

        let small = hierarchical_split(&PointSet::grid_1d(4), Variant::Plain1D, None).unwrap();
        assert_eq!(small.levels.len(), 1);
        assert_eq!(small.levels[0].level, 2);
        // singletons with |i-j| >= 2
        assert!(small.levels[0]
            .blocks
            .iter()
            .all(|b| (b.row - b.col).abs() >= 2));
        small.verify_tiling().unwrap();
    }

    #[test]
    fn shifted_split_is_translated_plain() {
        let pts = PointSet::grid_1d(16);
        let plain = hierarchical_split(&pts, Variant::Plain1D, None).unwrap();
        let shifted = hierarchical_split(&pts, Variant::ShiftedRow(4), None).unwrap();
        shifted.verify_tiling().unwrap();
        // on columns >= c the split is the plain one translated right by c
        for i in 0..16usize {
            for j in 4..16usize {
                assert_eq!(
                    shifted.level_of(i, j),
                    plain.level_of(i, j - 4),
                    "at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn cyclic_and_skew_tilings() {
        for n in [4usize, 8, 16, 32] {
            let pts = PointSet::grid_1d(n);
            hierarchical_split(&pts, Variant::Cyclic, None)
                .unwrap()
                .verify_tiling()
                .unwrap();
            if n > 4 {
                hierarchical_split(&pts, Variant::ShiftedSkew(3), None)
                    .unwrap()
                    .verify_tiling()
                    .unwrap();
            }
        }
    }

    #[test]
    fn cyclic_block_structure_invariant_under_rotation() {
        // rotating rows and columns by one coarsest cluster (N/4 indices)
        // maps the block set at every level to itself
        let pts = PointSet::grid_1d(32);
        let split = hierarchical_split(&pts, Variant::Cyclic, None).unwrap();
        split.verify_tiling().unwrap();
        for lv in &split.levels {
            let ring = 1i64 << lv.level;
            let step = ring / 4;
            let set: std::collections::BTreeSet<(i64, i64)> =
                lv.blocks.iter().map(|b| (b.row, b.col)).collect();
            for &(r, c) in &set {
                assert!(set.contains(&((r + step).rem_euclid(ring), (c + step).rem_euclid(ring))));
            }
        }
        let n = split.n;
        let q = n / 4;
        for i in 0..n {
            for j in 0..n {
                assert_eq!(
                    split.level_of(i, j),
                    split.level_of((i + q) % n, (j + q) % n)
                );
            }
        }
    }

    #[test]
    fn block_sparsity_examples() {
        for n in [16usize, 64, 256] {
            let split = hierarchical_split(&PointSet::grid_1d(n), Variant::Plain1D, None).unwrap();
            for lv in &split.levels {
                let (r, c) = split.block_sparsity(lv.level).unwrap();
                assert!(
                    r <= 3 && c <= 3,
                    "n={n} level={} sparsity ({r},{c})",
                    lv.level
                );
            }
        }
        let split = hierarchical_split(&PointSet::grid_1d(16), Variant::Plain1D, None).unwrap();
        assert_eq!(split.block_sparsity(2).unwrap(), (2, 2));

        let pts2 = PointSet::grid_2d(16).unwrap();
        let split2 = hierarchical_split(&pts2, Variant::Uniform2D, None).unwrap();
        for lv in &split2.levels {
            let (r, c) = split2.block_sparsity(lv.level).unwrap();
            assert!(r <= 27 && c <= 27);
        }
        let (r3, _) = split2.block_sparsity(3).unwrap();
        assert!(r3 <= 27);
    }

    #[test]
    fn two_d_numbering_is_bijective() {
        for depth in 1..=5usize {
            let side = 1usize << depth;
            let mut seen = vec![false; side * side];
            for i in 0..side {
                for j in 0..side {
                    let m = grid_index_2d(i, j, depth);
                    assert!(!seen[m]);
                    seen[m] = true;
                    assert_eq!(grid_coords_2d(m, depth), (i, j));
                }
            }
        }
    }

    #[test]
    fn two_d_tiling() {
        let pts = PointSet::grid_2d(8).unwrap();
        let split = hierarchical_split(&pts, Variant::Uniform2D, None).unwrap();
        split.verify_tiling().unwrap();
    }

    #[test]
    fn adaptive_mesh_examples() {
        // identity on an integer grid
        let pts = PointSet::grid_1d(8);
        let meshed = adaptive_mesh(&pts, 1.0).unwrap();
        assert_eq!(meshed.len(), 8);

        // {0, 0.5, 2.0} at min_sep 0.5: five sites, three occupied
        let pts = PointSet::from_coords_1d(vec![0.0, 0.5, 2.0]).unwrap();
        let meshed = adaptive_mesh(&pts, 0.5).unwrap();
        assert_eq!(meshed.len(), 5);
        let occupied = meshed
            .masses()
            .unwrap()
            .iter()
            .filter(|&&m| m != 0.0)
            .count();
        assert_eq!(occupied, 3);

        // violation: gap below min_sep
        let pts = PointSet::from_coords_1d(vec![0.0, 0.2, 2.0]).unwrap();
        assert!(adaptive_mesh(&pts, 0.5).is_err());
    }

    #[test]
    fn adaptive_mesh_size_scales_with_inverse_gap() {
        // smallest gap 1/n on n points => mesh size O(n^2)
        let n = 16usize;
        let mut coords: Vec<f64> = (0..n - 1).map(|i| i as f64).collect();
        coords.push((n - 2) as f64 + 1.0 / n as f64);
        let pts = PointSet::from_coords_1d(coords).unwrap();
        let meshed = adaptive_mesh(&pts, 1.0 / n as f64).unwrap();
        assert!(meshed.len() >= n * (n - 2));
        assert!(meshed.len() <= 2 * n * n);
    }

    #[test]
    fn experimental_eta_still_tiles() {
        let pts = PointSet::grid_1d(32);
        let split = hierarchical_split(&pts, Variant::Plain1D, Some(1.0)).unwrap();
        assert!(split.experimental_eta);
        // coverage: every entry in exactly one block or the remainder
        let n = 32usize;
        let mut seen = vec![0u8; n * n];
        for lv in &split.levels {
            for b in &lv.blocks {
                for (i, j) in split.block_entries(b) {
                    seen[i * n + j] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&c| c <= 1));
    }

    #[test]
    fn split_serialization_roundtrip() {
        let pts = PointSet::grid_1d(32);
        for variant in [
            Variant::Plain1D,
            Variant::Cyclic,
            Variant::ShiftedRow(4),
            Variant::ShiftedSkew(3),
        ] {
            let split = hierarchical_split(&pts, variant, None).unwrap();
            let json = serde_json::to_string(&split).unwrap();
            let back: HSplit = serde_json::from_str(&json).unwrap();
            assert_eq!(back.n, split.n);
            assert_eq!(back.depth, split.depth);
            assert_eq!(back.variant, split.variant);
            for (a, b) in split.levels.iter().zip(&back.levels) {
                assert_eq!(a.level, b.level);
                assert_eq!(a.blocks, b.blocks);
            }
            back.verify_tiling().unwrap();
        }
    }
}
