//! The block-encoding calculus: `(α, a, ε)` ledgers, encoded-block
//! evaluators for the constructor lemmas, composition rules, resource
//! tallies, and numerical verification.
//!
//! An encoding carries a closed-form evaluator of the matrix
//! `α·⟨0^a|U|0^a⟩` it represents (never the full `2^{s+a}`-dimensional
//! unitary; [`explicit_unitary`] exists as a tiny-scale witness that such a
//! unitary completion exists). Controlled-rotation quantization is modeled
//! as round-to-nearest fixed point with the oracle's bit width and folded
//! into `ε`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::DEFAULT_ORACLE_BITS;
use crate::error::{Error, Result};
use crate::kernels::{quantize, EntryOracle};
use crate::linalg::operator_norm;

type BlockFn = Arc<dyn Fn() -> DMatrix<f64> + Send + Sync>;
type RightFn = Arc<dyn Fn(usize) -> DVector<f64> + Send + Sync>;

/// Oracle-query counts, a symbolic elementary-gate order, and the ancilla
/// qubits that are discarded before post-selection.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct ResourceTally {
    pub oracle_queries: BTreeMap<String, u64>,
    pub elementary_gate_order: String,
    pub extra_ancillas: u64,
}

impl ResourceTally {
    fn with(queries: &[(&str, u64)], gates: &str, extra: u64) -> Self {
        ResourceTally {
            oracle_queries: queries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            elementary_gate_order: gates.to_string(),
            extra_ancillas: extra,
        }
    }

    /// Composition adds query counts and discarded ancillas.
    pub fn merged_with(&self, other: &ResourceTally, gates: &str) -> Self {
        let mut queries = self.oracle_queries.clone();
        for (k, v) in &other.oracle_queries {
            *queries.entry(k.clone()).or_insert(0) += v;
        }
        ResourceTally {
            oracle_queries: queries,
            elementary_gate_order: gates.to_string(),
            extra_ancillas: self.extra_ancillas + other.extra_ancillas,
        }
    }

    pub fn query_count(&self, oracle: &str) -> u64 {
        self.oracle_queries.get(oracle).copied().unwrap_or(0)
    }

    pub fn total_queries(&self) -> u64 {
        self.oracle_queries.values().sum()
    }
}

/// Constructor tree recorded on every encoding.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub constructor: String,
    pub alpha: f64,
    pub ancillas: u32,
    pub eps: f64,
    pub children: Vec<Provenance>,
}

/// A `(β, n, ε₁)`-state-preparation-pair for a coefficient vector `y`:
/// amplitudes `c`, `d` with `Σ_j |β c_j* d_j - y_j| ≤ ε₁` and
/// `c_j* d_j = 0` past the vector length.
#[derive(Clone, Debug)]
pub struct StatePrepPair {
    pub y: Vec<f64>,
    pub beta: f64,
    pub n: u32,
    pub eps1: f64,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

/// Exact pair for a real signed vector: magnitudes split evenly between the
/// two amplitude vectors, signs carried on the left member.
pub fn make_prep_pair(y: &[f64], n: u32) -> Result<StatePrepPair> {
    let slots = 1usize << n;
    if y.len() > slots {
        return Err(Error::TooManyCoefficients {
            len: y.len(),
            slots,
        });
    }
    let beta: f64 = y.iter().map(|v| v.abs()).sum();
    if beta == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut c = vec![0.0; slots];
    let mut d = vec![0.0; slots];
    for (j, &v) in y.iter().enumerate() {
        let a = (v.abs() / beta).sqrt();
        c[j] = a * v.signum();
        d[j] = a;
    }
    let eps1: f64 = y
        .iter()
        .enumerate()
        .map(|(j, &v)| (beta * c[j] * d[j] - v).abs())
        .sum();
    Ok(StatePrepPair {
        y: y.to_vec(),
        beta,
        n,
        eps1,
        c,
        d,
    })
}

/// An `(α, a, ε)`-block-encoding of an `s`-qubit operator, with a
/// closed-form evaluator of the represented matrix and (where the
/// constructor has one) a model of the pre-measurement "right part" state.
#[derive(Clone)]
pub struct BlockEncoding {
    pub alpha: f64,
    pub ancillas: u32,
    pub eps: f64,
    /// Qubit count of the encoded operator (`N = 2^s`).
    pub qubits: u32,
    pub resources: ResourceTally,
    pub provenance: Provenance,
    block: Option<BlockFn>,
    right_part: Option<RightFn>,
}

impl std::fmt::Debug for BlockEncoding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BlockEncoding(alpha={}, a={}, eps={:.3e}, s={})",
            self.alpha, self.ancillas, self.eps, self.qubits
        )
    }
}

impl BlockEncoding {
    pub fn dim(&self) -> usize {
        1usize << self.qubits
    }

    /// The encoded block `⟨0^a|U|0^a⟩` itself (norm at most 1). This is
    /// fixed by the constructed unitary and does not move when the ledger's
    /// `α` is altered.
    pub fn encoded_block(&self) -> DMatrix<f64> {
        match &self.block {
            Some(f) => f(),
            None => panic!("ledger-only encoding has no dense evaluator"),
        }
    }

    pub fn has_evaluator(&self) -> bool {
        self.block.is_some()
    }

    /// The matrix `α·⟨0^a|U|0^a⟩` this encoding represents.
    pub fn represented(&self) -> DMatrix<f64> {
        self.encoded_block() * self.alpha
    }

    /// `‖A - α·⟨0^a|U|0^a⟩‖`.
    pub fn verify(&self, a: &DMatrix<f64>) -> f64 {
        operator_norm(&(a - self.represented()))
    }

    /// Verifies the ledger against the claimed matrix: residual within the
    /// declared `ε` and embeddability `α ≥ ‖α·block‖`. The declared error
    /// models oracle and rotation precision; the host's own f64 roundoff
    /// rides on top, so the comparison allows `2^-46·(1+α)` of it.
    pub fn check(&self, a: &DMatrix<f64>) -> Result<f64> {
        let residual = self.verify(a);
        let fp_floor = (2f64).powi(-46) * (1.0 + self.alpha);
        if residual > self.eps + fp_floor {
            return Err(Error::BoundViolated {
                what: "block-encoding residual".to_string(),
                bound: self.eps,
                actual: residual,
            });
        }
        let block_norm = operator_norm(&self.represented());
        if block_norm > self.alpha * (1.0 + 1e-12) + self.eps {
            return Err(Error::BoundViolated {
                what: "embeddability alpha >= ||block||".to_string(),
                bound: self.alpha,
                actual: block_norm,
            });
        }
        Ok(residual)
    }

    /// Largest deviation of a right-part column norm from 1, if the
    /// constructor models the pre-measurement state.
    pub fn isometry_defect(&self) -> Option<f64> {
        let rp = self.right_part.as_ref()?;
        let mut worst = 0.0f64;
        for j in 0..self.dim() {
            worst = worst.max((rp(j).norm() - 1.0).abs());
        }
        Some(worst)
    }

    pub fn has_right_part(&self) -> bool {
        self.right_part.is_some()
    }

    /// Same encoding on a wider ancilla register (identity on the extra
    /// qubits).
    pub fn pad_ancillas(&self, ancillas: u32) -> Result<BlockEncoding> {
        if ancillas < self.ancillas {
            return Err(Error::invalid("cannot shrink the ancilla register"));
        }
        let mut out = self.clone();
        out.ancillas = ancillas;
        Ok(out)
    }

    /// Ledger report: `{alpha, ancillas, eps, resources, provenance}`.
    pub fn ledger_json(&self) -> serde_json::Value {
        serde_json::json!({
            "alpha": self.alpha,
            "ancillas": self.ancillas,
            "eps": self.eps,
            "qubits": self.qubits,
            "resources": {
                "oracle_queries": self.resources.oracle_queries,
                "elementary_gate_order": self.resources.elementary_gate_order,
                "extra_ancillas": self.resources.extra_ancillas,
            },
            "provenance": self.provenance,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        constructor: &str,
        alpha: f64,
        ancillas: u32,
        eps: f64,
        qubits: u32,
        resources: ResourceTally,
        children: Vec<Provenance>,
        block: Option<BlockFn>,
        right_part: Option<RightFn>,
    ) -> Self {
        BlockEncoding {
            alpha,
            ancillas,
            eps,
            qubits,
            resources,
            provenance: Provenance {
                constructor: constructor.to_string(),
                alpha,
                ancillas,
                eps,
                children,
            },
            block,
            right_part,
        }
    }
}

fn qubits_for(n: usize) -> Result<u32> {
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { n });
    }
    Ok(n.trailing_zeros())
}

// --- naive dense -------------------------------------------------------

/// Naive `(N·â, s+1, ε)`-encoding of a dense matrix with oracle access;
/// two queries to the entry oracle.
pub fn encode_dense_naive(oracle: &EntryOracle, a_hat: f64, eps: f64) -> Result<BlockEncoding> {
    let n = oracle.n();
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            entries[(i, j)] = oracle.eval_exact(i, j)?;
        }
    }
    encode_dense_naive_matrix(&entries, a_hat, oracle.bits(), eps, "O_k")
}

/// Matrix-backed form of the naive encoding (used for sub-blocks, where the
/// oracle query is conditioned on the block).
pub fn encode_dense_naive_matrix(
    a: &DMatrix<f64>,
    a_hat: f64,
    bits: u32,
    eps: f64,
    oracle_name: &str,
) -> Result<BlockEncoding> {
    let n = a.nrows();
    let s = qubits_for(n)?;
    let max_entry = a.amax();
    if a_hat < max_entry {
        return Err(Error::BoundViolated {
            what: "a_hat >= max |a_ij|".to_string(),
            bound: a_hat,
            actual: max_entry,
        });
    }
    let quant_bound = n as f64 * a_hat * (2f64).powi(-(bits as i32));
    let alpha = n as f64 * a_hat;
    let a_owned = a.clone();
    let block: BlockFn = Arc::new(move || {
        DMatrix::from_fn(n, n, |i, j| quantize(a_owned[(i, j)], a_hat, bits) / alpha)
    });
    let a_right = a.clone();
    let right: RightFn = Arc::new(move |j| {
        let scale = 1.0 / (n as f64).sqrt();
        let mut v = DVector::zeros(2 * n);
        for i in 0..n {
            let r = quantize(a_right[(i, j)], a_hat, bits) / a_hat;
            v[2 * i] = scale * r;
            v[2 * i + 1] = scale * (1.0 - r * r).max(0.0).sqrt();
        }
        v
    });
    Ok(BlockEncoding::assemble(
        "dense_naive",
        alpha,
        s + 1,
        eps.max(quant_bound),
        s,
        ResourceTally::with(
            &[(oracle_name, 2)],
            "O(s + polylog(N a_hat / eps))",
            bits as u64,
        ),
        Vec::new(),
        Some(block),
        Some(right),
    ))
}

// --- sparse ------------------------------------------------------------

/// `(â√(d_r d_c), s+3, ε)`-encoding of a `d_r`/`d_c`-sparse matrix with
/// index oracles (`r_ik`, padded by `k + N` past the last nonzero) and the
/// entry oracle.
pub fn encode_sparse(
    oracle: &EntryOracle,
    row_index: &dyn Fn(usize, usize) -> usize,
    col_index: &dyn Fn(usize, usize) -> usize,
    d_r: usize,
    d_c: usize,
    a_hat: f64,
    eps: f64,
) -> Result<BlockEncoding> {
    let n = oracle.n();
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            entries[(i, j)] = oracle.eval_exact(i, j)?;
        }
    }
    encode_sparse_matrix(
        &entries,
        row_index,
        col_index,
        d_r,
        d_c,
        a_hat,
        oracle.bits(),
        eps,
        "O_k",
    )
}

#[allow(clippy::too_many_arguments)]
pub fn encode_sparse_matrix(
    a: &DMatrix<f64>,
    row_index: &dyn Fn(usize, usize) -> usize,
    col_index: &dyn Fn(usize, usize) -> usize,
    d_r: usize,
    d_c: usize,
    a_hat: f64,
    bits: u32,
    eps: f64,
    oracle_name: &str,
) -> Result<BlockEncoding> {
    let n = a.nrows();
    let s = qubits_for(n)?;
    let max_entry = a.amax();
    if a_hat < max_entry {
        return Err(Error::BoundViolated {
            what: "a_hat >= max |a_ij|".to_string(),
            bound: a_hat,
            actual: max_entry,
        });
    }

    // the declared pattern must cover every nonzero entry
    let mut row_lists: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut cols = Vec::new();
        for k in 0..d_r {
            let j = row_index(i, k);
            if j < n {
                cols.push(j);
            }
        }
        row_lists.push(cols);
    }
    let mut col_lists: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, list) in col_lists.iter_mut().enumerate() {
        for l in 0..d_c {
            let i = col_index(l, j);
            if i < n {
                list.push(i);
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                if !row_lists[i].contains(&j) {
                    return Err(Error::BoundViolated {
                        what: format!("row sparsity: nonzero ({i},{j}) missing from row oracle"),
                        bound: d_r as f64,
                        actual: (row_lists[i].len() + 1) as f64,
                    });
                }
                if !col_lists[j].contains(&i) {
                    return Err(Error::BoundViolated {
                        what: format!(
                            "column sparsity: nonzero ({i},{j}) missing from column oracle"
                        ),
                        bound: d_c as f64,
                        actual: (col_lists[j].len() + 1) as f64,
                    });
                }
            }
        }
    }

    let sqrt_d = ((d_r * d_c) as f64).sqrt();
    let alpha = a_hat * sqrt_d;
    let quant_bound = sqrt_d * a_hat * (2f64).powi(-(bits as i32));
    let pattern = row_lists.clone();
    let a_owned = a.clone();
    let block: BlockFn = Arc::new(move || {
        let mut m = DMatrix::zeros(n, n);
        for (i, cols) in pattern.iter().enumerate() {
            for &j in cols {
                m[(i, j)] = quantize(a_owned[(i, j)], a_hat, bits) / alpha;
            }
        }
        m
    });
    let a_right = a.clone();
    let cols_of: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..d_c).map(|l| col_index(l, j)).collect())
        .collect();
    let right: RightFn = Arc::new(move |j| {
        // slots over the (padded) row-index register plus the rotation flag
        let scale = 1.0 / (d_c as f64).sqrt();
        let mut v = DVector::zeros(2 * (2 * n));
        for &i in &cols_of[j] {
            let slot = i.min(2 * n - 1);
            let r = if i < n {
                quantize(a_right[(i, j)], a_hat, bits) / a_hat
            } else {
                0.0
            };
            v[2 * slot] += scale * r;
            v[2 * slot + 1] += scale * (1.0 - r * r).max(0.0).sqrt();
        }
        v
    });
    Ok(BlockEncoding::assemble(
        "sparse",
        alpha,
        s + 3,
        eps.max(quant_bound),
        s,
        ResourceTally::with(
            &[(oracle_name, 2), ("O_r", 1), ("O_c", 1)],
            "O(s + polylog(a_hat sqrt(d_r d_c) / eps))",
            bits as u64,
        ),
        Vec::new(),
        Some(block),
        Some(right),
    ))
}

/// Row/column index oracles of a band matrix with half-width `w` (sparsity
/// `2w+1`), padded per the sparse-encoding convention.
pub fn band_index_oracles(
    n: usize,
    w: usize,
) -> (
    impl Fn(usize, usize) -> usize,
    impl Fn(usize, usize) -> usize,
) {
    let row = move |i: usize, k: usize| -> usize {
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(n - 1);
        if k <= hi - lo {
            lo + k
        } else {
            k + n
        }
    };
    let col = move |l: usize, j: usize| -> usize {
        let lo = j.saturating_sub(w);
        let hi = (j + w).min(n - 1);
        if l <= hi - lo {
            lo + l
        } else {
            l + n
        }
    };
    (row, col)
}

// --- block-sparse / block-diagonal ---------------------------------------

/// `(α̂√(d_r d_c), t+a+3, 2√(d_r d_c)ε)`-encoding of a block-sparse matrix
/// whose nonzero blocks are themselves block-encoded. With uniform block
/// normalization the α-oracle and one ancilla are saved.
pub fn encode_block_sparse(
    blocks: &BTreeMap<(usize, usize), BlockEncoding>,
    grid: usize,
    d_r: usize,
    d_c: usize,
) -> Result<BlockEncoding> {
    if blocks.is_empty() {
        return Err(Error::invalid(
            "block-sparse encoding needs at least one block",
        ));
    }
    let t = qubits_for(grid)?;
    let first = blocks.values().next().unwrap();
    let sub_q = first.qubits;
    let sub_a = first.ancillas;
    for enc in blocks.values() {
        if enc.qubits != sub_q {
            return Err(Error::DimensionMismatch {
                expected: 1 << sub_q,
                got: 1 << enc.qubits,
            });
        }
        if enc.ancillas != sub_a {
            return Err(Error::HeterogeneousAncillas {
                a: sub_a,
                b: enc.ancillas,
            });
        }
    }
    let mut row_counts = vec![0usize; grid];
    let mut col_counts = vec![0usize; grid];
    for &(i, j) in blocks.keys() {
        if i >= grid || j >= grid {
            return Err(Error::IndexOutOfRange {
                index: i.max(j),
                size: grid,
            });
        }
        row_counts[i] += 1;
        col_counts[j] += 1;
    }
    let max_r = row_counts.iter().copied().max().unwrap_or(0);
    let max_c = col_counts.iter().copied().max().unwrap_or(0);
    if max_r > d_r || max_c > d_c {
        return Err(Error::BoundViolated {
            what: "declared block sparsity".to_string(),
            bound: d_r.max(d_c) as f64,
            actual: max_r.max(max_c) as f64,
        });
    }

    let alpha_hat = blocks.values().map(|e| e.alpha).fold(0.0f64, f64::max);
    let uniform = blocks
        .values()
        .all(|e| (e.alpha - alpha_hat).abs() <= 1e-12 * alpha_hat);
    let sqrt_d = ((d_r * d_c) as f64).sqrt();
    let sub_eps = blocks.values().map(|e| e.eps).fold(0.0f64, f64::max);
    let cr_quant = if uniform {
        0.0
    } else {
        alpha_hat * (2f64).powi(-(DEFAULT_ORACLE_BITS as i32))
    };
    let eps = 2.0 * sqrt_d * (sub_eps + cr_quant);
    let ancillas = t as u32 + sub_a + if uniform { 2 } else { 3 };

    let mut tally = ResourceTally::with(
        &[("O_r", 1), ("O_c", 1)],
        "O(t + polylog(alpha_hat / eps))",
        0,
    );
    if !uniform {
        *tally
            .oracle_queries
            .entry("O_alpha".to_string())
            .or_insert(0) += 2;
        tally.extra_ancillas += DEFAULT_ORACLE_BITS as u64;
    }
    for enc in blocks.values() {
        tally = tally.merged_with(&enc.resources, "O(t + polylog(alpha_hat / eps))");
    }

    let sub_dim = 1usize << sub_q;
    let n = grid * sub_dim;
    let children: Vec<Provenance> = blocks.values().map(|e| e.provenance.clone()).collect();
    let placed: Vec<((usize, usize), BlockEncoding)> =
        blocks.iter().map(|(k, v)| (*k, v.clone())).collect();
    let placed_block = placed.clone();
    let has_eval = blocks.values().all(|e| e.has_evaluator());
    let block: Option<BlockFn> = has_eval.then(|| {
        let captured = placed_block;
        Arc::new(move || {
            let mut m = DMatrix::zeros(n, n);
            for ((bi, bj), enc) in &captured {
                // heterogeneous normalizations go through the quantized
                // rotation alpha_ij / alpha_hat
                let ratio = if uniform {
                    enc.alpha / alpha_hat
                } else {
                    quantize(enc.alpha / alpha_hat, 1.0, DEFAULT_ORACLE_BITS)
                };
                let sub = enc.encoded_block() * (ratio / sqrt_d);
                for i in 0..sub_dim {
                    for j in 0..sub_dim {
                        m[(bi * sub_dim + i, bj * sub_dim + j)] = sub[(i, j)];
                    }
                }
            }
            m
        }) as BlockFn
    });

    // per-column-block sorted row-block lists, the classical O_c
    let mut col_blocks: Vec<Vec<usize>> = vec![Vec::new(); grid];
    for &(i, j) in blocks.keys() {
        col_blocks[j].push(i);
    }
    let has_right = blocks.values().all(|e| e.right_part.is_some());
    let right: Option<RightFn> = has_right.then(|| {
        let captured = placed;
        let col_blocks = col_blocks.clone();
        Arc::new(move |col: usize| {
            let bj = col / sub_dim;
            let inner = col % sub_dim;
            let scale = 1.0 / (d_c as f64).sqrt();
            let sub_right_dim: usize = captured
                .iter()
                .map(|(_, e)| e.right_part.as_ref().map(|r| r(0).len()).unwrap_or(1))
                .max()
                .unwrap_or(1);
            // layout: [block-row slots][padded slots]
            let mut v = DVector::zeros(grid * sub_right_dim + d_c);
            for l in 0..d_c {
                match col_blocks[bj].get(l) {
                    Some(&bi) => {
                        let enc = &captured
                            .iter()
                            .find(|((r, c), _)| *r == bi && *c == bj)
                            .expect("block present")
                            .1;
                        let sub = enc.right_part.as_ref().unwrap()(inner);
                        let base = bi * sub_right_dim;
                        for (k, val) in sub.iter().enumerate() {
                            v[base + k] += scale * val;
                        }
                    }
                    None => {
                        // padded slot: unit amplitude on its own flag state
                        v[grid * sub_right_dim + l] += scale;
                    }
                }
            }
            v
        }) as RightFn
    });

    Ok(BlockEncoding::assemble(
        if uniform {
            "block_sparse(uniform)"
        } else {
            "block_sparse"
        },
        alpha_hat * sqrt_d,
        ancillas,
        eps,
        t + sub_q,
        tally,
        children,
        block,
        right,
    ))
}

/// `(α̂, a+1, 2ε)`-encoding of `⊕_j A_j`; with uniform normalization the
/// select unitary is already an `(α̂, a, ε)`-encoding.
pub fn encode_block_diagonal(blocks: &[BlockEncoding]) -> Result<BlockEncoding> {
    if blocks.is_empty() {
        return Err(Error::invalid(
            "block-diagonal encoding needs at least one block",
        ));
    }
    let grid = blocks.len();
    let t = qubits_for(grid)?;
    let sub_q = blocks[0].qubits;
    let sub_a = blocks[0].ancillas;
    for enc in blocks {
        if enc.qubits != sub_q {
            return Err(Error::DimensionMismatch {
                expected: 1 << sub_q,
                got: 1 << enc.qubits,
            });
        }
        if enc.ancillas != sub_a {
            return Err(Error::HeterogeneousAncillas {
                a: sub_a,
                b: enc.ancillas,
            });
        }
    }
    let alpha_hat = blocks.iter().map(|e| e.alpha).fold(0.0f64, f64::max);
    let uniform = blocks
        .iter()
        .all(|e| (e.alpha - alpha_hat).abs() <= 1e-12 * alpha_hat);
    let sub_eps = blocks.iter().map(|e| e.eps).fold(0.0f64, f64::max);
    let (extra_a, eps) = if uniform {
        (0, sub_eps)
    } else {
        let cr = alpha_hat * (2f64).powi(-(DEFAULT_ORACLE_BITS as i32));
        (1, 2.0 * (sub_eps + cr))
    };

    let mut tally = ResourceTally::with(&[], "O(polylog(alpha_hat / eps))", 0);
    if !uniform {
        *tally
            .oracle_queries
            .entry("O_alpha".to_string())
            .or_insert(0) += 2;
        tally.extra_ancillas += DEFAULT_ORACLE_BITS as u64;
    }
    for enc in blocks {
        tally = tally.merged_with(&enc.resources, "O(polylog(alpha_hat / eps))");
    }

    let sub_dim = 1usize << sub_q;
    let n = grid * sub_dim;
    let owned: Vec<BlockEncoding> = blocks.to_vec();
    let owned_block = owned.clone();
    let block: Option<BlockFn> = owned.iter().all(|e| e.has_evaluator()).then(|| {
        Arc::new(move || {
            let mut m = DMatrix::zeros(n, n);
            for (bj, enc) in owned_block.iter().enumerate() {
                let ratio = if uniform {
                    enc.alpha / alpha_hat
                } else {
                    quantize(enc.alpha / alpha_hat, 1.0, DEFAULT_ORACLE_BITS)
                };
                let sub = enc.encoded_block() * ratio;
                for i in 0..sub_dim {
                    for j in 0..sub_dim {
                        m[(bj * sub_dim + i, bj * sub_dim + j)] = sub[(i, j)];
                    }
                }
            }
            m
        }) as BlockFn
    });
    let owned_right = owned.clone();
    let right: Option<RightFn> = owned.iter().all(|e| e.right_part.is_some()).then(|| {
        Arc::new(move |col: usize| {
            let bj = col / sub_dim;
            let inner = col % sub_dim;
            let enc = &owned_right[bj];
            let sub = enc.right_part.as_ref().unwrap()(inner);
            let ratio = if uniform {
                1.0
            } else {
                quantize(enc.alpha / alpha_hat, 1.0, DEFAULT_ORACLE_BITS)
            };
            let mut v = DVector::zeros(2 * sub.len());
            for (k, val) in sub.iter().enumerate() {
                v[2 * k] = ratio * val;
                v[2 * k + 1] = (1.0 - ratio * ratio).max(0.0).sqrt() * val;
            }
            v
        }) as RightFn
    });

    let children: Vec<Provenance> = blocks.iter().map(|e| e.provenance.clone()).collect();
    // the block-select register belongs to the encoded system, not to the
    // ancillas: uniform normalizations need no extra qubit at all
    Ok(BlockEncoding::assemble(
        if uniform {
            "block_diagonal(uniform)"
        } else {
            "block_diagonal"
        },
        alpha_hat,
        sub_a + extra_a,
        eps,
        t + sub_q,
        tally,
        children,
        block,
        right,
    ))
}

// --- low rank ------------------------------------------------------------

/// `(β, ⌈log p⌉ + s, ε₁)`-encoding of `Σ σ_i u_i v_i†` from state
/// preparation unitaries and a prep pair for the singular values.
pub fn encode_low_rank(
    singulars: &[f64],
    left: &[DVector<f64>],
    right: &[DVector<f64>],
    prep: &StatePrepPair,
) -> Result<BlockEncoding> {
    let p = singulars.len();
    if p == 0 || left.len() != p || right.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: left.len().min(right.len()),
        });
    }
    let n = left[0].len();
    let s = qubits_for(n)?;
    for v in left.iter().chain(right) {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        if (v.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::BoundViolated {
                what: "singular vector norm".to_string(),
                bound: 1.0,
                actual: v.norm(),
            });
        }
    }
    let sum_sigma: f64 = singulars.iter().map(|v| v.abs()).sum();
    if sum_sigma > prep.beta * (1.0 + 1e-12) {
        return Err(Error::BoundViolated {
            what: "sum of singular values within beta".to_string(),
            bound: prep.beta,
            actual: sum_sigma,
        });
    }
    let r = if p <= 1 {
        0
    } else {
        usize::BITS - (p - 1).leading_zeros()
    };
    if prep.n < r {
        return Err(Error::TooManyCoefficients {
            len: p,
            slots: 1 << prep.n,
        });
    }
    // effective error against the claimed singular values
    let eps: f64 = singulars
        .iter()
        .enumerate()
        .map(|(i, &sig)| (prep.beta * prep.c[i] * prep.d[i] - sig).abs())
        .sum();

    let beta = prep.beta;
    let coeffs: Vec<f64> = (0..p).map(|i| prep.c[i] * prep.d[i]).collect();
    let left_owned: Vec<DVector<f64>> = left.to_vec();
    let right_owned: Vec<DVector<f64>> = right.to_vec();
    let lb = left_owned.clone();
    let cb = coeffs.clone();
    let block: BlockFn = Arc::new(move || {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..cb.len() {
            m += cb[i] * &lb[i] * right_owned[i].transpose();
        }
        m
    });
    let d_amp: Vec<f64> = prep.d.clone();
    let right_fn: RightFn = Arc::new(move |_col: usize| {
        // Σ_i d_i |i⟩|u_i⟩ after the register swap; the |n⟩ register is
        // factored out
        let slots = d_amp.len();
        let mut v = DVector::zeros(slots * n);
        for (i, u) in left_owned.iter().enumerate() {
            for k in 0..n {
                v[i * n + k] = d_amp[i] * u[k];
            }
        }
        for (i, amp) in d_amp.iter().enumerate().skip(left_owned.len()) {
            v[i * n] = *amp;
        }
        v
    });
    Ok(BlockEncoding::assemble(
        "low_rank",
        beta,
        prep.n + s,
        eps,
        s,
        ResourceTally::with(
            &[("G_L", 1), ("G_R", 1), ("P_L", 1), ("P_R", 1)],
            "O(log p + s)",
            0,
        ),
        Vec::new(),
        Some(block),
        Some(right_fn),
    ))
}

/// `(2^s û v̂, s + 2b + 2, 0)`-encoding of the rank-1 operator `u v†` with
/// entry oracles.
pub fn encode_rank1_oracle(
    u: &DVector<f64>,
    v: &DVector<f64>,
    u_hat: f64,
    v_hat: f64,
) -> Result<BlockEncoding> {
    let n = u.len();
    let s = qubits_for(n)?;
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let umax = u.amax();
    let vmax = v.amax();
    if u_hat < umax || v_hat < vmax {
        return Err(Error::BoundViolated {
            what: "amplitude bounds u_hat/v_hat".to_string(),
            bound: u_hat.min(v_hat),
            actual: umax.max(vmax),
        });
    }
    let bits = DEFAULT_ORACLE_BITS;
    let alpha = n as f64 * u_hat * v_hat;
    let (uo, vo) = (u.clone(), v.clone());
    let block: BlockFn = Arc::new(move || {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = uo[i] * vo[j] / alpha;
            }
        }
        m
    });
    let ur = u.clone();
    let right: RightFn = Arc::new(move |_col| {
        let scale = 1.0 / (n as f64).sqrt();
        let mut vstate = DVector::zeros(2 * n);
        for i in 0..n {
            let r = ur[i] / u_hat;
            vstate[2 * i] = scale * r;
            vstate[2 * i + 1] = scale * (1.0 - r * r).max(0.0).sqrt();
        }
        vstate
    });
    Ok(BlockEncoding::assemble(
        "rank1_oracle",
        alpha,
        s + 2 * bits + 2,
        0.0,
        s,
        ResourceTally::with(&[("O_u", 2), ("O_v", 2)], "O(s + b)", 2 * bits as u64),
        Vec::new(),
        Some(block),
        Some(right),
    ))
}

// --- composition ---------------------------------------------------------

/// Linear combination `Σ_j y_j Ã_j` of block-encoded matrices, where `Ã_j =
/// A_j/α_j` is the unit-normalized block of input `j` and `y` is the prep
/// pair's coefficient vector. Mixed input normalizations are handled by
/// folding each `α_j` into the weights, as the hierarchical construction
/// does; the resulting ledger is `(β, a + n, ε₁ + β·max_j ε_j/α_j)`.
pub fn linear_combine(encodings: &[BlockEncoding], prep: &StatePrepPair) -> Result<BlockEncoding> {
    let m = encodings.len();
    if m == 0 {
        return Err(Error::invalid("linear combination of zero encodings"));
    }
    if m > (1usize << prep.n) {
        return Err(Error::TooManyCoefficients {
            len: m,
            slots: 1 << prep.n,
        });
    }
    let s = encodings[0].qubits;
    for e in encodings {
        if e.qubits != s {
            return Err(Error::DimensionMismatch {
                expected: 1 << s,
                got: 1 << e.qubits,
            });
        }
    }
    let a_max = encodings.iter().map(|e| e.ancillas).max().unwrap();
    let lifted: Vec<BlockEncoding> = encodings
        .iter()
        .map(|e| e.pad_ancillas(a_max))
        .collect::<Result<_>>()?;

    let eps2 = lifted
        .iter()
        .map(|e| e.eps / e.alpha)
        .fold(0.0f64, f64::max);
    let alpha = prep.beta;
    let eps = prep.eps1 + prep.beta * eps2;
    let ancillas = a_max + prep.n;

    let mut tally = ResourceTally::with(&[("P_L", 1), ("P_R", 1)], "O(n)", 0);
    for e in &lifted {
        tally = tally.merged_with(&e.resources, "O(n + children)");
    }
    let children: Vec<Provenance> = lifted.iter().map(|e| e.provenance.clone()).collect();

    let n = 1usize << s;
    let coeffs: Vec<f64> = (0..m).map(|j| prep.c[j] * prep.d[j]).collect();
    let owned = lifted.clone();
    let block: Option<BlockFn> = owned.iter().all(|e| e.has_evaluator()).then(|| {
        let cs = coeffs.clone();
        Arc::new(move || {
            let mut acc = DMatrix::zeros(n, n);
            for (j, e) in owned.iter().enumerate() {
                acc += cs[j] * e.encoded_block();
            }
            acc
        }) as BlockFn
    });
    let owned_r = lifted.clone();
    let d_amp = prep.d.clone();
    let right: Option<RightFn> = lifted.iter().all(|e| e.right_part.is_some()).then(|| {
        Arc::new(move |col: usize| {
            let sub_dim = owned_r
                .iter()
                .map(|e| e.right_part.as_ref().unwrap()(0).len())
                .max()
                .unwrap_or(1);
            let mut v = DVector::zeros(d_amp.len() * sub_dim);
            for (j, e) in owned_r.iter().enumerate() {
                let sub = e.right_part.as_ref().unwrap()(col);
                for (k, val) in sub.iter().enumerate() {
                    v[j * sub_dim + k] = d_amp[j] * val;
                }
            }
            for (j, amp) in d_amp.iter().enumerate().skip(owned_r.len()) {
                v[j * sub_dim] = *amp;
            }
            v
        }) as RightFn
    });

    Ok(BlockEncoding::assemble(
        "linear_combine",
        alpha,
        ancillas,
        eps,
        s,
        tally,
        children,
        block,
        right,
    ))
}

/// Product encoding: `(αβ, a+b, α ε_V + β ε_U)`-encoding of `AB`.
pub fn multiply(u: &BlockEncoding, v: &BlockEncoding) -> Result<BlockEncoding> {
    if u.qubits != v.qubits {
        return Err(Error::DimensionMismatch {
            expected: 1 << u.qubits,
            got: 1 << v.qubits,
        });
    }
    let alpha = u.alpha * v.alpha;
    let eps = u.alpha * v.eps + v.alpha * u.eps;
    let ancillas = u.ancillas + v.ancillas;
    let tally = u.resources.merged_with(&v.resources, "O(children)");
    let (uo, vo) = (u.clone(), v.clone());
    let block: Option<BlockFn> = (u.has_evaluator() && v.has_evaluator())
        .then(|| Arc::new(move || uo.encoded_block() * vo.encoded_block()) as BlockFn);
    Ok(BlockEncoding::assemble(
        "multiply",
        alpha,
        ancillas,
        eps,
        u.qubits,
        tally,
        vec![u.provenance.clone(), v.provenance.clone()],
        block,
        None,
    ))
}

/// Wraps an explicitly known matrix as an exact `(α, a, 0)`-encoding; used
/// for identity terms and as a leaf in tests.
pub fn encode_exact(
    a: &DMatrix<f64>,
    alpha: f64,
    ancillas: u32,
    constructor: &str,
) -> Result<BlockEncoding> {
    let n = a.nrows();
    let s = qubits_for(n)?;
    let norm = operator_norm(a);
    if norm > alpha * (1.0 + 1e-12) {
        return Err(Error::BoundViolated {
            what: "embeddability alpha >= ||A||".to_string(),
            bound: alpha,
            actual: norm,
        });
    }
    let owned = a / alpha;
    Ok(BlockEncoding::assemble(
        constructor,
        alpha,
        ancillas,
        0.0,
        s,
        ResourceTally::with(&[], "O(1)", 0),
        Vec::new(),
        Some(Arc::new(move || owned.clone())),
        None,
    ))
}

/// Materializes a genuine unitary whose top-left block is the encoded block,
/// via the standard two-block dilation; asserts unitarity to 1e-10.
pub fn explicit_unitary(enc: &BlockEncoding) -> Result<DMatrix<f64>> {
    let total_qubits = enc.qubits + enc.ancillas;
    if total_qubits > 12 {
        return Err(Error::DenseCapExceeded {
            n: 1usize << total_qubits,
            cap: 1 << 12,
        });
    }
    let n = enc.dim();
    let b = enc.encoded_block();
    let c = psd_sqrt(&(DMatrix::identity(n, n) - &b * b.transpose()));
    let d = psd_sqrt(&(DMatrix::identity(n, n) - b.transpose() * &b));
    let mut u2 = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            u2[(i, j)] = b[(i, j)];
            u2[(i, j + n)] = c[(i, j)];
            u2[(i + n, j)] = d[(i, j)];
            u2[(i + n, j + n)] = -b[(j, i)];
        }
    }
    let defect = operator_norm(&(u2.transpose() * &u2 - DMatrix::identity(2 * n, 2 * n)));
    if defect > 1e-10 {
        return Err(Error::BoundViolated {
            what: "unitarity of the dilation".to_string(),
            bound: 1e-10,
            actual: defect,
        });
    }
    // embed into the declared 2^(s+a) dimension, identity elsewhere
    let full = 1usize << total_qubits;
    let mut u = DMatrix::identity(full, full);
    for i in 0..2 * n {
        for j in 0..2 * n {
            u[(i, j)] = u2[(i, j)];
        }
    }
    Ok(u)
}

fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Kernel, PointSet};
    use approx::assert_relative_eq;

    fn poly_oracle(n: usize, p: f64) -> EntryOracle {
        EntryOracle::new(
            Kernel::PolyDecay {
                p,
                self_interaction: 0.0,
            },
            PointSet::grid_1d(n),
        )
    }

    #[test]
    fn naive_identity_and_ledger() {
        let a = DMatrix::identity(2, 2);
        let enc = encode_dense_naive_matrix(&a, 1.0, 48, 0.0, "O_A").unwrap();
        assert_relative_eq!(enc.alpha, 2.0);
        assert_eq!(enc.ancillas, 2);
        assert_eq!(enc.check(&a).unwrap(), 0.0);
        assert!((enc.encoded_block() - a / 2.0).amax() < 1e-15);
        assert!(enc.isometry_defect().unwrap() < 1e-12);
        assert_eq!(enc.resources.query_count("O_A"), 2);
    }

    #[test]
    fn naive_kernel_ratio_is_poor() {
        let oracle = poly_oracle(16, 1.0);
        let enc = encode_dense_naive(&oracle, 1.0, 0.0).unwrap();
        let k = crate::kernels::assemble_dense(&oracle).unwrap();
        assert_relative_eq!(enc.alpha, 16.0);
        enc.check(&k).unwrap();
        let ratio = enc.alpha / operator_norm(&k);
        assert!(ratio > 3.0, "naive ratio {ratio} should be far from 1");
    }

    #[test]
    fn naive_is_optimal_for_multiquadric() {
        // growing kernels on [0,1] grids: N*a_hat stays within a constant of
        // the operator norm, so the naive route is already good
        let mut ratios = Vec::new();
        for n in [64usize, 256] {
            let points = PointSet::grid_1d_scaled(n, 1.0 / n as f64);
            let oracle = EntryOracle::new(Kernel::Multiquadric { offset: 0.25 }, points);
            let enc = encode_dense_naive(&oracle, 2.0, 0.0).unwrap();
            assert_relative_eq!(enc.alpha, 2.0 * n as f64);
            let k = crate::kernels::assemble_dense(&oracle).unwrap();
            enc.check(&k).unwrap();
            ratios.push(enc.alpha / operator_norm(&k));
        }
        assert!(ratios.iter().all(|r| *r < 5.0), "naive multiquadric ratios {ratios:?}");
        assert!((ratios[0] - ratios[1]).abs() < 0.5, "ratio stays O(1)");
    }

    #[test]
    fn naive_rejects_undersized_bound() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        assert!(matches!(
            encode_dense_naive_matrix(&a, 1.0, 48, 0.0, "O_A"),
            Err(Error::BoundViolated { .. })
        ));
    }

    #[test]
    fn sparse_tridiagonal_and_diagonal() {
        let n = 16usize;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if (i as i64 - j as i64).abs() == 1 {
                    a[(i, j)] = 1.0;
                } else if i == j {
                    a[(i, j)] = 0.5;
                }
            }
        }
        let (row, col) = band_index_oracles(n, 1);
        let enc = encode_sparse_matrix(&a, &row, &col, 3, 3, 1.0, 48, 0.0, "O_k").unwrap();
        assert_relative_eq!(enc.alpha, 3.0);
        assert_eq!(enc.ancillas, 4 + 3);
        enc.check(&a).unwrap();
        assert!(enc.isometry_defect().unwrap() < 1e-12);

        let d = DMatrix::from_diagonal(&DVector::from_fn(8, |i, _| (i + 1) as f64 / 8.0));
        let (row, col) = band_index_oracles(8, 0);
        let enc = encode_sparse_matrix(&d, &row, &col, 1, 1, 1.0, 48, 0.0, "O_k").unwrap();
        assert_relative_eq!(enc.alpha, 1.0);
        enc.check(&d).unwrap();
        assert!((enc.encoded_block() - &d).amax() < 1e-13);
    }

    #[test]
    fn sparse_rejects_pattern_violation() {
        let n = 8usize;
        let mut a = DMatrix::zeros(n, n);
        a[(0, 5)] = 1.0; // outside the declared band
        let (row, col) = band_index_oracles(n, 1);
        assert!(encode_sparse_matrix(&a, &row, &col, 3, 3, 1.0, 48, 0.0, "O_k").is_err());
    }

    #[test]
    fn block_sparse_level_alpha_matches_level_formula() {
        // one level of the PolyDecay split: alpha = 3 * 2^((L-l)(1-p))
        let n = 16usize;
        let p = 2.0;
        let oracle = poly_oracle(n, p);
        let points = PointSet::grid_1d(n);
        let split =
            crate::hsplit::hierarchical_split(&points, crate::hsplit::Variant::Plain1D, None)
                .unwrap();
        let level = &split.levels[0];
        assert_eq!(level.level, 2);
        let depth = split.depth;
        let k_max = crate::kernels::level_max_entry(oracle.kernel(), 2, depth).unwrap();
        let m = n >> 2;
        let mut blocks = BTreeMap::new();
        let mut dense_level = DMatrix::zeros(n, n);
        for b in &level.blocks {
            let rows = split.block_rows(b);
            let cols = split.block_cols(b);
            let sub = DMatrix::from_fn(m, m, |x, y| {
                oracle.eval_exact(rows.start + x, cols.start + y).unwrap()
            });
            for x in 0..m {
                for y in 0..m {
                    dense_level[(rows.start + x, cols.start + y)] = sub[(x, y)];
                }
            }
            blocks.insert(
                (b.row as usize, b.col as usize),
                encode_dense_naive_matrix(&sub, k_max, 48, 0.0, "O_k").unwrap(),
            );
        }
        let enc = encode_block_sparse(&blocks, 4, 3, 3).unwrap();
        let expect = 3.0 * (2f64).powf((depth - 2) as f64 * (1.0 - p));
        assert_relative_eq!(enc.alpha, expect, max_relative = 1e-12);
        enc.check(&dense_level).unwrap();
        assert!(enc.isometry_defect().unwrap() < 1e-12);
    }

    #[test]
    fn block_sparse_heterogeneous_alpha() {
        // 2x2 block matrix with block alphas {1, 2}: alpha = 2*2
        let b1 = encode_exact(&DMatrix::identity(2, 2), 1.0, 1, "leaf").unwrap();
        let b2 = encode_exact(&(2.0 * DMatrix::identity(2, 2)), 2.0, 1, "leaf").unwrap();
        let mut blocks = BTreeMap::new();
        blocks.insert((0usize, 0usize), b1.clone());
        blocks.insert((0, 1), b2.clone());
        blocks.insert((1, 0), b2.clone());
        blocks.insert((1, 1), b1);
        let enc = encode_block_sparse(&blocks, 2, 2, 2).unwrap();
        assert_relative_eq!(enc.alpha, 4.0);
        let mut a = DMatrix::zeros(4, 4);
        for i in 0..2 {
            a[(i, i)] = 1.0;
            a[(2 + i, 2 + i)] = 1.0;
            a[(i, 2 + i)] = 2.0;
            a[(2 + i, i)] = 2.0;
        }
        enc.check(&a).unwrap();
    }

    #[test]
    fn block_sparse_requires_uniform_ancillas() {
        let b1 = encode_exact(&DMatrix::identity(2, 2), 1.0, 1, "leaf").unwrap();
        let b2 = encode_exact(&DMatrix::identity(2, 2), 1.0, 2, "leaf").unwrap();
        let mut blocks = BTreeMap::new();
        blocks.insert((0usize, 0usize), b1);
        blocks.insert((1, 1), b2);
        assert!(matches!(
            encode_block_sparse(&blocks, 2, 1, 1),
            Err(Error::HeterogeneousAncillas { .. })
        ));
    }

    #[test]
    fn block_diagonal_examples() {
        let e = encode_exact(&DMatrix::identity(2, 2), 1.0, 1, "leaf").unwrap();
        let enc = encode_block_diagonal(&[e.clone(), e.clone()]).unwrap();
        assert_relative_eq!(enc.alpha, 1.0);
        assert_eq!(enc.ancillas, 1); // uniform: the select unitary is already the encoding
        enc.check(&DMatrix::identity(4, 4)).unwrap();

        let a1 = encode_exact(&DMatrix::identity(2, 2), 1.0, 1, "leaf").unwrap();
        let a4 = encode_exact(&(4.0 * DMatrix::identity(2, 2)), 4.0, 1, "leaf").unwrap();
        let enc = encode_block_diagonal(&[a1, a4]).unwrap();
        assert_relative_eq!(enc.alpha, 4.0);
        let mut expect = DMatrix::identity(4, 4);
        expect[(2, 2)] = 4.0;
        expect[(3, 3)] = 4.0;
        enc.check(&expect).unwrap();

        let single = encode_exact(&DMatrix::identity(2, 2), 1.0, 1, "leaf").unwrap();
        let enc = encode_block_diagonal(&[single]).unwrap();
        assert_relative_eq!(enc.alpha, 1.0);
        enc.check(&DMatrix::identity(2, 2)).unwrap();
    }

    #[test]
    fn low_rank_examples() {
        // rank-1 projector |0><0|
        let e0 = DVector::from_fn(2, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let prep = make_prep_pair(&[1.0], 0).unwrap();
        let enc = encode_low_rank(
            &[1.0],
            std::slice::from_ref(&e0),
            std::slice::from_ref(&e0),
            &prep,
        )
        .unwrap();
        let mut proj = DMatrix::zeros(2, 2);
        proj[(0, 0)] = 1.0;
        assert_relative_eq!(enc.alpha, 1.0);
        assert!(enc.verify(&proj) < 1e-14);
        assert!(enc.isometry_defect().unwrap() < 1e-12);

        // rank-2 with sigma {0.6, 0.4}
        let u0 = DVector::from_fn(4, |i, _| if i < 2 { 0.5f64.sqrt() } else { 0.0 });
        let u1 = DVector::from_fn(4, |i, _| if i >= 2 { 0.5f64.sqrt() } else { 0.0 });
        let prep = make_prep_pair(&[0.6, 0.4], 1).unwrap();
        let enc = encode_low_rank(
            &[0.6, 0.4],
            &[u0.clone(), u1.clone()],
            &[u0.clone(), u1.clone()],
            &prep,
        )
        .unwrap();
        assert_relative_eq!(enc.alpha, 1.0);
        let a = 0.6 * &u0 * u0.transpose() + 0.4 * &u1 * u1.transpose();
        assert!(enc.verify(&a) < 1e-12);

        // unnormalized vectors rejected
        let bad = DVector::from_fn(4, |_, _| 1.0);
        assert!(encode_low_rank(
            &[1.0],
            std::slice::from_ref(&bad),
            std::slice::from_ref(&bad),
            &prep
        )
        .is_err());
    }

    #[test]
    fn rank1_oracle_examples() {
        let n = 8usize;
        let s = 3;
        // uniform vectors: alpha equals the operator norm exactly
        let amp = (n as f64).powf(-0.5);
        let u = DVector::from_element(n, amp);
        let enc = encode_rank1_oracle(&u, &u, amp, amp).unwrap();
        assert_relative_eq!(enc.alpha, 1.0);
        assert!(enc.verify(&(&u * u.transpose())) < 1e-14);

        // worst case e0 e0^T: alpha = 2^s
        let e0 = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let enc = encode_rank1_oracle(&e0, &e0, 1.0, 1.0).unwrap();
        assert_relative_eq!(enc.alpha, (1 << s) as f64);

        // slowly varying: entries match u_m v_n / (2^s u_hat v_hat)
        let u = DVector::from_fn(n, |i, _| 0.3 + 0.01 * (i as f64).sin());
        let v = DVector::from_fn(n, |i, _| 0.4 + 0.01 * (i as f64).cos());
        let enc = encode_rank1_oracle(&u, &v, 0.32, 0.42).unwrap();
        let block = enc.encoded_block();
        for i in 0..n {
            for j in 0..n {
                let expect = u[i] * v[j] / (n as f64 * 0.32 * 0.42);
                assert!((block[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn prep_pair_examples() {
        let p = make_prep_pair(&[1.0], 0).unwrap();
        assert_relative_eq!(p.beta, 1.0);
        assert_relative_eq!(p.c[0], 1.0);

        let p = make_prep_pair(&[0.5, -0.5], 1).unwrap();
        assert_relative_eq!(p.beta, 1.0);
        assert!(p.c[1] < 0.0 && p.d[1] > 0.0);
        assert!(p.eps1 <= 1e-14);

        assert!(matches!(
            make_prep_pair(&[0.0, 0.0], 1),
            Err(Error::ZeroVector)
        ));
        assert!(make_prep_pair(&[1.0, 1.0, 1.0], 1).is_err());
    }

    #[test]
    fn linear_combination_examples() {
        // convex combination of two unit-alpha encodings
        let a0 = encode_exact(&DMatrix::identity(4, 4), 1.0, 1, "leaf").unwrap();
        let mut x = DMatrix::zeros(4, 4);
        for i in 0..4 {
            x[(i, 3 - i)] = 1.0;
        }
        let a1 = encode_exact(&x, 1.0, 1, "leaf").unwrap();
        let prep = make_prep_pair(&[0.5, 0.5], 1).unwrap();
        let enc = linear_combine(&[a0, a1], &prep).unwrap();
        assert_relative_eq!(enc.alpha, 1.0);
        let expect = 0.5 * DMatrix::identity(4, 4) + 0.5 * &x;
        enc.check(&expect).unwrap();

        // I + K with mixed normalizations: alpha = 1 + alpha_K
        let oracle = poly_oracle(16, 2.0);
        let k = crate::kernels::assemble_dense(&oracle).unwrap();
        let nk = operator_norm(&k);
        let ek = encode_exact(&k, nk, 1, "leaf").unwrap();
        let id = encode_exact(&DMatrix::identity(16, 16), 1.0, 1, "leaf").unwrap();
        let prep = make_prep_pair(&[1.0, nk], 1).unwrap();
        let enc = linear_combine(&[id, ek], &prep).unwrap();
        assert_relative_eq!(enc.alpha, 1.0 + nk, max_relative = 1e-12);
        enc.check(&(DMatrix::identity(16, 16) + &k)).unwrap();
    }

    #[test]
    fn multiply_examples() {
        let id = encode_exact(&DMatrix::identity(4, 4), 1.0, 1, "leaf").unwrap();
        let oracle = poly_oracle(4, 1.0);
        let k = crate::kernels::assemble_dense(&oracle).unwrap();
        let ek = encode_dense_naive(&oracle, 1.0, 0.0).unwrap();
        let prod = multiply(&id, &ek).unwrap();
        assert_relative_eq!(prod.alpha, ek.alpha);
        assert!(prod.verify(&k) <= prod.eps + 1e-12);

        // squaring a (2,1,0)-encoding gives a (4,2,0)-encoding of A^2
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let ea = encode_exact(&a, 2.0, 1, "leaf").unwrap();
        let sq = multiply(&ea, &ea).unwrap();
        assert_relative_eq!(sq.alpha, 4.0);
        assert_eq!(sq.ancillas, 2);
        assert!(sq.verify(&(&a * &a)) < 1e-13);
    }

    #[test]
    fn verify_negative_control() {
        let oracle = poly_oracle(8, 1.0);
        let k = crate::kernels::assemble_dense(&oracle).unwrap();
        let mut enc = encode_dense_naive(&oracle, 1.0, 0.0).unwrap();
        enc.check(&k).unwrap();
        enc.alpha *= 1.5; // corrupt the ledger
        assert!(enc.check(&k).is_err());
    }

    #[test]
    fn explicit_unitary_examples() {
        let id = encode_exact(&DMatrix::identity(2, 2), 1.0, 1, "leaf").unwrap();
        let u = explicit_unitary(&id).unwrap();
        assert_eq!(u.nrows(), 4);
        assert!(operator_norm(&(u.transpose() * &u - DMatrix::identity(4, 4))) < 1e-12);

        let oracle = poly_oracle(4, 1.0);
        let enc = encode_dense_naive(&oracle, 1.0, 0.0).unwrap();
        let u = explicit_unitary(&enc).unwrap();
        let k = crate::kernels::assemble_dense(&oracle).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((u[(i, j)] - k[(i, j)] / 4.0).abs() < 1e-12);
            }
        }

        // rank-1 projector block
        let e0 = DVector::from_fn(2, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let prep = make_prep_pair(&[1.0], 0).unwrap();
        let enc = encode_low_rank(
            &[1.0],
            std::slice::from_ref(&e0),
            std::slice::from_ref(&e0),
            &prep,
        )
        .unwrap();
        let u = explicit_unitary(&enc).unwrap();
        let dim = u.nrows();
        assert!(operator_norm(&(u.transpose() * &u - DMatrix::identity(dim, dim))) < 1e-12);

        // the witness refuses dimensions past 2^12
        let big = encode_dense_naive(&poly_oracle(64, 1.0), 1.0, 0.0).unwrap();
        let wide = big.pad_ancillas(big.ancillas + 4).unwrap();
        assert!(matches!(
            explicit_unitary(&wide),
            Err(Error::DenseCapExceeded { .. })
        ));
    }

    #[test]
    fn encodings_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<BlockEncoding>();
        assert_send_sync::<StatePrepPair>();
        assert_send_sync::<crate::kernels::EntryOracle>();
        assert_send_sync::<crate::hsplit::HSplit>();
        assert_send_sync::<crate::hmatrix::HMatrix>();
    }

    #[test]
    fn tally_composition_adds() {
        let oracle = poly_oracle(4, 1.0);
        let e1 = encode_dense_naive(&oracle, 1.0, 0.0).unwrap();
        let e2 = encode_dense_naive(&oracle, 1.0, 0.0).unwrap();
        let prod = multiply(&e1, &e2).unwrap();
        assert_eq!(prod.resources.query_count("O_k"), 4);
        let prep = make_prep_pair(&[1.0, 1.0], 1).unwrap();
        let comb = linear_combine(&[e1, e2], &prep).unwrap();
        assert_eq!(comb.resources.query_count("O_k"), 4);
        assert_eq!(comb.resources.query_count("P_L"), 1);
    }
}
