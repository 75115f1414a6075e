//! Process-wide knobs.

use std::sync::OnceLock;

/// Default cap on dense materialization (matrices, SVDs, brute-force checks).
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Fixed-point width of the simulated entry oracles.
pub const DEFAULT_ORACLE_BITS: u32 = 48;

static DENSE_CAP: OnceLock<usize> = OnceLock::new();

/// Dense-materialization cap, overridable via `HIERENC_DENSE_CAP`.
pub fn dense_cap() -> usize {
    *DENSE_CAP.get_or_init(|| {
        std::env::var("HIERENC_DENSE_CAP")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(DEFAULT_DENSE_CAP)
    })
}
