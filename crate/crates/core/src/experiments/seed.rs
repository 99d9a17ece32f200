//! Per-trial seed derivation.
//!
//! A trial's seed is `splitmix64(splitmix64(splitmix64(base) ^ grid) ^ trial)`,
//! so it depends only on its coordinates and never on execution order.

/// One step of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn child_seed(base: u64, grid_index: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ grid_index as u64) ^ trial as u64)
}
