/// SplitMix64 output function. A bijection on `u64`.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one replication of one sweep cell.
///
/// `splitmix64(splitmix64(master) ^ (cell << 32 | replication))`. For a fixed
/// master seed the packed index is unique per `(replication, cell)` and both
/// steps are bijections, so distinct pairs never share a seed.
pub fn seed_for(master_seed: u64, replication: u32, cell: u32) -> u64 {
    let packed = (u64::from(cell) << 32) | u64::from(replication);
    splitmix64(splitmix64(master_seed) ^ packed)
}
