/// Derives a per-item seed from a run seed and a stable key (usually a
/// function id), so results do not depend on processing order or worker
/// count.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    // FNV-1a over the key, then one splitmix64 round with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h ^ seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
