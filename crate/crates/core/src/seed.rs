//! Sub-seed derivation.
//!
//! Every randomized routine takes one `u64` seed. When a command needs
//! several independent streams, stream `i` uses `derive(seed, i)`:
//! one SplitMix64 step applied to `seed ^ splitmix(i + 1)`.

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: u64) -> u64 {
    splitmix(seed ^ splitmix(stream.wrapping_add(1)))
}
