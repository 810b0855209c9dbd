//! Counter-based random numbers.
//!
//! Every random draw in the crate is a pure function of a key (a short list
//! of 64-bit words such as `seed, level, x, y, dim`). There is no mutable
//! generator state, so results do not depend on evaluation order or on the
//! number of worker threads.
//!
//! The construction is fixed so other implementations can reproduce it:
//!
//! * `mix(z)` is the SplitMix64 finalizer:
//!   `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`.
//! * `hash(words)` starts from `h = 0x243F6A8885A308D3` and for each word
//!   applies `h = mix(h ^ word.wrapping_add(0x9E3779B97F4A7C15))`.
//! * `uniform(words)` is `(hash(words) >> 11) * 2^-53`, in `[0, 1)`.
//! * `gaussian(words)` is Box–Muller over two uniforms drawn from the key
//!   extended by `0` and `1`: `u1 = ((hash(key ++ [0]) >> 11) + 1) * 2^-53`
//!   (in `(0, 1]`), `u2 = (hash(key ++ [1]) >> 11) * 2^-53`, and
//!   `z = sqrt(-2 ln u1) * cos(2 pi u2)`.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const INIT: u64 = 0x243F_6A88_85A3_08D3;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn hash(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(INIT, |h, &w| mix(h ^ w.wrapping_add(GOLDEN)))
}

/// Uniform in `[0, 1)`.
#[inline]
pub fn uniform(words: &[u64]) -> f64 {
    (hash(words) >> 11) as f64 * INV_2_53
}

/// Standard normal draw keyed by `words`.
pub fn gaussian(words: &[u64]) -> f64 {
    let base = hash(words);
    let u1 = ((mix(base ^ GOLDEN) >> 11) + 1) as f64 * INV_2_53;
    let u2 = (mix(base ^ GOLDEN.wrapping_add(1)) >> 11) as f64 * INV_2_53;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Maps a signed grid coordinate onto a hash word.
#[inline]
pub fn word(v: i64) -> u64 {
    v as u64
}
