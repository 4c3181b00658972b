use xxhash_rust::xxh3::xxh3_64_with_seed;

/// Stable 64-bit hash of a token sequence, independent of process and platform.
pub(crate) fn hash_tokens<S: AsRef<str>>(seed: u64, tokens: &[S]) -> u64 {
    let mut h = xxh3_64_with_seed(b"", seed);
    for t in tokens {
        h = xxh3_64_with_seed(t.as_ref().as_bytes(), h ^ 0x9e37_79b9_7f4a_7c15);
    }
    h
}

/// Maps a hash to a uniform value in `[0, 1)`.
pub(crate) fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

pub(crate) fn content_hash(bytes: &[u8]) -> String {
    format!("{:016x}", xxh3_64_with_seed(bytes, 0))
}
