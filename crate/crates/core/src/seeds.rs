use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent PRNG stream `index` derived from `seed`.
///
/// Used wherever work is split across threads so that results do not depend
/// on the schedule.
pub(crate) fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A 64-bit seed for replication `index`, for APIs that take a plain seed.
pub(crate) fn derive(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, index.wrapping_add(1 << 40)).next_u64()
}
