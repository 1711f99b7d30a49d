use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags; each update draws from its own substream.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Stream {
    Nodes = 1,
    Beta = 2,
    R = 3,
    XiBar = 4,
    Eta = 5,
    Gamma = 6,
    Phi = 7,
    Slab = 8,
    Dgp = 9,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for `(seed, iteration, stream, index)`, so results
/// do not depend on how markets are spread across threads.
pub(crate) fn substream(seed: u64, iteration: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    h = splitmix(h ^ iteration);
    h = splitmix(h ^ stream as u64);
    h = splitmix(h ^ index);
    ChaCha8Rng::seed_from_u64(h)
}
