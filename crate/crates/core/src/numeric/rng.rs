use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numeric::Tensor;

pub type SampleRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream from a global seed and a key path, e.g.
/// `(seed, [epoch, batch, sample])`. Streams depend only on the key, never
/// on evaluation order.
pub fn stream_rng(seed: u64, keys: &[u64]) -> SampleRng {
    let mut h = splitmix64(seed);
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// `n` i.i.d. standard normal draws.
pub fn gaussian_sample(rng: &mut SampleRng, n: usize) -> Tensor {
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_parts_unchecked(vec![n], data)
}
