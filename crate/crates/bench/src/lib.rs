//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikemon::synth::pure_noise;
use spikemon::SymMatrix;

/// Seeded `W / √n` noise matrix.
pub fn noise_matrix(n: usize, seed: u64) -> SymMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pure_noise(n, &mut rng).expect("positive dimension")
}
