use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// `U(-1/√fan_in, +1/√fan_in)` with `fan_in = rows`.
    UniformFanIn,
    Zeros,
    Ones,
}

/// Initialize a `rows × cols` tensor from its own seeded stream.
pub fn init_params(rows: usize, cols: usize, seed: u64, scheme: InitScheme) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_with(rows, cols, &mut rng, scheme)
}

pub(crate) fn init_with<R: Rng>(rows: usize, cols: usize, rng: &mut R, scheme: InitScheme) -> Mat {
    match scheme {
        InitScheme::Zeros => Mat::zeros(rows, cols),
        InitScheme::Ones => Mat::filled(rows, cols, 1.0),
        InitScheme::UniformFanIn => {
            let bound = 1.0 / (rows.max(1) as f64).sqrt();
            Mat::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
        }
    }
}
