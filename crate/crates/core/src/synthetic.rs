//! Seeded synthetic data: the two-view population in three dimensions and
//! uniform noise for timing runs.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{input, Result};
use crate::lens::{LensDistribution, SubspaceMask};

/// Mixes `tag` into `seed` so that independent consumers of one run seed
/// get unrelated generator states.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Two-view population: each row lies in the plane of the first two
/// features with probability `f`, else on the third axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub f: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return input("population size must be positive");
        }
        if !(0.0..=1.0).contains(&self.f) {
            return input(format!("mixing weight must lie in [0, 1], got {}", self.f));
        }
        Ok(())
    }
}

/// Rows `(g₁, g₂, 0)` with probability `f`, otherwise `(0, 0, g₃)`, with
/// independent standard normal draws.
pub fn gen_synthetic_population(spec: &SyntheticSpec) -> Result<DataMatrix> {
    Ok(gen_population_with_views(spec)?.0)
}

/// Population plus the view each row was drawn from (`true` = plane).
pub fn gen_population_with_views(spec: &SyntheticSpec) -> Result<(DataMatrix, Vec<bool>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Array2::zeros((spec.n, 3));
    let mut views = Vec::with_capacity(spec.n);
    for mut row in values.rows_mut() {
        let plane = rng.random::<f64>() < spec.f;
        let g: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        if plane {
            row[0] = g[0];
            row[1] = g[1];
        } else {
            row[2] = g[2];
        }
        views.push(plane);
    }
    Ok((DataMatrix::new(values)?, views))
}

/// The plane mask `(1,1,0)` and the axis mask `(0,0,1)`.
pub fn view_masks() -> (SubspaceMask, SubspaceMask) {
    (
        SubspaceMask::new(vec![1, 1, 0]).expect("nonzero"),
        SubspaceMask::new(vec![0, 0, 1]).expect("nonzero"),
    )
}

/// The lens that picks the plane with probability `f` and the axis
/// otherwise. Degenerate weights collapse to a single mask.
pub fn view_lens(f: f64) -> Result<LensDistribution> {
    let (plane, axis) = view_masks();
    let weights: Vec<_> = [(plane, f), (axis, 1.0 - f)]
        .into_iter()
        .filter(|(_, p)| *p > 0.0)
        .collect();
    LensDistribution::from_weights(weights)
}

/// Outliers that stand out only inside the axis view: plane coordinates
/// drawn like the plane rows, third coordinate at `±offset` with a little
/// jitter. Projected onto the plane they look like inliers.
pub fn axis_view_outliers(count: usize, offset: f64, seed: u64) -> Result<DataMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((count, 3));
    for mut row in values.rows_mut() {
        row[0] = rng.sample(StandardNormal);
        row[1] = rng.sample(StandardNormal);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let jitter: f64 = rng.sample(StandardNormal);
        row[2] = sign * offset + 0.1 * jitter;
    }
    DataMatrix::new(values)
}

/// Outliers off both views: the plane part has norm `distance` at a random
/// angle and the third coordinate is `±distance`, so every projection lies
/// at least `distance` from the origin.
pub fn far_outliers(count: usize, distance: f64, seed: u64) -> Result<DataMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((count, 3));
    for mut row in values.rows_mut() {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        row[0] = distance * angle.cos();
        row[1] = distance * angle.sin();
        row[2] = if rng.random::<bool>() { distance } else { -distance };
    }
    DataMatrix::new(values)
}

/// `n × d` uniform `[0, 1)` noise.
pub fn uniform_noise(n: usize, d: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 || d == 0 {
        return input("noise shape must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DataMatrix::new(Array2::from_shape_fn((n, d), |_| rng.random::<f64>()))
}
