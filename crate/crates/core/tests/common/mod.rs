//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use radpl::data::{make_synthetic, split, LabeledDataset, SyntheticSpec};
use radpl::model::{Hyperparams, Preset};

pub const FIXTURE_SEED: u64 = 7;

/// The standard desk-scale fixture: 3 classes in 20 dimensions, 30 samples
/// per class, 15 of them for training.
pub fn fixture(corrupt_frac: f64) -> (LabeledDataset, LabeledDataset) {
    let ds = make_synthetic(&SyntheticSpec {
        classes: 3,
        dim: 20,
        per_class: 30,
        noise_sigma: 0.1,
        corrupt_frac,
        seed: FIXTURE_SEED,
    })
    .unwrap();
    split(&ds, 15, FIXTURE_SEED).unwrap()
}

/// Hyperparameters used on the fixture: the UMIST triple with two atoms per
/// class (each synthetic class is one mean plus isotropic noise).
pub fn fixture_params() -> Hyperparams {
    Hyperparams {
        atoms_per_class: 2,
        seed: FIXTURE_SEED,
        ..Default::default()
    }
    .with_preset(Preset::Umist)
}

/// Two noiseless classes in five dimensions, four samples each.
pub fn zero_noise() -> LabeledDataset {
    make_synthetic(&SyntheticSpec {
        classes: 2,
        dim: 5,
        per_class: 4,
        noise_sigma: 0.0,
        corrupt_frac: 0.0,
        seed: 0,
    })
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn positive(len: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(0.5..2.0))
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
