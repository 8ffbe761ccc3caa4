//! Seeded synthetic matrices for experiments: Gaussian weights and
//! activations, and Student-t (3 dof) draws whose heavy tails stand in for
//! the outlier-prone rows of real model weights.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::Result;
use crate::matrix::DenseMatrix;

/// Synthetic source distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthDist {
    Gauss,
    HeavyTailT3,
}

impl SynthDist {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "gauss" => Some(SynthDist::Gauss),
            "heavy_tail_t3" => Some(SynthDist::HeavyTailT3),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SynthDist::Gauss => "gauss",
            SynthDist::HeavyTailT3 => "heavy_tail_t3",
        }
    }
}

/// Seeded matrix draw. Identical (dist, shape, seed) always produce the
/// same matrix.
pub fn generate(dist: SynthDist, rows: usize, cols: usize, seed: u64) -> Result<DenseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let elems: Vec<f64> = match dist {
        SynthDist::Gauss => (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
        SynthDist::HeavyTailT3 => {
            let t = StudentT::new(3.0).expect("valid dof");
            (0..rows * cols).map(|_| t.sample(&mut rng)).collect()
        }
    };
    DenseMatrix::from_f64_values(rows, cols, elems)
}
