//! Inverted dropout with counter-based masks.
//!
//! Masks depend only on `(seed, step, site)`, so a training step can be
//! replayed exactly and masks do not depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Mat;

/// Identifies one training step's dropout stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutCtx {
    pub seed: u64,
    pub step: u64,
}

pub struct Dropout {
    ctx: DropoutCtx,
    rate: f64,
    site: u64,
}

impl Dropout {
    pub fn new(ctx: DropoutCtx, rate: f64) -> Self {
        Self { ctx, rate, site: 0 }
    }

    /// Zero each entry with probability `rate` and scale survivors by
    /// `1 / (1 - rate)`. Returns the mask (already scaled) for the backward
    /// pass, or `None` when the rate is zero.
    pub fn apply(&mut self, x: &mut Mat) -> Option<Vec<f64>> {
        let site = self.site;
        self.site += 1;
        if self.rate <= 0.0 {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.ctx.seed);
        rng.set_stream((self.ctx.step << 8) | (site & 0xff));
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        x.data.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        Some(mask)
    }
}
