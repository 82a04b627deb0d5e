use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Hankel (delay) embedding, newest sample first in each column:
/// column `j` is `[x[j+delay-1], x[j+delay-2], ..., x[j]]`.
pub fn delay_embed(window: &[f64], delay: usize) -> Result<DMatrix<f64>> {
    if delay == 0 {
        return Err(Error::InvalidParameter("delay must be at least 1".into()));
    }
    if window.len() < delay + 1 {
        return Err(Error::TooShort {
            needed: delay + 1,
            got: window.len(),
        });
    }
    let cols = window.len() - delay + 1;
    Ok(DMatrix::from_fn(delay, cols, |i, j| window[j + delay - 1 - i]))
}
