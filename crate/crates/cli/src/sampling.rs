//! Thread-parallel batch generation.
//!
//! Point `i` depends only on `(seed, i, dim)` and `collect` on an indexed
//! parallel iterator preserves order, so the batch is identical for every
//! thread count.

use fockfield::projective::sample_point;
use fockfield::{ModeSpace, ProjectivePoint, Result, SampleBatch};
use rayon::prelude::*;

pub fn sample_points(dim: usize, seed: u64, start: u64, count: usize) -> Vec<ProjectivePoint> {
    (0..count as u64).into_par_iter().map(|i| sample_point(dim, seed, start + i)).collect()
}

/// Uniform draws `start..start + count` on the Fock space, followed by their
/// parity images when `antithetic` is set.
pub fn fock_batch(space: &ModeSpace, seed: u64, start: u64, count: usize, antithetic: bool) -> Result<SampleBatch> {
    let batch = SampleBatch::from_points(space.dim(), seed, start, sample_points(space.dim(), seed, start, count))?;
    if antithetic {
        batch.with_parity_images(space)
    } else {
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fockfield::projective::sample_range;

    #[test]
    fn parallel_matches_serial_for_any_pool() {
        let serial = sample_range(6, 99, 17, 300).unwrap();
        for threads in [1, 2, 5] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let par = pool.install(|| sample_points(6, 99, 17, 300));
            assert_eq!(par, serial.points());
        }
    }
}
