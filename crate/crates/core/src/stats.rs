//! Block jackknife and importance-weight diagnostics.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

/// Number of jackknife blocks used for every standard error in the crate.
pub const JACKKNIFE_BLOCKS: usize = 20;

/// Split `n` items into at most `blocks` contiguous ranges in index order.
///
/// Boundaries fall on multiples of `group` so that grouped samples (a point
/// and its symmetry images) never straddle two blocks.
pub fn block_ranges(n: usize, group: usize, blocks: usize) -> Vec<Range<usize>> {
    let group = group.max(1);
    let groups = n / group;
    let b = blocks.min(groups).max(1);
    (0..b)
        .map(|k| {
            let start = k * groups / b * group;
            let end = if k + 1 == b { n } else { (k + 1) * groups / b * group };
            start..end
        })
        .collect()
}

/// Delete-one-block jackknife over additive sufficient statistics.
///
/// `block_sums[b]` holds the sums accumulated over block `b`; `stat` maps a
/// vector of totals to the estimates. Returns the full-sample estimate and
/// the jackknife standard error of each component.
pub fn jackknife<F>(block_sums: &[Vec<f64>], stat: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let width = block_sums.first().map_or(0, Vec::len);
    let mut total = vec![0.0; width];
    for block in block_sums {
        for (t, v) in total.iter_mut().zip(block) {
            *t += v;
        }
    }
    let full = stat(&total);
    let b = block_sums.len();
    if b < 2 {
        return (full.clone(), vec![0.0; full.len()]);
    }

    let mut leave_out = Vec::with_capacity(b);
    let mut reduced = vec![0.0; width];
    for block in block_sums {
        for ((r, t), v) in reduced.iter_mut().zip(&total).zip(block) {
            *r = t - v;
        }
        leave_out.push(stat(&reduced));
    }

    let k = full.len();
    let mut se = vec![0.0; k];
    for j in 0..k {
        let mean = leave_out.iter().map(|e| e[j]).sum::<f64>() / b as f64;
        let ss: f64 = leave_out.iter().map(|e| (e[j] - mean) * (e[j] - mean)).sum();
        se[j] = libm::sqrt(ss * (b as f64 - 1.0) / b as f64);
    }
    (full, se)
}

/// Kish effective sample size `(Σw)² / Σw²` of non-negative weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_everything_in_order() {
        let r = block_ranges(103, 1, 20);
        assert_eq!(r.len(), 20);
        assert_eq!(r[0].start, 0);
        assert_eq!(r.last().unwrap().end, 103);
        for w in r.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
    }

    #[test]
    fn ranges_respect_groups() {
        for r in block_ranges(4 * 37, 4, 20) {
            assert_eq!(r.start % 4, 0);
            assert_eq!(r.end % 4, 0);
        }
        assert_eq!(block_ranges(3, 1, 20).len(), 3);
        assert_eq!(block_ranges(0, 1, 20), alloc::vec![0..0]);
    }

    #[test]
    fn jackknife_of_mean_matches_classical_standard_error() {
        // With one item per block the delete-one jackknife of a mean
        // reproduces s / sqrt(n) exactly.
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let blocks: Vec<Vec<f64>> = xs.iter().map(|&x| alloc::vec![x, 1.0]).collect();
        let (est, se) = jackknife(&blocks, |t| alloc::vec![t[0] / t[1]]);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert!((est[0] - mean).abs() < 1e-12);
        assert!((se[0] - libm::sqrt(var / n)).abs() < 1e-12);
    }

    #[test]
    fn ess_bounds() {
        assert_eq!(effective_sample_size(&[1.0; 10]), 10.0);
        assert_eq!(effective_sample_size(&[0.0, 3.0, 0.0]), 1.0);
        assert_eq!(effective_sample_size(&[]), 0.0);
    }
}
