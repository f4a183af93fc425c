//! Points of projective Fock space and the unitarily invariant measure on it.
//!
//! The Fubini–Study volume is normalised to a probability measure, so the
//! uniform density is identically one and entropies are relative to it.
//! Draws are normalised standard complex Gaussian vectors. Point `i` of a
//! batch is generated from a ChaCha8 stream selected by `i` under a key
//! derived from the seed, so every point is a pure function of
//! `(seed, i, d)` and batches can be produced in any parallel decomposition.

use alloc::vec::Vec;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fock::ModeSpace;
use crate::linalg::{CVector, ONE};

/// Unit-norm representative of a ray.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectivePoint {
    repr: CVector,
}

impl ProjectivePoint {
    /// Normalise `v`; fails on a zero or non-finite vector.
    pub fn new(v: CVector) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidArgument("a projective point needs a finite nonzero representative".into()));
        }
        Ok(Self { repr: v.unscale(n) })
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        Self::new(CVector::from_vec(amplitudes))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[i] = ONE;
        Self { repr: v }
    }

    pub fn representative(&self) -> &CVector {
        &self.repr
    }

    pub fn dim(&self) -> usize {
        self.repr.len()
    }

    /// `<self|other>`
    pub fn overlap(&self, other: &Self) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(self.repr.dotc(&other.repr))
    }

    /// Same ray, representative multiplied by `e^{iθ}`.
    pub fn rephased(&self, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        Self { repr: self.repr.map(|z| z * phase) }
    }
}

/// Fubini–Study distance `arccos |<x|y>|`.
pub fn fs_distance(x: &ProjectivePoint, y: &ProjectivePoint) -> Result<f64> {
    let o = x.overlap(y)?.norm().min(1.0);
    Ok(libm::acos(o))
}

/// Draw point `index` of the stream keyed by `seed`.
pub fn sample_point(dim: usize, seed: u64, index: u64) -> ProjectivePoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    loop {
        let v = CVector::from_fn(dim, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        });
        // A zero draw has probability zero; redraw rather than divide by it.
        if let Ok(p) = ProjectivePoint::new(v) {
            return p;
        }
    }
}

/// An ordered batch of points with the provenance needed to regenerate it.
///
/// `group` is the number of consecutive points that belong together (a draw
/// followed by its parity images); block statistics never split a group.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    seed: u64,
    start: u64,
    dim: usize,
    group: usize,
    points: Vec<ProjectivePoint>,
}

impl SampleBatch {
    /// Assemble a batch from already generated points (e.g. by a parallel
    /// driver). Every point must have dimension `dim`.
    pub fn from_points(dim: usize, seed: u64, start: u64, points: Vec<ProjectivePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("a batch needs at least one point".into()));
        }
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
        }
        Ok(Self { seed, start, dim, group: 1, points })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream index of the first draw.
    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn group(&self) -> usize {
        self.group
    }

    pub fn points(&self) -> &[ProjectivePoint] {
        &self.points
    }

    /// Append to every draw its images under the per-mode parity unitaries
    /// `(-1)^{n_m}`, for every subset of modes.
    ///
    /// The uniform measure is invariant under these unitaries, while each one
    /// flips the sign of the matching annihilation expectation. The resulting
    /// antithetic batch has exactly vanishing odd field moments at zero
    /// chemical potential.
    pub fn with_parity_images(&self, space: &ModeSpace) -> Result<Self> {
        if space.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: space.dim() });
        }
        if self.group != 1 {
            return Err(Error::InvalidArgument("batch already carries symmetry images".into()));
        }
        let modes = space.num_modes();
        let images = 1usize << modes;
        let signs: Vec<Vec<f64>> = (0..images)
            .map(|mask| {
                space
                    .basis()
                    .iter()
                    .map(|n| {
                        let odd = (0..modes).filter(|&m| mask & (1 << m) != 0).map(|m| n[m]).sum::<u32>() % 2;
                        if odd == 1 { -1.0 } else { 1.0 }
                    })
                    .collect()
            })
            .collect();
        let mut points = Vec::with_capacity(self.points.len() * images);
        for p in &self.points {
            for s in &signs {
                let repr = CVector::from_fn(self.dim, |i, _| p.repr[i] * s[i]);
                points.push(ProjectivePoint { repr });
            }
        }
        Ok(Self { seed: self.seed, start: self.start, dim: self.dim, group: images, points })
    }
}

/// `count` independent uniform draws on `CP^{dim-1}` from stream indices `0..count`.
pub fn sample_uniform(dim: usize, seed: u64, count: usize) -> Result<SampleBatch> {
    sample_range(dim, seed, 0, count)
}

/// Draws from stream indices `start..start + count`; disjoint ranges are independent.
pub fn sample_range(dim: usize, seed: u64, start: u64, count: usize) -> Result<SampleBatch> {
    if dim < 2 {
        return Err(Error::InvalidArgument("sampling needs dimension at least 2".into()));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let points = (0..count as u64).map(|i| sample_point(dim, seed, start + i)).collect();
    SampleBatch::from_points(dim, seed, start, points)
}
