//! Deterministic sampling used by the certification routines.
//!
//! Certification by sampling needs two properties: coverage of box boundaries
//! (extrema of the certified quantities often sit on them) and bit-identical
//! results across runs. The sampler therefore combines an endpoint-inclusive
//! grid with a fixed-seed ChaCha stream for the remaining interior points.

use alloc::vec::Vec;
use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const SAMPLER_SEED: u64 = 0x00c0_ffee;

/// Draws a uniform f64 in [0, 1) from the 53 most significant bits.
fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Yields `n_samples` points inside the axis-aligned box described by
/// per-coordinate `(lower, upper)` pairs. Roughly half the budget goes to an
/// endpoint-inclusive grid (when the dimension permits at least two points per
/// axis), the rest to uniform draws. Degenerate coordinates (lower == upper)
/// are held fixed.
pub fn sample_box(bounds: &[(f64, f64)], n_samples: usize) -> Vec<DVector<f64>> {
    let dim = bounds.len();
    let mut points = Vec::with_capacity(n_samples);
    if dim == 0 || n_samples == 0 {
        return points;
    }

    let grid_budget = n_samples / 2;
    let per_axis = grid_points_per_axis(dim, grid_budget);
    if per_axis >= 2 {
        let mut index = alloc::vec![0usize; dim];
        loop {
            let p = DVector::from_fn(dim, |i, _| {
                let (lo, hi) = bounds[i];
                if hi <= lo {
                    lo
                } else {
                    lo + (hi - lo) * index[i] as f64 / (per_axis - 1) as f64
                }
            });
            points.push(p);
            // odometer increment over the grid indices
            let mut axis = 0;
            loop {
                if axis == dim {
                    break;
                }
                index[axis] += 1;
                if index[axis] < per_axis {
                    break;
                }
                index[axis] = 0;
                axis += 1;
            }
            if axis == dim {
                break;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLER_SEED);
    while points.len() < n_samples {
        let p = DVector::from_fn(dim, |i, _| {
            let (lo, hi) = bounds[i];
            lo + (hi - lo) * unit_f64(&mut rng)
        });
        points.push(p);
    }
    points.truncate(n_samples);
    points
}

fn grid_points_per_axis(dim: usize, budget: usize) -> usize {
    if budget < 2 {
        return 0;
    }
    let mut per_axis = 2usize;
    loop {
        let next = per_axis + 1;
        match next.checked_pow(dim as u32) {
            Some(total) if total <= budget => per_axis = next,
            _ => break,
        }
    }
    if per_axis.checked_pow(dim as u32).map(|t| t <= budget) == Some(true) {
        per_axis
    } else {
        0
    }
}

/// Directions used when certifying gradient lower bounds: every signed
/// coordinate axis, the all-ones diagonal, and deterministic pseudo-random
/// directions, each normalized to unit Euclidean length.
pub fn sample_directions(dim: usize, n_random: usize) -> Vec<DVector<f64>> {
    let mut dirs = Vec::with_capacity(2 * dim + 1 + n_random);
    for i in 0..dim {
        let mut e = DVector::zeros(dim);
        e[i] = 1.0;
        dirs.push(e.clone());
        e[i] = -1.0;
        dirs.push(e);
    }
    let ones = DVector::from_element(dim, 1.0 / (dim as f64).sqrt());
    dirs.push(ones);

    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLER_SEED ^ 0xd1ce);
    for _ in 0..n_random {
        let v = DVector::from_fn(dim, |_, _| 2.0 * unit_f64(&mut rng) - 1.0);
        let n = v.norm();
        if n > 1e-12 {
            dirs.push(v / n);
        }
    }
    dirs
}
