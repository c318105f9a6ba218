//! Pruned three-axis FFTs between a centered coefficient block and a
//! periodic sampling grid.
//!
//! Only the lines that can hold nonzero block entries are transformed, and
//! two real fields share one complex transform wherever the caller pairs
//! them up.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub(crate) struct GridFft {
    shape: [usize; 3],
    bounds: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
    /// Grid positions of `k = -K..=K` for each axis, in block order.
    support: [Vec<usize>; 3],
}

impl std::fmt::Debug for GridFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFft")
            .field("shape", &self.shape)
            .field("bounds", &self.bounds)
            .finish()
    }
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

impl GridFft {
    pub(crate) fn new(shape: [usize; 3], bounds: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape.map(|n| planner.plan_fft_forward(n));
        let inverse = shape.map(|n| planner.plan_fft_inverse(n));
        let support = std::array::from_fn(|j| {
            let n = shape[j] as i64;
            let k = bounds[j] as i64;
            (-k..=k).map(|f| f.rem_euclid(n) as usize).collect()
        });
        Self {
            shape,
            bounds,
            forward,
            inverse,
            support,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.shape.iter().product()
    }

    fn block_shape(&self) -> [usize; 3] {
        self.bounds.map(|k| 2 * k + 1)
    }

    /// Evaluate `sum_k c_k exp(2 pi i k.x)` on the grid.
    pub(crate) fn synthesize(&self, block: &[Complex64]) -> Vec<Complex64> {
        let [n0, n1, n2] = self.shape;
        let [b0, b1, b2] = self.block_shape();
        debug_assert_eq!(block.len(), b0 * b1 * b2);
        let mut grid = vec![ZERO; n0 * n1 * n2];
        for (a0, &g0) in self.support[0].iter().enumerate() {
            for (a1, &g1) in self.support[1].iter().enumerate() {
                let src = (a0 * b1 + a1) * b2;
                let dst = (g0 * n1 + g1) * n2;
                for (a2, &g2) in self.support[2].iter().enumerate() {
                    grid[dst + g2] = block[src + a2];
                }
            }
        }
        let mut scratch = Vec::new();
        // axis 2: only rows that carry block entries
        if n2 > 1 {
            for &g0 in &self.support[0] {
                for &g1 in &self.support[1] {
                    let off = (g0 * n1 + g1) * n2;
                    run(&self.inverse[2], &mut grid[off..off + n2], &mut scratch);
                }
            }
        }
        // axis 1: slabs g0 in the support
        if n1 > 1 {
            let mut line = vec![ZERO; n1];
            for &g0 in &self.support[0] {
                for i2 in 0..n2 {
                    let base = g0 * n1 * n2 + i2;
                    for (i1, l) in line.iter_mut().enumerate() {
                        *l = grid[base + i1 * n2];
                    }
                    run(&self.inverse[1], &mut line, &mut scratch);
                    for (i1, l) in line.iter().enumerate() {
                        grid[base + i1 * n2] = *l;
                    }
                }
            }
        }
        if n0 > 1 {
            let mut line = vec![ZERO; n0];
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    let base = i1 * n2 + i2;
                    for (i0, l) in line.iter_mut().enumerate() {
                        *l = grid[base + i0 * n1 * n2];
                    }
                    run(&self.inverse[0], &mut line, &mut scratch);
                    for (i0, l) in line.iter().enumerate() {
                        grid[base + i0 * n1 * n2] = *l;
                    }
                }
            }
        }
        grid
    }

    /// Unnormalized forward transform restricted to the block frequencies.
    pub(crate) fn analyze(&self, mut grid: Vec<Complex64>) -> Vec<Complex64> {
        let [n0, n1, n2] = self.shape;
        let [b0, b1, b2] = self.block_shape();
        debug_assert_eq!(grid.len(), n0 * n1 * n2);
        let mut scratch = Vec::new();
        if n0 > 1 {
            let mut line = vec![ZERO; n0];
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    let base = i1 * n2 + i2;
                    for (i0, l) in line.iter_mut().enumerate() {
                        *l = grid[base + i0 * n1 * n2];
                    }
                    run(&self.forward[0], &mut line, &mut scratch);
                    for (i0, l) in line.iter().enumerate() {
                        grid[base + i0 * n1 * n2] = *l;
                    }
                }
            }
        }
        if n1 > 1 {
            let mut line = vec![ZERO; n1];
            for &g0 in &self.support[0] {
                for i2 in 0..n2 {
                    let base = g0 * n1 * n2 + i2;
                    for (i1, l) in line.iter_mut().enumerate() {
                        *l = grid[base + i1 * n2];
                    }
                    run(&self.forward[1], &mut line, &mut scratch);
                    for (i1, l) in line.iter().enumerate() {
                        grid[base + i1 * n2] = *l;
                    }
                }
            }
        }
        if n2 > 1 {
            for &g0 in &self.support[0] {
                for &g1 in &self.support[1] {
                    let off = (g0 * n1 + g1) * n2;
                    run(&self.forward[2], &mut grid[off..off + n2], &mut scratch);
                }
            }
        }
        let mut block = vec![ZERO; b0 * b1 * b2];
        for (a0, &g0) in self.support[0].iter().enumerate() {
            for (a1, &g1) in self.support[1].iter().enumerate() {
                let dst = (a0 * b1 + a1) * b2;
                let src = (g0 * n1 + g1) * n2;
                for (a2, &g2) in self.support[2].iter().enumerate() {
                    block[dst + a2] = grid[src + g2];
                }
            }
        }
        block
    }
}

fn run(plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
    let need = plan.get_inplace_scratch_len();
    if scratch.len() < need {
        scratch.resize(need, ZERO);
    }
    plan.process_with_scratch(buf, &mut scratch[..need]);
}
