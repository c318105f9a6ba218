use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which symbol is used for the Helmholtz-type operator `(Id - alpha Lap)^s`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerSymbol {
    /// `1 + 2 alpha sum_j (1 - cos(2 pi k_j / N_j)) / h_j^2`, the second-order
    /// finite-difference Laplacian.
    #[default]
    Discrete,
    /// `1 + alpha sum_j (2 pi k_j)^2`.
    Continuous,
}

/// Truncated Fourier domain together with the full sampling grid and the
/// regularizer parameters.
///
/// The spatial domain is the periodic unit cube `[0,1)^d`, sampled with
/// `N_j` points per axis (spacing `h_j = 1/N_j`). Band-limited fields keep
/// the frequencies `|k_j| <= K_j`.
///
/// Unused axes (axis 2 when `d = 2`) carry `N = 1`, `K = 0`, so every
/// array in the crate can use a fixed three-axis row-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct BlDomain {
    dim: usize,
    grid: [usize; 3],
    bounds: [usize; 3],
    conv: [usize; 3],
    alpha: f64,
    order: u32,
    symbol: RegularizerSymbol,
}

impl BlDomain {
    pub fn new(grid: &[usize], bounds: &[usize], alpha: f64, order: u32) -> Result<Self> {
        let dim = grid.len();
        if !(2..=3).contains(&dim) {
            return Err(Error::Domain(format!("dimension must be 2 or 3, got {dim}")));
        }
        if bounds.len() != dim {
            return Err(Error::Domain(format!(
                "{} frequency bounds given for a {dim}-d grid",
                bounds.len()
            )));
        }
        let mut g = [1usize; 3];
        let mut k = [0usize; 3];
        let mut conv = [1usize; 3];
        for j in 0..dim {
            if bounds[j] < 1 {
                return Err(Error::Domain(format!("K_{j} must be at least 1")));
            }
            // The Nyquist pair +-N/2 maps onto one grid frequency, which would
            // break project(include(f)) = f, so K stays strictly below N/2.
            if 2 * bounds[j] >= grid[j] {
                return Err(Error::Domain(format!(
                    "K_{j} = {} must satisfy 2K < N (N_{j} = {})",
                    bounds[j], grid[j]
                )));
            }
            g[j] = grid[j];
            k[j] = bounds[j];
            conv[j] = fft_friendly(4 * bounds[j] + 1);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        if order < 1 {
            return Err(Error::Domain("regularizer exponent s must be >= 1".into()));
        }
        Ok(Self {
            dim,
            grid: g,
            bounds: k,
            conv,
            alpha,
            order,
            symbol: RegularizerSymbol::Discrete,
        })
    }

    pub fn with_symbol(mut self, symbol: RegularizerSymbol) -> Self {
        self.symbol = symbol;
        self
    }

    /// Same grid and regularizer with different frequency bounds.
    pub fn with_bounds(&self, bounds: &[usize]) -> Result<Self> {
        Ok(Self::new(self.grid_dims(), bounds, self.alpha, self.order)?.with_symbol(self.symbol))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn symbol(&self) -> RegularizerSymbol {
        self.symbol
    }

    /// Grid sizes `N_1..N_d`.
    pub fn grid_dims(&self) -> &[usize] {
        &self.grid[..self.dim]
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds[..self.dim]
    }

    pub(crate) fn grid_shape(&self) -> [usize; 3] {
        self.grid
    }

    pub(crate) fn bounds3(&self) -> [usize; 3] {
        self.bounds
    }

    /// Shape of the stored `(2K_j+1)` coefficient block.
    pub fn spectral_shape(&self) -> [usize; 3] {
        [
            2 * self.bounds[0] + 1,
            2 * self.bounds[1] + 1,
            2 * self.bounds[2] + 1,
        ]
    }

    /// Number of coefficients per component.
    pub fn spectral_len(&self) -> usize {
        self.spectral_shape().iter().product()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.iter().product()
    }

    /// Intermediate grid on which truncated products are evaluated
    /// alias-free (at least `4K_j + 1` points per axis).
    pub fn conv_shape(&self) -> [usize; 3] {
        self.conv
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / self.grid[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|j| self.spacing(j))
            .fold(f64::INFINITY, f64::min)
    }

    /// Volume of one voxel, `prod_j h_j`.
    pub fn voxel_volume(&self) -> f64 {
        1.0 / self.grid_len() as f64
    }

    /// Frequency vector of a flat block index.
    pub fn frequency(&self, idx: usize) -> [i64; 3] {
        let s = self.spectral_shape();
        let i2 = idx % s[2];
        let i1 = (idx / s[2]) % s[1];
        let i0 = idx / (s[1] * s[2]);
        [
            i0 as i64 - self.bounds[0] as i64,
            i1 as i64 - self.bounds[1] as i64,
            i2 as i64 - self.bounds[2] as i64,
        ]
    }

    /// Flat block index of a frequency vector inside the block.
    pub fn index_of(&self, k: [i64; 3]) -> usize {
        let s = self.spectral_shape();
        let i0 = (k[0] + self.bounds[0] as i64) as usize;
        let i1 = (k[1] + self.bounds[1] as i64) as usize;
        let i2 = (k[2] + self.bounds[2] as i64) as usize;
        (i0 * s[1] + i1) * s[2] + i2
    }

    /// Index of `-k` for the flat index of `k`. The block is centered, so
    /// this is the point reflection of the flat index.
    pub fn mirror(&self, idx: usize) -> usize {
        self.spectral_len() - 1 - idx
    }

    /// `1 + sum` part of the operator symbol at frequency `k` (before the
    /// exponent `s` is applied).
    pub fn base_symbol(&self, k: [i64; 3]) -> f64 {
        let mut acc = 0.0;
        for (j, &kj) in k.iter().enumerate().take(self.dim) {
            let n = self.grid[j] as f64;
            acc += match self.symbol {
                RegularizerSymbol::Discrete => {
                    2.0 * n * n * (1.0 - (2.0 * PI * kj as f64 / n).cos())
                }
                RegularizerSymbol::Continuous => (2.0 * PI * kj as f64).powi(2),
            };
        }
        1.0 + self.alpha * acc
    }

    /// Symbol of `L = (Id - alpha Lap)^s` at frequency `k`.
    pub fn l_symbol(&self, k: [i64; 3]) -> f64 {
        self.base_symbol(k).powi(self.order as i32)
    }
}

/// Smallest integer `>= n` whose only prime factors are 2, 3 and 5.
fn fft_friendly(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_bounds() {
        assert!(BlDomain::new(&[8, 8], &[4, 3], 1.0, 1).is_err());
        assert!(BlDomain::new(&[8, 8], &[0, 3], 1.0, 1).is_err());
        assert!(BlDomain::new(&[8, 8], &[3, 3], 0.0, 1).is_err());
        assert!(BlDomain::new(&[8, 8], &[3, 3], 1.0, 0).is_err());
        assert!(BlDomain::new(&[8], &[3], 1.0, 1).is_err());
        assert!(BlDomain::new(&[8, 8], &[3, 3], 1.0, 1).is_ok());
    }

    #[test]
    fn conv_grid_is_alias_free() {
        let d = BlDomain::new(&[64, 64], &[16, 8], 1.0, 1).unwrap();
        let c = d.conv_shape();
        assert!(c[0] >= 65 && c[1] >= 33);
        assert_eq!(c[2], 1);
        assert_eq!(fft_friendly(65), 72);
        assert_eq!(fft_friendly(13), 15);
    }

    #[test]
    fn symbol_value_at_first_mode() {
        let d = BlDomain::new(&[8, 8], &[3, 3], 1.0, 1).unwrap();
        // direct evaluation of 1 + 2 alpha (1 - cos(2 pi k / N)) / h^2
        let expected = 1.0 + 2.0 * 64.0 * (1.0 - (std::f64::consts::PI / 4.0).cos());
        assert!((d.l_symbol([1, 0, 0]) - expected).abs() < 1e-12);
        assert!((expected - 38.49).abs() < 5e-3);
        assert_eq!(d.l_symbol([0, 0, 0]), 1.0);
    }

    #[test]
    fn index_roundtrip_and_mirror() {
        let d = BlDomain::new(&[16, 12, 10], &[3, 2, 4], 0.5, 2).unwrap();
        for idx in 0..d.spectral_len() {
            let k = d.frequency(idx);
            assert_eq!(d.index_of(k), idx);
            let m = d.frequency(d.mirror(idx));
            assert_eq!(m, [-k[0], -k[1], -k[2]]);
        }
    }
}
