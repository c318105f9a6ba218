use num_complex::Complex64;

use super::BlDomain;
use crate::error::{Error, Result};

/// Fourier coefficients of a band-limited field on the truncated domain.
///
/// Components are stored one after another, each as the full centered
/// `(2K_1+1) x ... x (2K_d+1)` block. A scalar field has one component, a
/// vector field `d`, a Jacobian `d*d` (row-major, entry `a*d + b` holds
/// `d v_a / d x_b`).
///
/// Coefficients of realizable fields satisfy `c(-k) = conj(c(k))`. Every
/// operation in this crate preserves that symmetry; [`BlField::symmetrize`]
/// restores it after external mutation.
#[derive(Clone, Debug, PartialEq)]
pub struct BlField {
    ncomp: usize,
    len: usize,
    data: Vec<Complex64>,
}

impl BlField {
    pub fn zeros(domain: &BlDomain, ncomp: usize) -> Self {
        Self::zeros_len(domain.spectral_len(), ncomp)
    }

    pub(crate) fn zeros_len(len: usize, ncomp: usize) -> Self {
        Self {
            ncomp,
            len,
            data: vec![Complex64::new(0.0, 0.0); ncomp * len],
        }
    }

    pub fn scalar_zeros(domain: &BlDomain) -> Self {
        Self::zeros(domain, 1)
    }

    pub fn vector_zeros(domain: &BlDomain) -> Self {
        Self::zeros(domain, domain.dim())
    }

    /// Field whose only nonzero coefficient is the `k = 0` mode of each
    /// component, i.e. a spatially constant field.
    pub fn constant(domain: &BlDomain, values: &[f64]) -> Self {
        let mut f = Self::zeros(domain, values.len());
        let dc = domain.spectral_len() / 2;
        for (c, &v) in values.iter().enumerate() {
            f.comp_mut(c)[dc] = Complex64::new(v, 0.0);
        }
        f
    }

    /// Coefficients drawn uniformly from the unit square of the complex
    /// plane, then made conjugate-symmetric.
    pub fn random<R: rand::Rng + ?Sized>(domain: &BlDomain, ncomp: usize, rng: &mut R) -> Self {
        let mut f = Self::zeros(domain, ncomp);
        for x in &mut f.data {
            *x = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        f.symmetrize();
        f
    }

    pub fn from_components(domain: &BlDomain, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        let len = domain.spectral_len();
        let ncomp = comps.len();
        let mut data = Vec::with_capacity(len * ncomp);
        for c in comps {
            if c.len() != len {
                return Err(Error::Shape(format!(
                    "component has {} coefficients, domain block has {len}",
                    c.len()
                )));
            }
            data.extend(c);
        }
        Ok(Self { ncomp, len, data })
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    /// Coefficients per component.
    pub fn block_len(&self) -> usize {
        self.len
    }

    pub fn comp(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn check_matches(&self, domain: &BlDomain) -> Result<()> {
        if self.len != domain.spectral_len() {
            return Err(Error::Shape(format!(
                "field block has {} coefficients, domain expects {}",
                self.len,
                domain.spectral_len()
            )));
        }
        Ok(())
    }

    pub(crate) fn same_shape(&self, other: &BlField) -> Result<()> {
        if self.len != other.len || self.ncomp != other.ncomp {
            return Err(Error::Shape(format!(
                "fields of shape {}x{} and {}x{}",
                self.ncomp, self.len, other.ncomp, other.len
            )));
        }
        Ok(())
    }

    /// Real part of the Hermitian l2 product over all stored coefficients.
    /// With the crate's normalization this equals the L2 product of the
    /// spatial realizations over the unit domain.
    pub fn dot(&self, other: &BlField) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &BlField) {
        debug_assert_eq!(self.data.len(), x.data.len());
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += v * a;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for s in &mut self.data {
            *s *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> BlField {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn add(&self, other: &BlField) -> BlField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &BlField) -> BlField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn set_zero(&mut self) {
        for s in &mut self.data {
            *s = Complex64::new(0.0, 0.0);
        }
    }

    /// Largest `|c(k) - conj(c(-k))|` relative to the largest coefficient.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for c in 0..self.ncomp {
            let comp = self.comp(c);
            for (i, v) in comp.iter().enumerate() {
                let m = comp[self.len - 1 - i];
                worst = worst.max((v - m.conj()).norm());
            }
        }
        worst / scale
    }

    /// Replace the coefficients by their conjugate-symmetric part.
    pub fn symmetrize(&mut self) {
        for c in 0..self.ncomp {
            let comp = self.comp_mut(c);
            let n = comp.len();
            for i in 0..n.div_ceil(2) {
                let j = n - 1 - i;
                let avg = (comp[i] + comp[j].conj()) * 0.5;
                comp[i] = avg;
                comp[j] = avg.conj();
            }
        }
    }

    /// A single component as a scalar field.
    pub fn component(&self, c: usize) -> BlField {
        BlField {
            ncomp: 1,
            len: self.len,
            data: self.comp(c).to_vec(),
        }
    }

    pub fn stack(parts: &[BlField]) -> BlField {
        let len = parts.first().map_or(0, |p| p.len);
        let mut data = Vec::new();
        let mut ncomp = 0;
        for p in parts {
            debug_assert_eq!(p.len, len);
            data.extend_from_slice(&p.data);
            ncomp += p.ncomp;
        }
        BlField { ncomp, len, data }
    }
}
