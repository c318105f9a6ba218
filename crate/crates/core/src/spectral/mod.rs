//! Band-limited field algebra: the truncated Fourier domain, the inclusion
//! and projection maps between band-limited coefficients and full-grid
//! samples, the alias-free truncated convolution, the diagonal operators
//! `L`, `K`, gradient, divergence and Jacobian, and the divergence-free
//! (Leray) projection.
//!
//! Normalization: a field with coefficients `c_k` realizes as
//! `x -> sum_k c_k exp(2 pi i k.x)` on the unit cube, so the l2 product of
//! coefficient blocks equals the L2 product of the realizations and
//! `project(include(f)) = f`.

mod domain;
mod fft;
mod field;
#[cfg(test)]
mod tests;

use std::f64::consts::PI;

use num_complex::Complex64;

pub use domain::{BlDomain, RegularizerSymbol};
pub use field::BlField;

use crate::error::{Error, Result};
use crate::grid::SpatialField;
use fft::GridFft;

/// Relative conjugate-symmetry defect above which a spectrum is rejected.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Transform plans and precomputed symbols for one [`BlDomain`].
///
/// All methods take `&self`; a `Spectral` can be shared freely between
/// threads.
#[derive(Clone, Debug)]
pub struct Spectral {
    domain: BlDomain,
    full: GridFft,
    conv: GridFft,
    l_symbol: Vec<f64>,
    /// `2 pi k_j` for each block index and axis.
    wave: [Vec<f64>; 3],
    /// `|2 pi k|^2` for each block index.
    wave_sq: Vec<f64>,
}

impl Spectral {
    pub fn new(domain: BlDomain) -> Self {
        let bounds = domain.bounds3();
        let full = GridFft::new(domain.grid_shape(), bounds);
        let conv = GridFft::new(domain.conv_shape(), bounds);
        let n = domain.spectral_len();
        let mut l_symbol = Vec::with_capacity(n);
        let mut wave: [Vec<f64>; 3] = Default::default();
        let mut wave_sq = Vec::with_capacity(n);
        for idx in 0..n {
            let k = domain.frequency(idx);
            l_symbol.push(domain.l_symbol(k));
            let mut sq = 0.0;
            for j in 0..3 {
                let w = 2.0 * PI * k[j] as f64;
                wave[j].push(w);
                sq += w * w;
            }
            wave_sq.push(sq);
        }
        Self {
            domain,
            full,
            conv,
            l_symbol,
            wave,
            wave_sq,
        }
    }

    pub fn domain(&self) -> &BlDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn block_len(&self) -> usize {
        self.domain.spectral_len()
    }

    pub fn zeros(&self, ncomp: usize) -> BlField {
        BlField::zeros(&self.domain, ncomp)
    }

    /// Random smooth field: uniform coefficients damped by `1 / (1 + |k|^2)`,
    /// scaled so the realization peaks at `amplitude`.
    pub fn random_smooth<R: rand::Rng + ?Sized>(&self, ncomp: usize, amplitude: f64, rng: &mut R) -> BlField {
        let mut f = BlField::random(&self.domain, ncomp, rng);
        for c in 0..ncomp {
            for (i, x) in f.comp_mut(c).iter_mut().enumerate() {
                let k = self.domain.frequency(i);
                *x /= 1.0 + (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
            }
        }
        let peak = self.realize(&f).max_abs();
        if peak > 0.0 {
            f.scale(amplitude / peak);
        }
        f
    }

    /// `iota`: realize a band-limited field on the full grid.
    ///
    /// Rejects spectra whose conjugate-symmetry defect exceeds
    /// [`SYMMETRY_TOLERANCE`].
    pub fn include(&self, f: &BlField) -> Result<SpatialField> {
        f.check_matches(&self.domain)?;
        if !f.is_finite() {
            return Err(Error::NonFinite("spectrum"));
        }
        let defect = f.symmetry_defect();
        if defect > SYMMETRY_TOLERANCE {
            return Err(Error::Asymmetric(defect));
        }
        Ok(self.realize(f))
    }

    /// Realization without the symmetry check (the imaginary part of a
    /// slightly asymmetric spectrum is discarded).
    pub fn realize(&self, f: &BlField) -> SpatialField {
        let comps: Vec<&[Complex64]> = (0..f.ncomp()).map(|c| f.comp(c)).collect();
        let data = synthesize_real(&self.full, &comps);
        SpatialField::from_components(self.domain.grid_dims(), data)
            .expect("grid realization has the domain shape")
    }

    /// `pi`: forward transform of a full-grid field, keeping `|k_j| <= K_j`.
    /// The output is conjugate-symmetric by construction.
    pub fn project(&self, f: &SpatialField) -> BlField {
        debug_assert_eq!(f.shape(), self.domain.grid_shape());
        let comps: Vec<&[f64]> = (0..f.ncomp()).map(|c| f.comp(c)).collect();
        let blocks = analyze_real(&self.full, &comps);
        BlField::from_components(&self.domain, blocks).expect("block shape")
    }

    /// Projection of several full-grid component arrays at once.
    pub(crate) fn project_full(&self, comps: &[&[f64]]) -> BlField {
        BlField::from_components(&self.domain, analyze_real(&self.full, comps)).expect("block shape")
    }

    /// Realization on the alias-free product grid.
    pub(crate) fn realize_conv(&self, comps: &[&[Complex64]]) -> Vec<Vec<f64>> {
        synthesize_real(&self.conv, comps)
    }

    /// Projection from the alias-free product grid.
    pub(crate) fn project_conv(&self, comps: &[&[f64]]) -> Vec<Vec<Complex64>> {
        analyze_real(&self.conv, comps)
    }

    pub(crate) fn conv_len(&self) -> usize {
        self.conv.len()
    }

    /// Truncated convolution `a * b = pi(iota(a) iota(b))`, evaluated on a
    /// grid large enough that the result is the exact truncation of the
    /// spectral convolution.
    ///
    /// Component counts select the pointwise contraction:
    /// scalar-scalar, scalar-field (either order), `d x d` matrix times
    /// vector, and vector dot vector.
    pub fn conv(&self, a: &BlField, b: &BlField) -> Result<BlField> {
        a.check_matches(&self.domain)?;
        b.check_matches(&self.domain)?;
        let d = self.dim();
        let (na, nb) = (a.ncomp(), b.ncomp());
        let ra = self.realize_conv(&comps_of(a));
        let rb = self.realize_conv(&comps_of(b));
        let m = self.conv_len();
        let products: Vec<Vec<f64>> = if na == 1 {
            (0..nb).map(|c| mul(&ra[0], &rb[c])).collect()
        } else if nb == 1 {
            (0..na).map(|c| mul(&ra[c], &rb[0])).collect()
        } else if na == d * d && nb == d {
            (0..d)
                .map(|r| {
                    let mut acc = vec![0.0; m];
                    for c in 0..d {
                        fma(&mut acc, &ra[r * d + c], &rb[c]);
                    }
                    acc
                })
                .collect()
        } else if na == d && nb == d {
            let mut acc = vec![0.0; m];
            for c in 0..d {
                fma(&mut acc, &ra[c], &rb[c]);
            }
            vec![acc]
        } else {
            return Err(Error::Shape(format!(
                "no pointwise contraction for {na}- and {nb}-component operands"
            )));
        };
        let refs: Vec<&[f64]> = products.iter().map(|p| p.as_slice()).collect();
        BlField::from_components(&self.domain, self.project_conv(&refs))
    }

    /// Diagonal multiplication by the symbol of `L`.
    pub fn apply_l(&self, v: &BlField) -> BlField {
        self.diagonal(v, |i| self.l_symbol[i])
    }

    /// Diagonal multiplication by the symbol of `K = L^-1`.
    pub fn apply_k(&self, v: &BlField) -> BlField {
        self.diagonal(v, |i| 1.0 / self.l_symbol[i])
    }

    pub fn l_symbol(&self) -> &[f64] {
        &self.l_symbol
    }

    fn diagonal(&self, v: &BlField, sym: impl Fn(usize) -> f64) -> BlField {
        let mut out = v.clone();
        for c in 0..out.ncomp() {
            for (i, x) in out.comp_mut(c).iter_mut().enumerate() {
                *x *= sym(i);
            }
        }
        out
    }

    /// `d/dx_axis` of every component.
    pub fn derivative(&self, f: &BlField, axis: usize) -> BlField {
        let mut out = f.clone();
        for c in 0..out.ncomp() {
            deriv_in_place(out.comp_mut(c), &self.wave[axis]);
        }
        out
    }

    pub(crate) fn derivative_comp(&self, comp: &[Complex64], axis: usize) -> Vec<Complex64> {
        let mut out = comp.to_vec();
        deriv_in_place(&mut out, &self.wave[axis]);
        out
    }

    /// `i 2 pi k_axis`, the derivative symbol, as a real factor of `i`.
    pub(crate) fn wave(&self, axis: usize) -> &[f64] {
        &self.wave[axis]
    }

    /// Gradient of a scalar field.
    pub fn gradient(&self, p: &BlField) -> Result<BlField> {
        if p.ncomp() != 1 {
            return Err(Error::Shape("gradient expects a scalar field".into()));
        }
        let parts: Vec<BlField> = (0..self.dim()).map(|j| self.derivative(p, j)).collect();
        Ok(BlField::stack(&parts))
    }

    /// Divergence of a vector field.
    pub fn divergence(&self, v: &BlField) -> Result<BlField> {
        let d = self.dim();
        if v.ncomp() != d {
            return Err(Error::Shape("divergence expects a vector field".into()));
        }
        let mut out = self.zeros(1);
        let acc = out.comp_mut(0);
        for j in 0..d {
            for (i, (o, x)) in acc.iter_mut().zip(v.comp(j)).enumerate() {
                *o += Complex64::new(0.0, self.wave[j][i]) * x;
            }
        }
        Ok(out)
    }

    /// All first partials: component `a*d + b` is `d v_a / d x_b`.
    pub fn jacobian(&self, v: &BlField) -> Result<BlField> {
        let d = self.dim();
        if v.ncomp() != d {
            return Err(Error::Shape("jacobian expects a vector field".into()));
        }
        let mut out = self.zeros(d * d);
        for a in 0..d {
            for b in 0..d {
                let comp = self.derivative_comp(v.comp(a), b);
                out.comp_mut(a * d + b).copy_from_slice(&comp);
            }
        }
        Ok(out)
    }

    /// Spectral Laplacian `-|2 pi k|^2` applied componentwise.
    pub fn laplacian(&self, f: &BlField) -> BlField {
        self.diagonal(f, |i| -self.wave_sq[i])
    }

    /// Leray decomposition `v = w + grad p` with `div w = 0` and the
    /// pressure gauge `p(k=0) = 0`.
    pub fn leray(&self, v: &BlField) -> Result<(BlField, BlField)> {
        let div = self.divergence(v)?;
        let mut p = div;
        for (i, x) in p.comp_mut(0).iter_mut().enumerate() {
            let s = self.wave_sq[i];
            *x = if s == 0.0 { Complex64::new(0.0, 0.0) } else { *x / -s };
        }
        let grad = self.gradient(&p)?;
        Ok((v.sub(&grad), p))
    }

    /// Divergence-free part of `v` (Leray projection), in place.
    pub fn project_div_free(&self, v: &mut BlField) {
        let d = self.dim();
        debug_assert_eq!(v.ncomp(), d);
        for i in 0..self.block_len() {
            let s = self.wave_sq[i];
            if s == 0.0 {
                continue;
            }
            let mut kv = Complex64::new(0.0, 0.0);
            for j in 0..d {
                kv += v.comp(j)[i] * self.wave[j][i];
            }
            for j in 0..d {
                let w = self.wave[j][i];
                v.comp_mut(j)[i] -= kv * (w / s);
            }
        }
    }

    /// Largest divergence coefficient magnitude.
    pub fn max_divergence(&self, v: &BlField) -> f64 {
        self.divergence(v).map(|d| d.max_abs()).unwrap_or(f64::NAN)
    }
}

pub(crate) fn comps_of(f: &BlField) -> Vec<&[Complex64]> {
    (0..f.ncomp()).map(|c| f.comp(c)).collect()
}

fn deriv_in_place(comp: &mut [Complex64], wave: &[f64]) {
    for (x, &w) in comp.iter_mut().zip(wave) {
        *x = Complex64::new(-x.im * w, x.re * w);
    }
}

pub(crate) fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

pub(crate) fn fma(acc: &mut [f64], a: &[f64], b: &[f64]) {
    for ((o, x), y) in acc.iter_mut().zip(a).zip(b) {
        *o += x * y;
    }
}

/// Realize conjugate-symmetric blocks, two per complex transform.
fn synthesize_real(plan: &GridFft, comps: &[&[Complex64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(comps.len());
    for pair in comps.chunks(2) {
        if let [a, b] = pair {
            let z: Vec<Complex64> = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| x + Complex64::new(-y.im, y.re))
                .collect();
            let grid = plan.synthesize(&z);
            out.push(grid.iter().map(|c| c.re).collect());
            out.push(grid.iter().map(|c| c.im).collect());
        } else {
            let grid = plan.synthesize(pair[0]);
            out.push(grid.iter().map(|c| c.re).collect());
        }
    }
    out
}

/// Normalized, symmetrized forward transforms of real grids, two per
/// complex transform.
fn analyze_real(plan: &GridFft, comps: &[&[f64]]) -> Vec<Vec<Complex64>> {
    let scale = 1.0 / plan.len() as f64;
    let mut out = Vec::with_capacity(comps.len());
    for pair in comps.chunks(2) {
        if let [f, g] = pair {
            let z: Vec<Complex64> = f
                .iter()
                .zip(g.iter())
                .map(|(&x, &y)| Complex64::new(x, y))
                .collect();
            let blk = plan.analyze(z);
            let n = blk.len();
            let mut a = Vec::with_capacity(n);
            let mut b = Vec::with_capacity(n);
            for i in 0..n {
                let zk = blk[i] * scale;
                let zm = blk[n - 1 - i].conj() * scale;
                a.push((zk + zm) * 0.5);
                let d = (zk - zm) * 0.5;
                b.push(Complex64::new(d.im, -d.re));
            }
            out.push(a);
            out.push(b);
        } else {
            let z: Vec<Complex64> = pair[0].iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let blk = plan.analyze(z);
            let n = blk.len();
            out.push(
                (0..n)
                    .map(|i| (blk[i] + blk[n - 1 - i].conj()) * (0.5 * scale))
                    .collect(),
            );
        }
    }
    out
}
