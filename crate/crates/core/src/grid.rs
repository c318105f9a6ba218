//! Real fields sampled on the full periodic grid: composition with maps by
//! interpolation, central-difference gradients and Jacobian determinants.

use std::borrow::Cow;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real samples of a scalar or vector field on the full `N_1 x ... x N_d`
/// grid of the unit cube. Components are stored one after another, each in
/// row-major order with the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialField {
    dim: usize,
    shape: [usize; 3],
    ncomp: usize,
    data: Vec<f64>,
}

impl SpatialField {
    pub fn zeros(dims: &[usize], ncomp: usize) -> Self {
        let (dim, shape) = shape3(dims);
        let n: usize = shape.iter().product();
        Self {
            dim,
            shape,
            ncomp,
            data: vec![0.0; n * ncomp],
        }
    }

    pub fn new(dims: &[usize], ncomp: usize, data: Vec<f64>) -> Result<Self> {
        let (dim, shape) = shape3(dims);
        let n: usize = shape.iter().product();
        if data.len() != n * ncomp {
            return Err(Error::Shape(format!(
                "{} samples for a {:?} grid with {ncomp} components",
                data.len(),
                dims
            )));
        }
        Ok(Self {
            dim,
            shape,
            ncomp,
            data,
        })
    }

    pub fn from_components(dims: &[usize], comps: Vec<Vec<f64>>) -> Result<Self> {
        let ncomp = comps.len();
        let data: Vec<f64> = comps.into_iter().flatten().collect();
        Self::new(dims, ncomp, data)
    }

    /// Sample `f(x)` at every grid point `x_i = i / N`.
    pub fn from_fn(dims: &[usize], f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut out = Self::zeros(dims, 1);
        let shape = out.shape;
        for (idx, v) in out.data.iter_mut().enumerate() {
            *v = f(position(shape, idx));
        }
        out
    }

    pub fn constant(dims: &[usize], value: f64) -> Self {
        Self::from_fn(dims, |_| value)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dims(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub(crate) fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        let n = self.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> SpatialField {
        SpatialField {
            dim: self.dim,
            shape: self.shape,
            ncomp: 1,
            data: self.comp(c).to_vec(),
        }
    }

    pub fn voxel_volume(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Squared L2 norm on the unit cube (grid sum times voxel volume).
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() * self.voxel_volume()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_grid(&self, other: &SpatialField) -> bool {
        self.shape == other.shape && self.dim == other.dim
    }

    pub fn zip_map(&self, other: &SpatialField, f: impl Fn(f64, f64) -> f64) -> SpatialField {
        debug_assert_eq!(self.data.len(), other.data.len());
        SpatialField {
            dim: self.dim,
            shape: self.shape,
            ncomp: self.ncomp,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpatialField {
        SpatialField {
            dim: self.dim,
            shape: self.shape,
            ncomp: self.ncomp,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }
}

fn shape3(dims: &[usize]) -> (usize, [usize; 3]) {
    let mut shape = [1usize; 3];
    shape[..dims.len()].copy_from_slice(dims);
    (dims.len(), shape)
}

/// Unit-cube coordinates of a flat grid index.
pub(crate) fn position(shape: [usize; 3], idx: usize) -> [f64; 3] {
    let i = unravel(shape, idx);
    [
        i[0] as f64 / shape[0] as f64,
        i[1] as f64 / shape[1] as f64,
        i[2] as f64 / shape[2] as f64,
    ]
}

pub(crate) fn unravel(shape: [usize; 3], idx: usize) -> [usize; 3] {
    [
        idx / (shape[1] * shape[2]),
        (idx / shape[2]) % shape[1],
        idx % shape[2],
    ]
}

/// A map `x -> x + u(x)` of the periodic unit cube, stored as its
/// displacement `u` (a `d`-component [`SpatialField`], unit-cube units).
#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    displacement: SpatialField,
}

impl GridMap {
    pub fn identity(dims: &[usize]) -> Self {
        Self {
            displacement: SpatialField::zeros(dims, dims.len()),
        }
    }

    pub fn from_displacement(u: SpatialField) -> Result<Self> {
        if u.ncomp() != u.dim() {
            return Err(Error::Shape(format!(
                "displacement needs {} components, has {}",
                u.dim(),
                u.ncomp()
            )));
        }
        if !u.is_finite() {
            return Err(Error::NonFinite("displacement"));
        }
        if u.max_abs() >= 1.0 {
            return Err(Error::Shape("displacement exceeds the domain extent".into()));
        }
        Ok(Self { displacement: u })
    }

    pub(crate) fn from_displacement_unchecked(u: SpatialField) -> Self {
        Self { displacement: u }
    }

    pub fn displacement(&self) -> &SpatialField {
        &self.displacement
    }

    pub fn dims(&self) -> &[usize] {
        self.displacement.dims()
    }
}

/// Interpolation kernel used to evaluate grid images at mapped points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Multilinear. At points lying exactly on a grid line the derivative
    /// across that line is the central difference (mean of both one-sided
    /// slopes).
    #[default]
    Linear,
    /// Catmull-Rom cubic convolution; continuously differentiable, with
    /// central differences as the derivative at grid nodes.
    Cubic,
    /// Interpolating cubic B-spline (periodic prefilter); twice
    /// continuously differentiable, so energies built on it have a
    /// continuous Hessian.
    Bspline,
}

/// Taps `i-1..=i+2` around `floor(p)`.
#[derive(Clone, Copy, Debug)]
struct Taps {
    base: i64,
    w: [f64; 4],
    dw: [f64; 4],
    ddw: [f64; 4],
}

impl Interpolation {
    fn taps(self, p: f64) -> Taps {
        let fl = p.floor();
        let t = p - fl;
        let base = fl as i64;
        match self {
            Interpolation::Linear => {
                let dw = if t == 0.0 {
                    [-0.5, 0.0, 0.5, 0.0]
                } else {
                    [0.0, -1.0, 1.0, 0.0]
                };
                Taps {
                    base,
                    w: [0.0, 1.0 - t, t, 0.0],
                    dw,
                    ddw: [0.0; 4],
                }
            }
            Interpolation::Cubic => {
                let t2 = t * t;
                let t3 = t2 * t;
                Taps {
                    base,
                    w: [
                        0.5 * (-t3 + 2.0 * t2 - t),
                        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
                        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
                        0.5 * (t3 - t2),
                    ],
                    dw: [
                        0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
                        0.5 * (9.0 * t2 - 10.0 * t),
                        0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
                        0.5 * (3.0 * t2 - 2.0 * t),
                    ],
                    ddw: [
                        0.5 * (-6.0 * t + 4.0),
                        0.5 * (18.0 * t - 10.0),
                        0.5 * (-18.0 * t + 8.0),
                        0.5 * (6.0 * t - 2.0),
                    ],
                }
            }
            Interpolation::Bspline => {
                let s = 1.0 - t;
                let t2 = t * t;
                let t3 = t2 * t;
                Taps {
                    base,
                    w: [
                        s * s * s / 6.0,
                        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
                        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
                        t3 / 6.0,
                    ],
                    dw: [
                        -0.5 * s * s,
                        0.5 * (3.0 * t2 - 4.0 * t),
                        0.5 * (-3.0 * t2 + 2.0 * t + 1.0),
                        0.5 * t2,
                    ],
                    ddw: [s, 3.0 * t - 2.0, 1.0 - 3.0 * t, t],
                }
            }
        }
    }
}

/// Value, gradient and Hessian of an interpolated image at one point, with
/// derivatives in unit-cube coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

/// How many derivatives [`Sampler`] should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// Evaluates a periodic scalar grid image at arbitrary points.
pub struct Sampler<'a> {
    values: Cow<'a, [f64]>,
    shape: [usize; 3],
    dim: usize,
    kind: Interpolation,
}

impl<'a> Sampler<'a> {
    pub fn new(f: &'a SpatialField, kind: Interpolation) -> Self {
        Self::from_comp(f, 0, kind)
    }

    pub fn from_comp(f: &'a SpatialField, comp: usize, kind: Interpolation) -> Self {
        Self {
            values: match kind {
                Interpolation::Bspline => Cow::Owned(bspline_coefficients(f.comp(comp), f.shape(), f.dim())),
                _ => Cow::Borrowed(f.comp(comp)),
            },
            shape: f.shape(),
            dim: f.dim(),
            kind,
        }
    }

    /// Evaluate at a point given in grid-index coordinates.
    pub fn at_index(&self, p: [f64; 3], order: Order) -> Sample {
        let d = self.dim;
        let mut taps = [Taps {
            base: 0,
            w: [1.0, 0.0, 0.0, 0.0],
            dw: [0.0; 4],
            ddw: [0.0; 4],
        }; 3];
        for j in 0..d {
            // fmod is exact, so the fractional part is unchanged
            taps[j] = self.kind.taps(p[j].rem_euclid(self.shape[j] as f64));
        }
        let span = |j: usize| if j < d { 4 } else { 1 };
        let n = self.shape;
        let wrap = |j: usize, base: i64, o: usize| -> usize {
            if j < d {
                (base - 1 + o as i64).rem_euclid(n[j] as i64) as usize
            } else {
                0
            }
        };
        // taps of unused axes sit at offset 0 with weight 1
        let w_at = |t: &Taps, j: usize, o: usize, kind: u8| -> f64 {
            if j >= d {
                return if kind == 0 { 1.0 } else { 0.0 };
            }
            match kind {
                0 => t.w[o],
                1 => t.dw[o],
                _ => t.ddw[o],
            }
        };
        let mut s = Sample::default();
        for o0 in 0..span(0) {
            let i0 = wrap(0, taps[0].base, o0);
            for o1 in 0..span(1) {
                let i1 = wrap(1, taps[1].base, o1);
                for o2 in 0..span(2) {
                    let i2 = wrap(2, taps[2].base, o2);
                    let f = self.values[(i0 * n[1] + i1) * n[2] + i2];
                    if f == 0.0 {
                        continue;
                    }
                    let o = [o0, o1, o2];
                    let w: [f64; 3] = std::array::from_fn(|j| w_at(&taps[j], j, o[j], 0));
                    s.value += f * w[0] * w[1] * w[2];
                    if order >= Order::Gradient {
                        let dw: [f64; 3] = std::array::from_fn(|j| w_at(&taps[j], j, o[j], 1));
                        for j in 0..d {
                            let mut prod = f;
                            for k in 0..3 {
                                prod *= if k == j { dw[k] } else { w[k] };
                            }
                            s.grad[j] += prod;
                        }
                        if order >= Order::Hessian {
                            let ddw: [f64; 3] =
                                std::array::from_fn(|j| w_at(&taps[j], j, o[j], 2));
                            for j in 0..d {
                                for k in j..d {
                                    let mut prod = f;
                                    for m in 0..3 {
                                        prod *= if j == k && m == j {
                                            ddw[m]
                                        } else if m == j || m == k {
                                            dw[m]
                                        } else {
                                            w[m]
                                        };
                                    }
                                    s.hess[j][k] += prod;
                                }
                            }
                        }
                    }
                }
            }
        }
        // index units -> unit-cube units
        for j in 0..d {
            let nj = n[j] as f64;
            s.grad[j] *= nj;
            for k in j..d {
                s.hess[j][k] *= nj * n[k] as f64;
                s.hess[k][j] = s.hess[j][k];
            }
        }
        s
    }

    /// Evaluate at the image of grid point `idx` under `x -> x + u(x)`.
    pub fn at_mapped(&self, idx: usize, disp: [f64; 3], order: Order) -> Sample {
        let i = unravel(self.shape, idx);
        let p: [f64; 3] =
            std::array::from_fn(|j| i[j] as f64 + disp[j] * self.shape[j] as f64);
        self.at_index(p, order)
    }
}

/// Per-voxel samples of `f o phi`.
pub(crate) fn sample_mapped(
    f: &SpatialField,
    disp: &[&[f64]],
    kind: Interpolation,
    order: Order,
) -> Vec<Sample> {
    let sampler = Sampler::new(f, kind);
    let d = f.dim();
    (0..f.len())
        .map(|idx| {
            let u: [f64; 3] = std::array::from_fn(|j| if j < d { disp[j][idx] } else { 0.0 });
            sampler.at_mapped(idx, u, order)
        })
        .collect()
}

/// `f o phi` by periodic interpolation.
pub fn warp(f: &SpatialField, phi: &GridMap, kind: Interpolation) -> Result<SpatialField> {
    if f.ncomp() != 1 {
        return Err(Error::Shape("warp expects a scalar image".into()));
    }
    if !f.same_grid(phi.displacement()) {
        return Err(Error::Shape("image and map live on different grids".into()));
    }
    let u = phi.displacement();
    let disp: Vec<&[f64]> = (0..u.ncomp()).map(|c| u.comp(c)).collect();
    let values = sample_mapped(f, &disp, kind, Order::Value)
        .into_iter()
        .map(|s| s.value)
        .collect();
    SpatialField::new(f.dims(), 1, values)
}

/// Central difference along `axis` with periodic wrap, unit-cube spacing.
/// Periodic cubic B-spline coefficients `c` with
/// `(c[i-1] + 4 c[i] + c[i+1]) / 6 = f[i]` along every used axis.
fn bspline_coefficients(values: &[f64], shape: [usize; 3], dim: usize) -> Vec<f64> {
    let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let strides = [shape[1] * shape[2], shape[2], 1];
    for axis in 0..dim {
        let n = shape[axis];
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let gain: Vec<f64> = (0..n)
            .map(|k| 6.0 / (n as f64 * (4.0 + 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())))
            .collect();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for start in 0..values.len() {
            if !(start / strides[axis]).is_multiple_of(n) {
                continue;
            }
            for (i, x) in line.iter_mut().enumerate() {
                *x = data[start + i * strides[axis]];
            }
            fwd.process(&mut line);
            line.iter_mut().zip(&gain).for_each(|(x, g)| *x *= g);
            inv.process(&mut line);
            for (i, x) in line.iter().enumerate() {
                data[start + i * strides[axis]] = *x;
            }
        }
    }
    data.into_iter().map(|z| z.re).collect()
}

pub(crate) fn central_difference(values: &[f64], shape: [usize; 3], axis: usize) -> Vec<f64> {
    let n = shape[axis];
    let stride = match axis {
        0 => shape[1] * shape[2],
        1 => shape[2],
        _ => 1,
    };
    let scale = n as f64 / 2.0;
    (0..values.len())
        .map(|idx| {
            let i = unravel(shape, idx)[axis];
            let fwd = if i + 1 == n { idx + stride - n * stride } else { idx + stride };
            let bwd = if i == 0 { idx + (n - 1) * stride } else { idx - stride };
            (values[fwd] - values[bwd]) * scale
        })
        .collect()
}

/// Central-difference gradient of a scalar field.
pub fn spatial_gradient(f: &SpatialField) -> Result<SpatialField> {
    if f.ncomp() != 1 {
        return Err(Error::Shape("gradient expects a scalar field".into()));
    }
    let comps = (0..f.dim())
        .map(|j| central_difference(f.comp(0), f.shape(), j))
        .collect();
    SpatialField::from_components(f.dims(), comps)
}

/// Determinant of the central-difference Jacobian of `x -> x + u(x)`.
/// Negative values are returned as they are.
pub fn jacobian_determinant(phi: &GridMap) -> SpatialField {
    let u = phi.displacement();
    let d = u.dim();
    let shape = u.shape();
    // du[a][b] = d u_a / d x_b
    let du: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|a| (0..d).map(|b| central_difference(u.comp(a), shape, b)).collect())
        .collect();
    let values = (0..u.len())
        .map(|idx| {
            let m = |a: usize, b: usize| du[a][b][idx] + if a == b { 1.0 } else { 0.0 };
            if d == 2 {
                m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)
            } else {
                m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                    - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                    + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
            }
        })
        .collect();
    SpatialField::new(u.dims(), 1, values).expect("shape")
}
