//! Full-resolution spatial evaluation of the state-variant gradient.
//!
//! Maps are obtained by following characteristics point by point, with the
//! velocity evaluated by direct Fourier sums, and the Jacobian is the
//! central-difference determinant of `psi`. Nothing here goes through the
//! band-limited transport, which makes it an independent check of
//! [`Variant::State`](super::Variant::State). Cost grows with
//! `N^d K^d`; meant for small grids only.

use std::f64::consts::PI;

use super::Problem;
use crate::error::Result;
use crate::grid::{jacobian_determinant, position, sample_mapped, spatial_gradient, GridMap, Order, SpatialField};
use crate::spectral::BlField;
use crate::transport::{FlowMode, TimeFlow};

/// A band-limited field as an explicit list of modes, for evaluation at
/// arbitrary points.
struct PointField {
    /// Angular wave vector and per-component `(re, im)` coefficients.
    modes: Vec<([f64; 3], Coefficients)>,
}

type Coefficients = Vec<(f64, f64)>;

impl PointField {
    fn new(problem: &Problem, f: &BlField) -> Self {
        let dom = problem.spectral().domain();
        let modes = (0..f.block_len())
            .filter_map(|i| {
                let c: Vec<(f64, f64)> = (0..f.ncomp()).map(|a| (f.comp(a)[i].re, f.comp(a)[i].im)).collect();
                if c.iter().all(|(r, m)| *r == 0.0 && *m == 0.0) {
                    return None;
                }
                let k = dom.frequency(i);
                Some(([2.0 * PI * k[0] as f64, 2.0 * PI * k[1] as f64, 2.0 * PI * k[2] as f64], c))
            })
            .collect();
        Self { modes }
    }

    fn eval(&self, x: [f64; 3], out: &mut [f64; 3], weight: f64) {
        for (w, c) in &self.modes {
            let th = w[0] * x[0] + w[1] * x[1] + w[2] * x[2];
            let (s, co) = th.sin_cos();
            for (a, (re, im)) in c.iter().enumerate() {
                out[a] += weight * (re * co - im * s);
            }
        }
    }
}

struct PointFlow {
    mode: FlowMode,
    steps: usize,
    fields: Vec<PointField>,
}

impl PointFlow {
    fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        match self.mode {
            FlowMode::Stationary => self.fields[0].eval(x, &mut out, 1.0),
            FlowMode::Nonstationary => {
                let p = t.clamp(0.0, 1.0) * self.steps as f64;
                let i = (p.floor() as usize).min(self.steps - 1);
                let f = p - i as f64;
                self.fields[i].eval(x, &mut out, 1.0 - f);
                self.fields[i + 1].eval(x, &mut out, f);
            }
        }
        out
    }

    /// Follow `dx/ds = v(s, x)` from time `t0` to `t1` with `n` RK4 steps.
    fn trace(&self, mut x: [f64; 3], t0: f64, t1: f64, n: usize) -> [f64; 3] {
        if n == 0 {
            return x;
        }
        let h = (t1 - t0) / n as f64;
        let shift = |x: [f64; 3], k: [f64; 3], a: f64| [x[0] + a * k[0], x[1] + a * k[1], x[2] + a * k[2]];
        for s in 0..n {
            let t = t0 + s as f64 * h;
            let k1 = self.velocity(t, x);
            let k2 = self.velocity(t + 0.5 * h, shift(x, k1, 0.5 * h));
            let k3 = self.velocity(t + 0.5 * h, shift(x, k2, 0.5 * h));
            let k4 = self.velocity(t + h, shift(x, k3, h));
            for j in 0..3 {
                x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        x
    }
}

/// Displacement of the map `x -> X(t1; t0, x)` on the grid.
fn characteristic_map(problem: &Problem, flow: &PointFlow, t0: f64, t1: f64, n: usize) -> SpatialField {
    let dims = problem.template().dims().to_vec();
    let d = dims.len();
    let shape = problem.template().shape();
    let len = problem.template().len();
    let mut comps = vec![vec![0.0; len]; d];
    for idx in 0..len {
        let x = position(shape, idx);
        let y = flow.trace(x, t0, t1, n);
        for j in 0..d {
            comps[j][idx] = y[j] - x[j];
        }
    }
    SpatialField::from_components(&dims, comps).expect("grid shape")
}

/// State-variant gradient of `problem` at `v`, with `substeps` RK4 steps
/// per unit time along characteristics.
pub fn state_gradient(problem: &Problem, v: &TimeFlow, substeps: usize) -> Result<TimeFlow> {
    problem.check_flow(v)?;
    let sp = problem.spectral();
    let kind = problem.config().interpolation;
    let flow = PointFlow {
        mode: v.mode(),
        steps: v.steps(),
        fields: v.fields().iter().map(|f| PointField::new(problem, f)).collect(),
    };
    let nt = v.steps();
    let steps_for = |dt: f64| (dt.abs() * substeps as f64).round() as usize;
    let warp_by = |f: &SpatialField, u: &SpatialField, order: Order| {
        let comps: Vec<&[f64]> = (0..u.ncomp()).map(|c| u.comp(c)).collect();
        sample_mapped(f, &comps, kind, order)
    };

    let phis: Vec<SpatialField> = (0..=nt)
        .map(|i| {
            let t = i as f64 / nt as f64;
            characteristic_map(problem, &flow, t, 0.0, steps_for(t))
        })
        .collect();
    let images: Vec<SpatialField> = phis
        .iter()
        .map(|u| super::values(problem.template(), &warp_by(problem.template(), u, Order::Value)))
        .collect();
    let lambda1 = problem.lambda1(&images[nt]);

    let weights = v.node_weights();
    let mut loads: Vec<BlField> = v.fields().iter().map(|_| sp.zeros(sp.dim())).collect();
    for i in 0..=nt {
        let t = i as f64 / nt as f64;
        let psi = characteristic_map(problem, &flow, t, 1.0, steps_for(1.0 - t));
        let jac = jacobian_determinant(&GridMap::from_displacement(psi.clone())?);
        let pulled = warp_by(&lambda1, &psi, Order::Value);
        let lambda: Vec<f64> = jac.data().iter().zip(&pulled).map(|(j, s)| j * s.value).collect();
        let grad_m = spatial_gradient(&images[i])?;
        let gm: Vec<Vec<f64>> = (0..grad_m.ncomp()).map(|c| grad_m.comp(c).to_vec()).collect();
        let data = super::project_scaled(sp, &lambda, &gm);
        let slot = match v.mode() {
            FlowMode::Stationary => 0,
            FlowMode::Nonstationary => i,
        };
        loads[slot].axpy(weights[i], &data);
    }
    let w = v.weights();
    let fields = v
        .fields()
        .iter()
        .zip(&loads)
        .zip(&w)
        .map(|((f, l), wi)| {
            let mut g = sp.apply_l(f);
            g.axpy(1.0 / wi, l);
            g
        })
        .collect();
    let mut g = v.with_fields(fields);
    problem.project_flow(&mut g);
    Ok(g)
}
