//! Time integration in the band-limited space.
//!
//! Maps are carried as displacements (`phi = id + u`), so the transport
//! right-hand side `-(D phi) v` splits into `-(v + Du * v)` with only the
//! second term needing a truncated product. Everything is advanced with
//! classical RK4. The deformation adjoint is the exact reverse sweep of that
//! RK4 scheme, and incremental (tangent) trajectories are RK4 applied to the
//! linearized system around the cached stage states, which makes them the
//! exact derivatives of the discrete trajectories.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{comps_of, fma, BlField, Spectral};

/// CFL number above which a step count is considered unstable.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    /// One velocity field shared by every time node.
    #[default]
    Stationary,
    /// One velocity field per node `t_i = i / N_t`, linearly interpolated
    /// in between.
    Nonstationary,
}

/// Velocity fields on the `N_t + 1` nodes of `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFlow {
    mode: FlowMode,
    steps: usize,
    fields: Vec<BlField>,
}

impl TimeFlow {
    pub fn stationary(v: BlField, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Domain("N_t must be at least 1".into()));
        }
        Ok(Self {
            mode: FlowMode::Stationary,
            steps,
            fields: vec![v],
        })
    }

    pub fn nonstationary(nodes: Vec<BlField>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Domain("a nonstationary flow needs at least two nodes".into()));
        }
        for n in &nodes[1..] {
            nodes[0].same_shape(n)?;
        }
        Ok(Self {
            mode: FlowMode::Nonstationary,
            steps: nodes.len() - 1,
            fields: nodes,
        })
    }

    pub fn zeros(sp: &Spectral, mode: FlowMode, steps: usize) -> Result<Self> {
        let v = sp.zeros(sp.dim());
        match mode {
            FlowMode::Stationary => Self::stationary(v, steps),
            FlowMode::Nonstationary => Self::nonstationary(vec![v; steps + 1]),
        }
    }

    /// Same layout with every field replaced by `f(field)`.
    pub fn map(&self, f: impl FnMut(&BlField) -> BlField) -> TimeFlow {
        TimeFlow {
            mode: self.mode,
            steps: self.steps,
            fields: self.fields.iter().map(f).collect(),
        }
    }

    pub fn zeros_like(&self) -> TimeFlow {
        self.map(|f| {
            let mut z = f.clone();
            z.set_zero();
            z
        })
    }

    pub(crate) fn with_fields(&self, fields: Vec<BlField>) -> TimeFlow {
        debug_assert_eq!(fields.len(), self.fields.len());
        TimeFlow {
            mode: self.mode,
            steps: self.steps,
            fields,
        }
    }

    pub fn mode(&self) -> FlowMode {
        self.mode
    }

    /// `N_t`, the number of time intervals.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_nodes(&self) -> usize {
        self.steps + 1
    }

    /// Velocity at node `i` (the shared field when stationary).
    pub fn node(&self, i: usize) -> &BlField {
        match self.mode {
            FlowMode::Stationary => &self.fields[0],
            FlowMode::Nonstationary => &self.fields[i],
        }
    }

    /// The independently stored fields: one when stationary, `N_t + 1`
    /// otherwise.
    pub fn fields(&self) -> &[BlField] {
        &self.fields
    }

    pub fn fields_mut(&mut self) -> &mut [BlField] {
        &mut self.fields
    }

    /// Trapezoidal quadrature weights on the nodes.
    pub fn node_weights(&self) -> Vec<f64> {
        let dt = 1.0 / self.steps as f64;
        (0..=self.steps)
            .map(|i| if i == 0 || i == self.steps { 0.5 * dt } else { dt })
            .collect()
    }

    /// Weight of each stored field in the inner product. The weights of a
    /// stationary flow sum into a single unit weight.
    pub fn weights(&self) -> Vec<f64> {
        match self.mode {
            FlowMode::Stationary => vec![1.0],
            FlowMode::Nonstationary => self.node_weights(),
        }
    }

    /// `sum_i w_i <a_i, b_i>`, the discrete `L2(0,1; l2)` product.
    pub fn dot(&self, other: &TimeFlow) -> f64 {
        debug_assert_eq!(self.fields.len(), other.fields.len());
        self.weights()
            .iter()
            .zip(self.fields.iter().zip(&other.fields))
            .map(|(w, (a, b))| w * a.dot(b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn axpy(&mut self, a: f64, x: &TimeFlow) {
        for (s, f) in self.fields.iter_mut().zip(&x.fields) {
            s.axpy(a, f);
        }
    }

    pub fn scaled(&self, a: f64) -> TimeFlow {
        self.map(|f| f.scaled(a))
    }

    pub fn add(&self, other: &TimeFlow) -> TimeFlow {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &TimeFlow) -> TimeFlow {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.fields.iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.fields.iter().all(|f| f.is_finite())
    }

    /// Velocity at time `t`, interpolating linearly between nodes.
    pub fn at(&self, t: f64) -> BlField {
        match self.mode {
            FlowMode::Stationary => self.fields[0].clone(),
            FlowMode::Nonstationary => {
                let p = (t.clamp(0.0, 1.0) * self.steps as f64).min(self.steps as f64);
                let i = (p.floor() as usize).min(self.steps - 1);
                let f = p - i as f64;
                let mut out = self.fields[i].scaled(1.0 - f);
                out.axpy(f, &self.fields[i + 1]);
                out
            }
        }
    }

    /// Node weights of the velocity at half-step `j` of an `n`-step
    /// integration (time `j / 2n`).
    fn half_step_weights(&self, j: usize, n: usize) -> [(usize, f64); 2] {
        match self.mode {
            FlowMode::Stationary => [(0, 1.0), (0, 0.0)],
            FlowMode::Nonstationary => {
                let num = j * self.steps;
                let den = 2 * n;
                let mut i = num / den;
                let mut f = (num % den) as f64 / den as f64;
                if i == self.steps {
                    i -= 1;
                    f = 1.0;
                }
                [(i, 1.0 - f), (i + 1, f)]
            }
        }
    }
}

/// Outcome of a CFL check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CflReport {
    /// `max_t |v_t|_inf * dt / min_j h_j`.
    pub cfl: f64,
    pub limit: f64,
    /// Step count the number was computed for.
    pub steps: usize,
    /// Smallest step count meeting the limit.
    pub proposed: usize,
    pub ok: bool,
}

impl CflReport {
    /// Step count to integrate with: `steps` if the limit holds, otherwise
    /// (in auto mode) the smallest multiple of `steps` meeting it, so time
    /// nodes stay on integrator steps.
    pub fn integration_steps(&self, auto: bool) -> Result<usize> {
        if self.ok {
            Ok(self.steps)
        } else if auto {
            Ok(self.proposed.div_ceil(self.steps) * self.steps)
        } else {
            Err(Error::Cfl {
                cfl: self.cfl,
                limit: self.limit,
                steps: self.steps,
                proposed: self.proposed,
            })
        }
    }
}

/// Largest pointwise speed `|v(x)|` over all stored fields on the full grid.
pub fn max_speed(sp: &Spectral, v: &TimeFlow) -> f64 {
    let d = sp.dim();
    let mut best: f64 = 0.0;
    for f in v.fields() {
        let r = sp.realize(f);
        for idx in 0..r.len() {
            let s: f64 = (0..d).map(|c| r.comp(c)[idx].powi(2)).sum();
            best = best.max(s.sqrt());
        }
    }
    best
}

pub fn check_cfl(sp: &Spectral, v: &TimeFlow, steps: usize) -> CflReport {
    let speed = max_speed(sp, v);
    let h = sp.domain().min_spacing();
    let cfl = speed / steps as f64 / h;
    // tolerance keeps exact ratios such as 128.0000000001 from rounding up
    let need = speed / (CFL_LIMIT * h);
    let proposed = ((need * (1.0 - 1e-12)).ceil() as usize).max(1);
    CflReport {
        cfl,
        limit: CFL_LIMIT,
        steps,
        proposed,
        ok: cfl <= CFL_LIMIT,
    }
}

type Grid = Vec<Vec<f64>>;

/// Stage velocities of an `n`-step RK4 integration of a [`TimeFlow`],
/// realized once on the product grid.
#[derive(Clone, Debug)]
pub struct StageVelocities {
    flow: TimeFlow,
    steps: usize,
    spectral: Vec<BlField>,
    realized: Vec<Grid>,
}

impl StageVelocities {
    /// `steps` must be a positive multiple of the flow's `N_t`.
    pub fn new(sp: &Spectral, flow: &TimeFlow, steps: usize) -> Result<Self> {
        if steps == 0 || !steps.is_multiple_of(flow.steps()) {
            return Err(Error::Domain(format!(
                "{steps} integrator steps do not refine {} time intervals",
                flow.steps()
            )));
        }
        for f in flow.fields() {
            f.check_matches(sp.domain())?;
            if f.ncomp() != sp.dim() {
                return Err(Error::Shape("velocity must have d components".into()));
            }
        }
        let node_real: Vec<Grid> = flow.fields().iter().map(|f| sp.realize_conv(&comps_of(f))).collect();
        let (spectral, realized) = match flow.mode() {
            FlowMode::Stationary => (vec![flow.fields()[0].clone()], vec![node_real[0].clone()]),
            FlowMode::Nonstationary => {
                let mut spec = Vec::with_capacity(2 * steps + 1);
                let mut real = Vec::with_capacity(2 * steps + 1);
                for j in 0..=2 * steps {
                    let w = flow.half_step_weights(j, steps);
                    let mut f = flow.fields()[w[0].0].scaled(w[0].1);
                    f.axpy(w[1].1, &flow.fields()[w[1].0]);
                    spec.push(f);
                    let r: Grid = (0..sp.dim())
                        .map(|c| {
                            let a = &node_real[w[0].0][c];
                            let b = &node_real[w[1].0][c];
                            a.iter().zip(b).map(|(x, y)| w[0].1 * x + w[1].1 * y).collect()
                        })
                        .collect();
                    real.push(r);
                }
                (spec, real)
            }
        };
        Ok(Self {
            flow: flow.clone(),
            steps,
            spectral,
            realized,
        })
    }

    pub fn flow(&self) -> &TimeFlow {
        &self.flow
    }

    /// Integrator steps (a multiple of `N_t`).
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Integrator steps per time interval.
    pub fn refinement(&self) -> usize {
        self.steps / self.flow.steps()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    fn slot(&self, j: usize) -> usize {
        match self.flow.mode() {
            FlowMode::Stationary => 0,
            FlowMode::Nonstationary => j,
        }
    }

    fn spectral_at(&self, j: usize) -> &BlField {
        &self.spectral[self.slot(j)]
    }

    fn realized_at(&self, j: usize) -> &Grid {
        &self.realized[self.slot(j)]
    }

    /// Add `x` to the loads of the nodes that make up half-step `j`.
    fn scatter(&self, loads: &mut [BlField], j: usize, x: &BlField) {
        for (i, c) in self.flow.half_step_weights(j, self.steps) {
            if c != 0.0 {
                loads[i].axpy(c, x);
            }
        }
    }
}

/// Half-step offsets of the four RK4 stages within a forward step.
const STAGE_HALF: [usize; 4] = [0, 1, 1, 2];
/// RK4 combination weights (times `dt`).
const RK4_B: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
/// Stage `s` input is `y + RK4_C[s] dt k_{s-1}`.
const RK4_C: [f64; 4] = [0.0, 0.5, 0.5, 1.0];

/// One RK4 step of size `h`; `f(s, y_s)` evaluates stage `s` at state `y_s`.
fn rk4(y: &BlField, h: f64, mut f: impl FnMut(usize, &BlField) -> BlField) -> BlField {
    let mut out = y.clone();
    let mut k_prev: Option<BlField> = None;
    for s in 0..4 {
        let ys = match &k_prev {
            None => y.clone(),
            Some(k) => {
                let mut t = y.clone();
                t.axpy(RK4_C[s] * h, k);
                t
            }
        };
        let k = f(s, &ys);
        out.axpy(RK4_B[s] * h, &k);
        k_prev = Some(k);
    }
    out
}

fn realize(sp: &Spectral, f: &BlField) -> Grid {
    sp.realize_conv(&comps_of(f))
}

fn realize_jacobian(sp: &Spectral, y: &BlField) -> Grid {
    let d = sp.dim();
    let parts: Vec<Vec<Complex64>> = (0..d * d)
        .map(|ab| sp.derivative_comp(y.comp(ab / d), ab % d))
        .collect();
    let refs: Vec<&[Complex64]> = parts.iter().map(|p| p.as_slice()).collect();
    sp.realize_conv(&refs)
}

fn project(sp: &Spectral, comps: &[Vec<f64>]) -> BlField {
    let refs: Vec<&[f64]> = comps.iter().map(|c| c.as_slice()).collect();
    BlField::from_components(sp.domain(), sp.project_conv(&refs)).expect("block shape")
}

/// `acc_a += sum_b m_ab v_b`
fn contract_into(acc: &mut Grid, m: &Grid, v: &Grid, d: usize) {
    for a in 0..d {
        for b in 0..d {
            fma(&mut acc[a], &m[a * d + b], &v[b]);
        }
    }
}

/// `acc_b += sum_a m_ab k_a`
fn contract_t_into(acc: &mut Grid, m: &Grid, k: &Grid, d: usize) {
    for b in 0..d {
        for a in 0..d {
            fma(&mut acc[b], &m[a * d + b], &k[a]);
        }
    }
}

fn zeros_grid(ncomp: usize, len: usize) -> Grid {
    vec![vec![0.0; len]; ncomp]
}

/// `sum_b d_b pi(k_a v_b + k2_a v2_b)` for each `a`; the second pair is
/// optional. This is the transpose of `du -> -pi(Ddu v)`.
fn divergence_of_outer(sp: &Spectral, pairs: &[(&Grid, &Grid)]) -> BlField {
    let d = sp.dim();
    let m = sp.conv_len();
    let mut outer = zeros_grid(d * d, m);
    for (k, v) in pairs {
        for a in 0..d {
            for b in 0..d {
                fma(&mut outer[a * d + b], &k[a], &v[b]);
            }
        }
    }
    let p = project(sp, &outer);
    let mut out = sp.zeros(d);
    for a in 0..d {
        for b in 0..d {
            let w = sp.wave(b);
            let src = p.comp(a * d + b);
            for ((o, x), &wb) in out.comp_mut(a).iter_mut().zip(src).zip(w) {
                *o += Complex64::new(-x.im * wb, x.re * wb);
            }
        }
    }
    out
}

/// Forward trajectory of `phi = id + u` with the per-stage data the
/// adjoint and tangent sweeps reuse.
#[derive(Clone, Debug)]
pub struct PhiTrajectory {
    steps: usize,
    refinement: usize,
    states: Vec<BlField>,
    /// Realized `Du` at each stage of each step.
    stage_jac: Vec<[Grid; 4]>,
}

impl PhiTrajectory {
    /// Displacement `u` after integrator step `n`.
    pub fn state(&self, n: usize) -> &BlField {
        &self.states[n]
    }

    /// Displacements at the time nodes `t_i = i / N_t`.
    pub fn nodes(&self) -> Vec<BlField> {
        self.states.iter().step_by(self.refinement).cloned().collect()
    }

    pub fn node(&self, i: usize) -> &BlField {
        &self.states[i * self.refinement]
    }

    pub fn final_displacement(&self) -> &BlField {
        &self.states[self.steps]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// `-(v + pi(Dy v))` from realized `Dy`, realized and spectral `v`.
fn transport_rhs(sp: &Spectral, jac: &Grid, vr: &Grid, vs: &BlField) -> BlField {
    let d = sp.dim();
    let mut acc = zeros_grid(d, sp.conv_len());
    contract_into(&mut acc, jac, vr, d);
    let mut out = project(sp, &acc);
    out.axpy(1.0, vs);
    out.scale(-1.0);
    out
}

/// Forward RK4 for `d_t phi + (D phi) v = 0`, `phi(0) = id`.
pub fn integrate_phi(sp: &Spectral, vel: &StageVelocities) -> PhiTrajectory {
    let n = vel.steps();
    let dt = vel.dt();
    let mut states = Vec::with_capacity(n + 1);
    let mut stage_jac = Vec::with_capacity(n);
    states.push(sp.zeros(sp.dim()));
    for step in 0..n {
        let mut jacs: [Grid; 4] = Default::default();
        let next = rk4(&states[step], dt, |s, y| {
            let j = 2 * step + STAGE_HALF[s];
            let jac = realize_jacobian(sp, y);
            let k = transport_rhs(sp, &jac, vel.realized_at(j), vel.spectral_at(j));
            jacs[s] = jac;
            k
        });
        states.push(next);
        stage_jac.push(jacs);
    }
    PhiTrajectory {
        steps: n,
        refinement: vel.refinement(),
        states,
        stage_jac,
    }
}

/// Tangent of [`integrate_phi`] in the direction of a velocity increment.
#[derive(Clone, Debug)]
pub struct PhiTangent {
    refinement: usize,
    states: Vec<BlField>,
    stage_jac: Vec<[Grid; 4]>,
}

impl PhiTangent {
    pub fn node(&self, i: usize) -> &BlField {
        &self.states[i * self.refinement]
    }

    pub fn nodes(&self) -> Vec<BlField> {
        self.states.iter().step_by(self.refinement).cloned().collect()
    }

    pub fn final_displacement(&self) -> &BlField {
        self.states.last().expect("at least one state")
    }
}

/// `delta phi` with `delta phi(0) = 0`.
pub fn integrate_incremental_phi(
    sp: &Spectral,
    vel: &StageVelocities,
    phi: &PhiTrajectory,
    dvel: &StageVelocities,
) -> Result<PhiTangent> {
    if dvel.steps() != vel.steps() || phi.steps != vel.steps() {
        return Err(Error::StaleCache);
    }
    let d = sp.dim();
    let n = vel.steps();
    let dt = vel.dt();
    let mut states = Vec::with_capacity(n + 1);
    let mut stage_jac = Vec::with_capacity(n);
    states.push(sp.zeros(d));
    for step in 0..n {
        let mut jacs: [Grid; 4] = Default::default();
        let next = rk4(&states[step], dt, |s, dy| {
            let j = 2 * step + STAGE_HALF[s];
            let djac = realize_jacobian(sp, dy);
            let mut acc = zeros_grid(d, sp.conv_len());
            contract_into(&mut acc, &djac, vel.realized_at(j), d);
            contract_into(&mut acc, &phi.stage_jac[step][s], dvel.realized_at(j), d);
            let mut k = project(sp, &acc);
            k.axpy(1.0, dvel.spectral_at(j));
            k.scale(-1.0);
            jacs[s] = djac;
            k
        });
        states.push(next);
        stage_jac.push(jacs);
    }
    Ok(PhiTangent {
        refinement: vel.refinement(),
        states,
        stage_jac,
    })
}

/// Backward trajectory of the deformation adjoint `rho`, with the loads it
/// places on the velocity fields.
#[derive(Clone, Debug)]
pub struct RhoTrajectory {
    refinement: usize,
    /// `rho` after each reverse step, indexed by integrator step.
    states: Vec<BlField>,
    /// Realized stage adjoints `kbar_s`, kept for second-order sweeps.
    stage_adj: Vec<[Grid; 4]>,
    loads: Vec<BlField>,
}

impl RhoTrajectory {
    pub fn node(&self, i: usize) -> &BlField {
        &self.states[i * self.refinement]
    }

    pub fn nodes(&self) -> Vec<BlField> {
        self.states.iter().step_by(self.refinement).cloned().collect()
    }

    /// `dE/dv` contributions of the transport, one per stored velocity
    /// field (unweighted, i.e. partial derivatives in the l2 product).
    pub fn loads(&self) -> &[BlField] {
        &self.loads
    }
}

/// Reverse sweep of the RK4 transport from `rho(1) = rho1`.
///
/// With `rho = -dE/du` this is the discrete counterpart of the
/// conservative backward transport `-d_t rho - div(rho v) = 0`, and the
/// loads are the discrete counterpart of `(D phi)^T rho`.
pub fn integrate_rho(
    sp: &Spectral,
    vel: &StageVelocities,
    phi: &PhiTrajectory,
    rho1: &BlField,
) -> Result<RhoTrajectory> {
    let d = sp.dim();
    if phi.steps != vel.steps() {
        return Err(Error::StaleCache);
    }
    rho1.check_matches(sp.domain())?;
    let n = vel.steps();
    let dt = vel.dt();
    let mut loads: Vec<BlField> = vel.flow().fields().iter().map(|_| sp.zeros(d)).collect();
    let mut states = vec![sp.zeros(d); n + 1];
    let mut stage_adj: Vec<[Grid; 4]> = vec![Default::default(); n];
    // work with ubar = -rho = dE/du
    let mut ubar = rho1.scaled(-1.0);
    states[n] = rho1.clone();
    for step in (0..n).rev() {
        let mut acc = ubar.clone();
        let mut carry: Option<BlField> = None;
        for s in (0..4).rev() {
            let mut kbar = ubar.scaled(RK4_B[s] * dt);
            if let Some(c) = carry.take() {
                kbar.axpy(1.0, &c);
            }
            let j = 2 * step + STAGE_HALF[s];
            let kr = realize(sp, &kbar);
            let ybar = divergence_of_outer(sp, &[(&kr, vel.realized_at(j))]);
            let mut t = zeros_grid(d, sp.conv_len());
            contract_t_into(&mut t, &phi.stage_jac[step][s], &kr, d);
            let mut vbar = project(sp, &t);
            vbar.axpy(1.0, &kbar);
            vbar.scale(-1.0);
            vel.scatter(&mut loads, j, &vbar);
            acc.axpy(1.0, &ybar);
            if s > 0 {
                carry = Some(ybar.scaled(RK4_C[s] * dt));
            }
            stage_adj[step][s] = kr;
        }
        ubar = acc;
        states[step] = ubar.scaled(-1.0);
    }
    Ok(RhoTrajectory {
        refinement: vel.refinement(),
        states,
        stage_adj,
        loads,
    })
}

/// Which second-order terms the incremental adjoint keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IncrementalTerms {
    /// The `div(rho dv)` source of the incremental adjoint equation.
    pub source: bool,
    /// The `(D dphi)^T rho` term of the velocity loads.
    pub jacobian: bool,
}

impl IncrementalTerms {
    pub const NEWTON: Self = Self {
        source: true,
        jacobian: true,
    };
    pub const GAUSS_NEWTON: Self = Self {
        source: false,
        jacobian: false,
    };
}

/// Reverse sweep of the linearized adjoint from `delta rho(1) = drho1`.
/// Returns the incremental adjoint trajectory and its velocity loads.
#[allow(clippy::too_many_arguments)]
pub fn integrate_incremental_rho(
    sp: &Spectral,
    vel: &StageVelocities,
    phi: &PhiTrajectory,
    rho: &RhoTrajectory,
    dvel: &StageVelocities,
    dphi: &PhiTangent,
    drho1: &BlField,
    terms: IncrementalTerms,
) -> Result<RhoTrajectory> {
    let d = sp.dim();
    let n = vel.steps();
    if phi.steps != n || dvel.steps() != n || rho.stage_adj.len() != n || dphi.stage_jac.len() != n {
        return Err(Error::StaleCache);
    }
    let dt = vel.dt();
    let mut loads: Vec<BlField> = vel.flow().fields().iter().map(|_| sp.zeros(d)).collect();
    let mut states = vec![sp.zeros(d); n + 1];
    let mut dubar = drho1.scaled(-1.0);
    states[n] = drho1.clone();
    for step in (0..n).rev() {
        let mut acc = dubar.clone();
        let mut carry: Option<BlField> = None;
        for s in (0..4).rev() {
            let mut dk = dubar.scaled(RK4_B[s] * dt);
            if let Some(c) = carry.take() {
                dk.axpy(1.0, &c);
            }
            let j = 2 * step + STAGE_HALF[s];
            let dkr = realize(sp, &dk);
            let kr = &rho.stage_adj[step][s];
            let dybar = if terms.source {
                divergence_of_outer(sp, &[(&dkr, vel.realized_at(j)), (kr, dvel.realized_at(j))])
            } else {
                divergence_of_outer(sp, &[(&dkr, vel.realized_at(j))])
            };
            let mut t = zeros_grid(d, sp.conv_len());
            contract_t_into(&mut t, &phi.stage_jac[step][s], &dkr, d);
            if terms.jacobian {
                contract_t_into(&mut t, &dphi.stage_jac[step][s], kr, d);
            }
            let mut dvbar = project(sp, &t);
            dvbar.axpy(1.0, &dk);
            dvbar.scale(-1.0);
            vel.scatter(&mut loads, j, &dvbar);
            acc.axpy(1.0, &dybar);
            if s > 0 {
                carry = Some(dybar.scaled(RK4_C[s] * dt));
            }
        }
        dubar = acc;
        states[step] = dubar.scaled(-1.0);
    }
    Ok(RhoTrajectory {
        refinement: vel.refinement(),
        states,
        stage_adj: Vec::new(),
        loads,
    })
}

/// Backward trajectories of `psi = id + w` (`psi(1) = id`) and of the
/// Jacobian `J = 1 + j` (`J(1) = 1`), stored together as `d + 1`
/// components `(w, j)`.
#[derive(Clone, Debug)]
pub struct PsiJTrajectory {
    steps: usize,
    refinement: usize,
    states: Vec<BlField>,
    /// Realized `Dw` and `j` at each stage of each (backward) step.
    stage_jac: Vec<[Grid; 4]>,
    stage_j: Vec<[Vec<f64>; 4]>,
}

impl PsiJTrajectory {
    /// Displacement of `psi` at time node `i`.
    pub fn psi(&self, i: usize) -> BlField {
        let s = &self.states[i * self.refinement];
        let d = s.ncomp() - 1;
        BlField::stack(&(0..d).map(|c| s.component(c)).collect::<Vec<_>>())
    }

    /// `J - 1` at time node `i`.
    pub fn jacobian(&self, i: usize) -> BlField {
        let s = &self.states[i * self.refinement];
        s.component(s.ncomp() - 1)
    }
}

/// `-div(pi(m))` for a vector field `m` realized on the product grid.
fn neg_divergence(sp: &Spectral, m: &Grid) -> BlField {
    let div = sp.divergence(&project(sp, m)).expect("vector field");
    div.scaled(-1.0)
}

/// Backward RK4 for `d_t psi + (D psi) v = 0` and `d_t J + div(J v) = 0`
/// from `psi(1) = id`, `J(1) = 1`.
pub fn integrate_psi_j(sp: &Spectral, vel: &StageVelocities) -> PsiJTrajectory {
    let d = sp.dim();
    let n = vel.steps();
    let dt = vel.dt();
    let mut states = vec![sp.zeros(d + 1); n + 1];
    let mut stage_jac: Vec<[Grid; 4]> = vec![Default::default(); n];
    let mut stage_j: Vec<[Vec<f64>; 4]> = vec![Default::default(); n];
    for step in (0..n).rev() {
        let y = states[step + 1].clone();
        let next = rk4(&y, -dt, |s, z| {
            // stages run backward in time: end, middle, middle, start
            let j = 2 * step + 2 - STAGE_HALF[s];
            let vr = vel.realized_at(j);
            let vs = vel.spectral_at(j);
            let w = BlField::stack(&(0..d).map(|c| z.component(c)).collect::<Vec<_>>());
            let jac = realize_jacobian(sp, &w);
            let kw = transport_rhs(sp, &jac, vr, vs);
            let jr = sp.realize_conv(&[z.comp(d)]).pop().expect("one component");
            let flux: Grid = (0..d).map(|c| vr[c].iter().zip(&jr).map(|(v, j)| v * (1.0 + j)).collect()).collect();
            let kj = neg_divergence(sp, &flux);
            stage_jac[step][s] = jac;
            stage_j[step][s] = jr;
            BlField::stack(&[kw, kj])
        });
        states[step] = next;
    }
    PsiJTrajectory {
        steps: n,
        refinement: vel.refinement(),
        states,
        stage_jac,
        stage_j,
    }
}

/// Incremental state trajectories `(delta phi, delta psi, delta J)`.
#[derive(Clone, Debug)]
pub struct IncrementalState {
    pub phi: PhiTangent,
    refinement: usize,
    psi_j: Vec<BlField>,
}

impl IncrementalState {
    pub fn psi(&self, i: usize) -> BlField {
        let s = &self.psi_j[i * self.refinement];
        let d = s.ncomp() - 1;
        BlField::stack(&(0..d).map(|c| s.component(c)).collect::<Vec<_>>())
    }

    pub fn jacobian(&self, i: usize) -> BlField {
        let s = &self.psi_j[i * self.refinement];
        s.component(s.ncomp() - 1)
    }
}

/// Linearized `phi`, `psi` and `J` with `delta phi(0) = 0`,
/// `delta psi(1) = 0`, `delta J(1) = 0`.
pub fn integrate_incremental_state(
    sp: &Spectral,
    vel: &StageVelocities,
    phi: &PhiTrajectory,
    psi_j: &PsiJTrajectory,
    dvel: &StageVelocities,
) -> Result<IncrementalState> {
    let d = sp.dim();
    let n = vel.steps();
    if psi_j.steps != n {
        return Err(Error::StaleCache);
    }
    let dphi = integrate_incremental_phi(sp, vel, phi, dvel)?;
    let dt = vel.dt();
    let mut states = vec![sp.zeros(d + 1); n + 1];
    for step in (0..n).rev() {
        let y = states[step + 1].clone();
        let next = rk4(&y, -dt, |s, z| {
            let j = 2 * step + 2 - STAGE_HALF[s];
            let vr = vel.realized_at(j);
            let dvr = dvel.realized_at(j);
            let dw = BlField::stack(&(0..d).map(|c| z.component(c)).collect::<Vec<_>>());
            let djac = realize_jacobian(sp, &dw);
            let mut acc = zeros_grid(d, sp.conv_len());
            contract_into(&mut acc, &djac, vr, d);
            contract_into(&mut acc, &psi_j.stage_jac[step][s], dvr, d);
            let mut kw = project(sp, &acc);
            kw.axpy(1.0, dvel.spectral_at(j));
            kw.scale(-1.0);
            let jbase = &psi_j.stage_j[step][s];
            let djr = sp.realize_conv(&[z.comp(d)]).pop().expect("one component");
            let flux: Grid = (0..d)
                .map(|c| {
                    (0..jbase.len())
                        .map(|x| djr[x] * vr[c][x] + (1.0 + jbase[x]) * dvr[c][x])
                        .collect()
                })
                .collect();
            let kj = neg_divergence(sp, &flux);
            BlField::stack(&[kw, kj])
        });
        states[step] = next;
    }
    Ok(IncrementalState {
        phi: dphi,
        refinement: vel.refinement(),
        psi_j: states,
    })
}
