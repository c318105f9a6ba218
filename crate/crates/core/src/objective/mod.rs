//! Registration energies, their gradients in the band-limited space and
//! Newton / Gauss-Newton Hessian-vector products.
//!
//! Both variants share the energy
//! `E(v) = 1/2 sum_i w_i <L v_i, v_i> + (1/sigma^2) |I0 o phi(1) - I1|^2`
//! and return gradients as Riesz representers in the weighted product of
//! [`TimeFlow::dot`], so `dE(v)[w] = <g, w>`.
//!
//! * [`Variant::Deformation`] transports the map and its adjoint entirely
//!   in the band-limited space; its gradient and Hessian are the exact
//!   derivatives of the discrete energy.
//! * [`Variant::State`] forms the gradient from the closed-form adjoint
//!   `lambda(t) = J(t) lambda(1) o psi(t)` and the transported image
//!   `m(t) = I0 o phi(t)`. It approximates the derivative of the discrete
//!   energy to discretization accuracy.

mod deformation;
pub mod reference;
mod state;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sample_mapped, GridMap, Interpolation, Order, Sample, SpatialField};
use crate::spectral::{BlDomain, BlField, Spectral};
use crate::transport::{check_cfl, integrate_phi, CflReport, FlowMode, PhiTrajectory, StageVelocities, TimeFlow};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Image transport with closed-form adjoint.
    State,
    /// Map transport with band-limited deformation adjoint.
    #[default]
    Deformation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    Newton,
    #[default]
    GaussNewton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub variant: Variant,
    /// The mismatch is weighted by `1 / sigma2`. May be infinite, which
    /// leaves the pure regularity energy.
    pub sigma2: f64,
    /// 1 restricts velocities to divergence-free fields.
    pub gamma: u8,
    pub mode: FlowMode,
    pub hessian: HessianMode,
    /// `N_t`.
    pub time_steps: usize,
    /// Refine the integrator steps when the CFL limit is exceeded instead
    /// of failing.
    pub cfl_auto: bool,
    pub interpolation: Interpolation,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Deformation,
            sigma2: 0.01,
            gamma: 0,
            mode: FlowMode::Stationary,
            hessian: HessianMode::GaussNewton,
            time_steps: 10,
            cfl_auto: true,
            interpolation: Interpolation::Linear,
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::Config(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if self.gamma > 1 {
            return Err(Error::Config(format!("gamma must be 0 or 1, got {}", self.gamma)));
        }
        if self.time_steps == 0 {
            return Err(Error::Config("time_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn incompressible(&self) -> bool {
        self.gamma == 1
    }
}

/// A registration problem: template `I0`, target `I1`, the band-limited
/// domain and the problem configuration.
#[derive(Clone, Debug)]
pub struct Problem {
    sp: Spectral,
    template: SpatialField,
    target: SpatialField,
    cfg: ProblemConfig,
}

/// Energy, gradient and the trajectories needed for Hessian-vector
/// products at one velocity.
#[derive(Clone, Debug)]
pub struct Evaluation {
    velocity: TimeFlow,
    energy: f64,
    regularity: f64,
    mismatch: f64,
    gradient: TimeFlow,
    warped: SpatialField,
    lambda1: SpatialField,
    cfl: CflReport,
    vel: StageVelocities,
    phi: PhiTrajectory,
    cache: Cache,
}

#[derive(Clone, Debug)]
enum Cache {
    State(state::StateCache),
    Deformation(deformation::DeformationCache),
}

impl Evaluation {
    pub fn velocity(&self) -> &TimeFlow {
        &self.velocity
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn regularity(&self) -> f64 {
        self.regularity
    }

    pub fn mismatch(&self) -> f64 {
        self.mismatch
    }

    pub fn gradient(&self) -> &TimeFlow {
        &self.gradient
    }

    /// `m(1) = I0 o phi(1)`.
    pub fn warped(&self) -> &SpatialField {
        &self.warped
    }

    /// `lambda(1) = -(2 / sigma^2) (m(1) - I1)`.
    pub fn lambda1(&self) -> &SpatialField {
        &self.lambda1
    }

    pub fn cfl(&self) -> &CflReport {
        &self.cfl
    }

    /// Integrator steps actually used.
    pub fn integration_steps(&self) -> usize {
        self.vel.steps()
    }

    pub fn phi(&self) -> &PhiTrajectory {
        &self.phi
    }

    /// The deformation adjoint at the time nodes (deformation variant only).
    pub fn rho(&self) -> Option<Vec<BlField>> {
        match &self.cache {
            Cache::Deformation(c) => Some(c.rho.nodes()),
            Cache::State(_) => None,
        }
    }
}

impl Problem {
    pub fn new(domain: BlDomain, template: SpatialField, target: SpatialField, cfg: ProblemConfig) -> Result<Self> {
        cfg.validate()?;
        for (name, img) in [("template", &template), ("target", &target)] {
            if img.dims() != domain.grid_dims() || img.ncomp() != 1 {
                return Err(Error::Shape(format!(
                    "{name} is {:?} with {} components, domain grid is {:?}",
                    img.dims(),
                    img.ncomp(),
                    domain.grid_dims()
                )));
            }
            if !img.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(Self {
            sp: Spectral::new(domain),
            template,
            target,
            cfg,
        })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.cfg
    }

    pub fn template(&self) -> &SpatialField {
        &self.template
    }

    pub fn target(&self) -> &SpatialField {
        &self.target
    }

    /// Same images and domain with another configuration.
    pub fn with_config(&self, cfg: ProblemConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, ..self.clone() })
    }

    pub fn zero_velocity(&self) -> TimeFlow {
        TimeFlow::zeros(&self.sp, self.cfg.mode, self.cfg.time_steps).expect("validated step count")
    }

    pub(crate) fn check_flow(&self, v: &TimeFlow) -> Result<()> {
        if v.steps() != self.cfg.time_steps || v.mode() != self.cfg.mode {
            return Err(Error::Shape(format!(
                "flow has {:?} mode with {} steps, problem expects {:?} with {}",
                v.mode(),
                v.steps(),
                self.cfg.mode,
                self.cfg.time_steps
            )));
        }
        for f in v.fields() {
            f.check_matches(self.sp.domain())?;
        }
        if !v.is_finite() {
            return Err(Error::NonFinite("velocity"));
        }
        Ok(())
    }

    /// `1/2 sum_i w_i <L v_i, v_i>`.
    pub fn regularity(&self, v: &TimeFlow) -> f64 {
        0.5 * v.dot(&v.map(|f| self.sp.apply_l(f)))
    }

    /// `(1/sigma^2) |m - I1|^2` with the grid L2 norm.
    pub fn mismatch(&self, m1: &SpatialField) -> f64 {
        if self.cfg.sigma2.is_infinite() {
            return 0.0;
        }
        m1.zip_map(&self.target, |a, b| a - b).norm_sq() / self.cfg.sigma2
    }

    fn stage_velocities(&self, v: &TimeFlow) -> Result<(CflReport, StageVelocities)> {
        let cfl = check_cfl(&self.sp, v, v.steps());
        let steps = cfl.integration_steps(self.cfg.cfl_auto)?;
        Ok((cfl, StageVelocities::new(&self.sp, v, steps)?))
    }

    /// Samples of `I0` (value and derivatives) at `id + u`.
    pub(crate) fn sample_template(&self, u: &BlField, order: Order) -> (Vec<Sample>, SpatialField) {
        let disp = self.sp.realize(u);
        let comps: Vec<&[f64]> = (0..disp.ncomp()).map(|c| disp.comp(c)).collect();
        let samples = sample_mapped(&self.template, &comps, self.cfg.interpolation, order);
        (samples, disp)
    }

    pub(crate) fn lambda1(&self, m1: &SpatialField) -> SpatialField {
        let scale = if self.cfg.sigma2.is_infinite() { 0.0 } else { -2.0 / self.cfg.sigma2 };
        m1.zip_map(&self.target, |a, b| scale * (a - b))
    }

    /// `m(1)` and the energy; no adjoint work.
    pub fn energy(&self, v: &TimeFlow) -> Result<f64> {
        self.check_flow(v)?;
        let (_, vel) = self.stage_velocities(v)?;
        let phi = integrate_phi(&self.sp, &vel);
        let (samples, _) = self.sample_template(phi.final_displacement(), Order::Value);
        let m1 = values(&self.template, &samples);
        let e = self.regularity(v) + self.mismatch(&m1);
        if !e.is_finite() {
            return Err(Error::NonFinite("energy"));
        }
        Ok(e)
    }

    /// Energy, gradient and cached trajectories at `v`.
    pub fn evaluate(&self, v: &TimeFlow) -> Result<Evaluation> {
        self.check_flow(v)?;
        let (cfl, vel) = self.stage_velocities(v)?;
        let phi = integrate_phi(&self.sp, &vel);
        let parts = match self.cfg.variant {
            Variant::Deformation => deformation::evaluate(self, &vel, &phi)?,
            Variant::State => state::evaluate(self, &vel, &phi)?,
        };
        let regularity = self.regularity(v);
        let mismatch = self.mismatch(&parts.warped);
        let energy = regularity + mismatch;
        if !energy.is_finite() || !parts.lambda1.is_finite() {
            return Err(Error::NonFinite("energy or adjoint"));
        }
        let gradient = self.assemble(v, &parts.loads);
        Ok(Evaluation {
            velocity: v.clone(),
            energy,
            regularity,
            mismatch,
            gradient,
            warped: parts.warped,
            lambda1: parts.lambda1,
            cfl,
            vel,
            phi,
            cache: parts.cache,
        })
    }

    /// Hessian-vector product with the configured Hessian mode.
    pub fn hessian_vector(&self, eval: &Evaluation, dv: &TimeFlow) -> Result<TimeFlow> {
        self.hessian_vector_with(eval, dv, self.cfg.hessian)
    }

    pub fn hessian_vector_with(&self, eval: &Evaluation, dv: &TimeFlow, mode: HessianMode) -> Result<TimeFlow> {
        self.check_flow(dv)?;
        let mut dv = dv.clone();
        self.project_flow(&mut dv);
        let dvel = StageVelocities::new(&self.sp, &dv, eval.vel.steps())?;
        let loads = match &eval.cache {
            Cache::Deformation(c) => deformation::hessian_loads(self, eval, c, &dvel, mode)?,
            Cache::State(c) => state::hessian_loads(self, eval, c, &dvel, mode)?,
        };
        Ok(self.assemble(&dv, &loads))
    }

    /// `g_i = L v_i + loads_i / w_i`, projected when incompressible.
    fn assemble(&self, v: &TimeFlow, loads: &[BlField]) -> TimeFlow {
        let weights = v.weights();
        let fields = v
            .fields()
            .iter()
            .zip(loads)
            .zip(weights)
            .map(|((f, l), w)| {
                let mut g = self.sp.apply_l(f);
                g.axpy(1.0 / w, l);
                g
            })
            .collect();
        let mut g = v.with_fields(fields);
        self.project_flow(&mut g);
        g
    }

    /// Leray-project every field when `gamma = 1`.
    pub fn project_flow(&self, v: &mut TimeFlow) {
        if self.cfg.incompressible() {
            for f in v.fields_mut() {
                self.sp.project_div_free(f);
            }
        }
    }

    /// Preconditioner `K` applied per node (divergence-free when
    /// incompressible).
    pub fn precondition(&self, g: &TimeFlow) -> TimeFlow {
        let mut out = g.map(|f| self.sp.apply_k(f));
        self.project_flow(&mut out);
        out
    }

    /// Largest spectral divergence coefficient over all stored fields.
    pub fn max_divergence(&self, v: &TimeFlow) -> f64 {
        v.fields().iter().map(|f| self.sp.max_divergence(f)).fold(0.0, f64::max)
    }

    /// `iota(phi(1))` as a grid map.
    pub fn final_map(&self, eval: &Evaluation) -> GridMap {
        GridMap::from_displacement_unchecked(self.sp.realize(eval.phi.final_displacement()))
    }
}

pub(crate) struct Parts {
    warped: SpatialField,
    lambda1: SpatialField,
    /// Unweighted data loads, one per stored velocity field.
    loads: Vec<BlField>,
    cache: Cache,
}

pub(crate) fn values(like: &SpatialField, samples: &[Sample]) -> SpatialField {
    SpatialField::new(like.dims(), 1, samples.iter().map(|s| s.value).collect()).expect("grid shape")
}

/// Per-component arrays of sample gradients.
pub(crate) fn gradients(samples: &[Sample], d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|j| samples.iter().map(|s| s.grad[j]).collect()).collect()
}

/// `pi(s * f)` for a scalar grid array `s` and vector grid arrays `f`.
pub(crate) fn project_scaled(sp: &Spectral, s: &[f64], f: &[Vec<f64>]) -> BlField {
    let prod: Vec<Vec<f64>> = f.iter().map(|c| c.iter().zip(s).map(|(a, b)| a * b).collect()).collect();
    let refs: Vec<&[f64]> = prod.iter().map(|p| p.as_slice()).collect();
    sp.project_full(&refs)
}

#[cfg(test)]
mod tests;
