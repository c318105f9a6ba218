use super::{gradients, project_scaled, values, Evaluation, HessianMode, Parts, Problem};
use crate::error::Result;
use crate::grid::{Order, Sample};
use crate::spectral::BlField;
use crate::transport::{
    integrate_incremental_phi, integrate_incremental_rho, integrate_rho, IncrementalTerms, PhiTrajectory,
    RhoTrajectory, StageVelocities,
};

#[derive(Clone, Debug)]
pub(crate) struct DeformationCache {
    /// `I0` value, gradient and Hessian at `phi(1)`.
    samples: Vec<Sample>,
    pub(crate) rho: RhoTrajectory,
}

pub(crate) fn evaluate(p: &Problem, vel: &StageVelocities, phi: &PhiTrajectory) -> Result<Parts> {
    let sp = p.spectral();
    let (samples, _) = p.sample_template(phi.final_displacement(), Order::Hessian);
    let warped = values(p.template(), &samples);
    let lambda1 = p.lambda1(&warped);
    // rho(1) = pi(lambda(1) grad I0 o phi(1))
    let g = gradients(&samples, sp.dim());
    let rho1 = project_scaled(sp, lambda1.data(), &g);
    let rho = integrate_rho(sp, vel, phi, &rho1)?;
    Ok(Parts {
        warped,
        lambda1,
        loads: rho.loads().to_vec(),
        cache: super::Cache::Deformation(DeformationCache { samples, rho }),
    })
}

pub(crate) fn hessian_loads(
    p: &Problem,
    eval: &Evaluation,
    cache: &DeformationCache,
    dvel: &StageVelocities,
    mode: HessianMode,
) -> Result<Vec<BlField>> {
    let sp = p.spectral();
    let d = sp.dim();
    let dphi = integrate_incremental_phi(sp, &eval.vel, &eval.phi, dvel)?;
    let du = sp.realize(dphi.final_displacement());
    let scale = if p.config().sigma2.is_infinite() { 0.0 } else { -2.0 / p.config().sigma2 };
    let lambda = eval.lambda1.data();
    // delta rho(1) = pi(delta lambda G + lambda H du), delta lambda = -(2/sigma^2) G.du
    let mut src = vec![vec![0.0; du.len()]; d];
    for (x, s) in cache.samples.iter().enumerate() {
        let gdu: f64 = (0..d).map(|j| s.grad[j] * du.comp(j)[x]).sum();
        let dl = scale * gdu;
        for a in 0..d {
            let mut v = dl * s.grad[a];
            if mode == HessianMode::Newton {
                let hdu: f64 = (0..d).map(|b| s.hess[a][b] * du.comp(b)[x]).sum();
                v += lambda[x] * hdu;
            }
            src[a][x] = v;
        }
    }
    let refs: Vec<&[f64]> = src.iter().map(|c| c.as_slice()).collect();
    let drho1 = sp.project_full(&refs);
    let terms = match mode {
        HessianMode::Newton => IncrementalTerms::NEWTON,
        HessianMode::GaussNewton => IncrementalTerms::GAUSS_NEWTON,
    };
    let inc = integrate_incremental_rho(sp, &eval.vel, &eval.phi, &cache.rho, dvel, &dphi, &drho1, terms)?;
    Ok(inc.loads().to_vec())
}
