use super::{gradients, values, Evaluation, HessianMode, Parts, Problem};
use crate::error::Result;
use crate::grid::{central_difference, sample_mapped, Order, SpatialField};
use crate::spectral::BlField;
use crate::transport::{
    integrate_incremental_state, integrate_psi_j, FlowMode, PhiTrajectory, PsiJTrajectory, StageVelocities,
};

/// Per-node fields of the state pipeline on the full grid.
#[derive(Clone, Debug)]
struct NodeFields {
    /// Interpolated `grad I0` at `phi(t)`.
    g: Vec<Vec<f64>>,
    /// Central-difference gradient of `m(t)`.
    grad_m: Vec<Vec<f64>>,
    /// `psi(t) - id`.
    psi: Vec<Vec<f64>>,
    jac: Vec<f64>,
    /// `lambda(1) o psi(t)` and its interpolated gradient.
    pulled: Vec<f64>,
    pulled_grad: Vec<Vec<f64>>,
    lambda: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct StateCache {
    psi_j: PsiJTrajectory,
    nodes: Vec<NodeFields>,
}

fn comps(f: &SpatialField) -> Vec<Vec<f64>> {
    (0..f.ncomp()).map(|c| f.comp(c).to_vec()).collect()
}

fn central_gradient(f: &SpatialField) -> Vec<Vec<f64>> {
    (0..f.dim()).map(|j| central_difference(f.comp(0), f.shape(), j)).collect()
}

/// Unweighted loads from per-node data terms `pi(lambda grad m)`.
fn loads_from_nodes(flow_mode: FlowMode, weights: &[f64], data: Vec<BlField>) -> Vec<BlField> {
    match flow_mode {
        FlowMode::Nonstationary => data.into_iter().zip(weights).map(|(f, w)| f.scaled(*w)).collect(),
        FlowMode::Stationary => {
            let mut acc = data[0].scaled(weights[0]);
            for (f, w) in data.iter().zip(weights).skip(1) {
                acc.axpy(*w, f);
            }
            vec![acc]
        }
    }
}

pub(crate) fn evaluate(p: &Problem, vel: &StageVelocities, phi: &PhiTrajectory) -> Result<Parts> {
    let sp = p.spectral();
    let d = sp.dim();
    let flow = vel.flow();
    let nt = flow.steps();
    let kind = p.config().interpolation;

    let mut images = Vec::with_capacity(nt + 1);
    for i in 0..=nt {
        let (samples, _) = p.sample_template(phi.node(i), Order::Gradient);
        images.push((values(p.template(), &samples), gradients(&samples, d)));
    }
    let warped = images[nt].0.clone();
    let lambda1 = p.lambda1(&warped);

    let psi_j = integrate_psi_j(sp, vel);
    let mut nodes = Vec::with_capacity(nt + 1);
    let mut data = Vec::with_capacity(nt + 1);
    for (i, (m, g)) in images.into_iter().enumerate() {
        let psi = sp.realize(&psi_j.psi(i));
        let jac: Vec<f64> = sp.realize(&psi_j.jacobian(i)).data().iter().map(|j| 1.0 + j).collect();
        let psi = comps(&psi);
        let refs: Vec<&[f64]> = psi.iter().map(|c| c.as_slice()).collect();
        let s = sample_mapped(&lambda1, &refs, kind, Order::Gradient);
        let pulled: Vec<f64> = s.iter().map(|x| x.value).collect();
        let pulled_grad = gradients(&s, d);
        let lambda: Vec<f64> = jac.iter().zip(&pulled).map(|(j, l)| j * l).collect();
        let grad_m = central_gradient(&m);
        data.push(super::project_scaled(sp, &lambda, &grad_m));
        nodes.push(NodeFields {
            g,
            grad_m,
            psi,
            jac,
            pulled,
            pulled_grad,
            lambda,
        });
    }
    let loads = loads_from_nodes(flow.mode(), &flow.node_weights(), data);
    Ok(Parts {
        warped,
        lambda1,
        loads,
        cache: super::Cache::State(StateCache { psi_j, nodes }),
    })
}

pub(crate) fn hessian_loads(
    p: &Problem,
    eval: &Evaluation,
    cache: &StateCache,
    dvel: &StageVelocities,
    mode: HessianMode,
) -> Result<Vec<BlField>> {
    let sp = p.spectral();
    let d = sp.dim();
    let flow = eval.vel.flow();
    let nt = flow.steps();
    let kind = p.config().interpolation;
    let newton = mode == HessianMode::Newton;
    let inc = integrate_incremental_state(sp, &eval.vel, &eval.phi, &cache.psi_j, dvel)?;

    // delta m(t) = G(t) . delta phi(t)
    let dm: Vec<SpatialField> = (0..=nt)
        .map(|i| {
            let du = sp.realize(inc.phi.node(i));
            let g = &cache.nodes[i].g;
            let vals = (0..du.len()).map(|x| (0..d).map(|j| g[j][x] * du.comp(j)[x]).sum()).collect();
            SpatialField::new(du.dims(), 1, vals).expect("grid shape")
        })
        .collect();
    let scale = if p.config().sigma2.is_infinite() { 0.0 } else { -2.0 / p.config().sigma2 };
    let dlambda1 = dm[nt].map(|x| scale * x);

    let mut data = Vec::with_capacity(nt + 1);
    for (i, node) in cache.nodes.iter().enumerate() {
        let refs: Vec<&[f64]> = node.psi.iter().map(|c| c.as_slice()).collect();
        let pulled_dl = sample_mapped(&dlambda1, &refs, kind, Order::Value);
        let n = node.jac.len();
        let mut dlambda: Vec<f64> = (0..n).map(|x| node.jac[x] * pulled_dl[x].value).collect();
        if newton {
            let dj = sp.realize(&inc.jacobian(i));
            let dpsi = sp.realize(&inc.psi(i));
            for x in 0..n {
                let along: f64 = (0..d).map(|j| node.pulled_grad[j][x] * dpsi.comp(j)[x]).sum();
                dlambda[x] += dj.data()[x] * node.pulled[x] + node.jac[x] * along;
            }
        }
        let mut term: Vec<Vec<f64>> = node
            .grad_m
            .iter()
            .map(|c| c.iter().zip(&dlambda).map(|(g, l)| g * l).collect())
            .collect();
        if newton {
            let grad_dm = central_gradient(&dm[i]);
            for (t, gd) in term.iter_mut().zip(&grad_dm) {
                for x in 0..n {
                    t[x] += node.lambda[x] * gd[x];
                }
            }
        }
        let refs: Vec<&[f64]> = term.iter().map(|c| c.as_slice()).collect();
        data.push(sp.project_full(&refs));
    }
    Ok(loads_from_nodes(flow.mode(), &flow.node_weights(), data))
}
