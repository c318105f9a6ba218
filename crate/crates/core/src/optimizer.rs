//! Reduced-space inexact Newton-Krylov minimization.
//!
//! Each outer step solves `H dv = g` approximately with preconditioned CG
//! (preconditioner `K`), then takes `v <- v - eps dv` with Armijo
//! backtracking on the energy. Gradient descent uses `dv = K g` instead.

use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::metrics::mse_rel;
use crate::objective::{Evaluation, HessianMode, Problem};
use crate::spectral::Spectral;
use crate::transport::{check_cfl, TimeFlow};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Newton,
    #[default]
    GaussNewton,
    GradientDescent,
}

impl Method {
    fn hessian(self) -> Option<HessianMode> {
        match self {
            Method::Newton => Some(HessianMode::Newton),
            Method::GaussNewton => Some(HessianMode::GaussNewton),
            Method::GradientDescent => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    pub max_outer: usize,
    /// Stop once `||g||_inf,rel` drops to this.
    pub gradient_tol: f64,
    /// PCG relative preconditioned residual.
    pub pcg_tol: f64,
    pub max_inner: usize,
    /// Adapt the PCG tolerance to the gradient decrease (Eisenstat-Walker,
    /// choice 2), capped above by `pcg_tol`.
    pub eisenstat_walker: bool,
    pub backtrack: f64,
    pub armijo: f64,
    pub initial_step: f64,
    pub max_halvings: usize,
    /// Line-search trials that would need more than this many times the
    /// configured time steps to satisfy the CFL limit are rejected without
    /// being evaluated.
    pub max_refinement: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::default(),
            max_outer: 50,
            gradient_tol: 0.01,
            pcg_tol: 0.1,
            max_inner: 10,
            eisenstat_walker: false,
            backtrack: 0.5,
            armijo: 1e-4,
            initial_step: 1.0,
            max_halvings: 20,
            max_refinement: 16,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_tol", self.gradient_tol),
            ("pcg_tol", self.pcg_tol),
            ("initial_step", self.initial_step),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {x}")));
            }
        }
        for (name, x) in [("backtrack", self.backtrack), ("armijo", self.armijo)] {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {x}")));
            }
        }
        if self.max_refinement == 0 {
            return Err(Error::Config("max_refinement must be at least 1".into()));
        }
        if self.max_inner == 0 {
            return Err(Error::Config("max_inner must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PcgOutcome {
    pub solution: TimeFlow,
    pub iterations: usize,
    pub negative_curvature: bool,
    /// Final relative preconditioned residual.
    pub residual: f64,
}

/// Preconditioned CG on `H x = g` in the weighted product of [`TimeFlow`].
///
/// Stops when `sqrt(<r, Mr> / <g, Mg>) <= tol` or after `max_iter`
/// iterations. On `<p, Hp> <= 0` the current iterate is returned (or `Mg`
/// on the first iteration) with `negative_curvature` set.
pub fn pcg_solve(
    mut hvp: impl FnMut(&TimeFlow) -> Result<TimeFlow>,
    precondition: impl Fn(&TimeFlow) -> TimeFlow,
    g: &TimeFlow,
    tol: f64,
    max_iter: usize,
) -> Result<PcgOutcome> {
    let mut x = g.zeros_like();
    let mut r = g.clone();
    let mut z = precondition(&r);
    let mut rz = r.dot(&z);
    let rz0 = rz;
    if !rz0.is_finite() {
        return Err(Error::NonFinite("PCG right-hand side"));
    }
    if rz0 == 0.0 {
        return Ok(PcgOutcome {
            solution: x,
            iterations: 0,
            negative_curvature: false,
            residual: 0.0,
        });
    }
    let mut p = z.clone();
    let mut residual = 1.0;
    for it in 1..=max_iter {
        let hp = hvp(&p)?;
        let curvature = p.dot(&hp);
        if !curvature.is_finite() {
            return Err(Error::NonFinite("PCG curvature"));
        }
        if curvature <= 0.0 {
            let solution = if it == 1 { z } else { x };
            return Ok(PcgOutcome {
                solution,
                iterations: it,
                negative_curvature: true,
                residual,
            });
        }
        let alpha = rz / curvature;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &hp);
        z = precondition(&r);
        let rz_next = r.dot(&z);
        if !rz_next.is_finite() {
            return Err(Error::NonFinite("PCG residual"));
        }
        residual = (rz_next.max(0.0) / rz0).sqrt();
        if residual <= tol || it == max_iter {
            return Ok(PcgOutcome {
                solution: x,
                iterations: it,
                negative_curvature: false,
                residual,
            });
        }
        let beta = rz_next / rz;
        rz = rz_next;
        p = z.add(&p.scaled(beta));
    }
    Ok(PcgOutcome {
        solution: x,
        iterations: max_iter,
        negative_curvature: false,
        residual,
    })
}

/// Largest magnitude of the spatial realization over all stored fields.
pub fn realized_max_abs(sp: &Spectral, g: &TimeFlow) -> f64 {
    g.fields().iter().map(|f| sp.realize(f).max_abs()).fold(0.0, f64::max)
}

/// `||g||_inf / ||g0||_inf` on the realized fields; zero when `g0 = 0`.
pub fn relative_gradient_norm(sp: &Spectral, g: &TimeFlow, g0: &TimeFlow) -> f64 {
    let base = realized_max_abs(sp, g0);
    if base == 0.0 {
        return 0.0;
    }
    realized_max_abs(sp, g) / base
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub energy: f64,
    pub mse_rel: f64,
    pub grad_rel: f64,
    /// PCG iterations spent producing this iterate.
    pub pcg_iterations: usize,
    /// Accepted step length; zero for the initial iterate.
    pub step: f64,
    pub negative_curvature: bool,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    Stalled,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxIterations => "max_iterations",
            Status::Stalled => "stalled",
        })
    }
}

pub struct Outcome {
    pub status: Status,
    pub history: Vec<IterationRecord>,
    /// Evaluation at the returned iterate.
    pub evaluation: Evaluation,
    pub wall_time: f64,
    /// Largest spectral divergence seen over all accepted iterates.
    pub max_divergence: f64,
}

impl Outcome {
    pub fn velocity(&self) -> &TimeFlow {
        self.evaluation.velocity()
    }

    pub fn outer_iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }

    pub fn total_pcg_iterations(&self) -> usize {
        self.history.iter().map(|r| r.pcg_iterations).sum()
    }

    pub fn final_record(&self) -> &IterationRecord {
        self.history.last().expect("history holds the initial iterate")
    }
}

/// Minimize the problem energy from `v0`.
pub fn minimize(problem: &Problem, v0: &TimeFlow, cfg: &OptimizerConfig) -> Result<Outcome> {
    minimize_with(problem, v0, cfg, |_| {})
}

/// As [`minimize`], calling `observe` after every recorded iterate.
pub fn minimize_with(
    problem: &Problem,
    v0: &TimeFlow,
    cfg: &OptimizerConfig,
    mut observe: impl FnMut(&IterationRecord),
) -> Result<Outcome> {
    cfg.validate()?;
    let start = Instant::now();
    let sp = problem.spectral();
    let mut v = v0.clone();
    problem.project_flow(&mut v);
    let mut eval = problem.evaluate(&v)?;
    let g0 = eval.gradient().clone();
    let g0_max = realized_max_abs(sp, &g0);
    let rel = |g: &TimeFlow| if g0_max == 0.0 { 0.0 } else { realized_max_abs(sp, g) / g0_max };
    let mse = |e: &Evaluation| mse_rel(e.warped(), problem.template(), problem.target());

    let mut max_div = problem.max_divergence(&v);
    let mut history = vec![IterationRecord {
        outer: 0,
        energy: eval.energy(),
        mse_rel: mse(&eval),
        grad_rel: rel(&g0),
        pcg_iterations: 0,
        step: 0.0,
        negative_curvature: false,
        wall_time: start.elapsed().as_secs_f64(),
    }];
    observe(&history[0]);
    let mut forcing = cfg.pcg_tol;
    let mut prev_grad = g0_max;

    let status = loop {
        let last = history.last().expect("non-empty history");
        if last.grad_rel <= cfg.gradient_tol {
            break Status::Converged;
        }
        if last.outer >= cfg.max_outer {
            break Status::MaxIterations;
        }
        let g = eval.gradient();
        let (mut direction, pcg_iterations, negative_curvature) = match cfg.method.hessian() {
            None => (problem.precondition(g), 0, false),
            Some(mode) => {
                let out = pcg_solve(
                    |p| problem.hessian_vector_with(&eval, p, mode),
                    |r| problem.precondition(r),
                    g,
                    forcing,
                    cfg.max_inner,
                )?;
                (out.solution, out.iterations, out.negative_curvature)
            }
        };
        let mut slope = g.dot(&direction);
        if !(slope > 0.0) {
            // not a descent direction; fall back to the preconditioned gradient
            direction = problem.precondition(g);
            slope = g.dot(&direction);
        }
        problem.project_flow(&mut direction);

        let e0 = eval.energy();
        let mut step = cfg.initial_step;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial = v.sub(&direction.scaled(step));
            let steps = problem.config().time_steps;
            let admissible = check_cfl(sp, &trial, steps).proposed <= cfg.max_refinement * steps;
            if admissible {
                match problem.energy(&trial) {
                    Ok(e) if e <= e0 - cfg.armijo * step * slope => {
                        accepted = Some(trial);
                        break;
                    }
                    Ok(_) | Err(Error::NonFinite(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            step *= cfg.backtrack;
        }
        let Some(next) = accepted else {
            break Status::Stalled;
        };
        v = next;
        eval = problem.evaluate(&v)?;
        max_div = max_div.max(problem.max_divergence(&v));
        let g_max = realized_max_abs(sp, eval.gradient());
        if cfg.eisenstat_walker && prev_grad > 0.0 {
            let ratio = g_max / prev_grad;
            let mut eta = 0.9 * ratio * ratio;
            let safeguard = 0.9 * forcing * forcing;
            if safeguard > 0.1 {
                eta = eta.max(safeguard);
            }
            forcing = eta.min(cfg.pcg_tol).max(1e-6);
        }
        prev_grad = g_max;
        let record = IterationRecord {
            outer: history.len(),
            energy: eval.energy(),
            mse_rel: mse(&eval),
            grad_rel: if g0_max == 0.0 { 0.0 } else { g_max / g0_max },
            pcg_iterations,
            step,
            negative_curvature,
            wall_time: start.elapsed().as_secs_f64(),
        };
        observe(&record);
        history.push(record);
    };

    Ok(Outcome {
        status,
        history,
        evaluation: eval,
        wall_time: start.elapsed().as_secs_f64(),
        max_divergence: max_div,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::objective::{ProblemConfig, Variant};
    use crate::spectral::{BlDomain, BlField};
    use crate::transport::FlowMode;
    use crate::SpatialField;

    fn flow(sp: &Spectral, seed: u64) -> TimeFlow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TimeFlow::zeros(sp, FlowMode::Nonstationary, 3).unwrap().map(|_| BlField::random(sp.domain(), 2, &mut rng))
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let sp = Spectral::new(BlDomain::new(&[16, 16], &[4, 4], 0.1, 2).unwrap());
        let g = flow(&sp, 1).zeros_like();
        let out = pcg_solve(|p| Ok(p.clone()), |r| r.clone(), &g, 0.1, 10).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.solution.max_abs(), 0.0);
    }

    #[test]
    fn perfectly_preconditioned_system_takes_one_iteration() {
        let sp = Spectral::new(BlDomain::new(&[16, 16], &[4, 4], 0.1, 2).unwrap());
        let g = flow(&sp, 2);
        let out = pcg_solve(
            |p| Ok(p.map(|f| sp.apply_l(f))),
            |r| r.map(|f| sp.apply_k(f)),
            &g,
            1e-12,
            10,
        )
        .unwrap();
        assert_eq!(out.iterations, 1);
        let want = g.map(|f| sp.apply_k(f));
        assert!(out.solution.sub(&want).norm() < 1e-10 * want.norm());
    }

    #[test]
    fn diagonal_operator_matches_direct_solve() {
        let dom = BlDomain::new(&[16, 16], &[4, 4], 0.1, 2).unwrap();
        let sp = Spectral::new(dom.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, c): (f64, f64, f64) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), rng.gen_range(0.5..4.0));
        // even in k, so the operator keeps spectra Hermitian
        let diag: Vec<f64> = (0..dom.spectral_len())
            .map(|i| {
                let k = dom.frequency(i);
                dom.l_symbol(k) * (1.0 + c * (a * k[0] as f64 + b * k[1] as f64).cos().powi(2))
            })
            .collect();
        let apply = |f: &BlField, inv: bool| {
            let mut out = f.clone();
            for comp in 0..f.ncomp() {
                for (x, d) in out.comp_mut(comp).iter_mut().zip(&diag) {
                    *x = if inv { *x / d } else { *x * d };
                }
            }
            out
        };
        let g = flow(&sp, 4);
        let eta = 0.1;
        let out = pcg_solve(|p| Ok(p.map(|f| apply(f, false))), |r| r.map(|f| sp.apply_k(f)), &g, eta, 50).unwrap();
        let direct = g.map(|f| apply(f, true));
        let err = out.solution.sub(&direct).norm() / direct.norm();
        assert!(err < eta, "{err}");
        assert!(!out.negative_curvature);
    }

    #[test]
    fn negative_curvature_on_first_iteration_returns_preconditioned_gradient() {
        let sp = Spectral::new(BlDomain::new(&[16, 16], &[4, 4], 0.1, 2).unwrap());
        let g = flow(&sp, 5);
        let out = pcg_solve(|p| Ok(p.scaled(-1.0)), |r| r.map(|f| sp.apply_k(f)), &g, 0.1, 10).unwrap();
        assert!(out.negative_curvature);
        let want = g.map(|f| sp.apply_k(f));
        assert!(out.solution.sub(&want).max_abs() == 0.0);
    }

    #[test]
    fn relative_norm_examples() {
        let sp = Spectral::new(BlDomain::new(&[16, 16], &[4, 4], 0.1, 2).unwrap());
        let g = flow(&sp, 6);
        assert!((relative_gradient_norm(&sp, &g, &g) - 1.0).abs() < 1e-15);
        assert_eq!(relative_gradient_norm(&sp, &g.zeros_like(), &g), 0.0);
        assert!((relative_gradient_norm(&sp, &g.scaled(0.05), &g) - 0.05).abs() < 1e-15);
        assert_eq!(relative_gradient_norm(&sp, &g, &g.zeros_like()), 0.0);
    }

    fn bump(n: usize, c: [f64; 2]) -> SpatialField {
        let wrap = |t: f64| t - t.round();
        SpatialField::from_fn(&[n, n], |x| {
            let (dx, dy) = (wrap(x[0] - c[0]), wrap(x[1] - c[1]));
            (-(dx * dx + dy * dy) / (2.0 * 0.1 * 0.1)).exp()
        })
    }

    #[test]
    fn identical_images_return_immediately() {
        let dom = BlDomain::new(&[16, 16], &[4, 4], 0.01, 1).unwrap();
        let img = bump(16, [0.5, 0.5]);
        let p = Problem::new(dom, img.clone(), img, ProblemConfig::default()).unwrap();
        let out = minimize(&p, &p.zero_velocity(), &OptimizerConfig::default()).unwrap();
        assert_eq!(out.status, Status::Converged);
        assert_eq!(out.outer_iterations(), 0);
        assert_eq!(out.evaluation.energy(), 0.0);
    }

    #[test]
    fn pure_regularizer_converges_in_one_newton_step() {
        let dom = BlDomain::new(&[16, 16], &[4, 4], 0.01, 1).unwrap();
        let cfg = ProblemConfig {
            sigma2: f64::INFINITY,
            mode: FlowMode::Nonstationary,
            time_steps: 4,
            ..Default::default()
        };
        let p = Problem::new(dom, bump(16, [0.4, 0.5]), bump(16, [0.6, 0.5]), cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v0 = p.zero_velocity().map(|_| p.spectral().random_smooth(2, 0.05, &mut rng));
        let opt = OptimizerConfig {
            method: Method::Newton,
            pcg_tol: 1e-12,
            ..Default::default()
        };
        let out = minimize(&p, &v0, &opt).unwrap();
        assert_eq!(out.status, Status::Converged);
        assert_eq!(out.outer_iterations(), 1);
        assert!(out.velocity().max_abs() < 1e-12);
    }

    #[test]
    fn energies_decrease_and_incompressible_iterates_stay_divergence_free() {
        let dom = BlDomain::new(&[32, 32], &[8, 8], 0.01, 1).unwrap();
        for method in [Method::GaussNewton, Method::GradientDescent] {
            for gamma in [0, 1] {
                let cfg = ProblemConfig {
                    variant: Variant::Deformation,
                    sigma2: 0.01,
                    gamma,
                    time_steps: 4,
                    ..Default::default()
                };
                let p = Problem::new(dom.clone(), bump(32, [0.45, 0.5]), bump(32, [0.55, 0.5]), cfg).unwrap();
                let opt = OptimizerConfig {
                    method,
                    max_outer: 5,
                    ..Default::default()
                };
                let out = minimize(&p, &p.zero_velocity(), &opt).unwrap();
                for w in out.history.windows(2) {
                    assert!(w[1].energy <= w[0].energy, "{method:?}");
                }
                assert!(out.history.last().unwrap().energy < out.history[0].energy);
                if gamma == 1 {
                    assert!(out.max_divergence <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig {
            backtrack: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            pcg_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
