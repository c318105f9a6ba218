//! Finite-difference checks of gradients and Hessian-vector products over
//! both objectives, both flow modes and both values of `gamma`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::synth::{synthesize, PairKind, SynthConfig};
use crate::error::{Error, Result};
use crate::grid::Interpolation;
use crate::objective::{HessianMode, Problem, ProblemConfig, Variant};
use crate::spectral::BlDomain;
use crate::transport::{FlowMode, TimeFlow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DerivCheckConfig {
    pub kind: PairKind,
    pub size: usize,
    pub bounds: usize,
    pub alpha: f64,
    pub order: u32,
    pub sigma2: f64,
    pub time_steps: usize,
    pub interpolation: Interpolation,
    pub seed: u64,
    /// Peak magnitude of the random base point and directions.
    pub amplitude: f64,
    pub epsilon: f64,
    pub directions: usize,
    pub curvature_directions: usize,
    pub gradient_tol: f64,
    pub hessian_tol: f64,
    pub symmetry_tol: f64,
}

impl Default for DerivCheckConfig {
    fn default() -> Self {
        Self {
            kind: PairKind::Translation,
            size: 32,
            bounds: 8,
            alpha: 0.002,
            order: 2,
            sigma2: 0.01,
            time_steps: 4,
            interpolation: Interpolation::Bspline,
            seed: 0,
            amplitude: 0.05,
            epsilon: 1e-4,
            directions: 10,
            curvature_directions: 20,
            gradient_tol: 1e-6,
            hessian_tol: 1e-4,
            symmetry_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub variant: Option<Variant>,
    pub mode: Option<FlowMode>,
    pub gamma: u8,
    /// Worst relative error, or the violation count for curvature checks.
    pub value: f64,
    pub tolerance: f64,
    /// Observed order of the central difference error in `eps`.
    pub order: Option<f64>,
    pub pass: bool,
}

/// Test harness around one configured problem.
pub struct Probe {
    pub problem: Problem,
    rng: ChaCha8Rng,
    amplitude: f64,
}

impl Probe {
    pub fn new(cfg: &DerivCheckConfig, problem_cfg: ProblemConfig) -> Result<Self> {
        if cfg.size > 64 {
            return Err(Error::Config(format!("derivative checks are limited to N <= 64, got {}", cfg.size)));
        }
        let pair = synthesize(&SynthConfig {
            kind: cfg.kind,
            size: cfg.size,
            seed: cfg.seed,
            ..Default::default()
        })?;
        let dom = BlDomain::new(&[cfg.size, cfg.size], &[cfg.bounds, cfg.bounds], cfg.alpha, cfg.order)?;
        let problem = Problem::new(dom, pair.template, pair.target, problem_cfg)?;
        Ok(Self {
            problem,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            amplitude: cfg.amplitude,
        })
    }

    /// A smooth random flow, divergence-free when the problem is.
    pub fn random_flow(&mut self) -> TimeFlow {
        let sp = self.problem.spectral();
        let mut v = self
            .problem
            .zero_velocity()
            .map(|_| sp.random_smooth(sp.dim(), self.amplitude, &mut self.rng));
        self.problem.project_flow(&mut v);
        v
    }

    /// `|FD - <g, w>| / |<g, w>|` with a central difference of step `eps`.
    pub fn gradient_error(&self, v: &TimeFlow, w: &TimeFlow, eps: f64) -> Result<f64> {
        let p = &self.problem;
        let g = p.evaluate(v)?;
        let an = g.gradient().dot(w);
        let fd = (p.energy(&v.add(&w.scaled(eps)))? - p.energy(&v.sub(&w.scaled(eps)))?) / (2.0 * eps);
        Ok((fd - an).abs() / an.abs())
    }

    /// Order estimated from the central difference errors at `eps` and
    /// `eps / 2`, with `eps` large enough to sit above round-off.
    pub fn gradient_order(&self, v: &TimeFlow, w: &TimeFlow, eps: f64) -> Result<f64> {
        let e1 = self.gradient_error(v, w, eps)?;
        let e2 = self.gradient_error(v, w, 0.5 * eps)?;
        Ok((e1 / e2).log2())
    }

    /// Relative error of the Newton Hvp against a central difference of
    /// the gradient.
    pub fn hessian_error(&self, v: &TimeFlow, w: &TimeFlow, eps: f64) -> Result<f64> {
        let p = &self.problem;
        let e = p.evaluate(v)?;
        let h = p.hessian_vector_with(&e, w, HessianMode::Newton)?;
        let gp = p.evaluate(&v.add(&w.scaled(eps)))?;
        let gm = p.evaluate(&v.sub(&w.scaled(eps)))?;
        let fd = gp.gradient().sub(gm.gradient()).scaled(0.5 / eps);
        Ok(h.sub(&fd).norm() / fd.norm())
    }

    /// `|<H w1, w2> - <w1, H w2>|` relative to the larger of the two.
    pub fn symmetry_error(&self, v: &TimeFlow, w1: &TimeFlow, w2: &TimeFlow) -> Result<f64> {
        let p = &self.problem;
        let e = p.evaluate(v)?;
        let a = p.hessian_vector_with(&e, w1, HessianMode::Newton)?.dot(w2);
        let b = w1.dot(&p.hessian_vector_with(&e, w2, HessianMode::Newton)?);
        Ok((a - b).abs() / a.abs().max(b.abs()))
    }

    /// Directions violating `<w, H_GN w> >= (1 - 1e-8) <w, L w>`.
    pub fn curvature_violations(&mut self, v: &TimeFlow, count: usize) -> Result<usize> {
        let e = self.problem.evaluate(v)?;
        let mut bad = 0;
        for _ in 0..count {
            let w = self.random_flow();
            let hw = self.problem.hessian_vector_with(&e, &w, HessianMode::GaussNewton)?;
            let lw = w.map(|f| self.problem.spectral().apply_l(f));
            if w.dot(&hw) < (1.0 - 1e-8) * w.dot(&lw) {
                bad += 1;
            }
        }
        Ok(bad)
    }
}

pub fn check_derivatives(cfg: &DerivCheckConfig) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let base = ProblemConfig {
        sigma2: cfg.sigma2,
        time_steps: cfg.time_steps,
        interpolation: cfg.interpolation,
        ..Default::default()
    };

    let mut probe = Probe::new(
        cfg,
        ProblemConfig {
            sigma2: f64::INFINITY,
            mode: FlowMode::Nonstationary,
            ..base.clone()
        },
    )?;
    let v = probe.random_flow();
    let g = probe.problem.evaluate(&v)?;
    let want = v.map(|f| probe.problem.spectral().apply_l(f));
    let err = g.gradient().sub(&want).norm() / want.norm();
    out.push(Check {
        name: "regularizer gradient = Lv".into(),
        variant: None,
        mode: Some(FlowMode::Nonstationary),
        gamma: 0,
        value: err,
        tolerance: 1e-10,
        order: None,
        pass: err < 1e-10,
    });

    for variant in [Variant::Deformation, Variant::State] {
        for mode in [FlowMode::Stationary, FlowMode::Nonstationary] {
            for gamma in [0u8, 1] {
                let pc = ProblemConfig {
                    variant,
                    mode,
                    gamma,
                    ..base.clone()
                };
                let mut probe = Probe::new(cfg, pc)?;
                let v = probe.random_flow();
                let mut worst = 0.0f64;
                let mut first = None;
                for _ in 0..cfg.directions {
                    let w = probe.random_flow();
                    worst = worst.max(probe.gradient_error(&v, &w, cfg.epsilon)?);
                    first.get_or_insert(w);
                }
                let w = first.unwrap_or_else(|| probe.random_flow());
                let order = probe.gradient_order(&v, &w, 1e-2)?;
                let entry = |name: &str, value: f64, tolerance: f64, order: Option<f64>, pass: bool| Check {
                    name: name.into(),
                    variant: Some(variant),
                    mode: Some(mode),
                    gamma,
                    value,
                    tolerance,
                    order,
                    pass,
                };
                out.push(entry(
                    "gradient vs FD",
                    worst,
                    cfg.gradient_tol,
                    Some(order),
                    worst < cfg.gradient_tol && order > 1.5,
                ));
                let w2 = probe.random_flow();
                let h = probe.hessian_error(&v, &w, cfg.epsilon)?;
                out.push(entry("Newton Hvp vs FD", h, cfg.hessian_tol, None, h < cfg.hessian_tol));
                let s = probe.symmetry_error(&v, &w, &w2)?;
                out.push(entry("Newton symmetry", s, cfg.symmetry_tol, None, s < cfg.symmetry_tol));
                let bad = probe.curvature_violations(&v, cfg.curvature_directions)?;
                out.push(entry("GN curvature >= L", bad as f64, 0.0, None, bad == 0));
            }
        }
    }
    Ok(out)
}

pub fn render_checks(checks: &[Check]) -> String {
    let mut s = format!(
        "{:<26} {:<12} {:<14} {:>5} {:>11} {:>9} {:>6}  result\n",
        "check", "variant", "mode", "gamma", "value", "tol", "order"
    );
    for c in checks {
        let name = |x: Option<String>| x.unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<26} {:<12} {:<14} {:>5} {:>11.3e} {:>9.1e} {:>6}  {}",
            c.name,
            name(c.variant.map(|v| format!("{v:?}").to_lowercase())),
            name(c.mode.map(|m| format!("{m:?}").to_lowercase())),
            c.gamma,
            c.value,
            c.tolerance,
            c.order.map_or("-".into(), |o| format!("{o:.2}")),
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    s
}
