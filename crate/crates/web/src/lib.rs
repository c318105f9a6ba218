//! Browser bindings: synthesize a pair, look at its band-limited
//! projection, and register it. Images cross the boundary as flat
//! `Float32Array`s in the core's layout (axis 1 fastest).

use bl_lddmm::grid::jacobian_determinant;
use bl_lddmm::harness::run::{register as run_registration, Inputs};
use bl_lddmm::harness::{synthesize, PairKind, RunConfig, SynthConfig};
use bl_lddmm::optimizer::Method;
use bl_lddmm::{BlDomain, SpatialField, Spectral};
use wasm_bindgen::prelude::*;

const MAX_SIZE: usize = 96;

fn f32s(f: &SpatialField) -> Vec<f32> {
    f.data().iter().map(|&x| x as f32).collect()
}

fn pair_config(kind: &str, size: usize, seed: u32) -> Result<SynthConfig, String> {
    if !(8..=MAX_SIZE).contains(&size) {
        return Err(format!("size must be between 8 and {MAX_SIZE}"));
    }
    Ok(SynthConfig {
        kind: kind.parse::<PairKind>().map_err(|e| e.to_string())?,
        size,
        seed: seed.into(),
        ..Default::default()
    })
}

#[wasm_bindgen]
pub struct Pair {
    size: usize,
    template: Vec<f32>,
    target: Vec<f32>,
}

#[wasm_bindgen]
impl Pair {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn template(&self) -> Vec<f32> {
        self.template.clone()
    }

    pub fn target(&self) -> Vec<f32> {
        self.target.clone()
    }
}

pub fn make_pair(kind: &str, size: usize, seed: u32) -> Result<Pair, String> {
    let pair = synthesize(&pair_config(kind, size, seed)?).map_err(|e| e.to_string())?;
    Ok(Pair {
        size,
        template: f32s(&pair.template),
        target: f32s(&pair.target),
    })
}

/// Template of the pair after truncation to `|k| <= bound` per axis.
pub fn band_limited(kind: &str, size: usize, seed: u32, bound: usize) -> Result<Vec<f32>, String> {
    let pair = synthesize(&pair_config(kind, size, seed)?).map_err(|e| e.to_string())?;
    let dom = BlDomain::new(&[size, size], &[bound, bound], 1.0, 1).map_err(|e| e.to_string())?;
    let sp = Spectral::new(dom);
    Ok(f32s(&sp.realize(&sp.project(&pair.template))))
}

#[wasm_bindgen]
pub struct Registration {
    status: String,
    warped: Vec<f32>,
    difference: Vec<f32>,
    jacobian: Vec<f32>,
    displacement: Vec<f32>,
    mse: Vec<f64>,
    energy: Vec<f64>,
    jacobian_range: Vec<f64>,
    wall_time: f64,
}

#[wasm_bindgen]
impl Registration {
    #[wasm_bindgen(getter)]
    pub fn status(&self) -> String {
        self.status.clone()
    }

    pub fn warped(&self) -> Vec<f32> {
        self.warped.clone()
    }

    pub fn difference(&self) -> Vec<f32> {
        self.difference.clone()
    }

    /// `det D phi` per voxel.
    pub fn jacobian(&self) -> Vec<f32> {
        self.jacobian.clone()
    }

    /// Both displacement components, component 0 first.
    pub fn displacement(&self) -> Vec<f32> {
        self.displacement.clone()
    }

    /// MSE_rel per outer iteration, starting with the initial guess.
    pub fn mse(&self) -> Vec<f64> {
        self.mse.clone()
    }

    pub fn energy(&self) -> Vec<f64> {
        self.energy.clone()
    }

    pub fn jacobian_range(&self) -> Vec<f64> {
        self.jacobian_range.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn wall_time(&self) -> f64 {
        self.wall_time
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_demo(
    kind: &str,
    size: usize,
    seed: u32,
    bound: usize,
    alpha: f64,
    sigma2: f64,
    incompressible: bool,
    method: &str,
    max_outer: usize,
) -> Result<Registration, String> {
    let mut cfg = RunConfig::default();
    cfg.input.synthetic = Some(pair_config(kind, size, seed)?);
    cfg.domain.bounds = vec![bound, bound];
    cfg.domain.alpha = alpha;
    cfg.problem.sigma2 = sigma2;
    cfg.problem.gamma = incompressible.into();
    cfg.optimizer.method = match method {
        "newton" => Method::Newton,
        "gauss_newton" => Method::GaussNewton,
        "gradient_descent" => Method::GradientDescent,
        other => return Err(format!("unknown method {other:?}")),
    };
    cfg.optimizer.max_outer = max_outer;
    let inputs = Inputs::load(&cfg).map_err(|e| e.to_string())?;
    let (problem, outcome, report) = run_registration(&cfg, &inputs, |_| {}).map_err(|e| e.to_string())?;
    let warped = outcome.evaluation.warped();
    let phi = problem.final_map(&outcome.evaluation);
    Ok(Registration {
        status: report.status,
        warped: f32s(warped),
        difference: f32s(&warped.zip_map(problem.target(), |a, b| a - b)),
        jacobian: f32s(&jacobian_determinant(&phi)),
        displacement: f32s(phi.displacement()),
        mse: outcome.history.iter().map(|r| r.mse_rel).collect(),
        energy: outcome.history.iter().map(|r| r.energy).collect(),
        jacobian_range: vec![report.jacobian_min, report.jacobian_max],
        wall_time: report.wall_time,
    })
}

#[wasm_bindgen(js_name = synthesize)]
pub fn synthesize_js(kind: &str, size: usize, seed: u32) -> Result<Pair, JsError> {
    make_pair(kind, size, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = bandLimit)]
pub fn band_limit_js(kind: &str, size: usize, seed: u32, bound: usize) -> Result<Vec<f32>, JsError> {
    band_limited(kind, size, seed, bound).map_err(|e| JsError::new(&e))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = register)]
pub fn register_js(
    kind: &str,
    size: usize,
    seed: u32,
    bound: usize,
    alpha: f64,
    sigma2: f64,
    incompressible: bool,
    method: &str,
    max_outer: usize,
) -> Result<Registration, JsError> {
    run_demo(kind, size, seed, bound, alpha, sigma2, incompressible, method, max_outer).map_err(|e| JsError::new(&e))
}
