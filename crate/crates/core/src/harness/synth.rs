//! Deterministic synthetic image pairs on the periodic unit cube.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::Labels;
use crate::error::{Error, Result};
use crate::grid::SpatialField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// A Gaussian bump and a shifted copy.
    Translation,
    /// A striped disc and its image under an area-preserving twist.
    Swirl,
    /// A ring with a gap and the closed ring.
    CToCircle,
}

impl std::str::FromStr for PairKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translation" => Ok(Self::Translation),
            "swirl" => Ok(Self::Swirl),
            "c_to_circle" | "c-to-circle" => Ok(Self::CToCircle),
            _ => Err(Error::Config(format!("unknown pair kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub kind: PairKind,
    pub size: usize,
    pub dim: usize,
    pub seed: u64,
    /// Translation distance along the first axis, unit-cube units.
    pub shift: f64,
    /// Peak twist angle of the swirl, radians.
    pub twist: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            kind: PairKind::Translation,
            size: 64,
            dim: 2,
            seed: 0,
            shift: 0.1,
            twist: 0.6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticPair {
    pub template: SpatialField,
    pub target: SpatialField,
    /// Template and target segmentations, for pairs that have them.
    pub labels: Option<(Labels, Labels)>,
    /// Constant velocity that carries the template onto the target, when
    /// one exists.
    pub velocity: Option<Vec<f64>>,
}

/// `0.5 (1 + tanh(t / eps))`.
fn step(t: f64, eps: f64) -> f64 {
    0.5 * (1.0 + (t / eps).tanh())
}

fn wrap(t: f64) -> f64 {
    t - t.round()
}

pub fn synthesize_pair(kind: PairKind, size: usize, seed: u64) -> Result<SyntheticPair> {
    synthesize(&SynthConfig {
        kind,
        size,
        seed,
        ..Default::default()
    })
}

pub fn synthesize(cfg: &SynthConfig) -> Result<SyntheticPair> {
    if cfg.size < 16 {
        return Err(Error::Config(format!("synthetic size must be at least 16, got {}", cfg.size)));
    }
    if !(2..=3).contains(&cfg.dim) {
        return Err(Error::Config(format!("synthetic pairs are 2-D or 3-D, got dim {}", cfg.dim)));
    }
    let dims = vec![cfg.size; cfg.dim];
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eps = 1.5 / cfg.size as f64;
    // the third axis, if any, carries a slab profile
    let slab = move |x: [f64; 3]| if d == 3 { step(0.2 - wrap(x[2] - 0.5).abs(), eps) } else { 1.0 };

    match cfg.kind {
        PairKind::Translation => {
            let c: Vec<f64> = (0..d).map(|_| 0.5 + rng.gen_range(-0.03..0.03)).collect();
            let w = 0.1;
            let bump = move |x: [f64; 3], s: f64| {
                let r2: f64 = (0..d)
                    .map(|a| {
                        let off = if a == 0 { s } else { 0.0 };
                        wrap(x[a] - c[a] - off).powi(2)
                    })
                    .sum();
                (-r2 / (2.0 * w * w)).exp()
            };
            let shift = cfg.shift;
            let mut velocity = vec![0.0; d];
            velocity[0] = shift;
            Ok(SyntheticPair {
                template: SpatialField::from_fn(&dims, |x| bump(x, 0.0)),
                target: SpatialField::from_fn(&dims, |x| bump(x, shift)),
                labels: None,
                velocity: Some(velocity),
            })
        }
        PairKind::Swirl => {
            let phase = rng.gen_range(0.0..1.0);
            let twist = cfg.twist;
            let pattern = move |x: [f64; 3]| {
                let (dx, dy) = (wrap(x[0] - 0.5), wrap(x[1] - 0.5));
                let r = (dx * dx + dy * dy).sqrt();
                let stripes = 0.5 + 0.5 * (2.0 * PI * (5.0 * dx + phase)).cos();
                stripes * step(0.3 - r, 2.0 * eps) * slab(x)
            };
            // rotation by an angle that depends on the radius only preserves area
            let twisted = move |x: [f64; 3]| {
                let (dx, dy) = (wrap(x[0] - 0.5), wrap(x[1] - 0.5));
                let r2 = dx * dx + dy * dy;
                let a = twist * (-r2 / (2.0 * 0.15 * 0.15)).exp();
                let (s, c) = a.sin_cos();
                pattern([0.5 + c * dx - s * dy, 0.5 + s * dx + c * dy, x[2]])
            };
            Ok(SyntheticPair {
                template: SpatialField::from_fn(&dims, pattern),
                target: SpatialField::from_fn(&dims, twisted),
                labels: None,
                velocity: None,
            })
        }
        PairKind::CToCircle => {
            let r1 = 0.15 + rng.gen_range(-0.01..0.01);
            let r2 = 0.28 + rng.gen_range(-0.01..0.01);
            let facing = rng.gen_range(-0.2..0.2);
            let gap = 0.45;
            let ring = move |x: [f64; 3]| {
                let (dx, dy) = (wrap(x[0] - 0.5), wrap(x[1] - 0.5));
                let r = (dx * dx + dy * dy).sqrt();
                step(r - r1, eps) * step(r2 - r, eps) * slab(x)
            };
            let c_shape = move |x: [f64; 3]| {
                let (dx, dy) = (wrap(x[0] - 0.5), wrap(x[1] - 0.5));
                let r = (dx * dx + dy * dy).sqrt();
                let angle = wrap((dy.atan2(dx) - facing) / (2.0 * PI)) * 2.0 * PI;
                ring(x) * step((angle.abs() - gap) * r, eps)
            };
            let template = SpatialField::from_fn(&dims, c_shape);
            let target = SpatialField::from_fn(&dims, ring);
            let labels = (Labels::threshold(&template, 0.5), Labels::threshold(&target, 0.5));
            Ok(SyntheticPair {
                template,
                target,
                labels: Some(labels),
                velocity: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{jacobian_determinant, warp, GridMap, Interpolation};

    #[test]
    fn zero_shift_gives_identical_images() {
        let p = synthesize(&SynthConfig {
            shift: 0.0,
            size: 32,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(p.template, p.target);
    }

    #[test]
    fn translation_target_is_the_template_moved_by_the_velocity() {
        let n = 64;
        let p = synthesize(&SynthConfig {
            shift: 0.25,
            size: n,
            ..Default::default()
        })
        .unwrap();
        let v = p.velocity.clone().unwrap();
        assert_eq!(v, vec![0.25, 0.0]);
        // a constant velocity v gives phi(1) = id - v and m(1) = I0(x - v)
        let mut u = SpatialField::zeros(&[n, n], 2);
        u.comp_mut(0).iter_mut().for_each(|x| *x = -v[0]);
        let m1 = warp(&p.template, &GridMap::from_displacement(u).unwrap(), Interpolation::Linear).unwrap();
        assert!(m1.zip_map(&p.target, |a, b| a - b).max_abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_bits() {
        for kind in [PairKind::Translation, PairKind::Swirl, PairKind::CToCircle] {
            let a = synthesize_pair(kind, 32, 9).unwrap();
            let b = synthesize_pair(kind, 32, 9).unwrap();
            let bits = |f: &SpatialField| f.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.template), bits(&b.template));
            assert_eq!(bits(&a.target), bits(&b.target));
            let c = synthesize_pair(kind, 32, 10).unwrap();
            assert_ne!(bits(&a.template), bits(&c.template));
        }
    }

    #[test]
    fn swirl_map_preserves_area() {
        let n = 128;
        let twist = 0.6;
        let comps: Vec<Vec<f64>> = (0..2)
            .map(|c| {
                SpatialField::from_fn(&[n, n], |x| {
                    let (dx, dy) = (wrap(x[0] - 0.5), wrap(x[1] - 0.5));
                    let a = twist * (-(dx * dx + dy * dy) / (2.0 * 0.15 * 0.15)).exp();
                    let (s, co) = a.sin_cos();
                    if c == 0 { co * dx - s * dy - dx } else { s * dx + co * dy - dy }
                })
                .into_data()
            })
            .collect();
        let phi = GridMap::from_displacement(SpatialField::from_components(&[n, n], comps).unwrap()).unwrap();
        let j = jacobian_determinant(&phi);
        assert!(j.min() > 0.99 && j.max() < 1.01, "{} {}", j.min(), j.max());
    }

    #[test]
    fn c_to_circle_labels() {
        let p = synthesize_pair(PairKind::CToCircle, 64, 1).unwrap();
        let (a, b) = p.labels.unwrap();
        let count = |l: &Labels| l.data().iter().filter(|&&x| x == 1).count();
        assert!(count(&a) > 0 && count(&a) < count(&b));
        assert!(p.template.max() <= 1.0 && p.template.min() >= 0.0);
    }

    #[test]
    fn rejects_small_grids() {
        assert!(synthesize_pair(PairKind::Swirl, 8, 0).is_err());
        assert!("c_to_circle".parse::<PairKind>().is_ok());
        assert!("blob".parse::<PairKind>().is_err());
    }
}
