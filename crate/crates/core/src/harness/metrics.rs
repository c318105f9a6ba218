use crate::error::{Error, Result};
use crate::grid::{jacobian_determinant, unravel, GridMap, SpatialField};

/// Residual mismatch as a percentage of the initial one,
/// `100 |m1 - I1|^2 / |I0 - I1|^2`. Zero when `I0 = I1`.
pub fn mse_rel(m1: &SpatialField, i0: &SpatialField, i1: &SpatialField) -> f64 {
    let sq = |a: &SpatialField, b: &SpatialField| -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let base = sq(i0, i1);
    if base == 0.0 {
        return 0.0;
    }
    100.0 * sq(m1, i1) / base
}

/// Integer label volume on a grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    dims: Vec<usize>,
    data: Vec<u8>,
}

impl Labels {
    pub fn new(dims: &[usize], data: Vec<u8>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!("{} labels for a grid of {n}", data.len())));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Label 1 wherever `f >= level`.
    pub fn threshold(f: &SpatialField, level: f64) -> Self {
        Self {
            dims: f.dims().to_vec(),
            data: f.data().iter().map(|&x| u8::from(x >= level)).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Distinct nonzero labels in increasing order.
    pub fn labels(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.data {
            seen[l as usize] = true;
        }
        (1..=255u8).filter(|&l| seen[l as usize]).collect()
    }

    /// `labels o phi` with nearest-neighbour lookup.
    pub fn warp(&self, phi: &GridMap) -> Result<Labels> {
        if phi.dims() != self.dims.as_slice() {
            return Err(Error::Shape("labels and map live on different grids".into()));
        }
        let mut shape = [1usize; 3];
        shape[..self.dims.len()].copy_from_slice(&self.dims);
        let u = phi.displacement();
        let d = self.dims.len();
        let data = (0..self.data.len())
            .map(|idx| {
                let i = unravel(shape, idx);
                let mut j = [0usize; 3];
                for a in 0..3 {
                    let off = if a < d { u.comp(a)[idx] * shape[a] as f64 } else { 0.0 };
                    let p = (i[a] as f64 + off).round() as i64;
                    j[a] = p.rem_euclid(shape[a] as i64) as usize;
                }
                self.data[(j[0] * shape[1] + j[1]) * shape[2] + j[2]]
            })
            .collect();
        Ok(Labels {
            dims: self.dims.clone(),
            data,
        })
    }
}

/// Dice overlap of `label` between two label volumes; 1 when both sets are
/// empty.
pub fn dice(a: &Labels, b: &Labels, label: u8) -> Result<f64> {
    if a.dims != b.dims {
        return Err(Error::Shape("label volumes live on different grids".into()));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let (ia, ib) = (x == label, y == label);
        na += ia as usize;
        nb += ib as usize;
        both += (ia && ib) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Minimum and maximum of `det D phi`.
pub fn jacobian_extrema(phi: &GridMap) -> (f64, f64) {
    let j = jacobian_determinant(phi);
    (j.min(), j.max())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(v: &[f64]) -> SpatialField {
        SpatialField::new(&[v.len()], 1, v.to_vec()).unwrap()
    }

    #[test]
    fn mse_examples() {
        let i0 = field(&[0.0, 1.0, 2.0, 0.5]);
        let i1 = field(&[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(mse_rel(&i1, &i0, &i1), 0.0);
        assert!((mse_rel(&i0, &i0, &i1) - 100.0).abs() < 1e-12);
        let half = i0.zip_map(&i1, |a, b| 0.5 * (a + b));
        assert!((mse_rel(&half, &i0, &i1) - 25.0).abs() < 1e-12);
        assert_eq!(mse_rel(&i1, &i0, &i0), 0.0);
    }

    fn set(n: usize, on: impl Fn(usize) -> bool) -> Labels {
        Labels::new(&[n], (0..n).map(|i| u8::from(on(i))).collect()).unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = set(300, |i| i < 100);
        assert_eq!(dice(&a, &a, 1).unwrap(), 1.0);
        let b = set(300, |i| (200..300).contains(&i));
        assert_eq!(dice(&a, &b, 1).unwrap(), 0.0);
        let c = set(300, |i| (50..150).contains(&i));
        assert_eq!(dice(&a, &c, 1).unwrap(), 0.5);
        assert_eq!(dice(&a, &c, 7).unwrap(), 1.0);
    }

    #[test]
    fn nearest_warp_shifts_labels() {
        let a = Labels::new(&[4, 4], (0..16).map(|i| (i % 4) as u8).collect()).unwrap();
        let mut u = SpatialField::zeros(&[4, 4], 2);
        u.comp_mut(1).iter_mut().for_each(|x| *x = 0.25);
        let w = a.warp(&GridMap::from_displacement(u).unwrap()).unwrap();
        let want: Vec<u8> = (0..16).map(|i| ((i + 1) % 4) as u8).collect();
        assert_eq!(w.data(), want.as_slice());
        assert_eq!(a.labels(), vec![1, 2, 3]);
    }
}
