//! Minimal self-describing volume files: a short text header followed by a
//! raw little-endian payload.
//!
//! ```text
//! BLVOL 1
//! dims 64 64
//! spacing 0.015625 0.015625
//! components 1
//! dtype f32
//! end
//! <payload>
//! ```
//!
//! The payload is component-major; within a component the last axis varies
//! fastest.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::SpatialField;

use super::metrics::Labels;

const MAGIC: &str = "BLVOL 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    U8,
}

impl Dtype {
    fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::U8 => "u8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub components: usize,
    pub payload: Payload,
}

impl Volume {
    pub fn dtype(&self) -> Dtype {
        match self.payload {
            Payload::F32(_) => Dtype::F32,
            Payload::U8(_) => Dtype::U8,
        }
    }

    fn default_spacing(dims: &[usize]) -> Vec<f64> {
        dims.iter().map(|&n| 1.0 / n as f64).collect()
    }

    /// Single-precision copy of a grid field.
    pub fn from_field(f: &SpatialField) -> Self {
        Self {
            dims: f.dims().to_vec(),
            spacing: Self::default_spacing(f.dims()),
            components: f.ncomp(),
            payload: Payload::F32(f.data().iter().map(|&x| x as f32).collect()),
        }
    }

    pub fn from_labels(l: &Labels) -> Self {
        Self {
            dims: l.dims().to_vec(),
            spacing: Self::default_spacing(l.dims()),
            components: 1,
            payload: Payload::U8(l.data().to_vec()),
        }
    }

    pub fn to_field(&self) -> Result<SpatialField> {
        let data = match &self.payload {
            Payload::F32(v) => v.iter().map(|&x| x as f64).collect(),
            Payload::U8(v) => v.iter().map(|&x| x as f64).collect(),
        };
        SpatialField::new(&self.dims, self.components, data)
    }

    pub fn to_labels(&self) -> Result<Labels> {
        match &self.payload {
            Payload::U8(v) if self.components == 1 => Labels::new(&self.dims, v.clone()),
            _ => Err(Error::Shape("label volumes must be single-component u8".into())),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let join = |v: Vec<String>| v.join(" ");
        let mut out = format!(
            "{MAGIC}\ndims {}\nspacing {}\ncomponents {}\ndtype {}\nend\n",
            join(self.dims.iter().map(|d| d.to_string()).collect()),
            join(self.spacing.iter().map(|s| format!("{s:?}")).collect()),
            self.components,
            self.dtype().name(),
        )
        .into_bytes();
        match &self.payload {
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut rest = bytes;
        let mut line = || -> std::result::Result<&str, String> {
            let end = rest.iter().position(|&b| b == b'\n').ok_or("truncated header")?;
            let l = std::str::from_utf8(&rest[..end]).map_err(|_| "header is not UTF-8")?;
            rest = &rest[end + 1..];
            Ok(l)
        };
        if line()? != MAGIC {
            return Err(format!("missing {MAGIC:?} magic line"));
        }
        let (mut dims, mut spacing, mut components, mut dtype) = (None, None, 1usize, None);
        loop {
            let l = line()?;
            let (key, value) = l.split_once(' ').unwrap_or((l, ""));
            match key {
                "end" => break,
                "dims" => {
                    let v: std::result::Result<Vec<usize>, _> = value.split_whitespace().map(str::parse).collect();
                    dims = Some(v.map_err(|e| format!("dims: {e}"))?);
                }
                "spacing" => {
                    let v: std::result::Result<Vec<f64>, _> = value.split_whitespace().map(str::parse).collect();
                    spacing = Some(v.map_err(|e| format!("spacing: {e}"))?);
                }
                "components" => components = value.trim().parse().map_err(|e| format!("components: {e}"))?,
                "dtype" => {
                    dtype = Some(match value.trim() {
                        "f32" => Dtype::F32,
                        "u8" => Dtype::U8,
                        other => return Err(format!("dtype: unsupported {other:?}")),
                    })
                }
                "byte_order" if value.trim() == "little" => {}
                other => return Err(format!("unknown header field {other:?}")),
            }
        }
        let dims = dims.ok_or("dims: missing")?;
        if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
            return Err(format!("dims: expected 1 to 3 positive sizes, got {dims:?}"));
        }
        let spacing = spacing.unwrap_or_else(|| Self::default_spacing(&dims));
        if spacing.len() != dims.len() {
            return Err("spacing: one value per axis required".into());
        }
        let dtype = dtype.ok_or("dtype: missing")?;
        let count = dims.iter().product::<usize>() * components;
        if rest.len() != count * dtype.size() {
            return Err(format!(
                "payload: expected {} bytes, found {}",
                count * dtype.size(),
                rest.len()
            ));
        }
        let payload = match dtype {
            Dtype::F32 => Payload::F32(
                rest.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            Dtype::U8 => Payload::U8(rest.to_vec()),
        };
        Ok(Self {
            dims,
            spacing,
            components,
            payload,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::input(path, e.to_string()))?;
        Self::from_bytes(&bytes).map_err(|msg| Error::input(path, msg))
    }
}

pub fn read_field(path: &Path) -> Result<SpatialField> {
    Volume::read(path)?.to_field().map_err(|e| Error::input(path, e.to_string()))
}

pub fn read_labels(path: &Path) -> Result<Labels> {
    Volume::read(path)?.to_labels().map_err(|e| Error::input(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            n0 in 1usize..6, n1 in 1usize..6, ncomp in 1usize..3,
            seed in proptest::collection::vec(any::<f32>(), 72),
        ) {
            let len = n0 * n1 * ncomp;
            let vol = Volume {
                dims: vec![n0, n1],
                spacing: vec![0.5, 0.25],
                components: ncomp,
                payload: Payload::F32(seed[..len].to_vec()),
            };
            let bytes = vol.to_bytes();
            let back = Volume::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let f = SpatialField::from_fn(&[5, 7], |x| (x[0] * 3.0).sin() + x[1]);
        let path = dir.path().join("a.vol");
        Volume::from_field(&f).write(&path).unwrap();
        let back = Volume::read(&path).unwrap();
        assert_eq!(back, Volume::from_field(&f));
        back.write(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), Volume::from_field(&f).to_bytes());
        let g = back.to_field().unwrap();
        assert!(g.zip_map(&f, |a, b| a - b).max_abs() < 1e-6);

        let l = Labels::new(&[2, 3], vec![0, 1, 2, 0, 1, 9]).unwrap();
        let p = dir.path().join("l.vol");
        Volume::from_labels(&l).write(&p).unwrap();
        assert_eq!(read_labels(&p).unwrap(), l);
    }

    #[test]
    fn malformed_files_name_the_problem() {
        let good = Volume::from_field(&SpatialField::zeros(&[2, 2], 1)).to_bytes();
        let cut = &good[..good.len() - 1];
        assert!(Volume::from_bytes(cut).unwrap_err().contains("payload"));
        assert!(Volume::from_bytes(b"nope\n").unwrap_err().contains("magic"));
        let text = String::from_utf8_lossy(&good).replace("dtype f32", "dtype f64");
        assert!(Volume::from_bytes(text.as_bytes()).unwrap_err().contains("dtype"));
        let dir = tempfile::tempdir().unwrap();
        let err = read_field(&dir.path().join("missing.vol")).unwrap_err();
        assert!(matches!(err, Error::Input { .. }));
    }
}
