//! TOML run configuration.
//!
//! ```toml
//! [input]
//! template = "i0.vol"        # or a [input.synthetic] table
//! target = "i1.vol"
//!
//! [domain]
//! bounds = [16, 16]
//! alpha = 0.002
//! order = 2
//!
//! [problem]
//! variant = "deformation"
//! sigma2 = 0.01
//!
//! [optimizer]
//! method = "gauss_newton"
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::SynthConfig;
use crate::error::{Error, Result};
use crate::objective::ProblemConfig;
use crate::optimizer::OptimizerConfig;
use crate::spectral::{BlDomain, RegularizerSymbol};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub template: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub template_labels: Option<PathBuf>,
    pub target_labels: Option<PathBuf>,
    pub synthetic: Option<SynthConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    /// Frequency bounds per axis; empty means `N / 4`.
    pub bounds: Vec<usize>,
    pub alpha: f64,
    pub order: u32,
    pub symbol: RegularizerSymbol,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            bounds: Vec::new(),
            alpha: 0.002,
            order: 2,
            symbol: RegularizerSymbol::Discrete,
        }
    }
}

impl DomainConfig {
    pub fn build(&self, grid: &[usize]) -> Result<BlDomain> {
        let bounds = if self.bounds.is_empty() {
            grid.iter().map(|&n| (n / 4).max(1)).collect()
        } else {
            self.bounds.clone()
        };
        Ok(BlDomain::new(grid, &bounds, self.alpha, self.order)?.with_symbol(self.symbol))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    pub domain: DomainConfig,
    pub problem: ProblemConfig,
    pub optimizer: OptimizerConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::input(path, e.to_string()))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        rebase(&mut cfg.input.template);
        rebase(&mut cfg.input.target);
        rebase(&mut cfg.input.template_labels);
        rebase(&mut cfg.input.target_labels);
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.optimizer.validate()?;
        let files = self.input.template.is_some() || self.input.target.is_some();
        match (&self.input.synthetic, files) {
            (Some(_), true) => Err(Error::Config(
                "input: give either template/target files or a synthetic pair, not both".into(),
            )),
            (None, false) => Err(Error::Config("input: template and target are required".into())),
            (None, true) if self.input.template.is_none() || self.input.target.is_none() => {
                Err(Error::Config("input: template and target are both required".into()))
            }
            _ => Ok(()),
        }
    }

    /// The fully defaulted config as TOML.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::Variant;
    use crate::optimizer::Method;

    #[test]
    fn parses_and_defaults() {
        let cfg = RunConfig::from_toml(
            r#"
            [input.synthetic]
            kind = "swirl"
            size = 32
            [domain]
            bounds = [8, 8]
            [problem]
            variant = "state"
            gamma = 1
            [optimizer]
            method = "newton"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.problem.variant, Variant::State);
        assert_eq!(cfg.optimizer.method, Method::Newton);
        assert_eq!(cfg.optimizer.max_outer, 50);
        let echoed = RunConfig::from_toml(&cfg.echo()).unwrap();
        assert_eq!(echoed, cfg);
        let dom = cfg.domain.build(&[32, 32]).unwrap();
        assert_eq!(dom.bounds(), &[8, 8]);
    }

    #[test]
    fn errors_name_the_field() {
        let err = RunConfig::from_toml("[problem]\nsigma = 1.0\n[input.synthetic]\n").unwrap_err();
        assert!(err.to_string().contains("sigma"), "{err}");
        let err = RunConfig::from_toml("[input]\ntemplate = \"a.vol\"\n").unwrap_err();
        assert!(err.to_string().contains("target"), "{err}");
        let err = RunConfig::from_toml("[input.synthetic]\n[problem]\ngamma = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
