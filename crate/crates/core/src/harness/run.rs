use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::{dice, jacobian_extrema, Labels};
use super::synth::synthesize;
use super::volume::{read_field, read_labels, Volume};
use crate::error::{Error, Result};
use crate::grid::SpatialField;
use crate::objective::Problem;
use crate::optimizer::{minimize_with, IterationRecord, Outcome, Status};

/// Loaded registration inputs.
pub struct Inputs {
    pub template: SpatialField,
    pub target: SpatialField,
    pub labels: Option<(Labels, Labels)>,
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        if let Some(s) = &cfg.input.synthetic {
            let pair = synthesize(s)?;
            return Ok(Self {
                template: pair.template,
                target: pair.target,
                labels: pair.labels,
            });
        }
        let (t, g) = match (&cfg.input.template, &cfg.input.target) {
            (Some(t), Some(g)) => (t, g),
            _ => return Err(Error::Config("input: template and target are both required".into())),
        };
        let template = read_field(t)?;
        let target = read_field(g)?;
        if !template.same_grid(&target) || template.ncomp() != 1 {
            return Err(Error::input(g, "target must be a scalar image on the template grid"));
        }
        let labels = match (&cfg.input.template_labels, &cfg.input.target_labels) {
            (Some(a), Some(b)) => {
                let (la, lb) = (read_labels(a)?, read_labels(b)?);
                for (l, p) in [(&la, a), (&lb, b)] {
                    if l.dims() != template.dims() {
                        return Err(Error::input(p, "labels do not match the image grid"));
                    }
                }
                Some((la, lb))
            }
            (None, None) => None,
            _ => return Err(Error::Config("input: give both label volumes or neither".into())),
        };
        Ok(Self {
            template,
            target,
            labels,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelOverlap {
    pub label: u8,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub status: String,
    pub outer_iterations: usize,
    pub pcg_iterations: usize,
    pub energy: f64,
    pub mse_rel: f64,
    pub grad_rel: f64,
    pub jacobian_min: f64,
    pub jacobian_max: f64,
    pub max_divergence: f64,
    pub integration_steps: usize,
    pub dice: Vec<LabelOverlap>,
    pub wall_time: f64,
    pub history: Vec<Record>,
    pub config: String,
}

/// Serializable copy of an [`IterationRecord`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub outer: usize,
    pub energy: f64,
    pub mse_rel: f64,
    pub grad_rel: f64,
    pub pcg_iterations: usize,
    pub step: f64,
    pub negative_curvature: bool,
    pub wall_time: f64,
}

impl From<&IterationRecord> for Record {
    fn from(r: &IterationRecord) -> Self {
        Self {
            outer: r.outer,
            energy: r.energy,
            mse_rel: r.mse_rel,
            grad_rel: r.grad_rel,
            pcg_iterations: r.pcg_iterations,
            step: r.step,
            negative_curvature: r.negative_curvature,
            wall_time: r.wall_time,
        }
    }
}

impl RegistrationReport {
    pub fn new(problem: &Problem, outcome: &Outcome, labels: Option<&(Labels, Labels)>, config: String) -> Result<Self> {
        let phi = problem.final_map(&outcome.evaluation);
        let (jacobian_min, jacobian_max) = jacobian_extrema(&phi);
        let mut overlaps = Vec::new();
        if let Some((a, b)) = labels {
            let warped = a.warp(&phi)?;
            let mut all = a.labels();
            all.extend(b.labels());
            all.sort_unstable();
            all.dedup();
            for label in all {
                overlaps.push(LabelOverlap {
                    label,
                    before: dice(a, b, label)?,
                    after: dice(&warped, b, label)?,
                });
            }
        }
        let last = outcome.final_record();
        Ok(Self {
            status: outcome.status.to_string(),
            outer_iterations: outcome.outer_iterations(),
            pcg_iterations: outcome.total_pcg_iterations(),
            energy: last.energy,
            mse_rel: last.mse_rel,
            grad_rel: last.grad_rel,
            jacobian_min,
            jacobian_max,
            max_divergence: outcome.max_divergence,
            integration_steps: outcome.evaluation.integration_steps(),
            dice: overlaps,
            wall_time: outcome.wall_time,
            history: outcome.history.iter().map(Record::from).collect(),
            config,
        })
    }

    /// Per-iteration metrics. Wall times are left out so that identical
    /// runs give identical files; they are kept in the text report.
    pub fn csv(&self) -> String {
        let mut out = String::from("outer,energy,mse_rel,grad_rel,pcg_iterations,step,negative_curvature\n");
        for r in &self.history {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{},{:e},{}",
                r.outer, r.energy, r.mse_rel, r.grad_rel, r.pcg_iterations, r.step, r.negative_curvature
            );
        }
        out
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "status             {}", self.status);
        let _ = writeln!(s, "outer iterations   {}", self.outer_iterations);
        let _ = writeln!(s, "PCG iterations     {}", self.pcg_iterations);
        let _ = writeln!(s, "energy             {:.6e}", self.energy);
        let _ = writeln!(s, "MSE_rel [%]        {:.4}", self.mse_rel);
        let _ = writeln!(s, "|g|_inf,rel        {:.4e}", self.grad_rel);
        let _ = writeln!(s, "det D phi          [{:.4}, {:.4}]", self.jacobian_min, self.jacobian_max);
        let _ = writeln!(s, "max |div v|        {:.3e}", self.max_divergence);
        let _ = writeln!(s, "integration steps  {}", self.integration_steps);
        for d in &self.dice {
            let _ = writeln!(s, "DSC label {:<3}      {:.4} -> {:.4}", d.label, d.before, d.after);
        }
        let _ = writeln!(s, "wall time [s]      {:.3}", self.wall_time);
        let _ = writeln!(s, "\n{:>5} {:>13} {:>10} {:>11} {:>4} {:>9} {:>9}", "iter", "energy", "MSE_rel", "|g|rel", "pcg", "step", "time");
        for r in &self.history {
            let _ = writeln!(
                s,
                "{:>5} {:>13.6e} {:>10.4} {:>11.4e} {:>4} {:>9.3e} {:>9.3}{}",
                r.outer,
                r.energy,
                r.mse_rel,
                r.grad_rel,
                r.pcg_iterations,
                r.step,
                r.wall_time,
                if r.negative_curvature { "  negative curvature" } else { "" }
            );
        }
        let _ = writeln!(s, "\n# configuration\n{}", self.config);
        s
    }

    pub fn stalled(&self) -> bool {
        self.status == Status::Stalled.to_string()
    }
}

/// Build the problem from a config and its inputs.
pub fn build_problem(cfg: &RunConfig, inputs: &Inputs) -> Result<Problem> {
    let domain = cfg.domain.build(inputs.template.dims())?;
    Problem::new(domain, inputs.template.clone(), inputs.target.clone(), cfg.problem.clone())
}

/// Run a registration without touching the file system.
pub fn register(
    cfg: &RunConfig,
    inputs: &Inputs,
    observe: impl FnMut(&IterationRecord),
) -> Result<(Problem, Outcome, RegistrationReport)> {
    cfg.validate()?;
    let problem = build_problem(cfg, inputs)?;
    let outcome = minimize_with(&problem, &problem.zero_velocity(), &cfg.optimizer, observe)?;
    let report = RegistrationReport::new(&problem, &outcome, inputs.labels.as_ref(), cfg.echo())?;
    Ok((problem, outcome, report))
}

/// Register, then write `warped.vol`, `displacement.vol`,
/// `difference.vol`, `iterations.csv`, `report.txt` and `report.toml`
/// under `dir`.
pub fn run(cfg: &RunConfig, observe: impl FnMut(&IterationRecord)) -> Result<RegistrationReport> {
    let inputs = Inputs::load(cfg)?;
    let (problem, outcome, report) = register(cfg, &inputs, observe)?;
    write_outputs(&cfg.output.dir, &problem, &outcome, &report)?;
    Ok(report)
}

pub fn write_outputs(dir: &Path, problem: &Problem, outcome: &Outcome, report: &RegistrationReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let warped = outcome.evaluation.warped();
    Volume::from_field(warped).write(&dir.join("warped.vol"))?;
    let phi = problem.final_map(&outcome.evaluation);
    Volume::from_field(phi.displacement()).write(&dir.join("displacement.vol"))?;
    let diff = warped.zip_map(problem.target(), |a, b| a - b);
    Volume::from_field(&diff).write(&dir.join("difference.vol"))?;
    fs::write(dir.join("iterations.csv"), report.csv())?;
    fs::write(dir.join("report.txt"), report.render())?;
    let toml = toml::to_string(report).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join("report.toml"), toml)?;
    Ok(())
}

/// Read back a report written by [`run`].
pub fn load_report(dir: &Path) -> Result<RegistrationReport> {
    let path = dir.join("report.toml");
    let text = fs::read_to_string(&path).map_err(|e| Error::input(&path, e.to_string()))?;
    toml::from_str(&text).map_err(|e| Error::input(&path, e.to_string()))
}

/// One line per report, for comparing runs.
pub fn summary_table(reports: &[(String, RegistrationReport)]) -> String {
    let mut s = format!(
        "{:<24} {:>14} {:>6} {:>5} {:>10} {:>11} {:>17} {:>9}\n",
        "run", "status", "outer", "pcg", "MSE_rel", "|g|rel", "det D phi", "time"
    );
    for (name, r) in reports {
        let _ = writeln!(
            s,
            "{:<24} {:>14} {:>6} {:>5} {:>10.4} {:>11.4e} {:>8.4},{:>8.4} {:>9.3}",
            name, r.status, r.outer_iterations, r.pcg_iterations, r.mse_rel, r.grad_rel, r.jacobian_min, r.jacobian_max, r.wall_time
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{PairKind, SynthConfig};

    fn config(dir: &Path, shift: f64) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.input.synthetic = Some(SynthConfig {
            kind: PairKind::Translation,
            size: 32,
            shift,
            ..Default::default()
        });
        cfg.domain.bounds = vec![8, 8];
        cfg.problem.time_steps = 4;
        cfg.optimizer.max_outer = 3;
        cfg.output.dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn identical_inputs_converge_immediately() {
        let dir = tempfile::tempdir().unwrap();
        let report = run(&config(dir.path(), 0.0), |_| {}).unwrap();
        assert_eq!(report.outer_iterations, 0);
        assert_eq!(report.mse_rel, 0.0);
        assert_eq!(report.status, "converged");
    }

    #[test]
    fn writes_all_outputs_and_reads_report_back() {
        let dir = tempfile::tempdir().unwrap();
        let report = run(&config(dir.path(), 0.08), |_| {}).unwrap();
        for f in ["warped.vol", "displacement.vol", "difference.vol", "iterations.csv", "report.txt", "report.toml"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back = load_report(dir.path()).unwrap();
        assert_eq!(back.history, report.history);
        assert_eq!(back.csv(), report.csv());
        assert!(report.mse_rel < 100.0);
        assert!(report.jacobian_min > 0.0 && report.jacobian_min <= report.jacobian_max);
        let disp = Volume::read(&dir.path().join("displacement.vol")).unwrap();
        assert_eq!(disp.components, 2);
        assert!(summary_table(&[("a".into(), report)]).lines().count() == 2);
    }

    #[test]
    fn c_to_circle_reports_dice() {
        let mut cfg = config(Path::new("unused"), 0.0);
        cfg.input.synthetic = Some(SynthConfig {
            kind: PairKind::CToCircle,
            size: 32,
            ..Default::default()
        });
        cfg.optimizer.max_outer = 2;
        let inputs = Inputs::load(&cfg).unwrap();
        let (_, _, report) = register(&cfg, &inputs, |_| {}).unwrap();
        assert_eq!(report.dice.len(), 1);
        assert!(report.dice[0].after >= 0.0 && report.dice[0].after <= 1.0);
    }
}
