use std::path::{Path, PathBuf};

use cadritz::optimizer::{AdamConfig, Schedule};
use cadritz::problems::{CylinderCase, PmsmCase, PmsmSource, PoissonCase, Preset, Problem};
use cadritz::sampling::SampleBudgets;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Cylinder,
    Pmsm,
    Imported,
}

/// Penalty factors that replace the problem defaults when set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaOverrides {
    pub interface: Option<f64>,
    pub dirichlet: Option<f64>,
    pub rotor: Option<f64>,
    pub stator: Option<f64>,
}

/// Everything a run depends on. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub preset: Preset,
    /// Patch file; required for `imported`, optional for `pmsm`.
    pub geometry: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub desk_scale: bool,
    pub budgets: Option<SampleBudgets>,
    pub schedule: Option<Schedule>,
    pub beta: BetaOverrides,
    /// Weight DG flux averages by the material coefficient.
    pub weighted: Option<bool>,
    pub adam: AdamConfig,
    /// Fresh interior points for evaluation; defaults to the training count.
    pub eval_samples: Option<usize>,
    pub line_points: usize,
    pub log_every: usize,
    pub checkpoint_every: Option<usize>,
    pub cylinder: CylinderCase,
    pub pmsm: PmsmCase,
    pub poisson: PoissonCase,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Cylinder,
            preset: Preset::Dg,
            geometry: None,
            seed: 0,
            out: PathBuf::from("out"),
            desk_scale: false,
            budgets: None,
            schedule: None,
            beta: BetaOverrides::default(),
            weighted: None,
            adam: AdamConfig::default(),
            eval_samples: None,
            line_points: 401,
            log_every: 500,
            checkpoint_every: None,
            cylinder: CylinderCase::default(),
            pmsm: PmsmCase::default(),
            poisson: PoissonCase::default(),
        }
    }
}

/// A config together with the problem it describes.
pub struct Resolved {
    pub config: RunConfig,
    pub problem: Problem,
    pub budgets: SampleBudgets,
    pub schedule: Schedule,
}

impl RunConfig {
    /// Reads a config file; relative geometry paths are taken relative to
    /// the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(g) = &config.geometry {
            if g.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.geometry = Some(base.join(g));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(b) = &self.budgets {
            b.validate()?;
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        if self.eval_samples == Some(0) {
            return Err(CliError::Config("eval_samples must be at least 1".into()));
        }
        if self.problem == ProblemKind::Imported && self.geometry.is_none() {
            return Err(CliError::Config("the imported problem needs a geometry file".into()));
        }
        Ok(())
    }

    pub fn resolve(self) -> Result<Resolved, CliError> {
        self.validate()?;
        let b = &self.beta;
        let weighted = self.weighted;
        let problem = match self.problem {
            ProblemKind::Cylinder => {
                let mut case = self.cylinder.clone();
                case.beta_i = b.interface.unwrap_or(case.beta_i);
                case.beta_d = b.dirichlet.unwrap_or(case.beta_d);
                case.weighted = weighted.unwrap_or(case.weighted);
                case.build(self.preset)?
            }
            ProblemKind::Pmsm => {
                let mut case = self.pmsm.clone();
                case.beta_rotor = b.rotor.unwrap_or(case.beta_rotor);
                case.beta_stator = b.stator.unwrap_or(case.beta_stator);
                case.weighted = weighted.unwrap_or(case.weighted);
                let source = match &self.geometry {
                    Some(p) => PmsmSource::Imported(p.clone()),
                    None => PmsmSource::Procedural,
                };
                case.build(self.preset, &source)?
            }
            ProblemKind::Imported => {
                let mut case = self.poisson.clone();
                case.beta = b.dirichlet.or(b.interface).unwrap_or(case.beta);
                case.weighted = weighted.unwrap_or(case.weighted);
                let path = self.geometry.as_ref().expect("validated");
                case.build(PoissonCase::load(path)?, self.preset)?
            }
        };
        let budgets = self
            .budgets
            .clone()
            .unwrap_or_else(|| problem.budgets(self.desk_scale).clone());
        let schedule = self
            .schedule
            .clone()
            .unwrap_or_else(|| problem.schedule(self.desk_scale).clone());
        Ok(Resolved {
            config: self,
            problem,
            budgets,
            schedule,
        })
    }
}
