use std::path::Path;

use cadritz::network::{NetworkConfig, ParamSet};
use cadritz::problems::{Preset, Problem, Solution};
use serde::{Deserialize, Serialize};

use crate::config::ProblemKind;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub label: String,
    pub config: NetworkConfig,
    pub params: Vec<f64>,
}

/// Trained parameters of every network of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub problem: ProblemKind,
    pub preset: Preset,
    pub seed: u64,
    pub epochs: usize,
    pub networks: Vec<NetworkEntry>,
}

impl Checkpoint {
    pub fn new(problem: ProblemKind, preset: Preset, seed: u64, epochs: usize, labels: &[String], sets: &[ParamSet]) -> Self {
        Self {
            problem,
            preset,
            seed,
            epochs,
            networks: labels
                .iter()
                .zip(sets)
                .map(|(label, s)| NetworkEntry {
                    label: label.clone(),
                    config: s.config,
                    params: s.params.clone(),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks the networks against `problem` and returns the solution.
    pub fn solution(&self, problem: &Problem) -> Result<Solution, CliError> {
        let slots = &problem.spec.networks;
        if self.preset != problem.preset || slots.len() != self.networks.len() {
            return Err(CliError::Config(format!(
                "checkpoint holds {} networks for preset {}, the config expects {} for preset {}",
                self.networks.len(),
                self.preset,
                slots.len(),
                problem.preset
            )));
        }
        let mut networks = Vec::with_capacity(slots.len());
        for (slot, entry) in slots.iter().zip(&self.networks) {
            if slot.config != entry.config || slot.label != entry.label {
                return Err(CliError::Config(format!(
                    "checkpoint network {:?} does not match {:?}",
                    entry.label, slot.label
                )));
            }
            networks.push(ParamSet::from_vec(entry.config, entry.params.clone())?);
        }
        Ok(Solution {
            networks,
            patch_network: problem.spec.patch_network.clone(),
        })
    }
}
