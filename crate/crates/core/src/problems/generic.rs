use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Preset, Problem};
use crate::error::Result;
use crate::functional::{
    AntiperiodicMode, DgPart, EnergySpec, EnergyTerm, Field, NetworkSlot, TermKind,
};
use crate::geometry::{EdgeTag, MultiPatchDomain, PatchFile};
use crate::network::NetworkConfig;
use crate::optimizer::Schedule;
use crate::sampling::SampleBudgets;

/// `-div(k grad u) = f` on an imported geometry with homogeneous boundary
/// data; one network per subdomain label for the decomposed presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoissonCase {
    /// Coefficient per material name; missing materials use 1.
    pub coefficients: BTreeMap<String, f64>,
    pub source: f64,
    pub beta: f64,
    pub blocks: usize,
    pub neurons: usize,
    pub weighted: bool,
}

impl Default for PoissonCase {
    fn default() -> Self {
        Self {
            coefficients: BTreeMap::new(),
            source: 1.0,
            beta: 1e3,
            blocks: 4,
            neurons: 10,
            weighted: false,
        }
    }
}

impl PoissonCase {
    pub fn load(path: &Path) -> Result<MultiPatchDomain> {
        let text = std::fs::read_to_string(path)?;
        PatchFile::from_json(&text)?.into_domain()
    }

    pub fn build(&self, domain: MultiPatchDomain, preset: Preset) -> Result<Problem> {
        let n = domain.patches.len();
        let groups = domain.groups();
        let config = NetworkConfig::new(self.blocks, self.neurons, true);
        let (networks, patch_network) = match preset {
            Preset::Single => (
                vec![NetworkSlot {
                    label: "global".into(),
                    config,
                }],
                vec![0; n],
            ),
            _ => (
                groups
                    .iter()
                    .map(|g| NetworkSlot {
                        label: g.clone(),
                        config,
                    })
                    .collect(),
                domain
                    .patches
                    .iter()
                    .map(|p| groups.iter().position(|g| g == p.group()).expect("listed group"))
                    .collect(),
            ),
        };
        let interfaces = Problem::coupled_interfaces(&domain, &patch_network);
        let dirichlet = domain.edges_with(EdgeTag::Dirichlet);
        let neumann = domain.edges_with(EdgeTag::Neumann);
        let coefficients = domain
            .patches
            .iter()
            .map(|p| self.coefficients.get(&p.material).copied().unwrap_or(1.0))
            .collect();

        let mut terms = vec![EnergyTerm::new(
            "energy",
            TermKind::Interior {
                patches: (0..n).collect(),
                scale: 0.5,
                load: Some(Field::constant(self.source)),
            },
        )];
        if !neumann.is_empty() {
            terms.push(EnergyTerm::new(
                "neumann",
                TermKind::Neumann {
                    edges: neumann.clone(),
                    g: Field::zero(),
                },
            ));
        }
        let pairs: Vec<usize> = (0..domain.mirrors.len()).collect();
        match preset {
            Preset::Single | Preset::Coupling => {
                if !dirichlet.is_empty() {
                    terms.push(EnergyTerm::new(
                        "dirichlet",
                        TermKind::DirichletPenalty {
                            edges: dirichlet.clone(),
                            g: Field::zero(),
                            beta: self.beta,
                        },
                    ));
                }
                if preset == Preset::Coupling && !interfaces.is_empty() {
                    terms.push(EnergyTerm::new(
                        "interface_coupling",
                        TermKind::Coupling {
                            interfaces: interfaces.clone(),
                            beta: self.beta,
                        },
                    ));
                }
                if !pairs.is_empty() {
                    terms.push(EnergyTerm::new(
                        "antiperiodic",
                        TermKind::Antiperiodic {
                            pairs,
                            beta: self.beta,
                            mode: AntiperiodicMode::Penalty,
                            weighted: false,
                        },
                    ));
                }
            }
            Preset::Dg => {
                if !dirichlet.is_empty() {
                    terms.push(EnergyTerm::new(
                        "dirichlet",
                        TermKind::DgDirichlet {
                            edges: dirichlet.clone(),
                            g: Field::zero(),
                            beta: self.beta,
                            part: DgPart::Full,
                            weighted: self.weighted,
                        },
                    ));
                }
                if !interfaces.is_empty() {
                    terms.push(EnergyTerm::new(
                        "interface",
                        TermKind::DgInterface {
                            interfaces: interfaces.clone(),
                            beta: self.beta,
                            part: DgPart::Full,
                            weighted: self.weighted,
                        },
                    ));
                }
                if !pairs.is_empty() {
                    terms.push(EnergyTerm::new(
                        "antiperiodic",
                        TermKind::Antiperiodic {
                            pairs,
                            beta: self.beta,
                            mode: AntiperiodicMode::Dg(DgPart::Full),
                            weighted: self.weighted,
                        },
                    ));
                }
            }
        }

        let spec = EnergySpec {
            networks,
            patch_network,
            coefficients,
            terms,
        };
        let budgets = SampleBudgets {
            interior: 4000,
            dirichlet: if dirichlet.is_empty() { 0 } else { 800 },
            neumann: if neumann.is_empty() { 0 } else { 800 },
            interface: if interfaces.is_empty() { 0 } else { 600 },
            antiperiodic: if domain.mirrors.is_empty() { 0 } else { 600 },
            min_per_set: 8,
            interior_groups: None,
        };
        Ok(Problem {
            name: "imported".into(),
            preset,
            domain,
            spec,
            interfaces,
            desk_budgets: budgets.scaled(0.5),
            budgets,
            schedule: Schedule::constant(5000, 1e-3),
            desk_schedule: Schedule::constant(2000, 1e-3),
            reference: None,
        })
    }
}
