//! Built-in benchmark problems and solution diagnostics.

mod cylinder;
mod generic;
mod metrics;
mod pmsm;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::EnergySpec;
use crate::geometry::MultiPatchDomain;
use crate::optimizer::Schedule;
use crate::sampling::{SampleBudgets, SamplePlan};

pub use cylinder::CylinderCase;
pub use generic::PoissonCase;
pub use metrics::{
    consistency_report, error_metrics, field_dump, interface_flux_check, line_scan, locate,
    write_field_csv, write_line_scan_csv, Consistency, FieldRow, FluxCheck, LineScanRow, Metrics,
    Potential, Solution,
};
pub use pmsm::{PmsmCase, PmsmSource};

/// Which functional a problem is solved with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// One network on the whole domain.
    Single,
    /// One network per subdomain, coupled by DG interface terms.
    Dg,
    /// One network per subdomain, coupled by continuity penalties.
    Coupling,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Single, Preset::Dg, Preset::Coupling];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Single => "single",
            Preset::Dg => "dg",
            Preset::Coupling => "coupling",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}")))
    }
}

/// Closed-form solution `(u, grad u)` on a given patch.
#[derive(Clone)]
pub struct Reference(Arc<dyn Fn(usize, [f64; 2]) -> (f64, [f64; 2]) + Send + Sync>);

impl Reference {
    pub fn new(f: impl Fn(usize, [f64; 2]) -> (f64, [f64; 2]) + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn eval(&self, patch: usize, x: [f64; 2]) -> (f64, [f64; 2]) {
        (self.0)(patch, x)
    }
}

impl fmt::Debug for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Reference")
    }
}

/// A ready-to-train problem: geometry, functional and default budgets.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub preset: Preset,
    pub domain: MultiPatchDomain,
    pub spec: EnergySpec,
    /// Interfaces sampled for training (those between different networks).
    pub interfaces: Vec<usize>,
    pub budgets: SampleBudgets,
    pub desk_budgets: SampleBudgets,
    pub schedule: Schedule,
    pub desk_schedule: Schedule,
    pub reference: Option<Reference>,
}

impl Problem {
    pub fn budgets(&self, desk: bool) -> &SampleBudgets {
        if desk {
            &self.desk_budgets
        } else {
            &self.budgets
        }
    }

    pub fn schedule(&self, desk: bool) -> &Schedule {
        if desk {
            &self.desk_schedule
        } else {
            &self.schedule
        }
    }

    /// Training plan with the given budgets.
    pub fn plan(&self, budgets: &SampleBudgets, skip: u64) -> Result<SamplePlan> {
        SamplePlan::build(&self.domain, budgets, &self.interfaces, skip)
    }

    /// Interfaces whose two sides belong to different networks.
    pub fn coupled_interfaces(domain: &MultiPatchDomain, patch_network: &[usize]) -> Vec<usize> {
        domain
            .interfaces
            .iter()
            .enumerate()
            .filter(|(_, i)| patch_network[i.k] != patch_network[i.l])
            .map(|(n, _)| n)
            .collect()
    }
}
