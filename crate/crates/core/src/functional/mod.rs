//! Energy functionals and their sampled discretization.
//!
//! An [`EnergySpec`] is an ordered list of terms together with the networks
//! that represent the solution on each patch. Every term integrates over one
//! or more sample sets of a [`SamplePlan`](crate::sampling::SamplePlan); each
//! set contributes the mean of its weighted samples.
//!
//! Two evaluation routes share the compiled sample layout: [`Compiled`]
//! evaluates the loss and its parameter gradient with batched networks, and
//! [`assemble_loss`] builds the same loss as a node of an [`ExprGraph`].
//!
//! On interfaces the jump is `u_k - u_l` and the flux average is
//! `(grad u_k + grad u_l) . n / 2` with `n` pointing out of side `k`. On
//! anti-periodic pairs the jump is `u_L + u_R` and the flux average uses the
//! outward normal of each side.
//!
//! [`ExprGraph`]: crate::autodiff::ExprGraph

mod compile;
mod graph;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::Edge;
use crate::network::NetworkConfig;

pub use compile::{Compiled, Evaluation};
pub use graph::{assemble_loss, LossNodes};

/// Data on the domain or a boundary, evaluated at a point and the outward
/// normal there (the normal is zero for interior points).
#[derive(Clone)]
pub struct Field(Arc<dyn Fn([f64; 2], [f64; 2]) -> f64 + Send + Sync>);

impl Field {
    pub fn new(f: impl Fn([f64; 2], [f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn eval(&self, x: [f64; 2], n: [f64; 2]) -> f64 {
        (self.0)(x, n)
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Field")
    }
}

/// Which pieces of a DG term to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgPart {
    /// Consistency and penalty together.
    Full,
    /// `-{grad u . n} [u]` only.
    Consistency,
    /// `beta/2 [u]^2` only.
    Penalty,
}

impl DgPart {
    fn consistency(self) -> bool {
        self != DgPart::Penalty
    }

    fn penalty(self) -> bool {
        self != DgPart::Consistency
    }
}

/// Form of the anti-periodic coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntiperiodicMode {
    /// `beta (u_L + u_R)^2`.
    Penalty,
    /// DG consistency and/or penalty with jump `u_L + u_R`.
    Dg(DgPart),
}

#[derive(Debug, Clone)]
pub enum TermKind {
    /// `scale * kappa |grad u|^2 - f u` over the listed patches.
    Interior {
        patches: Vec<usize>,
        scale: f64,
        load: Option<Field>,
    },
    /// `-(-m_y, m_x) . grad u` over the listed patches.
    Magnetization { patches: Vec<usize>, m: [f64; 2] },
    /// `-u g_N` over boundary edges.
    Neumann {
        edges: Vec<(usize, Edge)>,
        g: Field,
    },
    /// `beta (u - g_D)^2` over boundary edges.
    DirichletPenalty {
        edges: Vec<(usize, Edge)>,
        g: Field,
        beta: f64,
    },
    /// `-(grad u . n)(u - g_D) + beta/2 (u - g_D)^2` over boundary edges.
    DgDirichlet {
        edges: Vec<(usize, Edge)>,
        g: Field,
        beta: f64,
        part: DgPart,
        weighted: bool,
    },
    /// `-{grad u . n}[u] + beta/2 [u]^2` over interfaces (domain indices).
    DgInterface {
        interfaces: Vec<usize>,
        beta: f64,
        part: DgPart,
        weighted: bool,
    },
    /// `beta (u_k - u_l)^2` over interfaces.
    Coupling { interfaces: Vec<usize>, beta: f64 },
    /// Anti-periodic coupling over mirror pairs (domain indices).
    Antiperiodic {
        pairs: Vec<usize>,
        beta: f64,
        mode: AntiperiodicMode,
        weighted: bool,
    },
}

impl TermKind {
    pub fn name(&self) -> &'static str {
        match self {
            TermKind::Interior { .. } => "interior",
            TermKind::Magnetization { .. } => "magnetization",
            TermKind::Neumann { .. } => "neumann",
            TermKind::DirichletPenalty { .. } => "dirichlet_penalty",
            TermKind::DgDirichlet { .. } => "dg_dirichlet",
            TermKind::DgInterface { .. } => "dg_interface",
            TermKind::Coupling { .. } => "coupling_penalty",
            TermKind::Antiperiodic {
                mode: AntiperiodicMode::Penalty,
                ..
            } => "antiperiodic_penalty",
            TermKind::Antiperiodic { .. } => "dg_antiperiodic",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnergyTerm {
    pub label: String,
    pub kind: TermKind,
}

impl EnergyTerm {
    pub fn new(label: impl Into<String>, kind: TermKind) -> Self {
        Self {
            label: label.into(),
            kind,
        }
    }
}

/// A named network and its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSlot {
    pub label: String,
    pub config: NetworkConfig,
}

#[derive(Debug, Clone)]
pub struct EnergySpec {
    pub networks: Vec<NetworkSlot>,
    /// Network index of every patch.
    pub patch_network: Vec<usize>,
    /// Material coefficient (permittivity or reluctivity) of every patch.
    pub coefficients: Vec<f64>,
    pub terms: Vec<EnergyTerm>,
}

impl EnergySpec {
    pub fn total_parameters(&self) -> usize {
        self.networks
            .iter()
            .map(|n| crate::network::count_parameters(&n.config))
            .sum()
    }

    pub fn term_labels(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.label.clone()).collect()
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.patch_network.len() != self.coefficients.len() {
            return Err(Error::Config(format!(
                "{} patch networks but {} coefficients",
                self.patch_network.len(),
                self.coefficients.len()
            )));
        }
        if let Some(k) = self
            .patch_network
            .iter()
            .position(|&n| n >= self.networks.len())
        {
            return Err(Error::Config(format!(
                "patch {k} refers to network {} but only {} exist",
                self.patch_network[k],
                self.networks.len()
            )));
        }
        if let Some(k) = self.coefficients.iter().position(|c| !(*c > 0.0)) {
            return Err(Error::Config(format!(
                "coefficient of patch {k} must be positive"
            )));
        }
        for n in &self.networks {
            n.config.validate()?;
        }
        Ok(())
    }
}
