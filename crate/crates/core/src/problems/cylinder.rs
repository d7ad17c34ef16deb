use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{Preset, Problem, Reference};
use crate::error::Result;
use crate::functional::{DgPart, EnergySpec, EnergyTerm, Field, NetworkSlot, TermKind};
use crate::geometry::{Edge, EdgeTag, EdgeTags, MultiPatchDomain, NurbsCurve, Patch};
use crate::network::NetworkConfig;
use crate::optimizer::{Phase, Schedule};
use crate::sampling::SampleBudgets;

/// Dielectric cylinder of radius `r0` in a uniform field on `[-1, 1]^2`.
///
/// The domain is split into nine patches: a central square of half side
/// `core`, four curved quads reaching the circle and four quads between the
/// circle and the outer square. The first five patches form the cylinder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CylinderCase {
    pub r0: f64,
    pub core: f64,
    pub eps_c: f64,
    pub eps_nc: f64,
    pub e_inf: f64,
    pub beta_i: f64,
    pub beta_d: f64,
    /// Weight the DG flux average with the permittivity of each side.
    pub weighted: bool,
}

impl Default for CylinderCase {
    fn default() -> Self {
        Self {
            r0: 0.5,
            core: 0.25,
            eps_c: 100.0,
            eps_nc: 1.0,
            e_inf: 10.0,
            beta_i: 1e3,
            beta_d: 1e3,
            weighted: false,
        }
    }
}

/// Patches `0..INNER` lie inside the cylinder.
pub(super) const INNER: usize = 5;

impl CylinderCase {
    fn contrast(&self) -> f64 {
        let q = self.eps_c / self.eps_nc;
        (q - 1.0) / (q + 1.0)
    }

    /// Potential and gradient of the closed-form solution, using the inner
    /// expression when `inside` is set.
    pub fn analytic_side(&self, x: [f64; 2], inside: bool) -> (f64, [f64; 2]) {
        let e = self.e_inf;
        if inside {
            let c = 2.0 / (self.eps_c / self.eps_nc + 1.0);
            return (-e * x[0] * c, [-e * c, 0.0]);
        }
        let k = self.contrast() * self.r0 * self.r0;
        let r2 = x[0] * x[0] + x[1] * x[1];
        let u = -e * x[0] * (1.0 - k / r2);
        let ux = -e * (1.0 - k / r2 + 2.0 * k * x[0] * x[0] / (r2 * r2));
        let uy = -e * 2.0 * k * x[0] * x[1] / (r2 * r2);
        (u, [ux, uy])
    }

    /// Closed-form solution, choosing the side by radius.
    pub fn analytic(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        self.analytic_side(x, x[0].hypot(x[1]) < self.r0)
    }

    pub fn domain(&self) -> Result<MultiPatchDomain> {
        let a = self.core;
        let r = self.r0;
        let iface = EdgeTags::all(EdgeTag::Interface);
        let mut patches = vec![Patch::bilinear(
            [[-a, -a], [a, -a], [a, a], [-a, a]],
            "dielectric",
            iface,
        )
        .with_subdomain("cylinder")];

        // East pieces; the others are rotated copies. `u` runs clockwise.
        let east_line = NurbsCurve::line([a, a], [a, -a]);
        let east_arc = NurbsCurve::arc([0.0, 0.0], r, FRAC_PI_2 / 2.0, -FRAC_PI_2 / 2.0);
        let wall = NurbsCurve::line([1.0, 1.0], [1.0, -1.0]);
        let ring = Patch::ruled(&east_line, &east_arc, "dielectric", iface)?.with_subdomain("cylinder");
        let outer_tags = |q: usize| {
            let tag = if q % 2 == 0 {
                EdgeTag::Dirichlet
            } else {
                EdgeTag::Neumann
            };
            iface.with(Edge::North, tag)
        };
        for q in 0..4 {
            patches.push(ring.rotated(q as f64 * FRAC_PI_2));
        }
        for q in 0..4 {
            let outer = Patch::ruled(&east_arc, &wall, "air", outer_tags(q))?
                .with_subdomain("background");
            patches.push(outer.rotated(q as f64 * FRAC_PI_2));
        }
        MultiPatchDomain::new(patches)
    }

    pub fn coefficients(&self) -> Vec<f64> {
        (0..9)
            .map(|k| if k < INNER { self.eps_c } else { self.eps_nc })
            .collect()
    }

    pub fn reference(&self) -> Reference {
        let case = self.clone();
        Reference::new(move |patch, x| case.analytic_side(x, patch < INNER))
    }

    pub fn build(&self, preset: Preset) -> Result<Problem> {
        let domain = self.domain()?;
        let (networks, patch_network) = match preset {
            Preset::Single => (
                vec![NetworkSlot {
                    label: "global".into(),
                    config: NetworkConfig::new(6, 10, true),
                }],
                vec![0; 9],
            ),
            _ => (
                vec![
                    NetworkSlot {
                        label: "cylinder".into(),
                        config: NetworkConfig::new(4, 10, true),
                    },
                    NetworkSlot {
                        label: "background".into(),
                        config: NetworkConfig::new(4, 10, true),
                    },
                ],
                (0..9).map(|k| usize::from(k >= INNER)).collect(),
            ),
        };
        let interfaces = Problem::coupled_interfaces(&domain, &patch_network);
        let dirichlet = domain.edges_with(EdgeTag::Dirichlet);
        let neumann = domain.edges_with(EdgeTag::Neumann);

        let exact = self.clone();
        let g_d = Field::new(move |x, _| exact.analytic_side(x, false).0);
        let exact = self.clone();
        let g_n = Field::new(move |x, n| {
            let g = exact.analytic_side(x, false).1;
            g[0] * n[0] + g[1] * n[1]
        });

        let mut terms = vec![
            EnergyTerm::new(
                "energy_cylinder",
                TermKind::Interior {
                    patches: (0..INNER).collect(),
                    scale: 0.5,
                    load: None,
                },
            ),
            EnergyTerm::new(
                "energy_background",
                TermKind::Interior {
                    patches: (INNER..9).collect(),
                    scale: 0.5,
                    load: None,
                },
            ),
            EnergyTerm::new(
                "neumann",
                TermKind::Neumann {
                    edges: neumann,
                    g: g_n,
                },
            ),
        ];
        match preset {
            Preset::Single | Preset::Coupling => terms.push(EnergyTerm::new(
                "dirichlet",
                TermKind::DirichletPenalty {
                    edges: dirichlet,
                    g: g_d,
                    beta: self.beta_d,
                },
            )),
            Preset::Dg => {
                for (label, part) in [
                    ("dirichlet_consistency", DgPart::Consistency),
                    ("dirichlet_penalty", DgPart::Penalty),
                ] {
                    terms.push(EnergyTerm::new(
                        label,
                        TermKind::DgDirichlet {
                            edges: dirichlet.clone(),
                            g: g_d.clone(),
                            beta: self.beta_d,
                            part,
                            weighted: self.weighted,
                        },
                    ));
                }
                for (label, part) in [
                    ("interface_consistency", DgPart::Consistency),
                    ("interface_penalty", DgPart::Penalty),
                ] {
                    terms.push(EnergyTerm::new(
                        label,
                        TermKind::DgInterface {
                            interfaces: interfaces.clone(),
                            beta: self.beta_i,
                            part,
                            weighted: self.weighted,
                        },
                    ));
                }
            }
        }
        if preset == Preset::Coupling {
            terms.push(EnergyTerm::new(
                "interface_coupling",
                TermKind::Coupling {
                    interfaces: interfaces.clone(),
                    beta: self.beta_i,
                },
            ));
        }

        let spec = EnergySpec {
            networks,
            patch_network,
            coefficients: self.coefficients(),
            terms,
        };
        let budgets = SampleBudgets {
            interior: 4000,
            dirichlet: 1200,
            neumann: 1200,
            interface: 600,
            antiperiodic: 0,
            min_per_set: 8,
            interior_groups: None,
        };
        let desk_budgets = SampleBudgets {
            interior: 2000,
            ..budgets.clone()
        };
        Ok(Problem {
            name: "cylinder".into(),
            preset,
            domain,
            spec,
            interfaces,
            budgets,
            desk_budgets,
            schedule: Schedule(vec![
                Phase {
                    epochs: 30_000,
                    lr: 1e-3,
                },
                Phase {
                    epochs: 10_000,
                    lr: 1e-4,
                },
            ]),
            // Five thousand epochs at 1e-3 / 1e-4 stop well short of the
            // error target; a larger first rate gets there in the same time.
            desk_schedule: Schedule(vec![
                Phase {
                    epochs: 4_000,
                    lr: 3e-3,
                },
                Phase {
                    epochs: 1_000,
                    lr: 3e-4,
                },
            ]),
            reference: Some(self.reference()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let case = CylinderCase::default();
        let d = case.domain().unwrap();
        assert_eq!(d.patches.len(), 9);
        assert_eq!(d.interfaces.len(), 16);
        d.check_jacobians(16).unwrap();
        let circle = d
            .interfaces
            .iter()
            .filter(|i| (i.k < INNER) != (i.l < INNER))
            .count();
        assert_eq!(circle, 4);
        assert_eq!(d.edges_with(EdgeTag::Dirichlet).len(), 2);
        assert_eq!(d.edges_with(EdgeTag::Neumann).len(), 2);
    }

    #[test]
    fn analytic_values() {
        let c = CylinderCase::default();
        assert!((c.analytic([0.25, 0.0]).0 + 0.0495049504950495).abs() < 1e-12);
        assert!((c.analytic([0.8, 0.0]).0 + 4.936881188118812).abs() < 1e-12);
    }
}
