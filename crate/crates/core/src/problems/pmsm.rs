use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{Preset, Problem};
use crate::error::{Error, Result};
use crate::functional::{
    AntiperiodicMode, DgPart, EnergySpec, EnergyTerm, Field, NetworkSlot, TermKind,
};
use crate::geometry::{
    Edge, EdgeTag, EdgeTags, MultiPatchDomain, NurbsCurve, Patch, PatchFile, SymmetryMap, GEOM_TOL,
};
use crate::network::NetworkConfig;
use crate::optimizer::Schedule;
use crate::sampling::SampleBudgets;

/// Where the machine geometry comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmsmSource {
    /// Simplified sector built from the case parameters.
    Procedural,
    /// Patch file in the JSON exchange format, in the case's length unit.
    Imported(PathBuf),
}

/// One pole (60 degrees) of a six-pole permanent-magnet machine.
///
/// Lengths are in millimetres and scaled by `unit` when the geometry is
/// built; angles are in degrees, measured clockwise from the `+y` axis. The
/// sector spans `[-30, 30]` degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PmsmCase {
    pub r_rotor_inner: f64,
    pub r_rotor_outer: f64,
    pub r_airgap: f64,
    pub magnet_width: f64,
    pub magnet_height: f64,
    pub magnet_depth: f64,
    pub r_stator_inner: f64,
    pub r_stator_outer: f64,
    /// Radius where the slots end and the stator yoke begins.
    pub r_slot_bottom: f64,
    /// Angular position where the rotor air slit starts at the rotor surface.
    pub slit_start: f64,
    pub slit_width: f64,
    /// Slot centres on one side of the pole axis.
    pub slot_centres: Vec<f64>,
    pub slot_width: f64,
    pub nu_fe: f64,
    pub nu_cu: f64,
    pub nu_pm: f64,
    pub nu_0: f64,
    pub b_r: f64,
    pub beta_rotor: f64,
    pub beta_stator: f64,
    /// Geometry units per millimetre.
    pub unit: f64,
    /// Weight DG flux averages with the reluctivity of each side.
    pub weighted: bool,
}

impl Default for PmsmCase {
    fn default() -> Self {
        Self {
            r_rotor_inner: 16.0,
            r_rotor_outer: 44.0,
            r_airgap: 44.7,
            magnet_width: 19.0,
            magnet_height: 7.0,
            magnet_depth: 7.0,
            r_stator_inner: 45.0,
            r_stator_outer: 67.5,
            r_slot_bottom: 58.2,
            slit_start: 14.0,
            slit_width: 7.0,
            slot_centres: vec![5.0, 15.0, 25.0],
            slot_width: 4.0,
            nu_fe: 1.0 / 500.0,
            nu_cu: 1.0,
            nu_pm: 1.0 / 1.05,
            nu_0: 1.0,
            b_r: 0.94,
            beta_rotor: 1e5,
            beta_stator: 2e4,
            unit: 0.01,
            weighted: false,
        }
    }
}

pub const HALF_PITCH: f64 = 30.0;

/// Subdomains and their network sizes `(blocks, neurons)`.
pub const SUBDOMAINS: [(&str, usize, usize); 6] = [
    ("outer_rotor_yoke", 8, 15),
    ("inner_rotor_yoke", 8, 15),
    ("air", 15, 15),
    ("magnet", 8, 15),
    ("stator_yoke", 15, 15),
    ("windings", 15, 15),
];

/// Interior samples per subdomain at full scale.
const SUBDOMAIN_SAMPLES: [usize; 6] = [2000, 6000, 26000, 2000, 21000, 6000];

struct Polar {
    unit: f64,
}

impl Polar {
    fn xy(&self, x: f64, y: f64) -> [f64; 2] {
        [self.unit * x, self.unit * y]
    }

    /// Arc of radius `r` from `phi0` to `phi1` (clockwise angles).
    fn arc(&self, r: f64, phi0: f64, phi1: f64) -> NurbsCurve {
        let t = |phi: f64| (90.0 - phi).to_radians();
        NurbsCurve::arc([0.0, 0.0], self.unit * r, t(phi0), t(phi1))
    }

    fn sector(
        &self,
        r0: f64,
        r1: f64,
        phi0: f64,
        phi1: f64,
        material: &str,
        edges: EdgeTags,
    ) -> Result<Patch> {
        Patch::ruled(&self.arc(r0, phi0, phi1), &self.arc(r1, phi0, phi1), material, edges)
    }
}

impl PmsmCase {
    pub fn magnetization(&self) -> [f64; 2] {
        [0.0, self.nu_0 * self.b_r]
    }

    pub fn reluctivity(&self, material: &str) -> Result<f64> {
        match material {
            "iron" => Ok(self.nu_fe),
            "copper" => Ok(self.nu_cu),
            "magnet" => Ok(self.nu_pm),
            "air" => Ok(self.nu_0),
            other => Err(Error::Config(format!("unknown machine material {other:?}"))),
        }
    }

    pub fn symmetry(&self) -> SymmetryMap {
        SymmetryMap::Rotation {
            angle: (2.0 * HALF_PITCH).to_radians(),
        }
    }

    /// Procedural sector: 14 rotor and 39 stator patches.
    pub fn procedural_domain(&self) -> Result<MultiPatchDomain> {
        let g = Polar { unit: self.unit };
        let iface = EdgeTags::all(EdgeTag::Interface);
        let hw = self.magnet_width / 2.0;
        let top = self.r_rotor_outer - self.magnet_depth;
        let bottom = top - self.magnet_height;
        let r_b = hw.hypot(bottom);
        let phi_b = hw.atan2(bottom).to_degrees();
        let (s0, s1) = (self.slit_start, self.slit_start + self.slit_width);
        let ro = self.r_rotor_outer;
        let right = |t: EdgeTags| t.with(Edge::East, EdgeTag::AntiperiodicRight);

        let mut centre = Vec::new();
        let mut half = Vec::new();

        centre.push(
            Patch::ruled(
                &g.arc(self.r_rotor_inner, -phi_b, phi_b),
                &NurbsCurve::line(g.xy(-hw, bottom), g.xy(hw, bottom)),
                "iron",
                iface.with(Edge::South, EdgeTag::Dirichlet),
            )?
            .with_subdomain("inner_rotor_yoke"),
        );
        half.push(
            g.sector(
                self.r_rotor_inner,
                r_b,
                phi_b,
                HALF_PITCH,
                "iron",
                right(iface.with(Edge::South, EdgeTag::Dirichlet)),
            )?
            .with_subdomain("inner_rotor_yoke"),
        );
        centre.push(
            Patch::bilinear(
                [g.xy(-hw, bottom), g.xy(hw, bottom), g.xy(hw, top), g.xy(-hw, top)],
                "magnet",
                iface,
            )
            .with_subdomain("magnet"),
        );
        centre.push(
            Patch::ruled(
                &NurbsCurve::line(g.xy(-hw, top), g.xy(hw, top)),
                &g.arc(ro, -s0, s0),
                "iron",
                iface,
            )?
            .with_subdomain("outer_rotor_yoke"),
        );
        half.push(
            Patch::ruled(
                &NurbsCurve::line(g.xy(hw, top), g.xy(hw, bottom)),
                &g.arc(ro, s0, s1),
                "air",
                iface,
            )?
            .with_subdomain("air"),
        );
        half.push(
            Patch::ruled(
                &g.arc(r_b, phi_b, HALF_PITCH),
                &g.arc(ro, s1, HALF_PITCH),
                "iron",
                right(iface),
            )?
            .with_subdomain("outer_rotor_yoke"),
        );
        let free = iface.with(Edge::North, EdgeTag::InteriorFree);
        centre.push(g.sector(ro, self.r_airgap, -s0, s0, "air", free)?.with_subdomain("air"));
        half.push(g.sector(ro, self.r_airgap, s0, s1, "air", free)?.with_subdomain("air"));
        half.push(
            g.sector(ro, self.r_airgap, s1, HALF_PITCH, "air", right(free))?
                .with_subdomain("air"),
        );

        let mut patches = centre;
        for p in &half {
            let mut m = p.mirrored_x();
            if m.edges.west == EdgeTag::AntiperiodicRight {
                m.edges.west = EdgeTag::AntiperiodicLeft;
            }
            patches.push(p.clone());
            patches.push(m);
        }

        let mut breaks: Vec<f64> = vec![-HALF_PITCH, HALF_PITCH];
        let mut slots = Vec::new();
        for &c in &self.slot_centres {
            let (a, b) = (c - self.slot_width / 2.0, c + self.slot_width / 2.0);
            breaks.extend([a, b, -a, -b]);
            slots.push((a, b));
            slots.push((-b, -a));
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let layers = [
            (self.r_airgap, self.r_stator_inner),
            (self.r_stator_inner, self.r_slot_bottom),
            (self.r_slot_bottom, self.r_stator_outer),
        ];
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut sides = iface;
            if a == -HALF_PITCH {
                sides.west = EdgeTag::AntiperiodicLeft;
            }
            if b == HALF_PITCH {
                sides.east = EdgeTag::AntiperiodicRight;
            }
            let is_slot = slots.iter().any(|&(sa, sb)| sa == a && sb == b);
            for (layer, &(r0, r1)) in layers.iter().enumerate() {
                let (material, label, tags) = match layer {
                    0 => ("air", "air", sides.with(Edge::South, EdgeTag::InteriorFree)),
                    1 if is_slot => ("copper", "windings", sides),
                    1 => ("iron", "stator_yoke", sides),
                    _ => ("iron", "stator_yoke", sides.with(Edge::North, EdgeTag::Dirichlet)),
                };
                patches.push(g.sector(r0, r1, a, b, material, tags)?.with_subdomain(label));
            }
        }
        MultiPatchDomain::new(patches)?.with_symmetry(self.symmetry(), GEOM_TOL)
    }

    pub fn domain(&self, source: &PmsmSource) -> Result<MultiPatchDomain> {
        match source {
            PmsmSource::Procedural => self.procedural_domain(),
            PmsmSource::Imported(path) => {
                let text = std::fs::read_to_string(path)?;
                let file = PatchFile::from_json(&text)?;
                let symmetry = file.symmetry.unwrap_or_else(|| self.symmetry());
                let mut domain = file.into_domain()?;
                if domain.symmetry.is_none() {
                    domain = domain.with_symmetry(symmetry, GEOM_TOL)?;
                }
                Ok(domain)
            }
        }
    }

    /// Whether patch `k` belongs to the rotor (its centre lies inside the
    /// air-gap circle).
    pub fn in_rotor(&self, patch: &Patch) -> bool {
        let c = patch.eval([0.5, 0.5]);
        c[0].hypot(c[1]) < self.r_airgap * self.unit
    }

    pub fn build(&self, preset: Preset, source: &PmsmSource) -> Result<Problem> {
        let domain = self.domain(source)?;
        let n = domain.patches.len();
        let coefficients = domain
            .patches
            .iter()
            .map(|p| self.reluctivity(&p.material))
            .collect::<Result<Vec<_>>>()?;
        let (networks, patch_network) = match preset {
            Preset::Single => (
                vec![NetworkSlot {
                    label: "global".into(),
                    config: NetworkConfig::new(30, 24, false),
                }],
                vec![0; n],
            ),
            _ => {
                let nets = SUBDOMAINS
                    .iter()
                    .map(|&(label, blocks, neurons)| NetworkSlot {
                        label: label.into(),
                        config: NetworkConfig::new(blocks, neurons, true),
                    })
                    .collect();
                let map = domain
                    .patches
                    .iter()
                    .map(|p| {
                        SUBDOMAINS
                            .iter()
                            .position(|s| s.0 == p.group())
                            .ok_or_else(|| {
                                Error::Config(format!("unknown machine subdomain {:?}", p.group()))
                            })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (nets, map)
            }
        };
        let interfaces = Problem::coupled_interfaces(&domain, &patch_network);
        let rotor: Vec<bool> = domain.patches.iter().map(|p| self.in_rotor(p)).collect();
        let beta = |in_rotor: bool| {
            if in_rotor {
                self.beta_rotor
            } else {
                self.beta_stator
            }
        };
        let groups = [("rotor", true), ("stator", false)];
        let dirichlet = domain.edges_with(EdgeTag::Dirichlet);
        let magnets: Vec<usize> = (0..n)
            .filter(|&k| domain.patches[k].material == "magnet")
            .collect();

        let mut terms = vec![
            EnergyTerm::new(
                "energy",
                TermKind::Interior {
                    patches: (0..n).collect(),
                    scale: 0.5,
                    load: None,
                },
            ),
            EnergyTerm::new(
                "magnetization",
                TermKind::Magnetization {
                    patches: magnets,
                    m: self.magnetization(),
                },
            ),
        ];
        for (name, side) in groups {
            let b = beta(side);
            let edges: Vec<(usize, Edge)> =
                dirichlet.iter().copied().filter(|e| rotor[e.0] == side).collect();
            let ifaces: Vec<usize> = interfaces
                .iter()
                .copied()
                .filter(|&i| rotor[domain.interfaces[i].k] == side)
                .collect();
            let pairs: Vec<usize> = (0..domain.mirrors.len())
                .filter(|&i| rotor[domain.mirrors[i].left.0] == side)
                .collect();
            match preset {
                Preset::Single | Preset::Coupling => {
                    if preset == Preset::Coupling && !ifaces.is_empty() {
                        terms.push(EnergyTerm::new(
                            format!("coupling_{name}"),
                            TermKind::Coupling {
                                interfaces: ifaces,
                                beta: b,
                            },
                        ));
                    }
                    terms.push(EnergyTerm::new(
                        format!("dirichlet_{name}"),
                        TermKind::DirichletPenalty {
                            edges,
                            g: Field::zero(),
                            beta: b,
                        },
                    ));
                    terms.push(EnergyTerm::new(
                        format!("antiperiodic_{name}"),
                        TermKind::Antiperiodic {
                            pairs,
                            beta: b,
                            mode: AntiperiodicMode::Penalty,
                            weighted: false,
                        },
                    ));
                }
                Preset::Dg => {
                    if !ifaces.is_empty() {
                        terms.push(EnergyTerm::new(
                            format!("interface_{name}"),
                            TermKind::DgInterface {
                                interfaces: ifaces,
                                beta: b,
                                part: DgPart::Full,
                                weighted: self.weighted,
                            },
                        ));
                    }
                    terms.push(EnergyTerm::new(
                        format!("dirichlet_{name}"),
                        TermKind::DgDirichlet {
                            edges,
                            g: Field::zero(),
                            beta: b,
                            part: DgPart::Full,
                            weighted: self.weighted,
                        },
                    ));
                    terms.push(EnergyTerm::new(
                        format!("antiperiodic_{name}"),
                        TermKind::Antiperiodic {
                            pairs,
                            beta: b,
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
        let groups_present = domain.groups();
        let interior_groups: Vec<(String, usize)> = SUBDOMAINS
            .iter()
            .zip(SUBDOMAIN_SAMPLES)
            .filter(|(s, _)| groups_present.iter().any(|g| g == s.0))
            .map(|(s, m)| (s.0.to_string(), m))
            .collect();
        let budgets = SampleBudgets {
            interior: SUBDOMAIN_SAMPLES.iter().sum(),
            dirichlet: 1100,
            neumann: 0,
            interface: 13_500,
            antiperiodic: 2800,
            min_per_set: 8,
            interior_groups: Some(interior_groups),
        };
        let interior_scale = 8000.0 / 63_000.0;
        let desk_budgets = SampleBudgets {
            interior: 8000,
            dirichlet: 400,
            neumann: 0,
            interface: 3000,
            antiperiodic: 600,
            min_per_set: 8,
            interior_groups: budgets.interior_groups.as_ref().map(|g| {
                g.iter()
                    .map(|(l, m)| (l.clone(), (*m as f64 * interior_scale).round() as usize))
                    .collect()
            }),
        };
        Ok(Problem {
            name: "pmsm".into(),
            preset,
            domain,
            spec,
            interfaces,
            budgets,
            desk_budgets,
            schedule: Schedule::constant(5000, 1e-3),
            desk_schedule: Schedule::constant(2000, 1e-3),
            reference: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procedural_layout() {
        let case = PmsmCase::default();
        let d = case.procedural_domain().unwrap();
        assert_eq!(d.patches.len(), 53);
        d.check_jacobians(12).unwrap();
        assert_eq!(d.mirrors.len(), 6);
        assert_eq!(d.edges_with(EdgeTag::Dirichlet).len(), 16);
        let groups = d.groups();
        assert_eq!(groups.len(), 6);
        for p in &d.patches {
            assert!(p.jacobian_det([0.5, 0.5]).unwrap() > 0.0);
        }
    }
}
