//! Scripted biopsy runs: one fire per zone, computed from the scenario
//! geometry so each core is credited to exactly its intended zone.

use biopsym_core::anatomy::ZoneId;
use biopsym_core::biopsy::fire_biopsy;
use biopsym_core::probe::{aim_guide_at, guide_line_of, ProbePose};
use biopsym_core::{Pose, Vec3d};
use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;
use crate::wire::{ClientMsg, PoseInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedFire {
    pub zone: ZoneId,
    pub pose: Pose,
    pub insertion_mm: f64,
}

const DEPTHS: [f64; 5] = [20.0, 10.0, 30.0, 0.0, 40.0];
const FRACTIONS: [f64; 5] = [0.5, 0.35, 0.65, 0.2, 0.8];

/// Finds a pose and insertion whose core lands in `zone` alone.
pub fn fire_for_zone(scenario: &Scenario, zone: ZoneId) -> Option<ScriptedFire> {
    let def = &scenario.def;
    let gland = &scenario.prostate;
    let cell = gland.grid.cell_bounds(zone);
    let (lo, ext) = (cell.min, cell.extent());
    let mut candidates = Vec::new();
    for fx in FRACTIONS {
        for fy in FRACTIONS {
            for fz in FRACTIONS {
                let p = lo + ext.component_mul(Vec3d::new(fx, fy, fz));
                if gland.mesh.point_in_mesh(p) {
                    candidates.push(p);
                }
            }
        }
    }
    // the notch centre sits this far past the insertion point
    let centre = def.needle.throw_mm - def.needle.notch_offset_mm - def.needle.notch_mm / 2.0;
    for target in candidates {
        for depth in DEPTHS {
            let Some(pose) = aim_guide_at(&def.probe, target, depth, 0.0) else {
                continue;
            };
            let Ok(pose) = ProbePose::new(&def.probe, pose.depth_mm, pose.pitch, pose.yaw, pose.roll) else {
                continue;
            };
            let guide = guide_line_of(&def.probe, &pose);
            let along = (target - guide.origin).dot(guide.direction);
            for shift in [0.0, -2.0, 2.0, -4.0, 4.0, -6.0, 6.0] {
                let insertion = along - centre + shift;
                if insertion < 0.0 {
                    continue;
                }
                let Ok(core) = fire_biopsy(&def.needle, &guide, insertion, gland) else {
                    continue;
                };
                if core.zones.len() == 1 && core.zones.contains(&zone) {
                    return Some(ScriptedFire {
                        zone,
                        pose,
                        insertion_mm: insertion,
                    });
                }
            }
        }
    }
    None
}

/// One fire per zone in the given order; `None` if some zone is unreachable.
pub fn script_for_order(scenario: &Scenario, order: &[ZoneId]) -> Option<Vec<ScriptedFire>> {
    order.iter().map(|&z| fire_for_zone(scenario, z)).collect()
}

/// Zones in the scenario's canonical order.
pub fn perfect_script(scenario: &Scenario) -> Option<Vec<ScriptedFire>> {
    script_for_order(scenario, &scenario.def.canonical_order)
}

/// Zones in reverse canonical order.
pub fn reversed_script(scenario: &Scenario) -> Option<Vec<ScriptedFire>> {
    let mut order = scenario.def.canonical_order.clone();
    order.reverse();
    script_for_order(scenario, &order)
}

/// Stream messages for a script: pose then fire for each step, then end.
/// Fires carry client timestamps one second apart.
pub fn script_messages(script: &[ScriptedFire]) -> Vec<ClientMsg> {
    let mut out = Vec::with_capacity(script.len() * 2 + 1);
    for (i, step) in script.iter().enumerate() {
        out.push(ClientMsg::Pose {
            pose: PoseInput::Probe(step.pose),
        });
        out.push(ClientMsg::Fire {
            insertion_mm: Some(step.insertion_mm),
            t_ms: Some(1000 * (i as u64 + 1)),
        });
    }
    out.push(ClientMsg::End {});
    out
}
