use serde::{Deserialize, Serialize};

use super::{Arm, ArmTrajectories, JointTrajectory, KinematicChain, Placement};
use crate::instrument::{NoteId, XylophoneModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub note: NoteId,
    pub t_s: f64,
    pub arm: Arm,
}

/// Sub-steps per sample interval when searching for surface crossings.
const SUBSTEPS: usize = 8;

/// Replay one arm and report downward crossings of a bar's top surface by
/// the bottom of the mallet head.
pub fn execute_sim(
    traj: &JointTrajectory,
    chain: &KinematicChain,
    model: &XylophoneModel,
    placement: &Placement,
) -> Vec<SimEvent> {
    let top = |note: NoteId| model.bar(note).top_z() + model.stand_height_cm;
    let r = chain.mallet_head_radius_cm;
    let head = |q: &super::JointVector| {
        let p = placement.to_instrument(chain.head_position(q));
        (p.x, p.y, p.z - r)
    };
    let mut events = Vec::new();
    for w in traj.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let mut prev = (a.t_s, head(&a.q));
        for s in 1..=SUBSTEPS {
            let u = s as f64 / SUBSTEPS as f64;
            let q: super::JointVector = std::array::from_fn(|k| a.q[k] + u * (b.q[k] - a.q[k]));
            let cur = (a.t_s + u * (b.t_s - a.t_s), head(&q));
            let (t0, (x0, y0, z0)) = prev;
            let (t1, (x1, y1, z1)) = cur;
            // Candidate bars: any whose surface lies between the two heights.
            if z1 < z0 {
                for bar in &model.bars {
                    let h = top(bar.note);
                    if z0 > h && z1 <= h {
                        let f = (z0 - h) / (z0 - z1);
                        let (x, y) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
                        if bar.contains_xy(x, y) {
                            events.push(SimEvent {
                                note: bar.note,
                                t_s: t0 + f * (t1 - t0),
                                arm: traj.arm,
                            });
                        }
                    }
                }
            }
            prev = cur;
        }
    }
    events
}

/// Both arms, merged in time order.
pub fn execute_sim_pair(
    trajs: &ArmTrajectories,
    left: &KinematicChain,
    right: &KinematicChain,
    model: &XylophoneModel,
    placement: &Placement,
) -> Vec<SimEvent> {
    let run = |arm: Arm, chain: &KinematicChain| {
        trajs
            .get(arm)
            .map(|t| execute_sim(t, chain, model, placement))
            .unwrap_or_default()
    };
    let (mut events, r) = rayon::join(|| run(Arm::Left, left), || run(Arm::Right, right));
    events.extend(r);
    events.sort_by(|a, b| a.t_s.total_cmp(&b.t_s).then(a.arm.cmp(&b.arm)));
    events
}
