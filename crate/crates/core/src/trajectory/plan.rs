use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::bezier::BezierSegment;
use super::ik::{inverse_kinematics, IkOptions};
use super::{
    Arm, JointTrajectory, JointVector, KinematicChain, Placement, TrajectoryError,
    TrajectoryPoint,
};
use crate::instrument::{Melody, NoteId, XylophoneModel, CENTER_BAR};

pub const DEFAULT_STRIKE_DUR_S: f64 = 0.2;
pub const SAMPLE_RATE_HZ: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryOptions {
    pub strike_dur_s: f64,
    /// Head clearance above the bar at the ready pose, cm.
    pub ready_height_cm: f64,
    /// How far below the bar top the head bottom is aimed, cm.
    pub strike_depth_cm: f64,
    pub sample_rate_hz: f64,
    pub ik: IkOptions,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            strike_dur_s: DEFAULT_STRIKE_DUR_S,
            ready_height_cm: 4.0,
            strike_depth_cm: 0.3,
            sample_rate_hz: SAMPLE_RATE_HZ,
            ik: IkOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrikeConfig {
    pub note: NoteId,
    pub arm: Arm,
    pub ready: JointVector,
    pub strike: JointVector,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrikeTable {
    pub configs: Vec<StrikeConfig>,
}

impl StrikeTable {
    pub fn get(&self, note: NoteId, arm: Arm) -> Option<&StrikeConfig> {
        self.configs.iter().find(|c| c.note == note && c.arm == arm)
    }

    pub fn arms_for(&self, note: NoteId) -> impl Iterator<Item = Arm> + '_ {
        [Arm::Left, Arm::Right]
            .into_iter()
            .filter(move |&a| self.get(note, a).is_some())
    }
}

/// Notes each arm covers: the centre bar is shared.
pub fn arm_notes(arm: Arm) -> Vec<NoteId> {
    // Ordered outward from the centre so each solve seeds the next.
    let c = CENTER_BAR;
    let values: Vec<u8> = match arm {
        Arm::Left => (1..=c).rev().collect(),
        Arm::Right => (c..=11).collect(),
    };
    values.into_iter().map(|v| NoteId::new(v).expect("valid bar")).collect()
}

/// Head-centre targets in the robot frame for the strike and ready poses of one bar.
pub fn strike_targets(
    model: &XylophoneModel,
    chain: &KinematicChain,
    placement: &Placement,
    note: NoteId,
    opts: &TrajectoryOptions,
) -> (Vector3<f64>, Vector3<f64>) {
    let bar = model.bar(note);
    let r = chain.mallet_head_radius_cm;
    let top = Vector3::from(bar.center_cm) + Vector3::new(0.0, 0.0, model.stand_height_cm);
    let strike = top + Vector3::new(0.0, 0.0, r - opts.strike_depth_cm);
    let ready = top + Vector3::new(0.0, 0.0, r + opts.ready_height_cm);
    (placement.to_robot(strike), placement.to_robot(ready))
}

/// Ready and strike joint vectors for one bar on one arm.
pub fn solve_strike(
    model: &XylophoneModel,
    chain: &KinematicChain,
    placement: &Placement,
    note: NoteId,
    seed: &JointVector,
    opts: &TrajectoryOptions,
) -> Result<StrikeConfig, TrajectoryError> {
    let (strike_p, ready_p) = strike_targets(model, chain, placement, note, opts);
    let unreachable = |_| TrajectoryError::UnreachableNote(note);
    let ready = inverse_kinematics(chain, ready_p, seed, &opts.ik).map_err(unreachable)?;
    let strike = inverse_kinematics(chain, strike_p, &ready.q, &opts.ik).map_err(unreachable)?;
    Ok(StrikeConfig {
        note,
        arm: chain.arm,
        ready: ready.q,
        strike: strike.q,
    })
}

/// Solve every bar on its arm; the centre bar gets a configuration on both.
pub fn strike_configs(
    model: &XylophoneModel,
    left: &KinematicChain,
    right: &KinematicChain,
    placement: &Placement,
    opts: &TrajectoryOptions,
) -> Result<StrikeTable, TrajectoryError> {
    let solve_arm = |chain: &KinematicChain| -> Result<Vec<StrikeConfig>, TrajectoryError> {
        let mut seed = chain.rest_seed();
        let mut out = Vec::new();
        for note in arm_notes(chain.arm) {
            let cfg = solve_strike(model, chain, placement, note, &seed, opts)?;
            seed = cfg.ready;
            out.push(cfg);
        }
        Ok(out)
    };
    let (l, r) = rayon::join(|| solve_arm(left), || solve_arm(right));
    let mut configs = l?;
    configs.extend(r?);
    configs.sort_by_key(|c| (c.note, c.arm));
    Ok(StrikeTable { configs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmAssignment {
    pub note: NoteId,
    pub onset_s: f64,
    pub arm: Arm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmTrajectories {
    pub left: Option<JointTrajectory>,
    pub right: Option<JointTrajectory>,
    pub assignments: Vec<ArmAssignment>,
    pub segments: Vec<(Arm, BezierSegment)>,
}

impl ArmTrajectories {
    pub fn get(&self, arm: Arm) -> Option<&JointTrajectory> {
        match arm {
            Arm::Left => self.left.as_ref(),
            Arm::Right => self.right.as_ref(),
        }
    }
}

fn travel(a: &JointVector, b: &JointVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn assign_arms(
    melody: &Melody,
    table: &StrikeTable,
    strike_dur_s: f64,
) -> Result<Vec<ArmAssignment>, TrajectoryError> {
    let mut last: [Option<(f64, JointVector)>; 2] = [None, None];
    let slot = |a: Arm| a as usize;
    let mut out = Vec::with_capacity(melody.len());
    for (&note, onset) in melody.notes.iter().zip(melody.resolved_onsets()) {
        let arms: Vec<Arm> = table.arms_for(note).collect();
        if arms.is_empty() {
            return Err(TrajectoryError::MissingConfig(note));
        }
        let free = |a: Arm| match last[slot(a)] {
            Some((t, _)) => onset - t >= strike_dur_s - 1e-9,
            None => true,
        };
        let collision = |a: Arm| TrajectoryError::OnsetCollision {
            arm: a,
            first_s: last[slot(a)].map_or(onset, |(t, _)| t),
            second_s: onset,
        };
        let candidates: Vec<Arm> = arms.iter().copied().filter(|&a| free(a)).collect();
        let arm = match candidates.as_slice() {
            [] => return Err(collision(arms[0])),
            [only] => *only,
            _ => {
                let cost = |a: Arm| {
                    let target = &table.get(note, a).expect("listed arm").ready;
                    last[slot(a)].map_or(0.0, |(_, q)| travel(&q, target))
                };
                // Ties go to the left arm.
                if cost(Arm::Right) < cost(Arm::Left) {
                    Arm::Right
                } else {
                    Arm::Left
                }
            }
        };
        last[slot(arm)] = Some((onset, table.get(note, arm).expect("listed arm").ready));
        out.push(ArmAssignment { note, onset_s: onset, arm });
    }
    Ok(out)
}

/// Control points ready, strike, ready for each of the arm's notes.
fn control_points(
    assignments: &[ArmAssignment],
    arm: Arm,
    table: &StrikeTable,
    half: f64,
) -> Vec<TrajectoryPoint> {
    let mut pts: Vec<TrajectoryPoint> = Vec::new();
    for a in assignments.iter().filter(|a| a.arm == arm) {
        let cfg = table.get(a.note, arm).expect("assigned arm has a config");
        let pre = TrajectoryPoint { t_s: a.onset_s - half, q: cfg.ready };
        match pts.last() {
            // Back-to-back strikes share the instant between them: skip the
            // earlier note's recovery and head straight for the next ready pose.
            Some(prev) if (prev.t_s - pre.t_s).abs() < 1e-9 => {
                pts.pop();
            }
            _ => {}
        }
        pts.push(pre);
        pts.push(TrajectoryPoint { t_s: a.onset_s, q: cfg.strike });
        pts.push(TrajectoryPoint { t_s: a.onset_s + half, q: cfg.ready });
    }
    pts
}

fn sample_arm(
    arm: Arm,
    control: &[TrajectoryPoint],
    rate_hz: f64,
) -> (JointTrajectory, Vec<BezierSegment>) {
    let segments: Vec<BezierSegment> = control
        .windows(2)
        .map(|w| BezierSegment::from_chord(w[0].t_s, w[0].q, w[1].t_s, w[1].q))
        .collect();
    let (t0, t1) = (control[0].t_s, control[control.len() - 1].t_s);
    let mut times: Vec<(f64, Option<usize>)> = control
        .iter()
        .enumerate()
        .map(|(i, p)| (p.t_s, Some(i)))
        .collect();
    let k0 = (t0 * rate_hz).ceil() as i64;
    let k1 = (t1 * rate_hz).floor() as i64;
    times.extend((k0..=k1).map(|k| (k as f64 / rate_hz, None)));
    times.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.is_some().cmp(&a.1.is_some())));
    // Grid points within a microsecond of a control point are dropped.
    let mut kept: Vec<(f64, Option<usize>)> = Vec::with_capacity(times.len());
    for t in times {
        match kept.last() {
            Some(&(prev, prev_ctrl)) if t.0 - prev < 1e-6 => {
                if prev_ctrl.is_none() && t.1.is_some() {
                    kept.pop();
                    kept.push(t);
                }
            }
            _ => kept.push(t),
        }
    }
    let mut seg = 0;
    let points = kept
        .into_iter()
        .map(|(t, ctrl)| {
            let q = match ctrl {
                Some(i) => control[i].q,
                None => {
                    while seg + 1 < segments.len() && t > segments[seg].t1 {
                        seg += 1;
                    }
                    segments[seg].eval(t)
                }
            };
            TrajectoryPoint { t_s: t, q }
        })
        .collect();
    (JointTrajectory { arm, points }, segments)
}

/// Joint trajectories for both arms; times are melody time, so the first
/// ready pose may sit before zero.
pub fn generate_trajectory(
    melody: &Melody,
    table: &StrikeTable,
    opts: &TrajectoryOptions,
) -> Result<ArmTrajectories, TrajectoryError> {
    if !(opts.strike_dur_s > 0.0 && opts.sample_rate_hz > 0.0) {
        return Err(TrajectoryError::InvalidTrajectory(
            "strike duration and sample rate must be positive".into(),
        ));
    }
    let assignments = assign_arms(melody, table, opts.strike_dur_s)?;
    let half = opts.strike_dur_s / 2.0;
    let mut out = ArmTrajectories {
        left: None,
        right: None,
        assignments,
        segments: Vec::new(),
    };
    for arm in [Arm::Left, Arm::Right] {
        let control = control_points(&out.assignments, arm, table, half);
        if control.is_empty() {
            continue;
        }
        let (traj, segs) = sample_arm(arm, &control, opts.sample_rate_hz);
        out.segments.extend(segs.into_iter().map(|s| (arm, s)));
        match arm {
            Arm::Left => out.left = Some(traj),
            Arm::Right => out.right = Some(traj),
        }
    }
    Ok(out)
}
