use std::sync::OnceLock;

use approx::assert_relative_eq;
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::instrument::{parse_hex_melody, Melody, NoteId, XylophoneModel};

fn n(v: u8) -> NoteId {
    NoteId::new(v).unwrap()
}

fn arms() -> (KinematicChain, KinematicChain) {
    (
        KinematicChain::default_arm(Arm::Left),
        KinematicChain::default_arm(Arm::Right),
    )
}

fn canonical_table() -> &'static StrikeTable {
    static TABLE: OnceLock<StrikeTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let (l, r) = arms();
        strike_configs(
            &XylophoneModel::default(),
            &l,
            &r,
            &CANONICAL_PLACEMENT,
            &TrajectoryOptions::default(),
        )
        .unwrap()
    })
}

fn random_q(chain: &KinematicChain, rng: &mut ChaCha8Rng) -> JointVector {
    std::array::from_fn(|k| {
        let (lo, hi) = chain.limits(k);
        rng.random_range(lo..=hi)
    })
}

fn simulate(m: &Melody) -> Vec<SimEvent> {
    let (l, r) = arms();
    let trajs = generate_trajectory(m, canonical_table(), &TrajectoryOptions::default()).unwrap();
    execute_sim_pair(&trajs, &l, &r, &XylophoneModel::default(), &CANONICAL_PLACEMENT)
}

#[test]
fn home_pose_is_published_constant() {
    let (l, r) = arms();
    let p = l.forward_kinematics(&[0.0; DOF]).unwrap().position;
    assert_relative_eq!(p, Vector3::from(HOME_HEAD_LEFT_CM), epsilon = 1e-12);
    let [x, y, z] = HOME_HEAD_LEFT_CM;
    assert_relative_eq!(r.home_pose().position, Vector3::new(x, -y, z), epsilon = 1e-12);
}

#[test]
fn first_joint_rotates_about_shoulder() {
    let (l, _) = arms();
    let shoulder = l.shoulder();
    let home = l.home_pose().position - shoulder;
    for theta in [-1.0, -0.3, 0.2, 0.9] {
        let p = l.forward_kinematics(&[theta, 0.0, 0.0, 0.0, 0.0]).unwrap().position - shoulder;
        let expected = Rotation3::from_axis_angle(&Vector3::y_axis(), theta) * home;
        assert_relative_eq!(p, expected, epsilon = 1e-9);
        assert_relative_eq!(p.norm(), home.norm(), epsilon = 1e-9);
    }
}

#[test]
fn fk_rejects_out_of_limit_joint() {
    let (l, _) = arms();
    let mut q = l.midpoint();
    q[2] = 10.0;
    assert_eq!(l.forward_kinematics(&q), Err(TrajectoryError::JointLimit(2)));
}

#[test]
fn fk_within_reach_sphere() {
    let (l, _) = arms();
    assert_relative_eq!(l.link_length_sum(), 31.0);
    assert_relative_eq!(l.link_length_sum() + l.mallet_length_cm, 52.0);
    assert!(l.reach() <= 52.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let q = random_q(&l, &mut rng);
        let p = l.forward_kinematics(&q).unwrap().position;
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p - l.shoulder()).norm() <= l.reach() + 1e-9);
    }
}

#[test]
fn mirrored_arm_mirrors_positions() {
    let (l, r) = arms();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let q = random_q(&l, &mut rng);
        let mq: JointVector = std::array::from_fn(|k| match l.joints[k].axis {
            Axis::Y => q[k],
            _ => -q[k],
        });
        let a = l.forward_kinematics(&q).unwrap().position;
        let b = r.forward_kinematics(&mq).unwrap().position;
        assert_relative_eq!(b, Vector3::new(a.x, -a.y, a.z), epsilon = 1e-9);
    }
}

#[test]
fn ik_fixed_point() {
    let (l, _) = arms();
    let seed = l.rest_seed();
    let target = l.forward_kinematics(&seed).unwrap().position;
    let sol = inverse_kinematics(&l, target, &seed, &IkOptions::default()).unwrap();
    assert_eq!(sol.iterations, 0);
    assert_eq!(sol.q, seed);
}

#[test]
fn ik_round_trip_on_random_targets() {
    let (l, _) = arms();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ok = 0;
    for _ in 0..500 {
        let target = l.forward_kinematics(&random_q(&l, &mut rng)).unwrap().position;
        if let Ok(sol) = inverse_kinematics(&l, target, &l.rest_seed(), &IkOptions::default()) {
            let res = (l.forward_kinematics(&sol.q).unwrap().position - target).norm();
            assert!(res <= 0.1);
            ok += 1;
        }
    }
    assert!(ok >= 495, "{ok}/500");
}

#[test]
fn ik_far_target_is_unreachable() {
    let (l, _) = arms();
    let err = inverse_kinematics(&l, Vector3::new(200.0, 0.0, 0.0), &l.rest_seed(), &IkOptions::default());
    assert!(matches!(err, Err(TrajectoryError::Unreachable { .. })));
}

#[test]
fn canonical_strike_configs_are_valid() {
    let (l, r) = arms();
    let model = XylophoneModel::default();
    let opts = TrajectoryOptions::default();
    let table = canonical_table();
    assert_eq!(table.configs.len(), 12);
    for cfg in &table.configs {
        let chain = if cfg.arm == Arm::Left { &l } else { &r };
        let bar = model.bar(cfg.note);
        let to_inst = |q| CANONICAL_PLACEMENT.to_instrument(chain.forward_kinematics(q).unwrap().position);
        let s = to_inst(&cfg.strike);
        let rd = to_inst(&cfg.ready);
        assert!(bar.contains_xy(s.x, s.y));
        let bottom = s.z - chain.mallet_head_radius_cm;
        assert!((bottom - (bar.top_z() - opts.strike_depth_cm)).abs() <= 0.1);
        let above = rd.z - chain.mallet_head_radius_cm - bar.top_z();
        assert!((3.0..=6.0).contains(&above), "{above}");
    }
    let left: Vec<u8> = table.configs.iter().filter(|c| c.arm == Arm::Left).map(|c| c.note.value()).collect();
    assert_eq!(left, vec![1, 2, 3, 4, 5, 6]);
    let right: Vec<u8> = table.configs.iter().filter(|c| c.arm == Arm::Right).map(|c| c.note.value()).collect();
    assert_eq!(right, vec![6, 7, 8, 9, 10, 11]);
}

#[test]
fn distant_instrument_is_unreachable_for_every_note() {
    let (l, r) = arms();
    let model = XylophoneModel::default();
    let far = CANONICAL_PLACEMENT.translated([100.0, 0.0, 0.0]);
    let opts = TrajectoryOptions::default();
    for chain in [&l, &r] {
        for note in arm_notes(chain.arm) {
            assert_eq!(
                solve_strike(&model, chain, &far, note, &chain.rest_seed(), &opts),
                Err(TrajectoryError::UnreachableNote(note))
            );
        }
    }
    assert!(strike_configs(&model, &l, &r, &far, &opts).is_err());
}

#[test]
fn arm_assignment_rules() {
    let opts = TrajectoryOptions::default();
    let arms_of = |hex: &str| -> Vec<Arm> {
        generate_trajectory(&parse_hex_melody(hex).unwrap(), canonical_table(), &opts)
            .unwrap()
            .assignments
            .iter()
            .map(|a| a.arm)
            .collect()
    };
    assert_eq!(arms_of("121"), vec![Arm::Left; 3]);
    assert_eq!(arms_of("9ab"), vec![Arm::Right; 3]);
    // Centre bar: an idle arm travels nothing, ties go left.
    assert_eq!(arms_of("6"), vec![Arm::Left]);
    assert_eq!(arms_of("76"), vec![Arm::Right, Arm::Left]);
    assert_eq!(arms_of("56"), vec![Arm::Left, Arm::Right]);
    // Busy arm hands the centre bar to the other one.
    let fast = Melody::with_onsets(vec![n(6), n(6)], vec![0.0, 0.1], 120.0).unwrap();
    let a = generate_trajectory(&fast, canonical_table(), &opts).unwrap();
    assert_eq!(a.assignments[1].arm, Arm::Right);
}

#[test]
fn single_note_trajectory_shape() {
    let m = Melody::with_onsets(vec![n(3)], vec![1.0], 120.0).unwrap();
    let opts = TrajectoryOptions::default();
    let t = generate_trajectory(&m, canonical_table(), &opts).unwrap();
    assert!(t.right.is_none());
    let left = t.left.unwrap();
    let cfg = canonical_table().get(n(3), Arm::Left).unwrap();
    assert_eq!(left.points.first().unwrap().q, cfg.ready);
    assert_eq!(left.points.last().unwrap().q, cfg.ready);
    assert_relative_eq!(left.points.first().unwrap().t_s, 0.9, epsilon = 1e-12);
    let at_onset = left.points.iter().find(|p| p.t_s == 1.0).unwrap();
    assert_eq!(at_onset.q, cfg.strike);
}

#[test]
fn bezier_endpoints_and_limits() {
    let (l, r) = arms();
    let m = parse_hex_melody("1155665").unwrap();
    let t = generate_trajectory(&m, canonical_table(), &TrajectoryOptions::default()).unwrap();
    for (_, seg) in &t.segments {
        let a = seg.eval(seg.t0);
        let b = seg.eval(seg.t1);
        for k in 0..DOF {
            assert!((a[k] - seg.control[0][k]).abs() <= 1e-9);
            assert!((b[k] - seg.control[3][k]).abs() <= 1e-9);
        }
    }
    for (traj, chain) in [(t.left.as_ref().unwrap(), &l), (t.right.as_ref().unwrap(), &r)] {
        traj.validate(chain).unwrap();
        for w in traj.points.windows(2) {
            assert!(w[1].t_s - w[0].t_s <= 1.0 / SAMPLE_RATE_HZ + 1e-9);
        }
    }
}

#[test]
fn bezier_is_c1_inside_segment() {
    let seg = BezierSegment::from_chord(0.0, [0.0; DOF], 2.0, [1.0, -1.0, 0.5, 0.0, 2.0]);
    // Chord tangents make the speed uniform.
    for t in [0.0, 0.5, 1.3, 2.0] {
        assert_relative_eq!(seg.velocity(t)[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(seg.eval(t)[4], t, epsilon = 1e-12);
    }
}

#[test]
fn twinkle_phrase_strikes_on_the_beat() {
    let m = parse_hex_melody("1155665").unwrap();
    let events = simulate(&m);
    let notes: Vec<NoteId> = events.iter().map(|e| e.note).collect();
    assert_eq!(notes, m.notes);
    for (i, e) in events.iter().enumerate() {
        assert!((e.t_s - 0.5 * i as f64).abs() <= 0.02, "{i}: {}", e.t_s);
    }
}

#[test]
fn close_onsets_on_one_arm_collide() {
    let m = Melody::with_onsets(vec![n(1), n(2)], vec![0.0, 0.05], 120.0).unwrap();
    let err = generate_trajectory(&m, canonical_table(), &TrajectoryOptions::default());
    assert!(matches!(err, Err(TrajectoryError::OnsetCollision { arm: Arm::Left, .. })));
}

#[test]
fn missing_config_is_reported() {
    let mut table = canonical_table().clone();
    table.configs.retain(|c| c.note != n(9));
    let err = generate_trajectory(&parse_hex_melody("19").unwrap(), &table, &TrajectoryOptions::default());
    assert_eq!(err, Err(TrajectoryError::MissingConfig(n(9))));
}

#[test]
fn ready_only_motion_strikes_nothing() {
    let (l, _) = arms();
    let table = canonical_table();
    let points = (1..=6)
        .map(|v| TrajectoryPoint {
            t_s: v as f64 * 0.3,
            q: table.get(n(v), Arm::Left).unwrap().ready,
        })
        .collect();
    let traj = JointTrajectory { arm: Arm::Left, points };
    assert!(execute_sim(&traj, &l, &XylophoneModel::default(), &CANONICAL_PLACEMENT).is_empty());
}

#[test]
fn back_to_back_strikes_share_a_ready_instant() {
    let m = Melody::with_onsets(vec![n(2), n(4)], vec![0.0, 0.2], 120.0).unwrap();
    let events = simulate(&m);
    assert_eq!(events.iter().map(|e| e.note).collect::<Vec<_>>(), m.notes);
}

#[test]
fn csv_round_trip() {
    let m = parse_hex_melody("135").unwrap();
    let t = generate_trajectory(&m, canonical_table(), &TrajectoryOptions::default()).unwrap();
    let left = t.left.unwrap();
    let mut buf = Vec::new();
    left.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("t,q1,q2,q3,q4,q5\n"));
    let back = JointTrajectory::read_csv(Arm::Left, buf.as_slice()).unwrap();
    assert_eq!(back, left);
}

#[test]
fn sample_interpolates_between_points() {
    let traj = JointTrajectory {
        arm: Arm::Left,
        points: vec![
            TrajectoryPoint { t_s: 0.0, q: [0.0; DOF] },
            TrajectoryPoint { t_s: 1.0, q: [1.0; DOF] },
        ],
    };
    assert_eq!(traj.sample(0.25).unwrap(), [0.25; DOF]);
    assert_eq!(traj.sample(-1.0).unwrap(), [0.0; DOF]);
    assert_eq!(traj.sample(5.0).unwrap(), [1.0; DOF]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_melodies_close_the_loop(
        notes in prop::collection::vec(1u8..=11, 1..=8),
        bpm in 60.0f64..150.0,
    ) {
        let m = Melody::new(notes.iter().map(|&v| n(v)).collect(), bpm).unwrap();
        let events = simulate(&m);
        let got: Vec<NoteId> = events.iter().map(|e| e.note).collect();
        prop_assert_eq!(&got, &m.notes);
        for (e, onset) in events.iter().zip(m.resolved_onsets()) {
            prop_assert!((e.t_s - onset).abs() <= 0.02);
        }
    }
}
