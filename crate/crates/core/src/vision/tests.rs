use approx::assert_relative_eq;
use image::Rgb;
use nalgebra::{Point2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::instrument::{NoteId, XylophoneModel};
use crate::trajectory::{
    execute_sim, generate_trajectory, inverse_kinematics, strike_targets, Arm, KinematicChain,
    StrikeConfig, StrikeTable, TrajectoryOptions, CANONICAL_PLACEMENT,
};

const BG: [u8; 3] = [200, 200, 190];

fn canonical() -> PoseHypothesis {
    CameraMount::default().hypothesis(&CANONICAL_PLACEMENT)
}

fn blue_width(img: &Image) -> usize {
    let d = detect_blue_mask(img, &HsvRange::default()).unwrap();
    (0..d.mask.width)
        .filter(|&i| (0..d.mask.height).any(|j| d.mask.get(i as i64, j as i64)))
        .count()
}

fn shoelace(p: &[Point2<f64>]) -> f64 {
    0.5 * p
        .iter()
        .zip(p.iter().cycle().skip(1))
        .map(|(a, b)| a.x * b.y - b.x * a.y)
        .sum::<f64>()
        .abs()
}

fn observed_contour(img: &Image, model: &XylophoneModel) -> Vec<Point2<f64>> {
    extract_contour(&instrument_mask(img, model, 40.0)).unwrap()
}

#[test]
fn focal_from_diagonal_fov() {
    let cam = CameraModel::default();
    let expected = 800.0 / (2.0 * 36.5f64.to_radians().tan());
    assert!((cam.focal_px - expected).abs() < 1e-6);
    assert_eq!((cam.cx, cam.cy), (320.0, 240.0));
}

#[test]
fn canonical_hypothesis_is_on_axis() {
    let h = canonical();
    assert_relative_eq!(h.position[0], 0.0, epsilon = 1e-12);
    assert_relative_eq!(h.position[1], 0.0, epsilon = 1e-12);
    assert_relative_eq!(h.position[2], 61.0, epsilon = 1e-12);
    let back = CameraMount::default().placement(&h);
    assert_relative_eq!(Vector3::from(back.origin_cm), CANONICAL_PLACEMENT.origin(), epsilon = 1e-12);
}

#[test]
fn mount_maps_bars_consistently() {
    // A bar's robot-frame position seen through the mount equals its camera-frame position.
    let mount = CameraMount::default();
    let placement = CANONICAL_PLACEMENT.translated([1.0, -2.0, 0.5]);
    let placement = crate::trajectory::Placement { yaw_rad: 0.1, ..placement };
    let h = mount.hypothesis(&placement);
    let p_inst = Vector3::new(5.2, 1.0, 4.0);
    let robot = placement.to_robot(p_inst);
    let cam = h.to_camera(&p_inst);
    let expected = Vector3::new(
        -(robot.y - mount.position_cm[1]),
        -(robot.x - mount.position_cm[0]),
        -(robot.z - mount.position_cm[2]),
    );
    assert_relative_eq!(cam, expected, epsilon = 1e-9);
}

#[test]
fn on_axis_blue_bar_is_centred() {
    let cam = CameraModel::default();
    let img = render_synthetic(&XylophoneModel::default(), &cam, &canonical(), BG);
    let d = detect_blue_mask(&img, &HsvRange::default()).unwrap();
    assert!((d.centroid.x - 320.0).abs() <= 1.0 && (d.centroid.y - 240.0).abs() <= 1.0);
}

#[test]
fn doubling_depth_halves_bar_width() {
    let cam = CameraModel::default();
    let model = XylophoneModel::default();
    let near = PoseHypothesis::new(0.0, 0.0, 34.0, 0.0);
    let far = PoseHypothesis::new(0.0, 0.0, 64.0, 0.0);
    // Bar tops sit 4 cm above the origin: depths 30 and 60.
    let w1 = blue_width(&render_synthetic(&model, &cam, &near, BG)) as f64;
    let w2 = blue_width(&render_synthetic(&model, &cam, &far, BG)) as f64;
    assert!((w2 - w1 / 2.0).abs() <= 1.0, "{w1} {w2}");
}

#[test]
fn lateral_shift_moves_centroid() {
    let cam = CameraModel::default();
    let model = XylophoneModel::default();
    let h = canonical();
    let dx = 3.0;
    let c0 = detect_blue_mask(&render_synthetic(&model, &cam, &h, BG), &HsvRange::default()).unwrap();
    let c1 = detect_blue_mask(&render_synthetic(&model, &cam, &h.offset(dx, 0.0, 0.0, 0.0), BG), &HsvRange::default())
        .unwrap();
    let depth = h.position[2] - model.reference_bar().top_z();
    let expected = cam.focal_px * dx / depth;
    assert!((c1.centroid.x - c0.centroid.x - expected).abs() <= 1.0);
}

#[test]
fn no_blue_means_no_instrument() {
    let img = Image::from_pixel(64, 48, Rgb([200, 30, 30]));
    assert!(matches!(
        detect_blue_mask(&img, &HsvRange::default()),
        Err(VisionError::NoInstrument)
    ));
}

#[test]
fn blue_centroid_matches_projected_bar_centre() {
    let cam = CameraModel::default();
    let model = XylophoneModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let h = canonical().offset(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-0.2..0.2),
        );
        let img = render_synthetic(&model, &cam, &h, BG);
        let d = detect_blue_mask(&img, &HsvRange::default()).unwrap();
        let c = cam
            .project(&h.to_camera(&Vector3::from(model.reference_bar().center_cm)))
            .unwrap();
        assert!((d.centroid - c).norm() <= 2.0);
    }
}

#[test]
fn largest_blue_blob_wins() {
    let mut img = Image::from_pixel(100, 100, Rgb(BG));
    for j in 10..20 {
        for i in 10..20 {
            img.put_pixel(i, j, Rgb([0, 0, 255]));
        }
    }
    for j in 50..80 {
        for i in 60..70 {
            img.put_pixel(i, j, Rgb([20, 40, 230]));
        }
    }
    let d = detect_blue_mask(&img, &HsvRange::default()).unwrap();
    assert_eq!(d.pixel_count, 300);
    assert_relative_eq!(d.centroid, Point2::new(65.0, 65.0), epsilon = 1e-12);
}

#[test]
fn blue_mask_ignores_background_colour() {
    let cam = CameraModel::default();
    let model = XylophoneModel::default();
    let a = detect_blue_mask(&render_synthetic(&model, &cam, &canonical(), BG), &HsvRange::default()).unwrap();
    let b = detect_blue_mask(&render_synthetic(&model, &cam, &canonical(), [20, 90, 20]), &HsvRange::default())
        .unwrap();
    assert_eq!(a.mask, b.mask);
}

#[test]
fn full_frame_contour_is_border() {
    let mask = Mask::from_fn(7, 5, |_, _| true);
    let c = extract_contour(&mask).unwrap();
    assert_eq!(c.len(), 2 * 7 + 2 * 5 - 4);
    assert!(c.iter().all(|p| p.x == 0.5 || p.x == 6.5 || p.y == 0.5 || p.y == 4.5));
    let mut uniq: Vec<(i64, i64)> = c.iter().map(|p| (p.x as i64, p.y as i64)).collect();
    uniq.sort();
    uniq.dedup();
    assert_eq!(uniq.len(), c.len());
}

#[test]
fn contour_of_empty_mask_is_an_error() {
    assert!(matches!(extract_contour(&Mask::new(4, 4)), Err(VisionError::EmptyMask)));
    let one = Mask::from_fn(4, 4, |i, j| i == 2 && j == 1);
    assert_eq!(extract_contour(&one).unwrap(), vec![Point2::new(2.5, 1.5)]);
}

#[test]
fn contour_traces_concave_shapes() {
    // U shape: the trace must visit both prongs without repeating.
    let mask = Mask::from_fn(9, 9, |i, j| (1..=7).contains(&i) && (1..=7).contains(&j) && !((3..=5).contains(&i) && j <= 4));
    let c = extract_contour(&mask).unwrap();
    assert!(c.iter().any(|p| p.x == 4.5 && p.y == 5.5));
    assert!(c.iter().any(|p| p.x == 6.5 && p.y == 1.5));
    let mut uniq: Vec<(i64, i64)> = c.iter().map(|p| (p.x as i64, p.y as i64)).collect();
    uniq.sort();
    uniq.dedup();
    assert_eq!(uniq.len(), c.len());
}

#[test]
fn projected_contour_matches_render() {
    let cam = CameraModel::default();
    let model = XylophoneModel::default();
    let h = canonical().offset(2.0, -1.0, 3.0, 0.15);
    let img = render_synthetic(&model, &cam, &h, BG);
    let obs = observed_contour(&img, &model);
    let proj = project_contour(&model, &cam, &h).unwrap();
    let d = 0.5 * (mean_nearest_distance(&obs, &proj) + mean_nearest_distance(&proj, &obs));
    assert!(d <= 2.0, "{d}");
}

#[test]
fn double_depth_quarter_area() {
    let cam = CameraModel::default();
    let model = XylophoneModel::default();
    let h = canonical();
    let obs = observed_contour(&render_synthetic(&model, &cam, &h, BG), &model);
    // Depth of the body top doubles.
    let top = model.body_top_cm;
    let far = h.offset(0.0, 0.0, h.position[2] - top, 0.0);
    let proj = project_contour(&model, &cam, &far).unwrap();
    let ratio = shoelace(&proj) / shoelace(&obs);
    assert!((ratio - 0.25).abs() < 0.01, "{ratio}");
}

#[test]
fn likelihood_examples() {
    let square = [
        Point2::new(0.0, 0.0),
        Point2::new(100.0, 0.0),
        Point2::new(100.0, 100.0),
        Point2::new(0.0, 100.0),
    ];
    assert_eq!(hypothesis_likelihood(&square, &square), 1.0);
    let shifted: Vec<_> = square.iter().map(|p| p + nalgebra::Vector2::new(10.0, 0.0)).collect();
    assert_relative_eq!(hypothesis_likelihood(&square, &shifted), 1.0 / 11.0, epsilon = 1e-12);
}

#[test]
fn nearest_distance_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts = |rng: &mut ChaCha8Rng, n| -> Vec<Point2<f64>> {
        (0..n).map(|_| Point2::new(rng.random_range(0.0..50.0), rng.random_range(0.0..50.0))).collect()
    };
    for _ in 0..20 {
        let a = pts(&mut rng, 30);
        let b = pts(&mut rng, 40);
        let brute = a
            .iter()
            .map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / a.len() as f64;
        assert_relative_eq!(mean_nearest_distance(&a, &b), brute, epsilon = 1e-12);
    }
}

#[test]
fn matcher_agrees_with_exact_likelihood() {
    let cam = CameraModel::default();
    let model = XylophoneModel::default();
    let h = canonical().offset(1.0, 2.0, -3.0, 0.1);
    let obs = observed_contour(&render_synthetic(&model, &cam, &h, BG), &model);
    let matcher = ContourMatcher::new(&model, &cam, obs.clone());
    for dh in [(0.0, 0.0, 0.0, 0.0), (2.0, 0.0, 0.0, 0.0), (0.0, 0.0, 5.0, 0.1)] {
        let cand = h.offset(dh.0, dh.1, dh.2, dh.3);
        let exact = hypothesis_likelihood(&obs, &project_contour(&model, &cam, &cand).unwrap());
        let fast = matcher.score(&cand, 1);
        assert!((exact - fast).abs() < 0.05, "{exact} {fast}");
    }
}

#[test]
fn ground_truth_outranks_perturbations() {
    let cam = CameraModel::default();
    let model = XylophoneModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth = canonical().offset(1.5, -2.0, 2.0, 0.05);
    let obs = observed_contour(&render_synthetic(&model, &cam, &truth, BG), &model);
    let best = hypothesis_likelihood(&obs, &project_contour(&model, &cam, &truth).unwrap());
    for _ in 0..100 {
        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            .normalize();
        let d = dir * rng.random_range(2.0..6.0);
        let cand = truth.offset(d.x, d.y, d.z, rng.random_range(-0.1..0.1));
        let s = hypothesis_likelihood(&obs, &project_contour(&model, &cam, &cand).unwrap());
        assert!(best > s);
    }
}

#[test]
fn winner_is_invariant_to_resolution() {
    let model = XylophoneModel::default();
    let truth = canonical().offset(1.0, 1.0, 0.0, 0.05);
    let cands = [truth, truth.offset(2.0, 0.0, 0.0, 0.0), truth.offset(0.0, 0.0, 3.0, 0.0), truth.offset(0.0, 0.0, 0.0, 0.1)];
    let winner = |cam: &CameraModel| {
        let obs = observed_contour(&render_synthetic(&model, cam, &truth, BG), &model);
        (0..cands.len())
            .max_by(|&a, &b| {
                let s = |i: usize| hypothesis_likelihood(&obs, &project_contour(&model, cam, &cands[i]).unwrap());
                s(a).total_cmp(&s(b))
            })
            .unwrap()
    };
    let cam = CameraModel::default();
    assert_eq!(winner(&cam), 0);
    assert_eq!(winner(&cam.scaled(2)), 0);
}

#[test]
fn estimate_recovers_offset_prior() {
    let cam = CameraModel::default();
    let model = XylophoneModel::default();
    let truth = canonical().offset(-2.0, 1.0, 1.5, 0.08);
    let img = render_synthetic(&model, &cam, &truth, BG);
    let prior = truth.offset(3.0, 2.0, 0.0, 5f64.to_radians());
    let est = estimate_pose(&img, &model, &cam, &prior, &SearchOptions::default()).unwrap();
    let err = (Vector3::from(est.position) - Vector3::from(truth.position)).norm();
    assert!(err <= 0.5, "{err}");
    assert!((est.yaw_rad - truth.yaw_rad).abs() <= 1f64.to_radians());
}

#[test]
fn exact_prior_stays_put() {
    let cam = CameraModel::default();
    let model = XylophoneModel::default();
    let truth = canonical();
    let img = render_synthetic(&model, &cam, &truth, BG);
    let est = estimate_pose(&img, &model, &cam, &truth, &SearchOptions::default()).unwrap();
    let err = (Vector3::from(est.position) - Vector3::from(truth.position)).norm();
    assert!(err <= 0.3, "{err}");
    assert!(est.yaw_rad.abs() <= 0.5f64.to_radians());
}

#[test]
fn blank_image_has_no_instrument() {
    let cam = CameraModel::default();
    let img = Image::from_pixel(cam.width, cam.height, Rgb(BG));
    assert!(matches!(
        estimate_pose(&img, &XylophoneModel::default(), &cam, &canonical(), &SearchOptions::default()),
        Err(VisionError::NoInstrument)
    ));
}

#[test]
fn micro_adjust_examples() {
    let t = Vector3::new(10.0, 3.0, -20.0);
    assert_eq!(micro_adjust(t, &PoseDelta::zero()), t);
    let shift = PoseDelta {
        translation_cm: [2.0, 0.0, 0.0],
        ..PoseDelta::zero()
    };
    assert_relative_eq!(micro_adjust(t, &shift), t + Vector3::new(2.0, 0.0, 0.0));
    // Rotation about the pivot keeps the pivot fixed.
    let nominal = CANONICAL_PLACEMENT;
    let moved = crate::trajectory::Placement { yaw_rad: 0.1, ..nominal.translated([0.5, 1.0, 0.0]) };
    let delta = PoseDelta::between(&nominal, &moved);
    let p_inst = Vector3::new(7.8, 0.0, 4.0);
    assert_relative_eq!(micro_adjust(nominal.to_robot(p_inst), &delta), moved.to_robot(p_inst), epsilon = 1e-9);
}

#[test]
fn displaced_instrument_still_struck_after_adjustment() {
    let cam = CameraModel::default();
    let model = XylophoneModel::default();
    let mount = CameraMount::default();
    let opts = TrajectoryOptions::default();
    let left = KinematicChain::default_arm(Arm::Left);
    let nominal = CANONICAL_PLACEMENT;
    let actual = nominal.translated([0.0, 1.0, 0.0]);
    let img = render_synthetic(&model, &cam, &mount.hypothesis(&actual), BG);
    let est = estimate_pose(&img, &model, &cam, &mount.hypothesis(&nominal), &SearchOptions::default()).unwrap();
    let delta = PoseDelta::between(&nominal, &mount.placement(&est));
    let mut configs = Vec::new();
    let mut seed = left.rest_seed();
    for v in (1..=6).rev() {
        let note = NoteId::new(v).unwrap();
        let (strike, ready) = strike_targets(&model, &left, &nominal, note, &opts);
        let r = inverse_kinematics(&left, micro_adjust(ready, &delta), &seed, &opts.ik).unwrap();
        let s = inverse_kinematics(&left, micro_adjust(strike, &delta), &r.q, &opts.ik).unwrap();
        seed = r.q;
        configs.push(StrikeConfig { note, arm: Arm::Left, ready: r.q, strike: s.q });
    }
    let table = StrikeTable { configs };
    let melody = crate::instrument::parse_hex_melody("123456").unwrap();
    let traj = generate_trajectory(&melody, &table, &opts).unwrap();
    let events = execute_sim(traj.left.as_ref().unwrap(), &left, &model, &actual);
    assert_eq!(events.iter().map(|e| e.note).collect::<Vec<_>>(), melody.notes);
}

#[test]
fn ppm_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.ppm");
    let img = render_synthetic(&XylophoneModel::default(), &CameraModel::default(), &canonical(), BG);
    write_ppm(&path, &img).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..2], b"P6");
    assert_eq!(read_ppm(&path).unwrap(), img);
}
