use melodica_core::audio::{detect_notes, synthesize_melody, DetectionConfig, Timbre};
use melodica_core::instrument::{Melody, NoteId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_melody(rng: &mut ChaCha8Rng, max_len: usize, bpm: (f64, f64)) -> Melody {
    let len = rng.random_range(1..=max_len);
    let notes = (0..len)
        .map(|_| NoteId::new(rng.random_range(1..=11)).unwrap())
        .collect();
    Melody::new(notes, rng.random_range(bpm.0..=bpm.1)).unwrap()
}

#[test]
fn noisy_random_melodies_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = DetectionConfig::default();
    let mut failures = Vec::new();
    for i in 0..200 {
        let m = random_melody(&mut rng, 16, (60.0, 140.0));
        let clean = synthesize_melody(&m, &Timbre::default());
        let noise = clean.rms() * 10f64.powf(-20.0 / 20.0);
        let clip = synthesize_melody(&m, &Timbre::default().with_noise(noise, i));
        let got: Vec<NoteId> = detect_notes(&clip, &cfg).unwrap().iter().map(|d| d.note).collect();
        if got != m.notes {
            failures.push((m.to_hex(), m.tempo_bpm, melodica_core::instrument::render_hex(&got)));
        }
    }
    assert!(failures.is_empty(), "{} failures: {:?}", failures.len(), &failures[..failures.len().min(10)]);
}
