use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use melodica_core::affect::{
    dataset_from_recordings, load_recording_dir, pairwise_report, synth_eda, write_recording, AffectError,
    ClassParams, ClassifierSpec, FeatureConfig, KernelKind, ReportRow,
};
use melodica_core::audio::{detect_notes, read_wav_channel, synthesize_melody, write_wav, AudioError, Timbre};
use melodica_core::config::EngineConfig;
use melodica_core::instrument::{parse_hex_melody, render_hex};
use melodica_core::session::{
    plan_session, replay, run_scripted, ParticipantPrefs, Persona, RobotRig, RunOptions, SessionError,
    SessionKind, SessionLog,
};

mod serve;

#[derive(Parser)]
#[command(name = "melodica", version, about = "Robot-assisted music practice engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the notes detected in a WAV file as hex digits.
    Detect {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: u16,
    },
    /// Render a hex melody to a WAV file.
    Synth {
        #[arg(long)]
        melody: String,
        #[arg(long, default_value_t = 120.0)]
        bpm: f64,
        #[arg(long)]
        out: PathBuf,
        /// White noise RMS added to the render.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a session against a scripted participant and write its JSONL log.
    Session(SessionArgs),
    /// Re-run a session log's inputs and check the outputs match byte for byte.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// EDA emotion classification.
    Affect {
        #[command(subcommand)]
        command: AffectCommand,
    },
    /// Serve one interactive session over a websocket at /ws.
    Serve(serve::ServeArgs),
}

#[derive(Args)]
struct SessionArgs {
    /// baseline, intervention:N (N = 1..4) or exit.
    #[arg(long)]
    kind: SessionKind,
    #[arg(long)]
    participant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "perfect")]
    persona: Persona,
    /// Preferred song for intervention and exit sessions.
    #[arg(long)]
    song: Option<String>,
    /// Route the participant's strikes through synthesis and detection.
    #[arg(long)]
    audio: bool,
    /// Act out robot demonstrations with the arm trajectory simulator.
    #[arg(long)]
    robot: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifierArgs {
    #[arg(long)]
    data: PathBuf,
    /// SVM kernel: linear, poly or rbf.
    #[arg(long, conflicts_with = "k")]
    kernel: Option<KernelKind>,
    /// Use KNN with this K (1, 3 or 5) instead of an SVM.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ClassifierArgs {
    fn spec(&self) -> Result<ClassifierSpec> {
        Ok(match (self.kernel, self.k) {
            (_, Some(k)) if ![1, 3, 5].contains(&k) => bail!("K must be 1, 3 or 5"),
            (_, Some(k)) => ClassifierSpec::Knn { k },
            (kernel, None) => ClassifierSpec::Svm { kernel: kernel.unwrap_or(KernelKind::Rbf), c: self.c },
        })
    }
}

#[derive(Subcommand)]
enum AffectCommand {
    /// Train on every conversation in the data directory and save the model.
    Train {
        #[command(flatten)]
        classifier: ClassifierArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified cross-validation report per section comparison.
    Eval {
        #[command(flatten)]
        classifier: ClassifierArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Write a synthetic three-section EDA data set (SCR rates 2, 5 and 8 per minute).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect { wav, channel } => detect(wav, channel),
        Command::Synth { melody, bpm, out, noise, seed } => synth(&melody, bpm, out, noise, seed),
        Command::Session(args) => session(args),
        Command::Replay { log } => replay_log(log),
        Command::Affect { command } => affect(command),
        Command::Serve(args) => serve::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Input data too thin to train or evaluate on.
#[derive(Debug)]
struct NotEnoughData(String);

impl std::fmt::Display for NotEnoughData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NotEnoughData {}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<NotEnoughData>().is_some() {
            return 5;
        }
        if let Some(a) = cause.downcast_ref::<AudioError>() {
            return match a {
                AudioError::EmptySignal => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<SessionError>().is_some() {
            return 4;
        }
        if let Some(AffectError::InsufficientClassMembers(..) | AffectError::DegenerateData | AffectError::EmptyTrainingSet) =
            cause.downcast_ref::<AffectError>()
        {
            return 5;
        }
    }
    1
}

fn detect(wav: PathBuf, channel: u16) -> Result<()> {
    let cfg = EngineConfig::from_env()?;
    let clip = read_wav_channel(&wav, channel).with_context(|| format!("reading {}", wav.display()))?;
    let notes = detect_notes(&clip, &cfg.detection)?;
    let hex: Vec<_> = notes.iter().map(|n| n.note).collect();
    println!("{}", render_hex(&hex));
    Ok(())
}

fn synth(melody: &str, bpm: f64, out: PathBuf, noise: f64, seed: u64) -> Result<()> {
    let mut m = parse_hex_melody(melody).context("parsing melody")?;
    if !(bpm > 0.0) {
        bail!("--bpm must be positive");
    }
    m.tempo_bpm = bpm;
    let clip = synthesize_melody(&m, &Timbre::default().with_noise(noise, seed));
    write_wav(&out, &clip).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn session(args: SessionArgs) -> Result<()> {
    let cfg = EngineConfig::from_env()?;
    let bank = cfg.song_bank()?;
    let prefs = ParticipantPrefs { song: args.song };
    let plan = plan_session(args.kind, &prefs, &bank, &cfg.session)?;
    let mut opts = RunOptions::new(args.persona, args.seed);
    opts.timing = cfg.timing;
    opts.audio = args.audio;
    if args.robot {
        let rig = RobotRig::new(cfg.instrument.clone(), cfg.placement, cfg.trajectory).context("solving strike poses")?;
        opts.robot = Some(Arc::new(rig));
    }
    let run = run_scripted(plan, cfg.session.clone(), bank, &opts)?;
    let mut f = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    run.log.write_jsonl(&mut f)?;
    let s = &run.summary;
    println!("participant {} session {:?} song {:?}", args.participant, s.kind, s.song);
    for a in s.accuracy.iter().filter(|a| a.total > 0) {
        println!("  {:?}: {}/{} correct", a.phase, a.correct, a.total);
    }
    match s.turn_taking_percent {
        Some(p) => println!("  turn-taking: {p:.1}% over {} graded conversations", s.grades.len()),
        None => println!("  turn-taking: no graded conversations"),
    }
    println!("  modes played: {:?}", s.modes_played);
    Ok(())
}

fn replay_log(path: PathBuf) -> Result<()> {
    let f = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let log = SessionLog::read_jsonl(std::io::BufReader::new(f))?;
    let rep = replay(&log)?;
    match rep.first_mismatch {
        None => {
            println!("replay identical: {} inputs, {} records", rep.inputs, rep.records);
            Ok(())
        }
        Some(i) => Err(SessionError::Log(format!("replay diverges at record {i}")).into()),
    }
}

fn print_report(spec: &ClassifierSpec, rows: &[ReportRow]) {
    println!("{:<22} {:>9} {:>6} {:>10} {:>8}", format!("[{}]", spec.name()), "Accuracy", "AUC", "Precision", "Recall");
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}", 100.0 * x));
    for r in rows {
        let m = &r.metrics;
        println!(
            "{:<22} {:>9.1} {:>6} {:>10} {:>8}",
            r.name,
            100.0 * m.accuracy,
            m.auc.map_or("-".to_string(), |a| format!("{a:.2}")),
            pct(m.precision),
            pct(m.recall)
        );
    }
}

fn affect(cmd: AffectCommand) -> Result<()> {
    let features = FeatureConfig::default();
    match cmd {
        AffectCommand::Synth { out, per_class, seed } => {
            fs::create_dir_all(&out)?;
            for (i, (label, rate)) in [("S1", 2.0), ("S2", 5.0), ("S3", 8.0)].into_iter().enumerate() {
                let p = ClassParams::new(label, rate, seed.wrapping_mul(31).wrapping_add(i as u64 + 1));
                let rec = synth_eda(&p, per_class as f64 * 45.0)?;
                write_recording(&rec, out.join(format!("{label}.csv")))?;
            }
            println!("wrote {} conversations per section to {}", per_class, out.display());
        }
        AffectCommand::Eval { classifier, folds } => {
            let spec = classifier.spec()?;
            let recs = load_recording_dir(&classifier.data)?;
            let data = dataset_from_recordings(&recs, &features)?;
            if data.labels.len() < 2 {
                return Err(NotEnoughData(format!(
                    "{} holds {} section label(s); at least two are needed",
                    classifier.data.display(),
                    data.labels.len()
                ))
                .into());
            }
            let rows = pairwise_report(&spec, &data, folds, classifier.seed)?;
            print_report(&spec, &rows);
        }
        AffectCommand::Train { classifier, out } => {
            let spec = classifier.spec()?;
            let recs = load_recording_dir(&classifier.data)?;
            let data = dataset_from_recordings(&recs, &features)?;
            if data.samples.is_empty() {
                return Err(NotEnoughData(format!("no annotated conversations in {}", classifier.data.display())).into());
            }
            let (model, kkt) = spec.train(&data)?;
            let mut f = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            f.write_all(model.to_text().as_bytes())?;
            println!(
                "trained {} on {} conversations ({} classes), max KKT gap {kkt:.2e}",
                spec.name(),
                data.samples.len(),
                data.labels.len()
            );
        }
    }
    Ok(())
}
