use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use clap::Args;
use futures::{SinkExt, StreamExt};
use melodica_core::config::EngineConfig;
use melodica_core::service::{ServerMessage, ServiceSession};
use melodica_core::session::{plan_session, ParticipantPrefs, SessionKind};

const POLL_EVERY: Duration = Duration::from_millis(50);
const HEARTBEAT_EVERY: Duration = Duration::from_secs(1);

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "intervention:1")]
    kind: SessionKind,
    #[arg(long)]
    song: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Session seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    /// Where to write the session log on completion or disconnect.
    #[arg(long)]
    log: Option<PathBuf>,
}

/// Session time that only advances while a participant is connected.
struct Clock {
    scale: f64,
    banked_s: f64,
    running_since: Option<Instant>,
}

impl Clock {
    fn now(&self) -> f64 {
        self.banked_s + self.running_since.map_or(0.0, |s| s.elapsed().as_secs_f64() * self.scale)
    }

    fn resume(&mut self) {
        if self.running_since.is_none() {
            self.running_since = Some(Instant::now());
        }
    }

    fn pause(&mut self) {
        self.banked_s = self.now();
        self.running_since = None;
    }
}

struct Shared {
    session: ServiceSession,
    clock: Clock,
    connected: bool,
    log_path: Option<PathBuf>,
}

impl Shared {
    fn write_log(&self) {
        if let Some(p) = &self.log_path {
            if let Err(e) = std::fs::write(p, self.session.log().to_jsonl()) {
                eprintln!("could not write log {}: {e}", p.display());
            }
        }
    }
}

type AppState = Arc<Mutex<Shared>>;

pub fn run(args: ServeArgs) -> Result<()> {
    anyhow::ensure!(args.time_scale > 0.0, "--time-scale must be positive");
    let cfg = EngineConfig::from_env()?;
    let bank = cfg.song_bank()?;
    let plan = plan_session(args.kind, &ParticipantPrefs { song: args.song.clone() }, &bank, &cfg.session)?;
    let session = ServiceSession::new(plan, cfg.session.clone(), bank, args.seed, cfg.timing)?;
    let state: AppState = Arc::new(Mutex::new(Shared {
        session,
        clock: Clock { scale: args.time_scale, banked_s: 0.0, running_since: None },
        connected: false,
        log_path: args.log.clone(),
    }));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse().context("bad listen address")?;
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        println!("listening on {}", listener.local_addr()?);
        let app = Router::new().route("/ws", get(upgrade)).with_state(state);
        axum::serve(listener, app).await?;
        Ok(())
    })
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state))
}

fn frames(msgs: Vec<ServerMessage>) -> Vec<Message> {
    msgs.iter().map(|m| Message::Text(m.to_json().into())).collect()
}

async fn connection(socket: WebSocket, state: AppState) {
    let (mut tx, mut rx) = socket.split();
    let busy = {
        let mut s = state.lock().expect("state lock");
        let busy = s.connected;
        if !busy {
            s.connected = true;
            s.clock.resume();
        }
        busy
    };
    if busy {
        let msg = ServerMessage::error("another participant is connected");
        let _ = tx.send(Message::Text(msg.to_json().into())).await;
        let _ = tx.send(Message::Close(None)).await;
        return;
    }

    let mut poll = tokio::time::interval(POLL_EVERY);
    let mut heartbeat = tokio::time::interval(HEARTBEAT_EVERY);
    heartbeat.tick().await;
    loop {
        let out: Vec<Message> = tokio::select! {
            frame = rx.next() => match frame {
                Some(Ok(Message::Text(text))) => {
                    let mut s = state.lock().expect("state lock");
                    let t = s.clock.now();
                    frames(s.session.on_frame(text.as_str(), t))
                }
                Some(Ok(Message::Binary(_))) => frames(vec![ServerMessage::error("binary frames are not supported")]),
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => continue,
            },
            _ = poll.tick() => {
                let mut s = state.lock().expect("state lock");
                let t = s.clock.now();
                frames(s.session.poll(t))
            }
            _ = heartbeat.tick() => {
                let s = state.lock().expect("state lock");
                if s.session.participant().is_some() {
                    frames(vec![s.session.state(s.clock.now())])
                } else {
                    Vec::new()
                }
            }
        };
        let mut failed = false;
        for m in out {
            if tx.send(m).await.is_err() {
                failed = true;
                break;
            }
        }
        let done = state.lock().expect("state lock").session.is_done();
        if failed || done {
            if done {
                let _ = tx.send(Message::Close(None)).await;
            }
            break;
        }
    }

    let mut s = state.lock().expect("state lock");
    s.clock.pause();
    s.connected = false;
    s.write_log();
}
