//! WebSocket front end for one live trainee at a time.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::Result;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use dancept_core::service::{ClientMessage, LiveSession, LoggedEvent, ServerMessage};
use dancept_core::{SessionConfig, SessionRecord};
use futures::{SinkExt, StreamExt};
use tokio::sync::{mpsc, Semaphore};

/// State messages are sent at most this often.
const STATE_HZ: f64 = 30.0;
/// Outbound queue depth; state frames are dropped when it is full.
const OUTBOX: usize = 64;

pub struct ServeOptions {
    pub host: String,
    pub port: u16,
    pub cfg: SessionConfig,
    pub tick_hz: u32,
    pub out: PathBuf,
}

struct App {
    cfg: SessionConfig,
    tick_hz: u32,
    out: PathBuf,
    trainee: Semaphore,
}

pub async fn serve(opts: ServeOptions) -> Result<()> {
    let app = Arc::new(App {
        cfg: opts.cfg,
        tick_hz: opts.tick_hz,
        out: opts.out,
        trainee: Semaphore::new(1),
    });
    let router = Router::new().route("/ws", get(upgrade)).with_state(app);
    let listener = tokio::net::TcpListener::bind((opts.host.as_str(), opts.port)).await?;
    println!("listening on ws://{}/ws", listener.local_addr()?);
    std::io::stdout().flush()?;
    axum::serve(listener, router).await?;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(app): State<Arc<App>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| trainee(socket, app))
}

enum Inbound {
    Message(ClientMessage),
    Invalid(String),
    Closed,
}

async fn trainee(socket: WebSocket, app: Arc<App>) {
    let (mut sink, mut stream) = socket.split();
    let Ok(_permit) = app.trainee.try_acquire() else {
        let busy = ServerMessage::Error {
            text: "another trainee is connected".into(),
        };
        let _ = sink.send(Message::Text(busy.to_json().into())).await;
        let _ = sink.close().await;
        return;
    };

    let (in_tx, mut in_rx) = mpsc::unbounded_channel();
    let reader = tokio::spawn(async move {
        while let Some(frame) = stream.next().await {
            let inbound = match frame {
                Ok(Message::Text(text)) => match ClientMessage::parse(&text) {
                    Ok(m) => Inbound::Message(m),
                    Err(e) => Inbound::Invalid(e),
                },
                Ok(Message::Close(_)) | Err(_) => break,
                Ok(_) => continue,
            };
            if in_tx.send(inbound).is_err() {
                return;
            }
        }
        let _ = in_tx.send(Inbound::Closed);
    });

    let (out_tx, mut out_rx) = mpsc::channel::<ServerMessage>(OUTBOX);
    let writer = tokio::spawn(async move {
        while let Some(msg) = out_rx.recv().await {
            if sink
                .send(Message::Text(msg.to_json().into()))
                .await
                .is_err()
            {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let session = match LiveSession::new(app.cfg.clone()) {
        Ok(s) => s,
        Err(e) => {
            let _ = out_tx
                .send(ServerMessage::Error {
                    text: e.to_string(),
                })
                .await;
            return;
        }
    };
    let session = run_loop(session, &app, &mut in_rx, &out_tx).await;
    let (summary, record, events) = session.finish();
    let _ = out_tx.send(summary).await;
    drop(out_tx);
    if let Err(e) = persist(&app, &record, &events) {
        eprintln!("error: archiving session: {e:#}");
    }
    reader.abort();
    let _ = writer.await;
}

async fn run_loop(
    mut session: LiveSession,
    app: &App,
    in_rx: &mut mpsc::UnboundedReceiver<Inbound>,
    out: &mpsc::Sender<ServerMessage>,
) -> LiveSession {
    let dt = app.cfg.dt;
    let tick = Duration::from_secs_f64(1.0 / app.tick_hz as f64);
    let steps_per_tick = (tick.as_secs_f64() / dt).round().max(1.0) as u64;
    let state_every = (app.tick_hz as f64 / STATE_HZ).round().max(1.0) as u32;
    let mut interval = tokio::time::interval(tick);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut ticks = 0u32;
    loop {
        interval.tick().await;
        loop {
            let inbound = match in_rx.try_recv() {
                Ok(i) => i,
                Err(mpsc::error::TryRecvError::Empty) => break,
                Err(mpsc::error::TryRecvError::Disconnected) => return session,
            };
            match inbound {
                Inbound::Message(m) => {
                    for reply in session.handle(m) {
                        if out.send(reply).await.is_err() {
                            return session;
                        }
                    }
                    if session.is_stopped() {
                        return session;
                    }
                }
                Inbound::Invalid(text) => {
                    let _ = out.send(ServerMessage::Error { text }).await;
                }
                Inbound::Closed => return session,
            }
        }
        match session.advance(steps_per_tick) {
            Ok(results) => {
                for r in results {
                    if out.send(r).await.is_err() {
                        return session;
                    }
                }
            }
            Err(e) => {
                let _ = out
                    .send(ServerMessage::Error {
                        text: e.to_string(),
                    })
                    .await;
                return session;
            }
        }
        ticks += 1;
        if session.is_running() && ticks.is_multiple_of(state_every) {
            // state frames are droppable under back-pressure
            let _ = out.try_send(session.snapshot());
        }
    }
}

fn persist(app: &App, record: &SessionRecord, events: &[LoggedEvent]) -> Result<()> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH)?.as_millis();
    let dir = app.out.join(format!("session-{stamp}"));
    record.write_archive(&dir)?;
    // the record's config carries any mode switch; replays start from this one
    fs::write(
        dir.join("initial_config.json"),
        serde_json::to_string_pretty(&app.cfg)? + "\n",
    )?;
    let mut log = String::new();
    for e in events {
        log.push_str(&serde_json::to_string(e)?);
        log.push('\n');
    }
    fs::write(dir.join("events.jsonl"), log)?;
    println!("archived {}", dir.display());
    Ok(())
}
