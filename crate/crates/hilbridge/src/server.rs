use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;
use zerotrack::harness::ScenarioConfig;

use crate::error::{Error, Result};
use crate::protocol::{ClientMessage, ControlAction, ServerMessage};
use crate::session::SessionFiles;
use crate::sim::{SimConfig, Simulator};
use crate::trajectories::{trajectory_set, TrajectoryInfo};

/// Frames queued per client before further broadcasts to it are dropped.
const CLIENT_QUEUE: usize = 64;
const EVENT_QUEUE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeOptions {
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self { time_scale: 1.0 }
    }
}

enum Event {
    Joined { id: u64, tx: mpsc::Sender<ServerMessage> },
    Left { id: u64 },
    Message { id: u64, msg: ClientMessage },
}

#[derive(Clone)]
struct AppState {
    events: mpsc::Sender<Event>,
    trajectories: Arc<Vec<TrajectoryInfo>>,
    next_id: Arc<AtomicU64>,
    closing: watch::Receiver<bool>,
}

/// A running server. Dropping it leaves the tasks running until the
/// runtime stops; [`Bridge::shutdown`] stops them and returns the simulator.
pub struct Bridge {
    addr: SocketAddr,
    closing: watch::Sender<bool>,
    ticker: JoinHandle<Simulator>,
    http: JoinHandle<std::io::Result<()>>,
}

impl Bridge {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Closes every connection, stops the ticker and hands back the
    /// simulator with its open session.
    pub async fn shutdown(self) -> Result<Simulator> {
        let _ = self.closing.send(true);
        let sim = self.ticker.await.map_err(|e| Error::Settings(format!("ticker task failed: {e}")))?;
        match self.http.await {
            Ok(Ok(())) => Ok(sim),
            Ok(Err(source)) => Err(Error::Serve { addr: self.addr, source }),
            Err(e) => Err(Error::Settings(format!("server task failed: {e}"))),
        }
    }
}

/// Starts the ticker and the HTTP server on `listener`. Must be called from
/// within a tokio runtime.
pub fn serve(listener: TcpListener, sim: Simulator, options: BridgeOptions) -> Result<Bridge> {
    if !(options.time_scale > 0.0 && options.time_scale.is_finite()) {
        return Err(Error::Settings(format!("time scale must be > 0, got {}", options.time_scale)));
    }
    let addr = listener.local_addr().map_err(|source| Error::Bind { addr: "listener".into(), source })?;
    let period = Duration::from_secs_f64(sim.config().tick_dt() / options.time_scale);
    let (events_tx, events_rx) = mpsc::channel(EVENT_QUEUE);
    let (closing_tx, closing_rx) = watch::channel(false);
    let state = AppState {
        events: events_tx,
        trajectories: Arc::new(sim.trajectories().iter().map(|t| t.info.clone()).collect()),
        next_id: Arc::new(AtomicU64::new(1)),
        closing: closing_rx.clone(),
    };
    let ticker = tokio::spawn(ticker(sim, events_rx, period, closing_rx.clone()));
    let router = Router::new()
        .route("/drive", get(drive))
        .route("/trajectories", get(list_trajectories))
        .with_state(state);
    let mut stop = closing_rx;
    let http = tokio::spawn(async move {
        axum::serve(listener, router)
            .with_graceful_shutdown(async move {
                let _ = stop.wait_for(|closing| *closing).await;
            })
            .await
    });
    Ok(Bridge { addr, closing: closing_tx, ticker, http })
}

/// Serves on the configured address until ctrl-c, then writes the open
/// session if it holds any samples.
pub fn run(cfg: &ScenarioConfig) -> Result<Option<SessionFiles>> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    runtime.block_on(async {
        let trajectories = trajectory_set(cfg.hil.trajectories)?;
        let started = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or_default();
        let sim = Simulator::new(SimConfig::from_scenario(cfg), trajectories, format!("hil-{started}"))?;
        let listener = TcpListener::bind(&cfg.hil.bind).await.map_err(|source| Error::Bind {
            addr: cfg.hil.bind.clone(),
            source,
        })?;
        let bridge = serve(listener, sim, BridgeOptions { time_scale: cfg.hil.time_scale })?;
        log::info!("driving socket at ws://{}/drive", bridge.local_addr());
        tokio::signal::ctrl_c().await.map_err(|e| Error::io("ctrl-c handler", e))?;
        let mut sim = bridge.shutdown().await?;
        if sim.session().is_empty() {
            return Ok(None);
        }
        let dir = sim.config().out_dir.clone();
        let files = sim.finalize(&dir)?;
        log::info!("session written to {}", files.dataset.display());
        Ok(Some(files))
    })
}

async fn list_trajectories(State(app): State<AppState>) -> Json<Vec<TrajectoryInfo>> {
    Json(app.trajectories.as_ref().clone())
}

async fn drive(ws: WebSocketUpgrade, State(app): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client(socket, app))
}

async fn client(socket: WebSocket, app: AppState) {
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    let (out_tx, mut out_rx) = mpsc::channel::<ServerMessage>(CLIENT_QUEUE);
    if app.events.send(Event::Joined { id, tx: out_tx.clone() }).await.is_err() {
        return;
    }
    let (mut sink, mut stream) = socket.split();
    let writer = async {
        while let Some(msg) = out_rx.recv().await {
            if sink.send(Message::Text(msg.to_json().into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    };
    let reader = async {
        while let Some(Ok(frame)) = stream.next().await {
            let reply = match frame {
                Message::Text(text) => match ClientMessage::parse(&text) {
                    Ok(msg) => {
                        if app.events.send(Event::Message { id, msg }).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Err(e) => ServerMessage::error(e.to_string()),
                },
                Message::Binary(_) => ServerMessage::error("binary frames are not supported"),
                Message::Close(_) => break,
                Message::Ping(_) | Message::Pong(_) => continue,
            };
            let _ = out_tx.try_send(reply);
        }
    };
    let mut closing = app.closing.clone();
    tokio::select! {
        _ = writer => {}
        _ = reader => {}
        _ = closing.wait_for(|c| *c) => {}
    }
    let _ = app.events.send(Event::Left { id }).await;
}

/// Sole owner of the simulator. It never awaits a client: outbound frames
/// are offered with `try_send` and dropped when a client's queue is full.
async fn ticker(
    mut sim: Simulator,
    mut events: mpsc::Receiver<Event>,
    period: Duration,
    mut closing: watch::Receiver<bool>,
) -> Simulator {
    let mut clients: HashMap<u64, mpsc::Sender<ServerMessage>> = HashMap::new();
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            biased;
            _ = closing.wait_for(|c| *c) => break,
            Some(event) = events.recv() => match event {
                Event::Joined { id, tx } => {
                    clients.insert(id, tx);
                    sim.client_connected();
                }
                Event::Left { id } => {
                    if clients.remove(&id).is_some() {
                        sim.client_disconnected();
                    }
                }
                Event::Message { id, msg } => {
                    if let (Some(reply), Some(tx)) = (sim.handle(msg), clients.get(&id)) {
                        let _ = tx.try_send(reply);
                    }
                }
            },
            _ = interval.tick() => {
                let out = match sim.tick() {
                    Ok(Some(state)) => ServerMessage::State(state),
                    Ok(None) => continue,
                    Err(e) => {
                        log::error!("simulation step failed, resetting: {e}");
                        let _ = sim.control(&ControlAction::Reset);
                        ServerMessage::error(format!("simulation reset after: {e}"))
                    }
                };
                for tx in clients.values() {
                    let _ = tx.try_send(out.clone());
                }
            }
        }
    }
    sim
}
