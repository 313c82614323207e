//! Drive a recording session over the websocket without a person.
//!
//! Starts the server in-process at ten times real time, connects a client
//! that steers around the 5 m circle with a simple proportional rule on the
//! broadcast error state, records 20 simulated seconds, finalizes, and reads
//! the dataset back.
//!
//! ```text
//! cargo run --release -p zerotrack-hilbridge --example scripted_session -- [out_dir]
//! ```

use std::path::PathBuf;

use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;
use zerotrack::imitation::ingest_hil_recording;
use zerotrack::paths::FamilySpeed;
use zerotrack_hilbridge::{
    serve, trajectory_set, BridgeOptions, ClientMessage, ControlAction, ServerMessage, SimConfig, Simulator,
};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("zerotrack_hil"));
    let cfg = SimConfig { out_dir: out, ..Default::default() };
    let sim = Simulator::new(cfg, trajectory_set(FamilySpeed::default())?, "scripted")?;
    let bridge = serve(TcpListener::bind("127.0.0.1:0").await?, sim, BridgeOptions { time_scale: 10.0 })?;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/drive", bridge.local_addr())).await?;

    let send = |msg: ClientMessage| Message::Text(msg.to_json().into());
    let ctl = |action| send(ClientMessage::Ctl { v: 1, action });
    ws.send(ctl(ControlAction::SelectTrajectory { id: "circle_r5_ccw".into() })).await?;
    ws.send(ctl(ControlAction::StartRecording)).await?;

    let mut started = None;
    let mut printed = -1i64;
    let mut dataset = None;
    while let Some(frame) = ws.next().await {
        let Message::Text(text) = frame? else { continue };
        match ServerMessage::parse(&text)? {
            ServerMessage::State(s) => {
                let t0 = *started.get_or_insert(s.t);
                if s.t - t0 >= 20.0 {
                    if s.recording {
                        ws.send(ctl(ControlAction::StopRecording)).await?;
                        ws.send(ctl(ControlAction::Finalize)).await?;
                    }
                    continue;
                }
                if s.t.floor() as i64 > printed {
                    printed = s.t.floor() as i64;
                    println!("t={:>5.2} ct_err={:.3} v={:.2} samples={}", s.t, s.ct_err, s.vel, s.samples);
                }
                // feedforward for r = 5 plus corrections on lateral and heading error
                let steering = 0.25 + 1.5 * s.e[1] + 1.0 * s.e[2];
                let throttle = 0.33 + 0.5 * s.e[3];
                ws.send(send(ClientMessage::Cmd { v: 1, session: None, client_t: None, steering, throttle }))
                    .await?;
            }
            ServerMessage::Ack { action, ok, detail, .. } => {
                println!("{action}: ok={ok} {}", detail.clone().unwrap_or_default());
                if action == "finalize" {
                    dataset = detail.filter(|_| ok);
                    break;
                }
            }
            ServerMessage::Error { message, .. } => eprintln!("server error: {message}"),
        }
    }
    ws.close(None).await?;
    bridge.shutdown().await?;

    let file = PathBuf::from(dataset.ok_or("session was not written")?);
    let (data, _) = ingest_hil_recording(&file)?;
    println!("{} samples in {}", data.len(), file.display());
    Ok(())
}
