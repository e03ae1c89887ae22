//! Newline-delimited wire protocol and the serving loop.
//!
//! Inbound records:
//!   {"type":"audio","pcm0":[...],"pcm1":[...],"sample_rate":16000}
//!   {"type":"reset"}
//! Outbound records:
//!   {"type":"prediction", ...}  one per completed frame
//!   {"type":"ok"}               acknowledging a reset
//!   {"type":"error","code":"...","msg":"..."}
//!
//! A malformed or invalid message produces an error record and leaves the
//! session (and other connections) running.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use serde::Serialize;

use crate::audio::SAMPLE_RATE;
use crate::model::VapModel;

use super::{PredictionFrame, StreamError, StreamSession};

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum OutMsg {
    Prediction(PredictionFrame),
    Ok,
    Error { code: String, msg: String },
}

pub fn encode_out(msg: &OutMsg) -> String {
    serde_json::to_string(msg).expect("serializable")
}

/// Where to accept sessions.
pub enum Endpoint {
    Tcp(u16),
    Stdio,
}

/// Serve sessions until the transport closes. TCP accepts any number of
/// connections, one independent session each; stdio serves exactly one.
pub fn serve(
    model: Arc<VapModel<f32>>,
    endpoint: Endpoint,
    context_secs: f64,
    listener_channel: usize,
) -> Result<(), StreamError> {
    match endpoint {
        Endpoint::Stdio => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            run_session_loop(
                model,
                context_secs,
                listener_channel,
                stdin.lock(),
                stdout.lock(),
            )
        }
        Endpoint::Tcp(port) => {
            let listener = TcpListener::bind(("127.0.0.1", port))
                .map_err(|e| StreamError::Bind(format!("port {port}: {e}")))?;
            eprintln!("listening on {}", listener.local_addr().map_err(StreamError::Io)?);
            serve_on_listener(model, listener, context_secs, listener_channel)
        }
    }
}

/// Accept loop over an already-bound listener (lets tests bind port 0).
pub fn serve_on_listener(
    model: Arc<VapModel<f32>>,
    listener: TcpListener,
    context_secs: f64,
    listener_channel: usize,
) -> Result<(), StreamError> {
    for stream in listener.incoming() {
        let stream = stream.map_err(StreamError::Io)?;
        let model = model.clone();
        std::thread::spawn(move || {
            let _ = handle_tcp(model, stream, context_secs, listener_channel);
        });
    }
    Ok(())
}

fn handle_tcp(
    model: Arc<VapModel<f32>>,
    stream: TcpStream,
    context_secs: f64,
    listener_channel: usize,
) -> Result<(), StreamError> {
    let reader = BufReader::new(stream.try_clone().map_err(StreamError::Io)?);
    run_session_loop(model, context_secs, listener_channel, reader, stream)
}

fn run_session_loop(
    model: Arc<VapModel<f32>>,
    context_secs: f64,
    listener_channel: usize,
    reader: impl BufRead,
    mut writer: impl Write,
) -> Result<(), StreamError> {
    let mut session = StreamSession::new(model.clone(), context_secs, listener_channel)?;
    for line in reader.lines() {
        let line = line.map_err(StreamError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let replies = handle_line(&model, &mut session, context_secs, listener_channel, &line);
        for msg in replies {
            writer.write_all(encode_out(&msg).as_bytes()).map_err(StreamError::Io)?;
            writer.write_all(b"\n").map_err(StreamError::Io)?;
        }
        writer.flush().map_err(StreamError::Io)?;
    }
    Ok(())
}

/// One inbound line to zero or more outbound records.
pub fn handle_line(
    model: &Arc<VapModel<f32>>,
    session: &mut StreamSession,
    context_secs: f64,
    listener_channel: usize,
    line: &str,
) -> Vec<OutMsg> {
    let err = |code: &str, msg: String| {
        vec![OutMsg::Error { code: code.to_string(), msg }]
    };
    let value: serde_json::Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return err("bad_message", format!("not a json record: {e}")),
    };
    let Some(kind) = value.get("type").and_then(|t| t.as_str()) else {
        return err("bad_message", "missing \"type\" field".into());
    };
    match kind {
        "reset" => match StreamSession::new(model.clone(), context_secs, listener_channel) {
            Ok(fresh) => {
                *session = fresh;
                vec![OutMsg::Ok]
            }
            Err(e) => err("reset_failed", e.to_string()),
        },
        "audio" => {
            // Reject records carrying more than two channels.
            if value.as_object().map(|o| o.keys().any(|k| {
                k.starts_with("pcm")
                    && k != "pcm0"
                    && k != "pcm1"
            })) == Some(true)
            {
                return err("bad_channels", "expected exactly pcm0 and pcm1".into());
            }
            let pcm = |key: &str| -> Option<Vec<f32>> {
                value.get(key)?.as_array().map(|a| {
                    a.iter().map(|v| v.as_f64().unwrap_or(f64::NAN) as f32).collect()
                })
            };
            let (Some(pcm0), Some(pcm1)) = (pcm("pcm0"), pcm("pcm1")) else {
                return err("bad_channels", "audio records need pcm0 and pcm1 arrays".into());
            };
            if pcm0.len() != pcm1.len() {
                return err(
                    "bad_channels",
                    format!("channel lengths differ: {} vs {}", pcm0.len(), pcm1.len()),
                );
            }
            if pcm0.iter().chain(&pcm1).any(|v| !v.is_finite()) {
                return err("bad_samples", "non-numeric sample".into());
            }
            let rate = value.get("sample_rate").and_then(|v| v.as_u64()).unwrap_or(0);
            if rate != SAMPLE_RATE as u64 {
                return err("bad_sample_rate", format!("expected {SAMPLE_RATE}, got {rate}"));
            }
            match session.push_audio(&pcm0, &pcm1) {
                Ok(frames) => frames.into_iter().map(OutMsg::Prediction).collect(),
                Err(e) => err("push_failed", e.to_string()),
            }
        }
        other => err("bad_message", format!("unknown record type \"{other}\"")),
    }
}
