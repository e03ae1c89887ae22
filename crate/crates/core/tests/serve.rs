//! Wire-protocol loopback: a scripted session over TCP must match the
//! in-process session frame for frame, and protocol errors must not kill
//! the connection.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use vapbc::model::{ModelConfig, VapModel};
use vapbc::streaming::{serve_on_listener, StreamSession};
use vapbc::synth::{generate_dialogue, SplitCounts, SynthConfig};

fn tiny_model() -> Arc<VapModel<f32>> {
    let cfg = ModelConfig {
        d_channel: 16,
        d_concat: 32,
        n_bands: 8,
        n_heads: 4,
        max_context: 64,
        bc_classes: 3,
        dropout: 0.0,
        frame_rate: 10,
        ..ModelConfig::default()
    };
    Arc::new(VapModel::init(cfg, 17).unwrap())
}

fn spawn_server(model: Arc<VapModel<f32>>, context: f64) -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let _ = serve_on_listener(model, listener, context, 1);
    });
    addr
}

fn send_line(stream: &mut TcpStream, line: &str) {
    stream.write_all(line.as_bytes()).unwrap();
    stream.write_all(b"\n").unwrap();
    stream.flush().unwrap();
}

fn audio_message(pcm0: &[f32], pcm1: &[f32]) -> String {
    let fmt = |xs: &[f32]| -> String {
        let parts: Vec<String> = xs.iter().map(|x| format!("{x}")).collect();
        parts.join(",")
    };
    format!(
        "{{\"type\":\"audio\",\"pcm0\":[{}],\"pcm1\":[{}],\"sample_rate\":16000}}",
        fmt(pcm0),
        fmt(pcm1)
    )
}

#[test]
fn scripted_session_matches_in_process_predictions() {
    let model = tiny_model();
    let context = 2.0;
    let addr = spawn_server(model.clone(), context);

    let synth_cfg = SynthConfig {
        session_secs: 20.0,
        splits: SplitCounts { train: 1, val: 0, test: 0 },
        ..SynthConfig::default()
    };
    let (audio, ..) = generate_dialogue(&synth_cfg, 3).unwrap();
    let take = 10 * 16000; // 10 s
    let pcm0 = &audio.channel(0)[..take];
    let pcm1 = &audio.channel(1)[..take];

    // In-process oracle.
    let mut oracle = StreamSession::new(model.clone(), context, 1).unwrap();
    let expect = oracle.push_audio(pcm0, pcm1).unwrap();

    let mut stream = TcpStream::connect(addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());

    // Reset first: counter starts at zero and the server answers ok.
    send_line(&mut stream, r#"{"type":"reset"}"#);
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    assert_eq!(line.trim(), r#"{"type":"ok"}"#);

    // Feed in uneven chunks and collect predictions.
    let mut got: Vec<serde_json::Value> = Vec::new();
    let chunks = [1600usize, 4000, 700, 16000, 9000, 3000];
    let mut pos = 0usize;
    let mut chunk_idx = 0;
    while pos < take {
        let n = chunks[chunk_idx % chunks.len()].min(take - pos);
        chunk_idx += 1;
        send_line(&mut stream, &audio_message(&pcm0[pos..pos + n], &pcm1[pos..pos + n]));
        pos += n;
        let expected_so_far = pos / 1600;
        while got.len() < expected_so_far {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            got.push(serde_json::from_str(&line).unwrap());
        }
    }
    assert_eq!(got.len(), expect.len());
    for (wire, frame) in got.iter().zip(&expect) {
        assert_eq!(wire["type"], "prediction");
        assert!((wire["t"].as_f64().unwrap() - frame.t).abs() < 1e-12);
        for (key, want) in [
            ("p_bc", frame.p_bc),
            ("p_continuer", frame.p_continuer),
            ("p_assessment", frame.p_assessment),
            ("zero_shot", frame.zero_shot),
        ] {
            let got_v = wire[key].as_f64().unwrap();
            let want_v = want.unwrap();
            assert!((got_v - want_v).abs() < 1e-9, "{key}: {got_v} vs {want_v}");
        }
        assert_eq!(
            wire["vap_top_state"].as_u64().unwrap(),
            frame.vap_top_state.unwrap() as u64
        );
    }
}

#[test]
fn protocol_errors_do_not_kill_the_connection() {
    let model = tiny_model();
    let addr = spawn_server(model, 2.0);
    let mut stream = TcpStream::connect(addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();

    // Three channels.
    send_line(
        &mut stream,
        r#"{"type":"audio","pcm0":[0.0],"pcm1":[0.0],"pcm2":[0.0],"sample_rate":16000}"#,
    );
    reader.read_line(&mut line).unwrap();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(v["type"], "error");
    assert_eq!(v["code"], "bad_channels");

    // Garbage line.
    line.clear();
    send_line(&mut stream, "garbage garbage");
    reader.read_line(&mut line).unwrap();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(v["type"], "error");
    assert_eq!(v["code"], "bad_message");

    // Still serving: a reset succeeds on the same connection.
    line.clear();
    send_line(&mut stream, r#"{"type":"reset"}"#);
    reader.read_line(&mut line).unwrap();
    assert_eq!(line.trim(), r#"{"type":"ok"}"#);

    // A second concurrent connection works too.
    let mut other = TcpStream::connect(addr).unwrap();
    let mut other_reader = BufReader::new(other.try_clone().unwrap());
    send_line(&mut other, r#"{"type":"reset"}"#);
    let mut other_line = String::new();
    other_reader.read_line(&mut other_line).unwrap();
    assert_eq!(other_line.trim(), r#"{"type":"ok"}"#);
}
