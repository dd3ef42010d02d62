//! Hand-authored captures (see tests/data/golden/author.py) must parse and
//! reassemble to exactly the session lists enumerated in expected.json.

use std::path::PathBuf;
use std::time::Instant;

use mtc_core::capture::{assemble_sessions, parse_capture, Direction, SessionConfig, Transport};
use serde_json::Value;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden")
}

fn session_json(s: &mtc_core::capture::Session) -> Value {
    let packets: Vec<Value> = s
        .packets
        .iter()
        .map(|p| {
            serde_json::json!({
                "ts": p.timestamp_us,
                "dir": match p.direction { Direction::Forward => "fwd", Direction::Backward => "bwd" },
                "flags": p.tcp_flags,
                "payload": p.payload.iter().map(|b| format!("{b:02x}")).collect::<String>(),
            })
        })
        .collect();
    serde_json::json!({
        "transport": match s.key.transport { Transport::Tcp => "tcp", Transport::Udp => "udp" },
        "endpoint_a": s.key.endpoint_a.to_string(),
        "endpoint_b": s.key.endpoint_b.to_string(),
        "initiator": s.initiator.to_string(),
        "session_index": s.session_index,
        "packets": packets,
    })
}

#[test]
fn golden_captures_reassemble_exactly() {
    let dir = golden_dir();
    let expected: Value = serde_json::from_slice(&std::fs::read(dir.join("expected.json")).unwrap()).unwrap();
    let files = expected.as_object().unwrap();
    assert!(files.len() >= 6);
    let start = Instant::now();
    for (name, want) in files {
        let parsed = parse_capture(dir.join(name)).unwrap();
        let st = &parsed.stats;
        let stats = serde_json::json!({
            "frames": st.frames,
            "accepted": st.accepted,
            "skipped_non_ip": st.skipped_non_ip,
            "skipped_fragments": st.skipped_fragments,
            "skipped_other_transport": st.skipped_other_transport,
            "skipped_malformed": st.skipped_malformed,
            "truncated_records": st.truncated_records,
        });
        assert_eq!(stats, want["stats"], "{name} stats");
        let sessions = assemble_sessions(parsed.packets, SessionConfig::default());
        let got: Vec<Value> = sessions.iter().map(session_json).collect();
        assert_eq!(Value::Array(got), want["sessions"], "{name} sessions");
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}
