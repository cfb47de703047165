//! Byte-level compatibility contract for third-party clients. The frames in
//! `fixtures/golden_frames.records` were produced by an independent encoder
//! (`tests/oracles/golden_frames.py`).

mod common;

use std::collections::BTreeMap;
use std::io::{BufReader, Write};
use std::net::TcpStream;

use repro_bench::model::{ChallengeManifest, TrainFraction};
use repro_bench::protocol::frame::{decode_frame, encode_frame, read_payload};

fn golden() -> BTreeMap<String, Vec<u8>> {
    let text = include_str!("../fixtures/golden_frames.records");
    let rows: Vec<BTreeMap<String, String>> = repro_bench::record::decode_lines(text).unwrap();
    rows.into_iter().map(|r| (r["name"].clone(), hex::decode(&r["frame"]).unwrap())).collect()
}

#[test]
fn every_message_type_round_trips_byte_for_byte() {
    let frames = golden();
    assert_eq!(frames.len(), 9);
    for (name, bytes) in &frames {
        let msg = decode_frame(bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&encode_frame(&msg).unwrap(), bytes, "{name}");
    }
}

#[test]
fn live_server_answers_with_golden_frames() {
    let frames = golden();
    let dir = tempfile::tempdir().unwrap();
    let manifest = ChallengeManifest::synthetic("golden", 10, TrainFraction::new(4, 5).unwrap());
    let server = common::start_with(&common::config(dir.path(), false), vec![manifest]);
    let stream = TcpStream::connect(server.addr()).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    let mut exchange = |request: &str, expected: &str| {
        writer.write_all(&frames[request]).unwrap();
        let payload = read_payload(&mut reader).unwrap();
        let mut got = (payload.len() as u32).to_be_bytes().to_vec();
        got.extend(payload);
        assert_eq!(String::from_utf8_lossy(&got[4..]), String::from_utf8_lossy(&frames[expected][4..]));
        assert_eq!(got, frames[expected], "{request} -> {expected}");
    };
    exchange("hello", "hello_ack");
    exchange("register", "registered");
    exchange("request_split", "split");
    exchange("submit_metrics", "metrics_ack");
}
