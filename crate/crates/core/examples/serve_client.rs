//! Trains a small model, serves it on a local port, and talks to it with
//! both request forms plus a malformed line.
//!
//! cargo run --release --example serve_client

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;

use ids_core::ingest::load_csv;
use ids_core::nn::ConvBlock;
use ids_core::pipeline::{cmd_preprocess, cmd_train, Detector, RunConfig};
use ids_core::serve::{serve, ServeConfig};
use ids_core::synth::{write_synth_flows, FlowSynthOptions};
use serde_json::json;

fn main() -> ids_core::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| ids_core::Error::io("tempdir", e))?;
    let flows = dir.path().join("flows.csv");
    write_synth_flows(&FlowSynthOptions::default(), &flows)?;
    let cfg = RunConfig {
        conv_blocks: vec![ConvBlock {
            filters: 16,
            kernel_size: 3,
        }],
        lstm_units: 16,
        max_epochs: 5,
        ..Default::default()
    };
    cmd_preprocess(std::slice::from_ref(&flows), &dir.path().join("art"), &cfg)?;
    cmd_train(&dir.path().join("art"), &dir.path().join("ckpt"), &cfg)?;

    let detector = Detector::load(&dir.path().join("ckpt"))?;
    let width = detector.n_features();
    let server = serve(
        detector,
        &ServeConfig {
            bind: "127.0.0.1:0".into(),
            ..Default::default()
        },
    )?;
    println!("serving on {}", server.local_addr());

    let table = load_csv(&[&flows])?;
    let raw: BTreeMap<&str, &str> = table
        .columns
        .iter()
        .map(String::as_str)
        .zip(table.rows[0].iter().map(String::as_str))
        .collect();
    let lines = [
        json!({"id": "raw-0", "features": raw}).to_string(),
        json!({"id": "vec", "features": vec![0.5; width]}).to_string(),
        "{oops".to_string(),
        json!({"id": "short", "features": [0.1, 0.2]}).to_string(),
    ];

    let stream = TcpStream::connect(server.local_addr()).map_err(|e| ids_core::Error::io("connect", e))?;
    let mut writer = stream.try_clone().map_err(|e| ids_core::Error::io("socket", e))?;
    let mut reader = BufReader::new(stream);
    for line in &lines {
        writeln!(writer, "{line}").map_err(|e| ids_core::Error::io("socket", e))?;
        let mut reply = String::new();
        reader.read_line(&mut reply).map_err(|e| ids_core::Error::io("socket", e))?;
        println!("> {}\n< {}", &line[..line.len().min(60)], reply.trim_end());
    }
    drop(writer);
    server.shutdown();
    Ok(())
}
