//! Writes a synthetic CICIDS2017-style flow export.
//!
//! cargo run --example synth_flows -- flows.csv 5000 7

use std::path::PathBuf;

use ids_core::synth::{write_synth_flows, FlowSynthOptions};

fn main() -> ids_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| "flows.csv".into()));
    let rows = args.next().map_or(5000, |s| s.parse().expect("row count"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));
    write_synth_flows(
        &FlowSynthOptions {
            rows,
            seed,
            ..Default::default()
        },
        &path,
    )?;
    println!("wrote {rows} flows to {}", path.display());
    Ok(())
}
