//! Cleans, selects, scales and splits a flow export, then prints what
//! happened at each stage.
//!
//! cargo run --example preprocess_flows [-- flows.csv]

use ids_core::features::Preprocessor;
use ids_core::ingest::{clean, load_csv};
use ids_core::synth::{write_synth_flows, FlowSynthOptions};

fn main() -> ids_core::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| ids_core::Error::io("tempdir", e))?;
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let p = dir.path().join("flows.csv");
            write_synth_flows(&FlowSynthOptions::default(), &p)?;
            p
        }
    };

    let raw = load_csv(&[&path])?;
    println!("{} rows, {} columns", raw.len(), raw.columns.len());
    let (cleaned, report) = clean(&raw)?;
    println!(
        "dropped {} missing, {} non-finite, {} duplicate",
        report.rows_dropped_missing, report.rows_dropped_nonfinite, report.rows_dropped_duplicate
    );

    let prepared = Preprocessor::fit(&cleaned, "Label", 42)?;
    let schema = &prepared.preprocessor.schema;
    for d in &schema.dropped_columns {
        println!("  dropped column {:<22} ({})", d.name, d.reason);
    }
    println!("{} model features:", prepared.preprocessor.n_features());
    for (j, name) in prepared.preprocessor.feature_names.iter().enumerate() {
        match schema.numeric_columns.get(j) {
            Some(_) => println!(
                "  {name:<28} train range [{}, {}]",
                prepared.preprocessor.scaler.min[j], prepared.preprocessor.scaler.max[j]
            ),
            None => println!("  {name}"),
        }
    }
    let s = &prepared.split;
    let labels = &prepared.matrix.labels;
    for (part, idx) in [("train", &s.train_idx), ("val", &s.val_idx), ("test", &s.test_idx)] {
        let attacks = idx.iter().filter(|&&i| labels.values[i] == 1).count();
        println!("{part:>5}: {:>5} rows, {:.1}% attack", idx.len(), 100.0 * attacks as f64 / idx.len() as f64);
    }
    Ok(())
}
