//! preprocess → train → evaluate → predict on synthetic flows, using the
//! same library calls as the `ids` binary.
//!
//! cargo run --release --example end_to_end [-- out-dir]

use std::path::PathBuf;

use ids_core::features::SplitPart;
use ids_core::pipeline::{cmd_evaluate, cmd_predict, cmd_preprocess, cmd_train, RunConfig};
use ids_core::synth::{write_synth_flows, FlowSynthOptions};

fn main() -> ids_core::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "end_to_end_out".into()));
    std::fs::create_dir_all(&root).map_err(|e| ids_core::Error::io(&root, e))?;
    let flows = root.join("flows.csv");
    write_synth_flows(
        &FlowSynthOptions {
            rows: 4000,
            seed: 5,
            ..Default::default()
        },
        &flows,
    )?;
    let fresh = root.join("fresh.csv");
    write_synth_flows(
        &FlowSynthOptions {
            rows: 200,
            seed: 6,
            dirty_fraction: 0.0,
            ..Default::default()
        },
        &fresh,
    )?;

    let cfg = RunConfig {
        seed: 5,
        max_epochs: 8,
        ..Default::default()
    };
    let artifacts = root.join("artifacts");
    let checkpoint = root.join("checkpoint");
    let p = cmd_preprocess(&[flows], &artifacts, &cfg)?;
    println!("preprocess: {} rows × {} features", p.rows, p.features);
    let t = cmd_train(&artifacts, &checkpoint, &cfg)?;
    println!("train: {} epochs, best {} (val loss {:.4})", t.epochs, t.best_epoch, t.best_val_loss);
    let r = cmd_evaluate(&checkpoint, &artifacts, SplitPart::Test, &root.join("eval"), &cfg)?;
    println!(
        "evaluate: accuracy {:.4}, F1 {:.4}, FAR {:.4}, AUC {:.4}",
        r.accuracy.unwrap_or(f64::NAN),
        r.f1.unwrap_or(f64::NAN),
        r.false_alarm_rate.unwrap_or(f64::NAN),
        r.auc.unwrap_or(f64::NAN)
    );
    let s = cmd_predict(&checkpoint, &[fresh], &root.join("predict"), &cfg)?;
    println!("predict: {} of {} fresh flows flagged malicious", s.malicious, s.rows);
    println!("artifacts under {}", root.display());
    Ok(())
}
