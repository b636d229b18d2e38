//! Builds a metrics report from confusion counts and from raw scores, and
//! exports ROC / precision-recall curves.
//!
//! cargo run --example metrics_report

use ids_core::metrics::{
    cicids2017_cnn_lstm_reference, evaluate_scores, export_curves, ConfusionMatrix, MetricsReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ids_core::Result<()> {
    // Reference CICIDS2017 test-set counts.
    let counts = ConfusionMatrix {
        tp: 679_222,
        tn: 165_703,
        fp: 2_174,
        fn_: 1_264,
        threshold: 0.5,
    };
    let mut report = MetricsReport::from_confusion("reference-counts", counts);
    report.compare_with(&cicids2017_cnn_lstm_reference(), 1e-6);
    println!("{}", serde_json::to_string_pretty(&report)?);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels: Vec<u8> = (0..500).map(|_| u8::from(rng.gen_bool(0.3))).collect();
    let scores: Vec<f64> = labels
        .iter()
        .map(|&y| (rng.gen::<f64>() * 0.7 + 0.3 * f64::from(y)).min(1.0))
        .collect();
    let (r, roc, pr) = evaluate_scores("synthetic", &labels, &scores, 0.5)?;
    println!(
        "synthetic scores: AUC {:.4}, AP {:.4}, accuracy {:.4}",
        r.auc.unwrap(),
        r.average_precision.unwrap(),
        r.accuracy.unwrap()
    );
    let dir = std::env::temp_dir();
    export_curves(&roc.unwrap(), &dir.join("roc_synthetic.csv"))?;
    export_curves(&pr.unwrap(), &dir.join("pr_synthetic.csv"))?;
    println!("curves written to {}", dir.display());
    Ok(())
}
